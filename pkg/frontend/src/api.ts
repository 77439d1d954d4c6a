import type { FieldError, PipelineBundle, RecommendRequest, RecommendResponse } from "./types.js";

export class ServiceUnreachable extends Error {}

export class RequestRejected extends Error {
  constructor(
    public status: number,
    public errors: FieldError[],
  ) {
    super(`service rejected the request (${status})`);
  }
}

export interface ApiClient {
  fetchPipelines(): Promise<PipelineBundle>;
  recommend(request: RecommendRequest): Promise<RecommendResponse>;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Thin fetch wrapper; network-level failures become ServiceUnreachable. */
export function createApiClient(baseUrl: string, fetchImpl?: FetchLike): ApiClient {
  const doFetch: FetchLike = fetchImpl ?? ((input, init) => fetch(input, init));

  async function call(path: string, init?: RequestInit): Promise<unknown> {
    let response: Response;
    try {
      response = await doFetch(`${baseUrl}${path}`, init);
    } catch {
      throw new ServiceUnreachable(`cannot reach the service at ${baseUrl}`);
    }
    if (!response.ok) {
      let errors: FieldError[] = [];
      try {
        const body = (await response.json()) as { errors?: FieldError[]; detail?: string };
        errors = body.errors ?? (body.detail ? [{ field: "", message: body.detail }] : []);
      } catch {
        // keep the bare status
      }
      throw new RequestRejected(response.status, errors);
    }
    return response.json();
  }

  return {
    fetchPipelines: () => call("/pipelines") as Promise<PipelineBundle>,
    recommend: (request) =>
      call("/recommend", {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(request),
      }) as Promise<RecommendResponse>,
  };
}
