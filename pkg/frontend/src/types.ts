/** Types mirroring the recommendation service's HTTP contract. */

export interface TreeNodeDoc {
  kind: "split" | "leaf";
  feature?: string;
  threshold?: number;
  left?: number;
  right?: number;
  action?: string;
}

export interface TreeDoc {
  format_version: number;
  feature_names: string[];
  options: string[];
  objective: number | null;
  nodes: TreeNodeDoc[];
}

export interface StageDoc {
  kind: "tree" | "router";
  name: string;
  tree?: TreeDoc;
  router?: TreeDoc;
  resolver?: TreeDoc;
}

export interface PipelineDoc {
  format_version: number;
  group: string;
  terminal_action: string;
  stages: StageDoc[];
}

/** Body of GET /pipelines. */
export interface PipelineBundle {
  digest: string;
  format_version: number;
  pipelines: PipelineDoc[];
}

export interface TraceDecision {
  feature: string;
  threshold: number;
  value: number;
  branch: "left" | "right";
}

export interface TraceStage {
  stage: string;
  part: "tree" | "router" | "resolver";
  decisions: TraceDecision[];
  action: string;
  fired: boolean;
}

export interface TraceDoc {
  stages: TraceStage[];
  recommendation: string;
}

export interface RecommendRequest {
  group: string;
  features: Record<string, number>;
  sex?: string | null;
  race?: string | null;
}

/** Body of a 200 response from POST /recommend. */
export interface RecommendResponse {
  group: string;
  recommendation: string;
  trace: TraceDoc;
  predicted_reduction: number | null;
  pipelines_digest: string;
}

export interface FieldError {
  field: string;
  message: string;
}
