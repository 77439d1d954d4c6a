/** Decision-path rendering. Every displayed value is copied verbatim from
 * the service response; this module draws, it never decides. */

import type { RecommendResponse, TraceStage } from "./types.js";

export class MalformedTrace extends Error {}

export interface TraceStepView {
  stage: string;
  part: "tree" | "router" | "resolver";
  feature: string;
  threshold: number;
  value: number;
  branch: "left" | "right";
  comparison: string;
  fired: boolean;
}

export interface ResultView {
  recommendation: string;
  predictedReduction: number | null;
  digest: string;
  firedStage: string | null;
  steps: TraceStepView[];
}

function checkStage(stage: TraceStage): void {
  if (typeof stage.stage !== "string" || typeof stage.action !== "string") {
    throw new MalformedTrace("stage entries need a name and an action");
  }
  if (!["tree", "router", "resolver"].includes(stage.part)) {
    throw new MalformedTrace(`unknown stage part ${String(stage.part)}`);
  }
  if (!Array.isArray(stage.decisions)) {
    throw new MalformedTrace("stage decisions must be a list");
  }
  for (const d of stage.decisions) {
    if (
      typeof d.feature !== "string" ||
      typeof d.threshold !== "number" ||
      typeof d.value !== "number" ||
      (d.branch !== "left" && d.branch !== "right")
    ) {
      throw new MalformedTrace("decision entries need feature, threshold, value, branch");
    }
  }
}

/**
 * Turn a service response into render-ready rows. Throws MalformedTrace on
 * any structural surprise so the caller can show an error panel instead of
 * a partial path.
 */
export function buildResultView(response: RecommendResponse): ResultView {
  const trace = response.trace;
  if (trace == null || !Array.isArray(trace.stages)) {
    throw new MalformedTrace("response carries no trace stages");
  }
  if (trace.recommendation !== response.recommendation) {
    throw new MalformedTrace("trace and response disagree on the recommendation");
  }
  const steps: TraceStepView[] = [];
  let firedStage: string | null = null;
  for (const stage of trace.stages) {
    checkStage(stage);
    if (stage.fired && stage.part !== "router") {
      firedStage = stage.stage;
    }
    for (const d of stage.decisions) {
      steps.push({
        stage: stage.stage,
        part: stage.part,
        feature: d.feature,
        threshold: d.threshold,
        value: d.value,
        branch: d.branch,
        comparison:
          d.branch === "right"
            ? `${d.value} >= ${d.threshold}`
            : `${d.value} < ${d.threshold}`,
        fired: stage.fired,
      });
    }
  }
  return {
    recommendation: response.recommendation,
    predictedReduction: response.predicted_reduction,
    digest: response.pipelines_digest,
    firedStage,
    steps,
  };
}

export function escapeHtml(raw: string): string {
  return raw
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function renderResultHtml(view: ResultView): string {
  const rows = view.steps
    .map((s) => {
      const cls = s.stage === view.firedStage && s.fired ? "trace-step fired" : "trace-step";
      return (
        `<li class="${cls}">` +
        `<span class="stage">${escapeHtml(s.stage)}</span> ` +
        `<span class="comparison">${escapeHtml(s.feature)}: ${escapeHtml(s.comparison)}</span> ` +
        `<span class="branch">&rarr; ${escapeHtml(s.branch)}</span>` +
        `</li>`
      );
    })
    .join("");
  const predicted =
    view.predictedReduction == null
      ? "not available"
      : `${view.predictedReduction.toFixed(2)}%`;
  return (
    `<div class="result" data-digest="${escapeHtml(view.digest)}">` +
    `<p class="recommendation">Recommendation: <strong>${escapeHtml(view.recommendation)}</strong></p>` +
    `<p class="predicted">Predicted HbA1c reduction: ${escapeHtml(predicted)}</p>` +
    `<ol class="trace">${rows}</ol>` +
    `<p class="digest">pipelines ${escapeHtml(view.digest.slice(0, 12))}</p>` +
    `</div>`
  );
}
