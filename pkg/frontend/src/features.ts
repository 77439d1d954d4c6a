import type { PipelineBundle, PipelineDoc, StageDoc, TreeDoc } from "./types.js";

export function groupNames(bundle: PipelineBundle): string[] {
  return bundle.pipelines.map((p) => p.group);
}

function stageTrees(stage: StageDoc): TreeDoc[] {
  if (stage.kind === "tree") {
    return stage.tree ? [stage.tree] : [];
  }
  return [stage.router, stage.resolver].filter((t): t is TreeDoc => t != null);
}

/**
 * The features a group's pipeline can reference: the union of its trees'
 * declared feature schemas, in first-seen order. The form exposes exactly
 * these fields.
 */
export function pipelineFeatures(bundle: PipelineBundle, group: string): string[] {
  const pipeline: PipelineDoc | undefined = bundle.pipelines.find((p) => p.group === group);
  if (!pipeline) {
    throw new Error(`unknown group ${group}`);
  }
  const names: string[] = [];
  for (const stage of pipeline.stages) {
    for (const tree of stageTrees(stage)) {
      for (const name of tree.feature_names) {
        if (!names.includes(name)) {
          names.push(name);
        }
      }
    }
  }
  return names;
}
