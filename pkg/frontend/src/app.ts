/** What-if explorer state. Holds the form values, queries the service on
 * every (debounced) edit, and exposes a render-ready view. All decision
 * logic stays on the service side; this class only forwards and displays. */

import { ApiClient, RequestRejected, ServiceUnreachable } from "./api.js";
import { Debounced, debounce } from "./debounce.js";
import { groupNames, pipelineFeatures } from "./features.js";
import { MalformedTrace, ResultView, buildResultView } from "./trace.js";
import type { FieldError, PipelineBundle } from "./types.js";
import { FeatureValues, ValidationIssue, missingFields, validateFeatures } from "./validation.js";

export type Phase = "loading" | "ready" | "unreachable";

export interface AppView {
  phase: Phase;
  banner: string | null;
  groups: string[];
  group: string | null;
  fields: string[];
  values: FeatureValues;
  issues: ValidationIssue[];
  missing: string[];
  canRecommend: boolean;
  serviceErrors: FieldError[];
  result: ResultView | null;
  resultError: string | null;
  pending: boolean;
}

export class WhatIfApp {
  private bundle: PipelineBundle | null = null;
  private phase: Phase = "loading";
  private banner: string | null = null;
  private group: string | null = null;
  private values: FeatureValues = {};
  private result: ResultView | null = null;
  private resultError: string | null = null;
  private serviceErrors: FieldError[] = [];
  private requestToken = 0;
  private inFlight = 0;
  private refreshSoon: Debounced<[]>;

  constructor(
    private api: ApiClient,
    private onChange: () => void = () => {},
    debounceMs = 250,
  ) {
    this.refreshSoon = debounce(() => void this.refresh(), debounceMs);
  }

  async init(): Promise<void> {
    try {
      this.bundle = await this.api.fetchPipelines();
      this.phase = "ready";
      this.banner = null;
      const groups = groupNames(this.bundle);
      if (groups.length > 0) {
        this.setGroup(groups[0]);
      }
    } catch {
      this.phase = "unreachable";
      this.banner = "The recommendation service is unreachable. No results are shown.";
    }
    this.onChange();
  }

  setGroup(group: string): void {
    this.group = group;
    this.values = {};
    this.result = null;
    this.resultError = null;
    this.serviceErrors = [];
    this.refreshSoon.cancel();
    this.onChange();
  }

  /** Record an edit; empty input clears the field. Re-queries after the
   * debounce window. */
  setValue(field: string, raw: string): void {
    const trimmed = raw.trim();
    if (trimmed === "") {
      this.values = { ...this.values, [field]: null };
    } else {
      const parsed = Number(trimmed);
      this.values = { ...this.values, [field]: Number.isNaN(parsed) ? NaN : parsed };
    }
    this.onChange();
    if (this.canRecommend()) {
      this.refreshSoon();
    } else {
      this.refreshSoon.cancel();
      this.result = null;
      this.resultError = null;
      this.onChange();
    }
  }

  fields(): string[] {
    if (this.bundle == null || this.group == null) {
      return [];
    }
    return pipelineFeatures(this.bundle, this.group);
  }

  canRecommend(): boolean {
    if (this.phase !== "ready" || this.group == null) {
      return false;
    }
    return (
      missingFields(this.values, this.fields()).length === 0 &&
      validateFeatures(this.values).length === 0
    );
  }

  private async refresh(): Promise<void> {
    if (!this.canRecommend() || this.group == null) {
      return;
    }
    const token = ++this.requestToken;
    const features: Record<string, number> = {};
    for (const name of this.fields()) {
      features[name] = this.values[name] as number;
    }
    this.inFlight += 1;
    try {
      const response = await this.api.recommend({ group: this.group, features });
      if (token !== this.requestToken) {
        return; // superseded by a newer edit
      }
      this.serviceErrors = [];
      try {
        this.result = buildResultView(response);
        this.resultError = null;
      } catch (err) {
        this.result = null;
        this.resultError =
          err instanceof MalformedTrace ? `malformed trace: ${err.message}` : String(err);
      }
    } catch (err) {
      if (token !== this.requestToken) {
        return;
      }
      this.result = null;
      if (err instanceof ServiceUnreachable) {
        this.phase = "unreachable";
        this.banner = "The recommendation service is unreachable. No results are shown.";
      } else if (err instanceof RequestRejected) {
        this.serviceErrors = err.errors;
      } else {
        this.resultError = String(err);
      }
    } finally {
      this.inFlight -= 1;
      this.onChange();
    }
  }

  view(): AppView {
    return {
      phase: this.phase,
      banner: this.banner,
      groups: this.bundle ? groupNames(this.bundle) : [],
      group: this.group,
      fields: this.fields(),
      values: { ...this.values },
      issues: validateFeatures(this.values),
      missing: this.group ? missingFields(this.values, this.fields()) : [],
      canRecommend: this.canRecommend(),
      serviceErrors: [...this.serviceErrors],
      result: this.result,
      resultError: this.resultError,
      pending: this.inFlight > 0,
    };
  }
}
