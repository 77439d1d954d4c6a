/** Client-side validation mirroring the visit invariants the service
 * enforces: plausibility ranges and quantile ordering. */

export interface ValidationIssue {
  field: string;
  message: string;
}

const RANGES: Record<string, [number, number]> = {
  hba1c_last: [3, 20],
  hba1c_p25: [3, 20],
  hba1c_median: [3, 20],
  hba1c_mean: [3, 20],
  hba1c_p75: [3, 20],
  bmi_last: [10, 80],
  bmi_p25: [10, 80],
  bmi_median: [10, 80],
  bmi_mean: [10, 80],
  bmi_p75: [10, 80],
};

export type FeatureValues = Record<string, number | null>;

export function missingFields(values: FeatureValues, required: string[]): string[] {
  return required.filter((name) => values[name] == null || Number.isNaN(values[name]));
}

export function validateFeatures(values: FeatureValues): ValidationIssue[] {
  const issues: ValidationIssue[] = [];
  for (const [name, [lo, hi]] of Object.entries(RANGES)) {
    const v = values[name];
    if (v != null && !(v > lo && v < hi)) {
      issues.push({ field: name, message: `must be between ${lo} and ${hi}` });
    }
  }
  const age = values["age"];
  if (age != null && !(age > 0)) {
    issues.push({ field: "age", message: "must be positive" });
  }
  const contra = values["kidney_contraindication"];
  if (contra != null && contra !== 0 && contra !== 1) {
    issues.push({ field: "kidney_contraindication", message: "must be 0 or 1" });
  }
  for (const stem of ["hba1c", "bmi"]) {
    const p25 = values[`${stem}_p25`];
    const median = values[`${stem}_median`];
    const p75 = values[`${stem}_p75`];
    if (p25 != null && median != null && p25 > median) {
      issues.push({ field: `${stem}_p25`, message: `${stem} p25 cannot exceed the median` });
    }
    if (median != null && p75 != null && median > p75) {
      issues.push({ field: `${stem}_median`, message: `${stem} median cannot exceed p75` });
    }
    if (p25 != null && p75 != null && median == null && p25 > p75) {
      issues.push({ field: `${stem}_p25`, message: `${stem} p25 cannot exceed p75` });
    }
  }
  return issues;
}
