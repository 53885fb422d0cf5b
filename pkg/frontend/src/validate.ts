/** Client-side batch-entry validation: reject obviously bad counts before
 * they ever reach the service. */

export interface BatchRowInput {
  category: string;
  samples: string | number;
  positives: string | number;
}

export interface RowError {
  row: number;
  field: "category" | "samples" | "positives";
  message: string;
}

function asCount(value: string | number): number | null {
  const n = typeof value === "number" ? value : Number(value.trim() === "" ? NaN : value);
  if (!Number.isFinite(n) || !Number.isInteger(n)) return null;
  return n;
}

export function validateBatchRows(rows: BatchRowInput[]): RowError[] {
  const errors: RowError[] = [];
  rows.forEach((row, i) => {
    if (!row.category.trim()) {
      errors.push({ row: i, field: "category", message: "category is required" });
    }
    const samples = asCount(row.samples);
    const positives = asCount(row.positives);
    if (samples === null) {
      errors.push({ row: i, field: "samples", message: "samples must be a whole number" });
    } else if (samples < 0) {
      errors.push({ row: i, field: "samples", message: "samples cannot be negative" });
    }
    if (positives === null) {
      errors.push({ row: i, field: "positives", message: "positives must be a whole number" });
    } else if (positives < 0) {
      errors.push({ row: i, field: "positives", message: "positives cannot be negative" });
    } else if (samples !== null && samples >= 0 && positives > samples) {
      errors.push({
        row: i,
        field: "positives",
        message: `positives (${positives}) cannot exceed samples (${samples})`,
      });
    }
  });
  return errors;
}
