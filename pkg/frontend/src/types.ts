import fs from 'fs';

export const SUPPORTED_SCHEMA_VERSION = 1;

export class SchemaMismatchError extends Error {}
export class MissingSeriesError extends Error {}

export interface StepLog {
  k: number;
  absorption_residual_norm: number;
  first_pass_error_norms: number[];
  higher_error_norms: number[];
  quad_error_norm: number;
  [key: string]: unknown;
}

export interface StageReportPayload {
  sigma: number;
  steps: number;
  reduction: number;
  delta0: number;
  final_defect_vs_a0_tracked: number;
  v_c2_norm: number;
  step_logs: StepLog[];
  [key: string]: unknown;
}

export interface StageSummary {
  index: number;
  defect_norm: number;
  holder_quotients: Record<string, number>;
  [key: string]: unknown;
}

export interface SolveReportPayload {
  sigma: number;
  steps: number;
  reduction: number;
  initial_defect: number;
  defect_history: number[];
  decay_slope: number | null;
  alpha_window: number;
  initial_holder_quotients: Record<string, number>;
  stages: StageSummary[];
  termination: string;
  [key: string]: unknown;
}

export interface ReportEnvelope<T> {
  schema_version: number;
  kind: string;
  config: unknown;
  report: T;
}

export function loadReport<T>(path: string, expectedKind: string): ReportEnvelope<T> {
  const raw = fs.readFileSync(path, 'utf8');
  let doc: ReportEnvelope<T>;
  try {
    doc = JSON.parse(raw);
  } catch (err) {
    throw new SchemaMismatchError(`${path}: not valid JSON (${err})`);
  }
  if (doc.schema_version !== SUPPORTED_SCHEMA_VERSION) {
    throw new SchemaMismatchError(
      `${path}: schema_version ${doc.schema_version} unsupported (expected ${SUPPORTED_SCHEMA_VERSION})`);
  }
  if (doc.kind !== expectedKind) {
    throw new SchemaMismatchError(
      `${path}: report kind '${doc.kind}' where '${expectedKind}' was expected`);
  }
  return doc;
}

export interface CsvTable {
  header: string[];
  rows: string[][];
}

export function loadCsv(path: string, expectedHeader: string[]): CsvTable {
  const lines = fs.readFileSync(path, 'utf8').trim().split('\n');
  if (lines.length === 0) {
    throw new SchemaMismatchError(`${path}: empty CSV`);
  }
  const header = lines[0].split(',');
  if (expectedHeader.some((h, i) => header[i] !== h)) {
    throw new SchemaMismatchError(
      `${path}: header '${lines[0]}' does not match '${expectedHeader.join(',')}'`);
  }
  return { header, rows: lines.slice(1).map(l => l.split(',')) };
}
