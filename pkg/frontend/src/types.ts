// Payload shapes mirrored from the REST service. The UI renders these
// verbatim; it never derives verdicts or metrics on its own.

export interface StudySummary {
  study_id: string;
  candidates: number;
  has_description: boolean;
  verdicts: number;
}

export interface StudyListing {
  studies: StudySummary[];
}

export type DecisionValue = 'keep' | 'discard' | 'reject';

export interface VerdictJson {
  candidate_id: string;
  decision: DecisionValue;
  rationale: string;
  source: string;
}

export interface CandidateCard {
  id: string;
  centroid: number[];
  confidence: number;
  location: { laterality: string; lobe: string } | null;
  verdict: VerdictJson | null;
  prefilter: string | null;
  render_url: string;
}

export interface StudyView {
  study_id: string;
  dims: number[];
  spacing: number[];
  description: string | null;
  has_truth: boolean;
  candidates: CandidateCard[];
  decision_log_length: number;
}

export interface LocationDescriptorJson {
  laterality: string;
  lobe: string;
  size_mm: number[] | null;
  count: number | null;
  polarity: string;
  source_span: number[];
}

export interface ParseReportJson {
  descriptors: LocationDescriptorJson[];
  unrecognized_spans: number[][];
  normalized_text: string;
}

export interface DescriptionResult {
  study_id: string;
  description: string;
  parse: ParseReportJson | null;
}

export interface FilterResult {
  study_id: string;
  config: string;
  seed: number;
  verdicts: VerdictJson[];
  prefilter: Record<string, string>;
}

export interface VerdictUpdate {
  verdict: VerdictJson;
  decision_log_length: number;
}

export interface ConfusionCountsJson {
  tp: number;
  fp: number;
  fn: number;
  tn: number;
  n_scans: number;
  n_sample: number;
  n_reject: number;
}

export interface MetricsPayload {
  fdr: number;
  fp_per_scan: number;
  sensitivity: number;
  specificity: number;
  f1: number;
  reject_rate: number;
  dice3d_mean: number | null;
  degenerate: string[];
  counts: ConfusionCountsJson;
}
