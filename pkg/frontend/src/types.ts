// Payload shapes mirrored from the HTTP API (docs/API.md). The dashboard
// renders these verbatim: no statistic is recomputed client-side.

export interface Recommendation {
  action: string;
  dose_index: number | null;
  arm_index: number | null;
  metrics: Record<string, unknown>;
}

export interface SessionSummary {
  id: string;
  kind: string;
  status: string;
  stage: number;
  n_enrolled: number;
  created: string;
  updated: string;
  recommendation: Recommendation;
  active_arms: number[];
}

export interface SessionResponse {
  session: SessionSummary;
  state: {
    status: string;
    stage: number;
    n_enrolled: number;
    active_arms: number[];
  };
  recommendation: Recommendation;
}

export interface PathwayNode {
  recommendation: Recommendation;
  status: string;
  children: PathwayNode[];
  outcome?: {
    kind: string;
    outcome: { dose_index: number; n_treated: number; n_events: number };
  };
}

export interface PathwaysResponse {
  pathways: PathwayNode;
  depth: number;
}

export interface OperatingCharacteristics {
  n_reps: number;
  rejection_rate: number;
  rejection_se: number;
  expected_n: number;
  sd_n: number;
  se_n: number;
  max_n: number;
  selection_probabilities: Record<string, number>;
  selection_se: Record<string, number>;
  no_selection_probability: number;
  allocation: Record<string, number>;
  extras: Record<string, unknown>;
}

export interface SimulateResponse {
  operating_characteristics: OperatingCharacteristics;
  scenario: { truth: Record<string, unknown>; n_reps: number; seed: number; accrual: number };
}

export interface ApiError {
  code: string;
  message: string;
  details: Record<string, unknown>;
}

export interface CohortOutcomeBody {
  dose_index: number;
  n_treated: number;
  n_events: number;
}
