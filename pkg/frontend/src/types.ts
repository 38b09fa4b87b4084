/** Wire types for the annotation service's JSON endpoints. */

export type Label = -1 | 1;

export interface DatasetInfo {
  name: string;
  bags: number;
  positive_bags: number;
  instances: number;
  feature_dim: number;
  labels_known: boolean;
}

export interface Capabilities {
  strategies: string[];
  kernels: string[];
}

export interface SessionSummary {
  id: string;
  dataset: string;
  strategy: string;
  status: "awaiting-labels" | "finished";
  queried_bags: string[];
  queried: number;
  remaining_queries: number;
  pending_bag_id: string | null;
}

export interface QueryPayload {
  bag_id: string;
  instance_count: number;
  features: number[][];
  scores: number[];
}

export interface SubmitResult {
  status: "awaiting-labels" | "finished";
  queried: number;
  remaining_queries: number;
  curve_point: Record<string, number> | null;
  next_bag_id: string | null;
}

export interface CurvesPayload {
  queries: number;
  series: Record<string, number[]>;
}

export interface ApiErrorBody {
  code: string;
  message: string;
}

export interface SessionConfigOverrides {
  kernel?: string;
  gamma?: number | null;
  base_cost?: number;
  seed?: number;
  cluster_levels?: number;
  inconsistency_depth?: number;
  allow_assumption_violations?: boolean;
}
