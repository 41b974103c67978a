// Payload shapes of the workbench JSON API (schema_version 1 throughout).

export interface KnobRange {
  min: number;
  max: number;
  default: number;
  step: number;
}

export interface Capabilities {
  schema_version: number;
  methods: string[];
  norms: string[];
  anchors: string[];
  knobs: Record<string, KnobRange>;
  artifact_names: string[];
}

export interface DatasetInfo {
  id: string;
  class_names: string[];
  geometry: { channels: number; height: number; width: number };
  splits: Record<string, number>;
  provenance: string;
}

export interface InstanceInfo {
  index: number;
  label: number;
  label_name: string;
}

export interface ModelInfo {
  id: string;
  kind: "classifier" | "denoiser" | "encoder";
  num_classes?: number | null;
  num_steps?: number | null;
  accuracy?: number | null;
}

export interface AttackSection {
  method?: string;
  num_iterations?: number;
  step_size?: number;
  lambda_d?: number;
  distance_norm?: string;
  tau?: number;
  respaced_steps?: number;
  distance_anchor?: string;
}

export interface RefineSection {
  mask_threshold?: number;
  mask_dilation?: number;
  apply_mask?: boolean;
}

export interface SubmitRunRequest {
  dataset_id: string;
  split: string;
  index: number;
  classifier_id: string;
  denoiser_id: string;
  target_label: number;
  seed: number;
  attack: AttackSection;
  refine: RefineSection;
  diversity_k?: number;
}

export type RunStatus = "queued" | "running" | "succeeded" | "failed" | "rejected";

export interface RunResult {
  source_label: number;
  target_label: number;
  probs_input: number[];
  probs_counterfactual: number[];
  flipped: boolean;
  mask_coverage: number;
  diversity?: number | null;
}

export interface RunRecord {
  id: string;
  status: RunStatus;
  request: SubmitRunRequest;
  created_at: number;
  progress?: { iteration: number; total_iterations: number; objective?: number | null } | null;
  result?: RunResult | null;
  artifacts: string[];
  error?: string | null;
}

export interface RunEvent {
  iteration?: number;
  objective?: number;
  status?: RunStatus;
  error?: string;
  flipped?: boolean;
}
