// Session state and its pure transitions. History is append-only: entries
// change status in place but are never removed within a session, and a
// refresh rebuilds the same list from the service run index.

import type { Capabilities, RunRecord, RunStatus } from "./types.js";

export interface KnobValues {
  method: string;
  num_iterations: number;
  lambda_d: number;
  distance_norm: string;
  tau: number;
  respaced_steps: number;
  mask_threshold: number;
  mask_dilation: number;
  seed: number;
}

export interface HistoryEntry {
  runId: string;
  status: RunStatus;
  config: Record<string, unknown>;
  instance: { dataset_id: string; split: string; index: number };
  targetLabel: number;
  flipped: boolean | null;
  diversity: number | null;
}

export interface SessionState {
  datasetId: string | null;
  split: string;
  index: number | null;
  targetLabel: number | null;
  knobs: KnobValues;
  history: HistoryEntry[];
  compare: { a: string | null; b: string | null };
}

export function defaultKnobs(caps: Capabilities): KnobValues {
  const knob = (name: string, fallback: number): number =>
    caps.knobs[name]?.default ?? fallback;
  return {
    method: caps.methods[0] ?? "pgd",
    num_iterations: knob("num_iterations", 50),
    lambda_d: knob("lambda_d", 0.001),
    distance_norm: caps.norms[0] ?? "l1",
    tau: knob("tau", 5),
    respaced_steps: knob("respaced_steps", 50),
    mask_threshold: knob("mask_threshold", 0.15),
    mask_dilation: knob("mask_dilation", 15),
    seed: 0,
  };
}

export function initialState(caps: Capabilities): SessionState {
  return {
    datasetId: null,
    split: "eval",
    index: null,
    targetLabel: null,
    knobs: defaultKnobs(caps),
    history: [],
    compare: { a: null, b: null },
  };
}

/** Clamp a numeric knob into its advertised range, snapping to the step. */
export function clampKnob(caps: Capabilities, name: string, value: number): number {
  const range = caps.knobs[name];
  if (!range) return value;
  const clamped = Math.min(range.max, Math.max(range.min, value));
  const steps = Math.round((clamped - range.min) / range.step);
  const snapped = range.min + steps * range.step;
  return Math.min(range.max, Number(snapped.toFixed(6)));
}

export function setKnob(
  state: SessionState,
  caps: Capabilities,
  name: keyof KnobValues,
  value: number | string,
): SessionState {
  const knobs = { ...state.knobs };
  if (typeof value === "number") {
    (knobs as Record<string, unknown>)[name] = clampKnob(caps, name, value);
  } else {
    (knobs as Record<string, unknown>)[name] = value;
  }
  return { ...state, knobs };
}

export function selectInstance(
  state: SessionState,
  datasetId: string,
  split: string,
  index: number,
): SessionState {
  return { ...state, datasetId, split, index };
}

export function appendRun(state: SessionState, entry: HistoryEntry): SessionState {
  return { ...state, history: [...state.history, entry] };
}

export function updateRun(
  state: SessionState,
  runId: string,
  patch: Partial<Pick<HistoryEntry, "status" | "flipped" | "diversity">>,
): SessionState {
  return {
    ...state,
    history: state.history.map((h) => (h.runId === runId ? { ...h, ...patch } : h)),
  };
}

/** Pick runs to compare: fills slot a, then b, then rotates. */
export function selectCompare(state: SessionState, runId: string): SessionState {
  const { a, b } = state.compare;
  if (a === runId || b === runId) return state;
  if (a === null) return { ...state, compare: { a: runId, b } };
  if (b === null) return { ...state, compare: { a, b: runId } };
  return { ...state, compare: { a: b, b: runId } };
}

export function entryFromRecord(record: RunRecord): HistoryEntry {
  return {
    runId: record.id,
    status: record.status,
    config: {
      ...record.request.attack,
      ...record.request.refine,
      seed: record.request.seed,
      diversity_k: record.request.diversity_k ?? null,
    },
    instance: {
      dataset_id: record.request.dataset_id,
      split: record.request.split,
      index: record.request.index,
    },
    targetLabel: record.request.target_label,
    flipped: record.result?.flipped ?? null,
    diversity: record.result?.diversity ?? null,
  };
}

/** Rebuild session history from the service run index (ids are sortable). */
export function historyFromRecords(records: RunRecord[]): HistoryEntry[] {
  return [...records]
    .sort((x, y) => (x.id < y.id ? -1 : x.id > y.id ? 1 : 0))
    .map(entryFromRecord);
}
