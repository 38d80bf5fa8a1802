// Session state for the explorer, with control validation mirrored from the
// server (delta and epsilon live in (0, 1]; at most four comparison columns).

export const MAX_COMPARE_COLUMNS = 4;

export interface SessionState {
  instanceId: string | null;
  delta: number;
  epsilon: number;
  jobId: string | null;
  jobState: "idle" | "running" | "done" | "failed";
  jobError: string | null;
  selectedEntries: number[];
  showBaseline: boolean;
}

export function initialState(): SessionState {
  return {
    instanceId: null,
    delta: 0.02,
    epsilon: 0.25,
    jobId: null,
    jobState: "idle",
    jobError: null,
    selectedEntries: [],
    showBaseline: true,
  };
}

export function validateDelta(delta: number): string | null {
  if (!(delta > 0 && delta <= 1)) {
    return "subsidy delta must lie in (0, 1]";
  }
  return null;
}

export function validateEpsilon(epsilon: number): string | null {
  if (!(epsilon > 0 && epsilon <= 1)) {
    return "epsilon must lie in (0, 1]";
  }
  return null;
}

export function toggleEntry(state: SessionState, idx: number): SessionState {
  const selected = state.selectedEntries.includes(idx)
    ? state.selectedEntries.filter((k) => k !== idx)
    : [...state.selectedEntries, idx];
  if (selected.length > MAX_COMPARE_COLUMNS) {
    return state; // the picker refuses a fifth column
  }
  return { ...state, selectedEntries: selected };
}

export function defaultSelection(entryCount: number): number[] {
  const n = Math.min(entryCount, MAX_COMPARE_COLUMNS);
  return Array.from({ length: n }, (_, k) => k);
}
