// Config comparison for the side-by-side view.

export interface DiffRow {
  key: string;
  a: unknown;
  b: unknown;
}

/** Rows for every key whose value differs; equal configs give no rows. */
export function configDiff(
  a: Record<string, unknown>,
  b: Record<string, unknown>,
): DiffRow[] {
  const keys = [...new Set([...Object.keys(a), ...Object.keys(b)])].sort();
  const rows: DiffRow[] = [];
  for (const key of keys) {
    if (JSON.stringify(a[key]) !== JSON.stringify(b[key])) {
      rows.push({ key, a: a[key], b: b[key] });
    }
  }
  return rows;
}

export interface InstanceRef {
  dataset_id: string;
  split: string;
  index: number;
}

export function sameInstance(a: InstanceRef, b: InstanceRef): boolean {
  return a.dataset_id === b.dataset_id && a.split === b.split && a.index === b.index;
}
