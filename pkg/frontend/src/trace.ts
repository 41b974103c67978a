// Objective-trace chart as a bare SVG polyline (no chart dependency).

export function tracePoints(
  values: number[],
  width: number,
  height: number,
  pad = 4,
): string {
  if (values.length === 0) return "";
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const span = hi - lo || 1;
  const innerW = width - 2 * pad;
  const innerH = height - 2 * pad;
  const step = values.length > 1 ? innerW / (values.length - 1) : 0;
  return values
    .map((v, i) => {
      const x = pad + i * step;
      const y = pad + innerH * (1 - (v - lo) / span);
      return `${x.toFixed(2)},${y.toFixed(2)}`;
    })
    .join(" ");
}

export function renderTrace(el: HTMLElement, values: number[]): void {
  const width = 320;
  const height = 120;
  const last = values.length ? values[values.length - 1] : undefined;
  el.innerHTML = `
    <svg viewBox="0 0 ${width} ${height}" class="trace-svg" role="img" aria-label="objective trace">
      <polyline fill="none" stroke="currentColor" stroke-width="1.5"
        points="${tracePoints(values, width, height)}" />
    </svg>
    <div class="trace-caption">${values.length} iterations${
      last !== undefined ? `, objective ${last.toFixed(4)}` : ""
    }</div>`;
}
