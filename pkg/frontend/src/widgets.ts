// DOM builders: probability bars, swipe compare, mask overlay, synced
// pan/zoom. All take plain elements so tests can mount them standalone.

export function probabilityBars(
  el: HTMLElement,
  classNames: string[],
  probs: number[],
  highlight: number | null = null,
): void {
  el.innerHTML = "";
  probs.forEach((p, i) => {
    const row = document.createElement("div");
    row.className = "prob-row" + (i === highlight ? " prob-highlight" : "");
    const label = document.createElement("span");
    label.className = "prob-label";
    label.textContent = classNames[i] ?? `class ${i}`;
    const bar = document.createElement("div");
    bar.className = "prob-bar";
    const fill = document.createElement("div");
    fill.className = "prob-fill";
    fill.style.width = `${(p * 100).toFixed(1)}%`;
    const value = document.createElement("span");
    value.className = "prob-value";
    value.textContent = p.toFixed(3);
    bar.appendChild(fill);
    row.append(label, bar, value);
    el.appendChild(row);
  });
}

/** Two stacked images; the slider clips the top one for a swipe compare. */
export function swipeCompare(el: HTMLElement, urlUnder: string, urlOver: string): void {
  el.classList.add("swipe-box");
  el.innerHTML = `
    <img class="swipe-under" src="${urlUnder}" alt="left image" />
    <img class="swipe-over" src="${urlOver}" alt="right image" />
    <input class="swipe-slider" type="range" min="0" max="100" value="50" aria-label="swipe position" />
    <div class="swipe-divider"></div>`;
  const over = el.querySelector<HTMLImageElement>(".swipe-over")!;
  const divider = el.querySelector<HTMLElement>(".swipe-divider")!;
  const slider = el.querySelector<HTMLInputElement>(".swipe-slider")!;
  const apply = () => {
    const pct = Number(slider.value);
    over.style.clipPath = `inset(0 ${100 - pct}% 0 0)`;
    divider.style.left = `${pct}%`;
  };
  slider.addEventListener("input", apply);
  apply();
}

/** Input image with the mask as a translucent layer; opacity adjustable. */
export function maskOverlay(el: HTMLElement, inputUrl: string, maskUrl: string): void {
  el.classList.add("overlay-box");
  el.innerHTML = `
    <img class="overlay-base" src="${inputUrl}" alt="input image" />
    <img class="overlay-mask" src="${maskUrl}" alt="mask overlay" />
    <label class="overlay-control">mask opacity
      <input class="overlay-opacity" type="range" min="0" max="100" value="45" />
    </label>`;
  const mask = el.querySelector<HTMLImageElement>(".overlay-mask")!;
  const slider = el.querySelector<HTMLInputElement>(".overlay-opacity")!;
  const apply = () => {
    mask.style.opacity = String(Number(slider.value) / 100);
  };
  slider.addEventListener("input", apply);
  apply();
}

export interface PanZoomState {
  scale: number;
  x: number;
  y: number;
}

/** Shared wheel-zoom and drag-pan across all registered panes. */
export function syncPanZoom(panes: HTMLElement[]): { state: PanZoomState; reset: () => void } {
  const state: PanZoomState = { scale: 1, x: 0, y: 0 };
  const apply = () => {
    for (const pane of panes) {
      const img = pane.querySelector<HTMLElement>("img, .pan-target");
      if (img) img.style.transform = `translate(${state.x}px, ${state.y}px) scale(${state.scale})`;
    }
  };
  for (const pane of panes) {
    pane.classList.add("panzoom");
    pane.addEventListener("wheel", (ev) => {
      ev.preventDefault();
      const factor = (ev as WheelEvent).deltaY < 0 ? 1.15 : 1 / 1.15;
      state.scale = Math.min(12, Math.max(1, state.scale * factor));
      apply();
    });
    let dragging: { x: number; y: number } | null = null;
    pane.addEventListener("pointerdown", (ev) => {
      dragging = { x: (ev as PointerEvent).clientX - state.x, y: (ev as PointerEvent).clientY - state.y };
    });
    pane.addEventListener("pointermove", (ev) => {
      if (!dragging) return;
      state.x = (ev as PointerEvent).clientX - dragging.x;
      state.y = (ev as PointerEvent).clientY - dragging.y;
      apply();
    });
    pane.addEventListener("pointerup", () => (dragging = null));
    pane.addEventListener("pointerleave", () => (dragging = null));
  }
  return {
    state,
    reset: () => {
      state.scale = 1;
      state.x = 0;
      state.y = 0;
      apply();
    },
  };
}
