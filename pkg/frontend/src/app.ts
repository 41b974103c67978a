// Explorer application: pick an instance, steer the knobs, launch runs,
// watch progress, and compare results. All service interaction goes through
// ApiClient; session state is rebuilt from the run index on refresh.

import { ApiClient, ApiError } from "./api.js";
import { configDiff, sameInstance } from "./diff.js";
import {
  HistoryEntry,
  SessionState,
  appendRun,
  entryFromRecord,
  historyFromRecords,
  initialState,
  selectCompare,
  selectInstance,
  setKnob,
  updateRun,
} from "./state.js";
import { renderTrace } from "./trace.js";
import type { Capabilities, DatasetInfo, ModelInfo, RunEvent, RunRecord } from "./types.js";
import { maskOverlay, probabilityBars, swipeCompare, syncPanZoom } from "./widgets.js";

const NUMERIC_KNOBS: Array<{ name: string; label: string }> = [
  { name: "num_iterations", label: "iterations" },
  { name: "lambda_d", label: "distance weight" },
  { name: "tau", label: "filter depth" },
  { name: "respaced_steps", label: "respaced steps" },
  { name: "mask_threshold", label: "mask threshold" },
  { name: "mask_dilation", label: "mask dilation" },
];

export class ExplorerApp {
  state!: SessionState;
  caps!: Capabilities;
  datasets: DatasetInfo[] = [];
  models: ModelInfo[] = [];
  classifierId: string | null = null;
  denoiserId: string | null = null;
  traces = new Map<string, number[]>();
  activeRunId: string | null = null;

  constructor(
    private root: HTMLElement,
    readonly client: ApiClient,
  ) {}

  async init(): Promise<void> {
    this.caps = await this.client.capabilities();
    this.state = initialState(this.caps);
    this.datasets = await this.client.datasets();
    this.models = await this.client.models();
    this.classifierId = this.models.find((m) => m.kind === "classifier")?.id ?? null;
    this.denoiserId = this.models.find((m) => m.kind === "denoiser")?.id ?? null;
    this.state.history = historyFromRecords(await this.client.listRuns());
    this.renderShell();
    if (this.datasets.length > 0) {
      await this.loadInstances(this.datasets[0]!.id, "eval");
    }
    this.renderHistory();
  }

  // -- layout -----------------------------------------------------------------

  private el<T extends HTMLElement>(selector: string): T {
    const node = this.root.querySelector<T>(selector);
    if (!node) throw new Error(`missing element ${selector}`);
    return node;
  }

  renderShell(): void {
    this.root.innerHTML = `
      <header class="topbar">
        <h1>counterfactual explorer</h1>
        <span id="asset-note" class="asset-note"></span>
      </header>
      <main class="columns">
        <section class="col instances">
          <h2>instances</h2>
          <div id="instance-grid" class="instance-grid"></div>
        </section>
        <section class="col control">
          <h2>run</h2>
          <div id="selection-note" class="selection-note">pick an instance</div>
          <form id="knob-form" class="knob-form"></form>
          <div class="launch-row">
            <button id="launch" type="button" disabled>explain</button>
            <button id="diversify" type="button" disabled>diversify</button>
          </div>
          <div id="rejection" class="rejection" hidden></div>
          <div id="trace" class="trace"></div>
          <div id="artifacts" class="artifacts"></div>
          <div id="probs" class="probs"></div>
          <div id="swipe" class="swipe"></div>
        </section>
        <section class="col side">
          <h2>history</h2>
          <ol id="history" class="history"></ol>
          <h2>compare</h2>
          <div id="compare" class="compare"></div>
        </section>
      </main>`;
    const note = this.el<HTMLElement>("#asset-note");
    note.textContent =
      this.classifierId && this.denoiserId
        ? `classifier=${this.classifierId} denoiser=${this.denoiserId}`
        : "no classifier/denoiser registered";
    this.renderKnobForm();
    this.el<HTMLButtonElement>("#launch").addEventListener("click", () => void this.launchRun());
    this.el<HTMLButtonElement>("#diversify").addEventListener("click", () =>
      void this.launchRun(Math.round(this.caps.knobs["diversity_k"]?.default ?? 4)),
    );
  }

  renderKnobForm(): void {
    const form = this.el<HTMLFormElement>("#knob-form");
    form.innerHTML = "";
    const methodRow = document.createElement("label");
    methodRow.textContent = "attack ";
    const methodSel = document.createElement("select");
    methodSel.name = "method";
    for (const m of this.caps.methods) {
      const opt = document.createElement("option");
      opt.value = m;
      opt.textContent = m;
      methodSel.appendChild(opt);
    }
    methodSel.addEventListener("change", () => {
      this.state = setKnob(this.state, this.caps, "method", methodSel.value);
    });
    methodRow.appendChild(methodSel);
    form.appendChild(methodRow);

    const normRow = document.createElement("label");
    normRow.textContent = "norm ";
    const normSel = document.createElement("select");
    normSel.name = "distance_norm";
    for (const n of this.caps.norms) {
      const opt = document.createElement("option");
      opt.value = n;
      opt.textContent = n;
      normSel.appendChild(opt);
    }
    normSel.addEventListener("change", () => {
      this.state = setKnob(this.state, this.caps, "distance_norm", normSel.value);
    });
    normRow.appendChild(normSel);
    form.appendChild(normRow);

    for (const { name, label } of NUMERIC_KNOBS) {
      const range = this.caps.knobs[name];
      if (!range) continue;
      const row = document.createElement("label");
      row.className = "knob-row";
      row.textContent = `${label} `;
      const input = document.createElement("input");
      input.type = "number";
      input.name = name;
      input.min = String(range.min);
      input.max = String(range.max);
      input.step = String(range.step);
      const knobValue = (): string =>
        String((this.state.knobs as unknown as Record<string, unknown>)[name]);
      input.value = knobValue();
      input.addEventListener("change", () => {
        this.state = setKnob(this.state, this.caps, name as never, Number(input.value));
        input.value = knobValue();
      });
      row.appendChild(input);
      form.appendChild(row);
    }

    const seedRow = document.createElement("label");
    seedRow.textContent = "seed ";
    const seedInput = document.createElement("input");
    seedInput.type = "number";
    seedInput.name = "seed";
    seedInput.value = "0";
    seedInput.addEventListener("change", () => {
      this.state = setKnob(this.state, this.caps, "seed", Number(seedInput.value));
    });
    seedRow.appendChild(seedInput);
    form.appendChild(seedRow);

    const targetRow = document.createElement("label");
    targetRow.textContent = "target class ";
    const targetSel = document.createElement("select");
    targetSel.name = "target";
    targetSel.id = "target-select";
    targetSel.addEventListener("change", () => {
      this.state = { ...this.state, targetLabel: Number(targetSel.value) };
    });
    targetRow.appendChild(targetSel);
    form.appendChild(targetRow);
  }

  async loadInstances(datasetId: string, split: string): Promise<void> {
    const dataset = this.datasets.find((d) => d.id === datasetId);
    if (!dataset) return;
    const { instances } = await this.client.instances(datasetId, split, 0, 24);
    const grid = this.el<HTMLElement>("#instance-grid");
    grid.innerHTML = "";
    const targetSel = this.el<HTMLSelectElement>("#target-select");
    targetSel.innerHTML = "";
    dataset.class_names.forEach((name, i) => {
      const opt = document.createElement("option");
      opt.value = String(i);
      opt.textContent = `${i}: ${name}`;
      targetSel.appendChild(opt);
    });
    for (const inst of instances) {
      const cell = document.createElement("button");
      cell.type = "button";
      cell.className = "instance-cell";
      cell.dataset.index = String(inst.index);
      const img = document.createElement("img");
      img.src = this.client.instanceImageUrl(datasetId, split, inst.index);
      img.alt = `instance ${inst.index}`;
      const caption = document.createElement("span");
      caption.textContent = `#${inst.index} ${inst.label_name}`;
      cell.append(img, caption);
      cell.addEventListener("click", () => {
        this.state = selectInstance(this.state, datasetId, split, inst.index);
        const other = inst.label === 0 ? 1 : 0;
        this.state = { ...this.state, targetLabel: other };
        targetSel.value = String(other);
        this.el<HTMLElement>("#selection-note").textContent =
          `instance #${inst.index} (${inst.label_name}) -> target ${dataset.class_names[other] ?? other}`;
        this.el<HTMLButtonElement>("#launch").disabled = false;
        this.el<HTMLButtonElement>("#diversify").disabled = false;
        for (const el of grid.querySelectorAll(".selected")) el.classList.remove("selected");
        cell.classList.add("selected");
      });
      grid.appendChild(cell);
    }
  }

  // -- running ------------------------------------------------------------------

  buildRequest(diversityK?: number) {
    const { knobs } = this.state;
    return {
      dataset_id: this.state.datasetId!,
      split: this.state.split,
      index: this.state.index!,
      classifier_id: this.classifierId!,
      denoiser_id: this.denoiserId!,
      target_label: this.state.targetLabel!,
      seed: knobs.seed,
      attack: {
        method: knobs.method,
        num_iterations: knobs.num_iterations,
        lambda_d: knobs.lambda_d,
        distance_norm: knobs.distance_norm,
        tau: knobs.tau,
        respaced_steps: knobs.respaced_steps,
      },
      refine: {
        mask_threshold: knobs.mask_threshold,
        mask_dilation: knobs.mask_dilation,
      },
      ...(diversityK ? { diversity_k: diversityK } : {}),
    };
  }

  async launchRun(diversityK?: number): Promise<string | null> {
    const rejection = this.el<HTMLElement>("#rejection");
    rejection.hidden = true;
    if (
      this.state.index === null ||
      this.state.targetLabel === null ||
      !this.classifierId ||
      !this.denoiserId
    ) {
      rejection.hidden = false;
      rejection.textContent = "select an instance, target, and assets first";
      return null;
    }
    const request = this.buildRequest(diversityK);
    let submitted: { id: string };
    try {
      submitted = await this.client.submitRun(request);
    } catch (err) {
      // rejection reasons surface verbatim; no history entry is added
      rejection.hidden = false;
      rejection.textContent = err instanceof ApiError ? err.detail : String(err);
      return null;
    }
    const entry: HistoryEntry = {
      runId: submitted.id,
      status: "queued",
      config: { ...request.attack, ...request.refine, seed: request.seed, diversity_k: diversityK ?? null },
      instance: { dataset_id: request.dataset_id, split: request.split, index: request.index },
      targetLabel: request.target_label,
      flipped: null,
      diversity: null,
    };
    this.state = appendRun(this.state, entry);
    this.traces.set(submitted.id, []);
    this.activeRunId = submitted.id;
    this.renderHistory();
    this.watchRun(submitted.id);
    return submitted.id;
  }

  watchRun(runId: string): void {
    const onEvent = (event: RunEvent) => {
      if (event.iteration !== undefined) {
        const trace = this.traces.get(runId) ?? [];
        if (event.objective !== undefined && event.objective !== null) {
          trace.push(event.objective);
        }
        this.traces.set(runId, trace);
        if (this.activeRunId === runId) {
          renderTrace(this.el<HTMLElement>("#trace"), trace);
        }
      }
      if (event.status) {
        void this.finishRun(runId);
      }
    };
    const handle = this.client.streamEvents(runId, onEvent);
    void handle.done;
  }

  async finishRun(runId: string): Promise<void> {
    const record = await this.client.getRun(runId);
    this.state = updateRun(this.state, runId, {
      status: record.status,
      flipped: record.result?.flipped ?? null,
      diversity: record.result?.diversity ?? null,
    });
    this.renderHistory();
    if (this.activeRunId === runId && record.status === "succeeded") {
      this.renderRunDetail(record);
    }
  }

  renderRunDetail(record: RunRecord): void {
    const container = this.el<HTMLElement>("#artifacts");
    container.innerHTML = "";
    const dataset = this.datasets.find((d) => d.id === record.request.dataset_id);
    const classNames = dataset?.class_names ?? [];
    const isDiversity = Boolean(record.request.diversity_k);
    if (isDiversity) {
      const grid = document.createElement("div");
      grid.className = "diversity-grid";
      for (const name of record.artifacts.filter((a) => a.endsWith("counterfactual.png"))) {
        const img = document.createElement("img");
        img.src = this.client.artifactUrl(record.id, name);
        img.alt = name;
        grid.appendChild(img);
      }
      const sigma = document.createElement("p");
      sigma.id = "diversity-sigma";
      sigma.textContent = `diversity = ${record.result?.diversity?.toFixed(5) ?? "n/a"}`;
      container.append(grid, sigma);
      return;
    }

    const quad = document.createElement("div");
    quad.className = "artifact-quad";
    for (const name of ["input", "pre_explanation", "mask", "counterfactual"]) {
      const cell = document.createElement("figure");
      cell.className = "artifact-cell";
      cell.dataset.artifact = name;
      if (name === "mask") {
        const box = document.createElement("div");
        maskOverlay(
          box,
          this.client.artifactUrl(record.id, "input.png"),
          this.client.artifactUrl(record.id, "mask.png"),
        );
        cell.appendChild(box);
      } else {
        const img = document.createElement("img");
        img.src = this.client.artifactUrl(record.id, `${name}.png`);
        img.alt = name;
        cell.appendChild(img);
      }
      const caption = document.createElement("figcaption");
      caption.textContent = name.replace("_", " ");
      cell.appendChild(caption);
      quad.appendChild(cell);
    }
    container.appendChild(quad);

    if (record.result) {
      const probsEl = this.el<HTMLElement>("#probs");
      probsEl.innerHTML = `<h3>probabilities (flipped: ${record.result.flipped})</h3>
        <div class="prob-pane" id="probs-input"></div><div class="prob-pane" id="probs-cf"></div>`;
      probabilityBars(
        this.el<HTMLElement>("#probs-input"),
        classNames,
        record.result.probs_input,
        record.result.source_label,
      );
      probabilityBars(
        this.el<HTMLElement>("#probs-cf"),
        classNames,
        record.result.probs_counterfactual,
        record.result.target_label,
      );
    }
    const swipe = this.el<HTMLElement>("#swipe");
    swipe.innerHTML = "";
    const box = document.createElement("div");
    swipeCompare(
      box,
      this.client.artifactUrl(record.id, "input.png"),
      this.client.artifactUrl(record.id, "counterfactual.png"),
    );
    swipe.appendChild(box);
  }

  // -- history & compare ---------------------------------------------------------

  renderHistory(): void {
    const list = this.el<HTMLOListElement>("#history");
    list.innerHTML = "";
    for (const entry of this.state.history) {
      const item = document.createElement("li");
      item.className = `history-entry status-${entry.status}`;
      item.dataset.runId = entry.runId;
      const flip =
        entry.flipped === null ? "" : entry.flipped ? " [flipped]" : " [not flipped]";
      const label = document.createElement("button");
      label.type = "button";
      label.className = "history-label";
      label.textContent =
        `#${entry.instance.index} ${String(entry.config["method"] ?? "?")} ` +
        `seed=${String(entry.config["seed"])} ${entry.status}${flip}`;
      label.addEventListener("click", () => {
        this.activeRunId = entry.runId;
        void this.client.getRun(entry.runId).then((record) => {
          if (record.status === "succeeded") this.renderRunDetail(record);
          renderTrace(this.el<HTMLElement>("#trace"), this.traces.get(entry.runId) ?? []);
        });
      });
      const compare = document.createElement("button");
      compare.type = "button";
      compare.className = "history-compare";
      compare.textContent = "compare";
      compare.addEventListener("click", () => {
        this.state = selectCompare(this.state, entry.runId);
        void this.renderCompare();
      });
      item.append(label, compare);
      list.appendChild(item);
    }
  }

  async renderCompare(): Promise<void> {
    const { a, b } = this.state.compare;
    const pane = this.el<HTMLElement>("#compare");
    if (!a || !b) {
      pane.innerHTML = `<p class="compare-hint">pick two runs to compare</p>`;
      return;
    }
    const [recordA, recordB] = await Promise.all([this.client.getRun(a), this.client.getRun(b)]);
    const entryA = entryFromRecord(recordA);
    const entryB = entryFromRecord(recordB);
    const rows = configDiff(entryA.config, entryB.config);
    const warn = !sameInstance(entryA.instance, entryB.instance);
    pane.innerHTML = `
      ${warn ? `<div class="warning-banner">comparing runs of different instances</div>` : ""}
      <div class="compare-panes">
        <div class="compare-pane" id="compare-a"></div>
        <div class="compare-pane" id="compare-b"></div>
      </div>
      <table class="diff-table"><thead>
        <tr><th>knob</th><th>${a}</th><th>${b}</th></tr></thead>
        <tbody>${rows
          .map(
            (r) =>
              `<tr><td>${r.key}</td><td>${JSON.stringify(r.a)}</td><td>${JSON.stringify(r.b)}</td></tr>`,
          )
          .join("")}</tbody></table>
      ${rows.length === 0 ? `<p class="diff-empty">configs are identical</p>` : ""}`;
    for (const [pid, record] of [["#compare-a", recordA], ["#compare-b", recordB]] as const) {
      const cell = this.el<HTMLElement>(pid);
      if (record.status === "succeeded" && !record.request.diversity_k) {
        cell.innerHTML = `
          <img class="pan-target" src="${this.client.artifactUrl(record.id, "counterfactual.png")}" alt="counterfactual" />
          <img class="compare-mask" src="${this.client.artifactUrl(record.id, "mask.png")}" alt="mask" />
          <div class="compare-probs"></div>`;
        const probsEl = cell.querySelector<HTMLElement>(".compare-probs")!;
        if (record.result) {
          probabilityBars(probsEl, [], record.result.probs_counterfactual, record.result.target_label);
        }
      } else {
        cell.textContent = `${record.id}: ${record.status}`;
      }
    }
    syncPanZoom([
      this.el<HTMLElement>("#compare-a"),
      this.el<HTMLElement>("#compare-b"),
    ]);
  }
}

export async function mountExplorer(root: HTMLElement, client: ApiClient): Promise<ExplorerApp> {
  const app = new ExplorerApp(root, client);
  await app.init();
  return app;
}
