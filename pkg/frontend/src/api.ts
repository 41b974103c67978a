// Typed client for the workbench API. The event stream is consumed with a
// plain fetch reader so the same code runs in the browser and in tests;
// dropped connections retry and fall back to record polling.

import type {
  Capabilities,
  DatasetInfo,
  InstanceInfo,
  ModelInfo,
  RunEvent,
  RunRecord,
  SubmitRunRequest,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(detail);
  }
}

export interface SseParseResult {
  events: RunEvent[];
  rest: string;
}

/** Extract complete `data:` events from an SSE buffer; keep the remainder. */
export function parseSseBuffer(buffer: string): SseParseResult {
  const events: RunEvent[] = [];
  const chunks = buffer.split("\n\n");
  const rest = chunks.pop() ?? "";
  for (const chunk of chunks) {
    for (const line of chunk.split("\n")) {
      if (line.startsWith("data: ")) {
        try {
          events.push(JSON.parse(line.slice("data: ".length)));
        } catch {
          // malformed frame: skip, the stream stays usable
        }
      }
    }
  }
  return { events, rest };
}

export interface StreamHandle {
  done: Promise<void>;
  cancel: () => void;
}

export class ApiClient {
  constructor(
    private base: string = "",
    private fetchFn: typeof fetch = globalThis.fetch.bind(globalThis),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.base + path, init);
    if (!response.ok) {
      let detail = `${response.status}`;
      try {
        const body = (await response.json()) as { detail?: unknown };
        if (body.detail !== undefined) detail = String(body.detail);
      } catch {
        // non-JSON error body
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  health(): Promise<{ status: string }> {
    return this.request("/health");
  }

  capabilities(): Promise<Capabilities> {
    return this.request("/capabilities");
  }

  async datasets(): Promise<DatasetInfo[]> {
    const body = await this.request<{ datasets: DatasetInfo[] }>("/datasets");
    return body.datasets;
  }

  async models(): Promise<ModelInfo[]> {
    const body = await this.request<{ models: ModelInfo[] }>("/models");
    return body.models;
  }

  async instances(
    datasetId: string,
    split: string,
    offset = 0,
    limit = 32,
  ): Promise<{ total: number; instances: InstanceInfo[] }> {
    const params = new URLSearchParams({
      split,
      offset: String(offset),
      limit: String(limit),
    });
    return this.request(
      `/datasets/${encodeURIComponent(datasetId)}/instances?${params.toString()}`,
    );
  }

  instanceImageUrl(datasetId: string, split: string, index: number): string {
    return `${this.base}/datasets/${encodeURIComponent(datasetId)}/instances/${index}/image?split=${split}`;
  }

  submitRun(request: SubmitRunRequest): Promise<{ id: string; status: string }> {
    return this.request("/runs", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ schema_version: 1, ...request }),
    });
  }

  getRun(runId: string): Promise<RunRecord> {
    return this.request(`/runs/${runId}`);
  }

  async listRuns(status?: string): Promise<RunRecord[]> {
    const suffix = status ? `?status=${status}` : "";
    const body = await this.request<{ runs: RunRecord[] }>(`/runs${suffix}`);
    return body.runs;
  }

  artifactUrl(runId: string, name: string): string {
    return `${this.base}/runs/${runId}/artifacts/${name}`;
  }

  async fetchArtifact(runId: string, name: string): Promise<Blob> {
    const response = await this.fetchFn(this.artifactUrl(runId, name));
    if (!response.ok) throw new ApiError(response.status, `artifact ${name} unavailable`);
    return response.blob();
  }

  evaluateBatch(runIds: string[], classifierId?: string): Promise<{ id: string }> {
    return this.request("/batches/evaluate", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        schema_version: 1,
        run_ids: runIds,
        classifier_id: classifierId ?? null,
      }),
    });
  }

  getBatch(batchId: string): Promise<{ status: string; report?: Record<string, unknown> }> {
    return this.request(`/batches/${batchId}`);
  }

  /**
   * Stream run events. Retries a dropped stream; if the stream cannot be
   * re-established the handle falls back to polling the run record until a
   * terminal status, so progress is never lost on flaky networks.
   */
  streamEvents(
    runId: string,
    onEvent: (event: RunEvent) => void,
    options: { retries?: number; pollIntervalMs?: number } = {},
  ): StreamHandle {
    const retries = options.retries ?? 2;
    const pollInterval = options.pollIntervalMs ?? 250;
    let cancelled = false;

    const readOnce = async (): Promise<void> => {
      const response = await this.fetchFn(`${this.base}/runs/${runId}/events`);
      if (!response.ok || !response.body) {
        throw new ApiError(response.status, "event stream unavailable");
      }
      const reader = response.body.getReader();
      const decoder = new TextDecoder();
      let buffer = "";
      while (!cancelled) {
        const { done, value } = await reader.read();
        if (done) return;
        buffer += decoder.decode(value, { stream: true });
        const { events, rest } = parseSseBuffer(buffer);
        buffer = rest;
        for (const event of events) onEvent(event);
      }
      await reader.cancel().catch(() => undefined);
    };

    const pollUntilTerminal = async (): Promise<void> => {
      while (!cancelled) {
        const record = await this.getRun(runId);
        if (record.progress) {
          onEvent({
            iteration: record.progress.iteration,
            objective: record.progress.objective ?? undefined,
          });
        }
        if (record.status === "succeeded" || record.status === "failed" || record.status === "rejected") {
          onEvent({ status: record.status, error: record.error ?? undefined });
          return;
        }
        await new Promise((resolve) => setTimeout(resolve, pollInterval));
      }
    };

    const done = (async () => {
      for (let attempt = 0; attempt <= retries && !cancelled; attempt++) {
        try {
          await readOnce();
          return;
        } catch {
          await new Promise((resolve) => setTimeout(resolve, 100 * (attempt + 1)));
        }
      }
      if (!cancelled) await pollUntilTerminal();
    })();

    return { done, cancel: () => (cancelled = true) };
  }
}
