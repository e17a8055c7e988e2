/**
 * Scrape-text parsing and client-side series accumulation.
 *
 * The gateway exposes only the latest value per series, so the portal keeps
 * its own bounded history per pod, appended on every poll.
 */

const LINE = /^([A-Za-z_][A-Za-z0-9_]*)(?:\{([^}]*)\})? (\S+) (\d+)$/;
const LABEL = /([A-Za-z_][A-Za-z0-9_]*)="([^"]*)"/g;

export interface MetricPoint {
  name: string;
  labels: Record<string, string>;
  value: number;
  timestampMs: number;
}

export function parseExposition(text: string): MetricPoint[] {
  const out: MetricPoint[] = [];
  for (const line of text.split("\n")) {
    if (!line.trim()) continue;
    const m = LINE.exec(line);
    if (!m) continue;
    const labels: Record<string, string> = {};
    if (m[2]) {
      for (const pair of m[2].matchAll(LABEL)) {
        labels[pair[1]] = pair[2];
      }
    }
    out.push({
      name: m[1],
      labels,
      value: Number(m[3]),
      timestampMs: Number(m[4]),
    });
  }
  return out;
}

export interface SeriesPoint {
  timestampMs: number;
  value: number;
}

export class MemoryHistory {
  private series = new Map<string, SeriesPoint[]>();

  constructor(private capacity = 720) {}

  addSnapshot(points: MetricPoint[]): void {
    for (const point of points) {
      if (point.name !== "pod_memory_bytes") continue;
      const pod = point.labels["pod"];
      if (!pod) continue;
      let list = this.series.get(pod);
      if (!list) {
        list = [];
        this.series.set(pod, list);
      }
      const last = list[list.length - 1];
      if (last && point.timestampMs <= last.timestampMs) continue; // repeat poll
      list.push({ timestampMs: point.timestampMs, value: point.value });
      if (list.length > this.capacity) list.splice(0, list.length - this.capacity);
    }
  }

  pods(): string[] {
    return [...this.series.keys()].sort();
  }

  get(pod: string): SeriesPoint[] {
    return this.series.get(pod) ?? [];
  }
}

export interface JitterSummary {
  meanMs: number;
  p95Ms: number;
  maxMs: number;
  spikeCount: number;
  windows: Array<{ start: number; end: number }>;
}

/** Pull jitter gauges out of a snapshot; null when no measurement exists. */
export function jitterSummary(points: MetricPoint[]): JitterSummary | null {
  const byName = new Map<string, MetricPoint[]>();
  for (const p of points) {
    if (!p.name.startsWith("jitter_")) continue;
    const list = byName.get(p.name) ?? [];
    list.push(p);
    byName.set(p.name, list);
  }
  const mean = byName.get("jitter_mean_ms")?.[0];
  const p95 = byName.get("jitter_p95_ms")?.[0];
  const max = byName.get("jitter_max_ms")?.[0];
  if (!mean || !p95 || !max) return null;
  const starts = byName.get("jitter_spike_window_start_s") ?? [];
  const ends = byName.get("jitter_spike_window_end_s") ?? [];
  const windows: Array<{ start: number; end: number }> = [];
  for (const s of starts.sort((a, b) =>
    (a.labels["window"] ?? "").localeCompare(b.labels["window"] ?? ""))) {
    const e = ends.find((x) => x.labels["window"] === s.labels["window"]);
    if (e) windows.push({ start: s.value, end: e.value });
  }
  return {
    meanMs: mean.value,
    p95Ms: p95.value,
    maxMs: max.value,
    spikeCount: byName.get("jitter_spike_count")?.[0]?.value ?? windows.length,
    windows,
  };
}
