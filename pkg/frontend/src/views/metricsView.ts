/** Live metrics: per-pod memory charts plus the jitter summary. */

import { memoryChartSvg } from "../chart.js";
import type { MetricsVm } from "../state.js";

function jitterBlock(vm: MetricsVm): string {
  if (!vm.jitter) return "";
  const windows = vm.jitter.windows
    .map((w) => `<li>${w.start.toFixed(1)}s to ${w.end.toFixed(1)}s</li>`)
    .join("");
  return `
  <div class="jitter-summary" id="jitter-summary">
    <h3>Interarrival jitter</h3>
    <table>
      <tr><td>mean</td><td>${vm.jitter.meanMs.toFixed(3)} ms</td></tr>
      <tr><td>p95</td><td>${vm.jitter.p95Ms.toFixed(3)} ms</td></tr>
      <tr><td>max</td><td>${vm.jitter.maxMs.toFixed(3)} ms</td></tr>
      <tr><td>spikes</td><td>${vm.jitter.spikeCount}</td></tr>
    </table>
    <ul class="spike-windows">${windows}</ul>
  </div>`;
}

export function renderMetrics(vm: MetricsVm): string {
  const stale = vm.stale
    ? `<span class="badge stale" id="stale-badge">stale data</span>`
    : "";
  if (vm.empty) {
    return `<section class="metrics">${stale}
      <p class="empty" id="metrics-empty">No pods are reporting yet: connect a
      session to see its memory profile.</p>${jitterBlock(vm)}</section>`;
  }
  return `
<section class="metrics">
  ${stale}
  <h3>Pod memory</h3>
  <div id="memory-chart">${memoryChartSvg(vm.series)}</div>
  ${jitterBlock(vm)}
</section>`;
}
