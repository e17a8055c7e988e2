/**
 * Pure view-model builders. Rendering is a function of (API responses,
 * user input); nothing here touches the network or the DOM, which is what
 * makes the portal reload-safe and unit-testable.
 */

import type { InventoryTree, Lab, Reservation, SessionDescriptor, Testbed, PodStatus } from "./types.js";
import type { JitterSummary, MemoryHistory } from "./metrics.js";

export const SLOT_SECONDS = 1800; // the portal books in 30-minute slots
export const SLOTS_PER_DAY = 48;

// ---------------------------------------------------------------- wizard --

export interface WizardState {
  labId: string | null;
  testbedId: string | null;
  nodeId: string | null;
  deviceIds: string[];
  dayStartS: number | null;
  slotIndex: number | null;
  durationSlots: number;
}

export function emptyWizard(): WizardState {
  return {
    labId: null,
    testbedId: null,
    nodeId: null,
    deviceIds: [],
    dayStartS: null,
    slotIndex: null,
    durationSlots: 2,
  };
}

export interface SlotVm {
  index: number;
  startS: number;
  endS: number;
  label: string;
  taken: boolean;
  past: boolean;
  selected: boolean;
}

export interface DeviceMarkerVm {
  deviceId: string;
  kind: string;
  nodeId: string;
  x: number;
  y: number;
  selected: boolean;
}

export interface WizardVm {
  step: 1 | 2 | 3 | 4;
  labs: Lab[];
  testbeds: Testbed[];
  nodes: string[];
  markers: DeviceMarkerVm[];
  slots: SlotVm[];
  canSubmit: boolean;
  submission: {
    testbed_id: string;
    node_id: string;
    device_ids: string[];
    start: number;
    end: number;
  } | null;
}

function slotLabel(startS: number, dayStartS: number): string {
  const minutes = Math.floor((startS - dayStartS) / 60);
  const h = String(Math.floor(minutes / 60)).padStart(2, "0");
  const m = String(minutes % 60).padStart(2, "0");
  return `${h}:${m}`;
}

/** A window conflicts when it overlaps a reservation sharing the node or a device. */
export function windowTaken(
  reservations: Reservation[],
  nodeId: string,
  deviceIds: string[],
  startS: number,
  endS: number,
): boolean {
  const chosen = new Set(deviceIds);
  for (const r of reservations) {
    if (!(r.start < endS && startS < r.end)) continue;
    if (r.node_id === nodeId) return true;
    if (r.device_ids.some((d) => chosen.has(d))) return true;
  }
  return false;
}

export function wizardVm(
  state: WizardState,
  inventory: InventoryTree | null,
  reservations: Reservation[],
  nowS: number,
): WizardVm {
  const labs = inventory?.labs ?? [];
  const lab = labs.find((l) => l.lab_id === state.labId) ?? null;
  const testbeds = lab?.testbeds ?? [];
  const testbed = testbeds.find((t) => t.testbed_id === state.testbedId) ?? null;
  const nodes = testbed?.edge_nodes ?? [];

  let step: 1 | 2 | 3 | 4 = 1;
  if (lab) step = 2;
  if (lab && testbed) step = 3;
  if (lab && testbed && state.nodeId && state.deviceIds.length > 0) step = 4;

  const markers: DeviceMarkerVm[] = (testbed?.devices ?? []).map((d) => ({
    deviceId: d.device_id,
    kind: d.kind,
    nodeId: d.node_id,
    x: d.layout_pos[0],
    y: d.layout_pos[1],
    selected: state.deviceIds.includes(d.device_id),
  }));

  const slots: SlotVm[] = [];
  if (testbed && state.nodeId && state.deviceIds.length > 0 && state.dayStartS !== null) {
    for (let i = 0; i < SLOTS_PER_DAY; i++) {
      const startS = state.dayStartS + i * SLOT_SECONDS;
      const endS = startS + SLOT_SECONDS;
      slots.push({
        index: i,
        startS,
        endS,
        label: slotLabel(startS, state.dayStartS),
        taken: windowTaken(reservations, state.nodeId, state.deviceIds, startS, endS),
        past: startS < nowS,
        selected:
          state.slotIndex !== null &&
          i >= state.slotIndex &&
          i < state.slotIndex + state.durationSlots,
      });
    }
  }

  let submission: WizardVm["submission"] = null;
  if (testbed && state.nodeId && state.deviceIds.length && state.dayStartS !== null &&
      state.slotIndex !== null) {
    const start = state.dayStartS + state.slotIndex * SLOT_SECONDS;
    const end = start + state.durationSlots * SLOT_SECONDS;
    const blocked =
      windowTaken(reservations, state.nodeId, state.deviceIds, start, end) ||
      start < nowS;
    if (!blocked) {
      submission = {
        testbed_id: testbed.testbed_id,
        node_id: state.nodeId,
        device_ids: [...state.deviceIds].sort(),
        start,
        end,
      };
    }
  }

  return {
    step,
    labs,
    testbeds,
    nodes,
    markers,
    slots,
    canSubmit: submission !== null,
    submission,
  };
}

// ---------------------------------------------------------------- session --

export interface SessionPanelState {
  reservationId: string | null;
  app: string;
  selectedSessionId: string | null;
  confirmingDisconnect: boolean;
}

export function emptySessionPanel(app = "gnuradio"): SessionPanelState {
  return { reservationId: null, app, selectedSessionId: null, confirmingDisconnect: false };
}

export interface InstanceVm {
  sessionId: string;
  podName: string | null;
  state: string;
  webPort: number | null;
  selected: boolean;
}

export interface SessionPanelVm {
  reservation: Reservation | null;
  inWindow: boolean;
  countdownS: number | null;
  connectEnabled: boolean;
  instances: InstanceVm[];
  selected: InstanceVm | null;
  bridgeUrl: string | null;
  disconnectVisible: boolean;
  confirmingDisconnect: boolean;
  pendingReason: string | null;
  failedStep: string | null;
  sidebar: { testbed: string; devices: string[]; host: string; guide: string } | null;
}

export function sessionPanelVm(
  state: SessionPanelState,
  reservations: Reservation[],
  sessions: SessionDescriptor[],
  pods: Record<string, PodStatus | undefined>,
  nowS: number,
  gatewayHost: string,
): SessionPanelVm {
  const reservation =
    reservations.find((r) => r.reservation_id === state.reservationId) ?? null;
  const inWindow =
    reservation !== null && reservation.start <= nowS && nowS < reservation.end;
  const countdownS =
    reservation !== null && nowS < reservation.start
      ? Math.ceil(reservation.start - nowS)
      : null;

  const mine = reservation
    ? sessions.filter(
        (s) => s.reservation_id === reservation.reservation_id && s.state !== "Closed",
      )
    : [];
  const instances: InstanceVm[] = mine.map((s) => ({
    sessionId: s.session_id,
    podName: s.pod_name,
    state: s.state,
    webPort: s.web_port,
    selected: s.session_id === state.selectedSessionId,
  }));
  const selected = instances.find((i) => i.selected) ?? null;

  const pod = selected?.podName ? pods[selected.podName] : undefined;
  return {
    reservation,
    inWindow,
    countdownS,
    connectEnabled: inWindow,
    instances,
    selected,
    bridgeUrl:
      selected && selected.state === "Live" && selected.webPort
        ? `http://${gatewayHost}:${selected.webPort}/`
        : null,
    disconnectVisible: selected !== null && selected.state === "Live",
    confirmingDisconnect: state.confirmingDisconnect,
    pendingReason: pod?.phase === "Pending" ? pod.pending_reason : null,
    failedStep: pod?.phase === "Failed" ? pod.failed_step : null,
    sidebar: reservation
      ? {
          testbed: reservation.testbed_id,
          devices: [...reservation.device_ids].sort(),
          host: gatewayHost,
          guide:
            "Connect opens the experiment desktop in the panel; run your " +
            "scripts in its terminal, then Disconnect to release the pod.",
        }
      : null,
  };
}

// ---------------------------------------------------------------- metrics --

export interface MetricsSeriesVm {
  pod: string;
  points: Array<{ timestampMs: number; value: number }>;
  plateauBytes: number | null;
}

export interface MetricsVm {
  empty: boolean;
  stale: boolean;
  series: MetricsSeriesVm[];
  jitter: JitterSummary | null;
}

export function metricsVm(
  history: MemoryHistory,
  jitter: JitterSummary | null,
  lastPollMs: number | null,
  nowMs: number,
  staleAfterMs = 10_000,
): MetricsVm {
  const series: MetricsSeriesVm[] = history.pods().map((pod) => {
    const points = history.get(pod);
    const tail = points.slice(-5);
    const plateauBytes = tail.length
      ? tail.reduce((acc, p) => acc + p.value, 0) / tail.length
      : null;
    return { pod, points, plateauBytes };
  });
  return {
    empty: series.length === 0,
    stale: lastPollMs === null || nowMs - lastPollMs > staleAfterMs,
    series,
    jitter,
  };
}
