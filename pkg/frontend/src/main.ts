/**
 * Browser bootstrap: one state atom, event delegation, 2-second coalesced
 * polling. Views are pure string renderers over the current state.
 */

import { ApiClient, ApiError } from "./api.js";
import { jitterSummary, MemoryHistory, parseExposition } from "./metrics.js";
import { CoalescedPoller } from "./poller.js";
import {
  emptySessionPanel,
  emptyWizard,
  metricsVm,
  sessionPanelVm,
  SessionPanelState,
  wizardVm,
  WizardState,
} from "./state.js";
import type { InventoryTree, PodStatus, Reservation, SessionDescriptor } from "./types.js";
import { renderLogin } from "./views/login.js";
import { renderMetrics } from "./views/metricsView.js";
import { renderSessionPanel } from "./views/session.js";
import { renderWizard } from "./views/wizard.js";

type Tab = "reserve" | "sessions" | "metrics";

interface AppState {
  authed: boolean;
  tab: Tab;
  wizard: WizardState;
  panel: SessionPanelState;
  inventory: InventoryTree | null;
  reservations: Reservation[];
  sessions: SessionDescriptor[];
  pods: Record<string, PodStatus | undefined>;
  history: MemoryHistory;
  jitter: ReturnType<typeof jitterSummary>;
  lastPollMs: number | null;
  error: string | null;
}

const api = new ApiClient("");
const state: AppState = {
  authed: false,
  tab: "reserve",
  wizard: emptyWizard(),
  panel: emptySessionPanel(),
  inventory: null,
  reservations: [],
  sessions: [],
  pods: {},
  history: new MemoryHistory(),
  jitter: null,
  lastPollMs: null,
  error: null,
};

const root = document.getElementById("app")!;

function nowS(): number {
  return Date.now() / 1000;
}

function render(): void {
  if (!state.authed) {
    root.innerHTML = renderLogin(state.error);
    bindLogin();
    return;
  }
  const tabs = (["reserve", "sessions", "metrics"] as Tab[])
    .map(
      (tab) =>
        `<button data-action="tab" data-id="${tab}" ` +
        `class="tab ${tab === state.tab ? "active" : ""}">${tab}</button>`,
    )
    .join("");
  let body = "";
  if (state.tab === "reserve") {
    body = renderWizard(
      wizardVm(state.wizard, state.inventory, state.reservations, nowS()),
      state.error,
    );
  } else if (state.tab === "sessions") {
    const picker = state.reservations
      .map(
        (r) =>
          `<button data-action="pick-reservation" data-id="${r.reservation_id}" ` +
          `class="pick ${r.reservation_id === state.panel.reservationId ? "selected" : ""}">` +
          `${r.testbed_id} / ${r.node_id} (${new Date(r.start * 1000).toLocaleString()})</button>`,
      )
      .join("");
    body =
      `<div class="pick-list" id="reservation-picker">${picker}</div>` +
      renderSessionPanel(
        sessionPanelVm(
          state.panel, state.reservations, state.sessions, state.pods,
          nowS(), location.hostname || "127.0.0.1",
        ),
      ) +
      (state.error ? `<div class="error-box">${state.error}</div>` : "");
  } else {
    body = renderMetrics(
      metricsVm(state.history, state.jitter, state.lastPollMs, Date.now()),
    );
  }
  root.innerHTML = `<nav class="tabs">${tabs}</nav>${body}`;
}

function bindLogin(): void {
  const form = document.getElementById("login-form") as HTMLFormElement | null;
  form?.addEventListener("submit", (event) => {
    event.preventDefault();
    const user = (document.getElementById("login-user") as HTMLInputElement).value;
    const password = (document.getElementById("login-password") as HTMLInputElement).value;
    void (async () => {
      try {
        await api.login(user, password);
        state.authed = true;
        state.error = null;
        await refreshAll();
        poller.start();
      } catch (err) {
        state.error = err instanceof ApiError ? err.message : String(err);
      }
      render();
    })();
  });
}

async function refreshAll(): Promise<void> {
  state.inventory = await api.inventory();
  state.reservations = await api.listReservations();
  state.sessions = await api.listSessions();
}

async function pollSessions(): Promise<void> {
  state.sessions = await api.listSessions();
  const names = new Set<string>();
  for (const s of state.sessions) {
    if (s.pod_name && s.state !== "Closed") names.add(s.pod_name);
  }
  const pods: Record<string, PodStatus | undefined> = {};
  for (const name of names) {
    try {
      pods[name] = await api.podStatus(name);
    } catch {
      pods[name] = undefined;
    }
  }
  state.pods = pods;
}

async function pollMetrics(): Promise<void> {
  const text = await api.metricsText();
  const points = parseExposition(text);
  state.history.addSnapshot(points);
  state.jitter = jitterSummary(points) ?? state.jitter;
  state.lastPollMs = Date.now();
}

async function pollReservations(): Promise<void> {
  state.reservations = await api.listReservations();
}

const poller = new CoalescedPoller(2000, {
  sessions: pollSessions,
  metrics: pollMetrics,
  reservations: pollReservations,
});
setInterval(render, 2000);

const actions: Record<string, (id: string) => void | Promise<void>> = {
  tab(id) {
    state.tab = id as Tab;
    state.error = null;
  },
  "pick-lab"(id) {
    state.wizard = { ...emptyWizard(), labId: id };
  },
  "pick-testbed"(id) {
    state.wizard = { ...state.wizard, testbedId: id, nodeId: null, deviceIds: [], slotIndex: null };
  },
  "pick-node"(id) {
    state.wizard = { ...state.wizard, nodeId: id, slotIndex: null };
    if (state.wizard.dayStartS === null) {
      const day = new Date();
      day.setHours(0, 0, 0, 0);
      state.wizard.dayStartS = day.getTime() / 1000;
    }
  },
  "toggle-device"(id) {
    const selected = new Set(state.wizard.deviceIds);
    if (selected.has(id)) selected.delete(id);
    else selected.add(id);
    state.wizard = { ...state.wizard, deviceIds: [...selected], slotIndex: null };
  },
  "pick-slot"(id) {
    state.wizard = { ...state.wizard, slotIndex: Number(id) };
  },
  async "submit-reservation"() {
    const vm = wizardVm(state.wizard, state.inventory, state.reservations, nowS());
    if (!vm.submission) return;
    try {
      await api.createReservation(vm.submission);
      state.error = null;
      state.wizard = emptyWizard();
      await pollReservations();
    } catch (err) {
      if (err instanceof ApiError && err.code === "conflict") {
        const blocking = err.body["blocking_reservation"] as Reservation | undefined;
        state.error = blocking
          ? `Slot conflicts with ${blocking.reservation_id}: ` +
            `${new Date(blocking.start * 1000).toLocaleTimeString()} to ` +
            `${new Date(blocking.end * 1000).toLocaleTimeString()} ` +
            `on ${blocking.node_id} (${blocking.device_ids.join(", ")})`
          : "Slot conflicts with an existing reservation";
        await pollReservations();
      } else {
        state.error = err instanceof ApiError ? err.message : String(err);
      }
    }
  },
  "pick-reservation"(id) {
    state.panel = { ...emptySessionPanel(state.panel.app), reservationId: id };
  },
  "select-instance"(id) {
    state.panel = { ...state.panel, selectedSessionId: id, confirmingDisconnect: false };
    void connectExisting(id);
  },
  async "open-new-instance"() {
    if (!state.panel.reservationId) return;
    try {
      const session = await api.connect({
        reservation_id: state.panel.reservationId,
        app: state.panel.app,
        instance: "new",
      });
      state.panel = { ...state.panel, selectedSessionId: session.session_id };
      state.error = null;
      await pollSessions();
    } catch (err) {
      state.error = err instanceof ApiError ? err.message : String(err);
    }
  },
  "disconnect-ask"() {
    state.panel = { ...state.panel, confirmingDisconnect: true };
  },
  "disconnect-cancel"() {
    state.panel = { ...state.panel, confirmingDisconnect: false };
  },
  async "disconnect-confirm"() {
    const sid = state.panel.selectedSessionId;
    if (!sid) return;
    try {
      await api.disconnect(sid);
      state.panel = { ...state.panel, selectedSessionId: null, confirmingDisconnect: false };
      await pollSessions();
    } catch (err) {
      state.error = err instanceof ApiError ? err.message : String(err);
    }
  },
};

async function connectExisting(sessionId: string): Promise<void> {
  if (!state.panel.reservationId) return;
  try {
    await api.connect({
      reservation_id: state.panel.reservationId,
      app: state.panel.app,
      instance: sessionId,
    });
    await pollSessions();
  } catch (err) {
    state.error = err instanceof ApiError ? err.message : String(err);
  }
  render();
}

root.addEventListener("click", (event) => {
  const target = (event.target as HTMLElement).closest("[data-action]");
  if (!(target instanceof HTMLElement)) return;
  const action = target.dataset["action"]!;
  const id = target.dataset["id"] ?? "";
  const fn = actions[action];
  if (!fn) return;
  void Promise.resolve(fn(id)).then(render);
});

render();
