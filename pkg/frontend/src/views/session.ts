/**
 * Session panel: instance list with "Open New Instance", the embedded
 * bridge view once Live, a sidebar with the experiment context, and a
 * confirmation-gated Disconnect.
 */

import type { SessionPanelVm } from "../state.js";

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderSessionPanel(vm: SessionPanelVm): string {
  if (!vm.reservation) {
    return `<section class="session-panel"><p class="empty">
      Pick a reservation to open its experiment session.</p></section>`;
  }

  let gate = "";
  if (!vm.inWindow) {
    const hint =
      vm.countdownS !== null
        ? `window opens in ${vm.countdownS}s`
        : "reservation window has ended";
    gate = `<div class="gate" id="window-gate">Connect disabled: ${hint}</div>`;
  }

  const instances = vm.instances
    .map((inst) => {
      const cls = inst.selected ? "instance selected" : "instance";
      return (
        `<li class="${cls}">` +
        `<button data-action="select-instance" data-id="${esc(inst.sessionId)}">` +
        `${esc(inst.podName ?? "(provisioning)")} - ${esc(inst.state)}</button></li>`
      );
    })
    .join("");

  const modal = `
  <div class="instance-modal" id="instance-modal">
    <h3>Active session instances</h3>
    <ul class="instance-list">${instances}</ul>
    <button id="open-new-instance" data-action="open-new-instance"
            ${vm.connectEnabled ? "" : "disabled"}>Open New Instance</button>
  </div>`;

  let view = "";
  if (vm.bridgeUrl) {
    view = `<iframe id="bridge-frame" src="${esc(vm.bridgeUrl)}"
      title="experiment desktop"></iframe>`;
  } else if (vm.pendingReason) {
    view = `<div class="state-box pending">Pending: ${esc(vm.pendingReason)}</div>`;
  } else if (vm.failedStep) {
    view = `<div class="state-box failed">Startup failed at ${esc(vm.failedStep)}</div>`;
  } else if (vm.selected) {
    view = `<div class="state-box">${esc(vm.selected.state)}...</div>`;
  }

  let disconnect = "";
  if (vm.disconnectVisible) {
    disconnect = vm.confirmingDisconnect
      ? `<button id="disconnect-confirm" data-action="disconnect-confirm" class="danger">
           Really disconnect and release the pod?</button>
         <button data-action="disconnect-cancel">Keep session</button>`
      : `<button id="disconnect" data-action="disconnect-ask" class="danger">Disconnect</button>`;
  }

  const sidebar = vm.sidebar
    ? `<aside class="sidebar">
        <dl>
          <dt>Testbed</dt><dd>${esc(vm.sidebar.testbed)}</dd>
          <dt>Devices</dt><dd>${vm.sidebar.devices.map(esc).join(", ")}</dd>
          <dt>Host</dt><dd>${esc(vm.sidebar.host)}</dd>
        </dl>
        <p class="guide">${esc(vm.sidebar.guide)}</p>
      </aside>`
    : "";

  return `
<section class="session-panel">
  ${gate}
  ${modal}
  <div class="session-main">
    <div class="bridge-area">${view}${disconnect}</div>
    ${sidebar}
  </div>
</section>`;
}
