/**
 * Reservation wizard, steps 1-4: reservation menu, lab list, testbed list,
 * then the resource form (node, devices on the layout map, calendar).
 */

import type { WizardVm } from "../state.js";

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function layoutMapSvg(vm: WizardVm): string {
  const markers = vm.markers
    .map((m) => {
      const cls = m.selected ? "marker selected" : "marker";
      const fill = m.selected ? "#1f9d3a" : "#888";
      return (
        `<circle data-action="toggle-device" data-id="${esc(m.deviceId)}" class="${cls}"` +
        ` cx="${(m.x * 100).toFixed(1)}" cy="${(m.y * 100).toFixed(1)}" r="3.2"` +
        ` fill="${fill}"><title>${esc(m.deviceId)} (${esc(m.kind)})</title></circle>`
      );
    })
    .join("");
  return (
    `<svg viewBox="0 0 100 100" class="layout-map" role="img">` +
    `<rect x="1" y="1" width="98" height="98" fill="#fafafa" stroke="#bbb"></rect>` +
    markers +
    `</svg>`
  );
}

export function renderWizard(vm: WizardVm, error: string | null): string {
  const steps = ["Reservation", "Laboratory", "Testbed", "Resources & Calendar"]
    .map((title, i) => {
      const n = i + 1;
      const cls = n === vm.step ? "step active" : n < vm.step ? "step done" : "step";
      return `<li class="${cls}">Step ${n}: ${title}</li>`;
    })
    .join("");

  const labs = vm.labs
    .map(
      (lab) =>
        `<button data-action="pick-lab" data-id="${esc(lab.lab_id)}" class="pick">` +
        `${esc(lab.name)}</button>`,
    )
    .join("");

  const testbeds = vm.testbeds
    .map(
      (tb) =>
        `<button data-action="pick-testbed" data-id="${esc(tb.testbed_id)}" class="pick">` +
        `${esc(tb.name)}</button>`,
    )
    .join("");

  const nodes = vm.nodes
    .map(
      (node) =>
        `<button data-action="pick-node" data-id="${esc(node)}" class="pick">` +
        `${esc(node)}</button>`,
    )
    .join("");

  const devices = vm.markers
    .map((m) => {
      const cls = m.selected ? "pick selected" : "pick";
      return (
        `<button data-action="toggle-device" data-id="${esc(m.deviceId)}" class="${cls}">` +
        `${esc(m.deviceId)}</button>`
      );
    })
    .join("");

  const slots = vm.slots
    .map((slot) => {
      const classes = ["slot"];
      if (slot.taken || slot.past) classes.push("disabled");
      if (slot.selected) classes.push("selected");
      const attrs = slot.taken || slot.past ? "disabled" : "";
      return (
        `<button data-action="pick-slot" data-id="${slot.index}"` +
        ` class="${classes.join(" ")}" ${attrs}>${slot.label}</button>`
      );
    })
    .join("");

  const errorBox = error
    ? `<div class="error-box" id="wizard-error">${esc(error)}</div>`
    : "";

  return `
<section class="wizard">
  <ol class="steps">${steps}</ol>
  ${errorBox}
  <div class="wizard-grid">
    <div class="col">
      <h3>Laboratory</h3>
      <div class="pick-list" id="lab-list">${labs}</div>
      <h3>Testbed</h3>
      <div class="pick-list" id="testbed-list">${testbeds}</div>
      <h3>Edge server</h3>
      <div class="pick-list" id="node-list">${nodes}</div>
      <h3>Devices</h3>
      <div class="pick-list" id="device-list">${devices}</div>
    </div>
    <div class="col">
      <h3>Testbed layout</h3>
      ${layoutMapSvg(vm)}
      <h3>Calendar (30-minute slots)</h3>
      <div class="slot-grid" id="slot-grid">${slots}</div>
      <button id="wizard-submit" data-action="submit-reservation"
              ${vm.canSubmit ? "" : "disabled"}>Reserve</button>
    </div>
  </div>
</section>`;
}
