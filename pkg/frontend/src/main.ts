/** Browser bootstrap: binds the app state to a plain DOM form. The form is
 * rebuilt only when the phase or group changes; edits update the issue
 * markers and the result panel in place so typing keeps focus. */

import { WhatIfApp } from "./app.js";
import { createApiClient } from "./api.js";
import { escapeHtml, renderResultHtml } from "./trace.js";

const SERVICE_URL =
  new URLSearchParams(window.location.search).get("service") ?? "http://127.0.0.1:8000";

const root = document.getElementById("app");
if (root == null) {
  throw new Error("missing #app element");
}

let renderedKey = "";
const app = new WhatIfApp(createApiClient(SERVICE_URL), render);

function fieldLabel(name: string): string {
  return name.replace(/_/g, " ");
}

function buildForm(): void {
  const view = app.view();
  const groupOptions = view.groups
    .map(
      (g) =>
        `<option value="${escapeHtml(g)}" ${g === view.group ? "selected" : ""}>${escapeHtml(g)}</option>`,
    )
    .join("");
  const inputs = view.fields
    .map((name) => {
      if (name === "kidney_contraindication") {
        return (
          `<label class="field">${fieldLabel(name)}` +
          `<input type="checkbox" data-field="${name}"/></label>`
        );
      }
      return (
        `<label class="field">${fieldLabel(name)}` +
        `<input type="number" step="any" data-field="${name}"/>` +
        `<span class="issue" data-issue-for="${name}"></span></label>`
      );
    })
    .join("");
  root!.innerHTML =
    `<div class="form">` +
    `<label class="field">current regimen<select id="group">${groupOptions}</select></label>` +
    inputs +
    `<p class="status" id="status"></p>` +
    `</div>` +
    `<div class="panel" id="panel"></div>`;
  const select = document.getElementById("group") as HTMLSelectElement;
  select.addEventListener("change", () => app.setGroup(select.value));
  for (const input of Array.from(root!.querySelectorAll<HTMLInputElement>("input[data-field]"))) {
    const name = input.dataset.field as string;
    if (input.type === "checkbox") {
      input.addEventListener("change", () => app.setValue(name, input.checked ? "1" : "0"));
      app.setValue(name, "0");
    } else {
      input.addEventListener("input", () => app.setValue(name, input.value));
    }
  }
}

function updatePanel(): void {
  const view = app.view();
  for (const span of Array.from(root!.querySelectorAll<HTMLElement>("[data-issue-for]"))) {
    const issue = view.issues.find((i) => i.field === span.dataset.issueFor);
    span.textContent = issue ? issue.message : "";
  }
  const status = document.getElementById("status");
  if (status != null) {
    status.textContent = view.pending
      ? "querying…"
      : view.canRecommend
        ? ""
        : "waiting for valid, complete inputs";
  }
  const panel = document.getElementById("panel");
  if (panel == null) {
    return;
  }
  if (view.resultError != null) {
    panel.innerHTML = `<div class="error-panel">${escapeHtml(view.resultError)}</div>`;
  } else if (view.serviceErrors.length > 0) {
    panel.innerHTML =
      `<ul class="error-panel">` +
      view.serviceErrors
        .map((e) => `<li>${escapeHtml(e.field)}: ${escapeHtml(e.message)}</li>`)
        .join("") +
      `</ul>`;
  } else if (view.result != null) {
    panel.innerHTML = renderResultHtml(view.result);
  } else {
    panel.innerHTML = `<p class="hint">Fill in every field to see a recommendation.</p>`;
  }
}

function render(): void {
  const view = app.view();
  if (view.phase === "loading") {
    root!.innerHTML = `<p class="banner">Loading pipelines…</p>`;
    renderedKey = "loading";
    return;
  }
  if (view.phase === "unreachable") {
    root!.innerHTML = `<p class="banner error">${escapeHtml(view.banner ?? "Service unreachable.")}</p>`;
    renderedKey = "unreachable";
    return;
  }
  const key = `ready:${view.group ?? ""}`;
  if (key !== renderedKey) {
    renderedKey = key;
    buildForm();
  }
  updatePanel();
}

void app.init();
