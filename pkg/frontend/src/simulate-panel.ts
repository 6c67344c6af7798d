// Design-time exploration: posts a design + scenario to the simulation
// endpoint and renders the operating characteristics with error bars.
// A fixed seed re-renders the identical table.

import { ApiClient, ApiRequestError } from "./api.js";
import { barChart } from "./charts.js";
import type { OperatingCharacteristics } from "./types.js";

export function ocTable(oc: OperatingCharacteristics): HTMLTableElement {
  const table = document.createElement("table");
  table.className = "oc-table";
  const head = table.createTHead().insertRow();
  for (const title of ["metric", "value", "mc se"]) {
    const th = document.createElement("th");
    th.scope = "col";
    th.textContent = title;
    head.append(th);
  }
  const body = table.createTBody();
  const push = (metric: string, value: unknown, se: unknown = "") => {
    const row = body.insertRow();
    row.insertCell().textContent = metric;
    row.insertCell().textContent = String(value);
    row.insertCell().textContent = String(se);
  };
  push("replicates", oc.n_reps);
  push("rejection rate", oc.rejection_rate, oc.rejection_se);
  push("expected n", oc.expected_n, oc.se_n);
  push("sd of n", oc.sd_n);
  push("maximum n", oc.max_n);
  for (const [key, p] of Object.entries(oc.selection_probabilities)) {
    push(`select ${key}`, p, oc.selection_se[key]);
  }
  push("no selection", oc.no_selection_probability);
  for (const [key, a] of Object.entries(oc.allocation)) {
    push(`allocation ${key}`, a);
  }
  return table;
}

export function simulatePanel(api: ApiClient): HTMLElement {
  const panel = document.createElement("section");
  panel.className = "simulate-panel";
  panel.innerHTML = `
    <h2>simulate a design</h2>
    <form class="simulate-form">
      <label>design (JSON)
        <textarea name="design" rows="8" spellcheck="false"></textarea>
      </label>
      <label>scenario (JSON)
        <textarea name="scenario" rows="4" spellcheck="false"></textarea>
      </label>
      <button type="submit">run simulation</button>
      <p class="form-errors" role="alert"></p>
    </form>
    <div class="simulate-results"></div>
  `;
  const form = panel.querySelector("form") as HTMLFormElement;
  const errors = panel.querySelector(".form-errors") as HTMLParagraphElement;
  const results = panel.querySelector(".simulate-results") as HTMLDivElement;

  form.addEventListener("submit", async (event) => {
    event.preventDefault();
    errors.textContent = "";
    let design: unknown;
    let scenario: unknown;
    try {
      design = JSON.parse((form.elements.namedItem("design") as HTMLTextAreaElement).value);
      scenario = JSON.parse((form.elements.namedItem("scenario") as HTMLTextAreaElement).value);
    } catch (err) {
      errors.textContent = `unparseable JSON: ${err}`;
      return;
    }
    try {
      const response = await api.simulate(design, scenario);
      const oc = response.operating_characteristics;
      results.replaceChildren(ocTable(oc));
      if (Object.keys(oc.selection_probabilities).length) {
        results.append(
          barChart(oc.selection_probabilities, {
            title: "selection probabilities",
            errorBars: oc.selection_se,
          }),
        );
      }
      if (Object.keys(oc.allocation).length) {
        results.append(barChart(oc.allocation, { title: "expected allocation" }));
      }
    } catch (err) {
      if (err instanceof ApiRequestError && err.error.code === "RepsCapExceeded") {
        const suggested = err.error.details["suggested_reps"];
        errors.textContent = `${err.error.message}; try n_reps <= ${suggested}`;
      } else if (err instanceof ApiRequestError) {
        errors.textContent = `${err.error.code}: ${err.error.message}`;
      } else {
        errors.textContent = String(err);
      }
    }
  });

  return panel;
}
