// Cohort outcome entry. Submits nothing until the server answers
// (no optimistic updates); the form disables itself once the trial
// stops. A mismatch error surfaces the audited override checkbox.

import { ApiClient, ApiRequestError } from "./api.js";
import type { SessionResponse } from "./types.js";
import { validateCohortForm } from "./validation.js";

export interface OutcomeFormHandles {
  element: HTMLFormElement;
  setSession(session: SessionResponse): void;
}

export function outcomeForm(
  api: ApiClient,
  sessionId: string,
  onUpdate: (session: SessionResponse) => void,
): OutcomeFormHandles {
  const form = document.createElement("form");
  form.className = "outcome-form";
  form.noValidate = true;
  form.innerHTML = `
    <label>dose level <input name="dose" type="number" min="1" step="1" required></label>
    <label>patients treated <input name="n" type="number" min="1" step="1" value="3" required></label>
    <label>events <input name="events" type="number" min="0" step="1" value="0" required></label>
    <label class="override-row hidden">
      <input name="override" type="checkbox"> record audited override
    </label>
    <button type="submit">post outcomes</button>
    <p class="form-errors" role="alert"></p>
  `;
  const errors = form.querySelector(".form-errors") as HTMLParagraphElement;
  const overrideRow = form.querySelector(".override-row") as HTMLLabelElement;

  form.addEventListener("submit", async (event) => {
    event.preventDefault();
    errors.textContent = "";
    const data = new FormData(form);
    const values = {
      dose_index: Number(data.get("dose")) - 1,
      n_treated: Number(data.get("n")),
      n_events: Number(data.get("events")),
    };
    const problems = validateCohortForm(values);
    if (problems.length) {
      errors.textContent = problems.join("; ");
      return;
    }
    try {
      const session = await api.postOutcome(sessionId, values, data.get("override") === "on");
      overrideRow.classList.add("hidden");
      (overrideRow.querySelector("input") as HTMLInputElement).checked = false;
      onUpdate(session);
    } catch (err) {
      if (err instanceof ApiRequestError) {
        errors.textContent = `${err.error.code}: ${err.error.message}`;
        if (err.error.code === "OutcomeMismatch") {
          overrideRow.classList.remove("hidden");
        }
      } else {
        errors.textContent = String(err);
      }
    }
  });

  const setSession = (session: SessionResponse) => {
    const stopped = session.state.status !== "active";
    for (const field of form.querySelectorAll("input, button")) {
      (field as HTMLInputElement | HTMLButtonElement).disabled = stopped;
    }
    form.classList.toggle("disabled", stopped);
    const rec = session.recommendation;
    if (!stopped && rec.dose_index !== null && rec.dose_index !== undefined) {
      (form.elements.namedItem("dose") as HTMLInputElement).value = String(rec.dose_index + 1);
      const size = rec.metrics["cohort_size"];
      if (typeof size === "number") {
        (form.elements.namedItem("n") as HTMLInputElement).value = String(size);
      }
    }
  };

  return { element: form, setSession };
}
