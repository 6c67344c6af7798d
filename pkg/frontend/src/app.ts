// Dashboard entry point: create or open a session, enter outcomes,
// watch the recommendation, explore pathways, simulate designs.

import { ApiClient, ApiRequestError } from "./api.js";
import { outcomeForm } from "./outcome-form.js";
import { renderPathways } from "./pathway-tree.js";
import { renderSession } from "./session-view.js";
import { simulatePanel } from "./simulate-panel.js";
import type { SessionResponse } from "./types.js";

export function mountApp(root: HTMLElement, api: ApiClient): void {
  root.innerHTML = `
    <header><h1>adaptrial conduct</h1></header>
    <section class="create-panel">
      <h2>start or open a session</h2>
      <form class="create-form">
        <label>design config (JSON)
          <textarea name="design" rows="8" spellcheck="false"></textarea>
        </label>
        <button type="submit">create session</button>
        <label>or open existing <input name="session-id" placeholder="session id"></label>
        <button type="button" class="open-session">open</button>
        <p class="form-errors" role="alert"></p>
      </form>
    </section>
    <section class="session-panel hidden">
      <h2>trial session</h2>
      <div class="session-view"></div>
      <div class="outcome-slot"></div>
      <h3>dose transition pathways</h3>
      <label>depth
        <select class="pathway-depth">
          <option value="0">0</option>
          <option value="1" selected>1</option>
          <option value="2">2</option>
          <option value="3">3</option>
        </select>
      </label>
      <button type="button" class="load-pathways">explore</button>
      <div class="pathway-view"></div>
    </section>
    <div class="simulate-slot"></div>
  `;
  root.querySelector(".simulate-slot")!.append(simulatePanel(api));

  const createForm = root.querySelector(".create-form") as HTMLFormElement;
  const createErrors = createForm.querySelector(".form-errors") as HTMLParagraphElement;
  const sessionPanel = root.querySelector(".session-panel") as HTMLElement;
  const sessionView = root.querySelector(".session-view") as HTMLElement;
  const outcomeSlot = root.querySelector(".outcome-slot") as HTMLElement;
  const pathwayView = root.querySelector(".pathway-view") as HTMLElement;
  const depthSelect = root.querySelector(".pathway-depth") as HTMLSelectElement;

  let currentId: string | null = null;

  const showSession = (session: SessionResponse) => {
    currentId = session.session.id;
    sessionPanel.classList.remove("hidden");
    renderSession(sessionView, session);
    outcomeSlot.replaceChildren();
    const form = outcomeForm(api, currentId, showSession);
    outcomeSlot.append(form.element);
    form.setSession(session);
    pathwayView.replaceChildren();
  };

  createForm.addEventListener("submit", async (event) => {
    event.preventDefault();
    createErrors.textContent = "";
    let design: unknown;
    try {
      design = JSON.parse((createForm.elements.namedItem("design") as HTMLTextAreaElement).value);
    } catch (err) {
      createErrors.textContent = `unparseable JSON: ${err}`;
      return;
    }
    try {
      showSession(await api.createSession(design));
    } catch (err) {
      createErrors.textContent =
        err instanceof ApiRequestError ? `${err.error.code}: ${err.error.message}` : String(err);
    }
  });

  (root.querySelector(".open-session") as HTMLButtonElement).addEventListener("click", async () => {
    createErrors.textContent = "";
    const id = (createForm.elements.namedItem("session-id") as HTMLInputElement).value.trim();
    if (!id) return;
    try {
      showSession(await api.getSession(id));
    } catch (err) {
      createErrors.textContent =
        err instanceof ApiRequestError ? `${err.error.code}: ${err.error.message}` : String(err);
    }
  });

  (root.querySelector(".load-pathways") as HTMLButtonElement).addEventListener("click", async () => {
    if (!currentId) return;
    const cap = 3;
    let depth = Number(depthSelect.value);
    if (depth > cap) {
      depth = cap;
      depthSelect.value = String(cap);
    }
    try {
      const response = await api.pathways(currentId, depth);
      renderPathways(pathwayView, response.pathways);
    } catch (err) {
      pathwayView.replaceChildren();
      const note = document.createElement("p");
      note.className = "empty-state";
      note.textContent =
        err instanceof ApiRequestError && err.error.code === "UnsupportedDesign"
          ? "Pathways are available for dose-escalation designs only."
          : String(err);
      pathwayView.append(note);
    }
  });
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  mountApp(document.getElementById("app") as HTMLElement, new ApiClient(""));
}
