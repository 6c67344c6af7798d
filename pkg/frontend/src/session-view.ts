// Session screen: status banner, current recommendation, and the
// per-dose posterior table. Every number is printed verbatim from the
// API payload.

import type { Recommendation, SessionResponse } from "./types.js";

const ACTION_LABELS: Record<string, string> = {
  allocate: "Treat next cohort at dose level",
  escalate: "Escalate to dose level",
  expand_same_dose: "Expand same dose level",
  de_escalate: "De-escalate to dose level",
  declare_mtd: "MTD: dose level",
  stop_no_mtd: "Stop: no tolerated dose",
  continue: "Continue to the next stage",
  stop_efficacy: "Stop for efficacy",
  stop_futility: "Stop: benefit not demonstrated",
  select: "Select",
  continue_full: "Continue with the full population",
  expand_full: "Expand the full-population sample size",
  enrich_subgroup: "Restrict recruitment to the subgroup",
};

export function recommendationText(rec: Recommendation): string {
  const label = ACTION_LABELS[rec.action] ?? rec.action;
  if (rec.dose_index !== null && rec.dose_index !== undefined) {
    return `${label} ${rec.dose_index + 1}`;
  }
  if (rec.arm_index !== null && rec.arm_index !== undefined) {
    return `${label} arm ${rec.arm_index}`;
  }
  return label;
}

export function statusBanner(session: SessionResponse): HTMLElement {
  const banner = document.createElement("div");
  banner.className = `banner banner-${session.state.status}`;
  banner.setAttribute("role", "status");
  const status = document.createElement("strong");
  status.textContent = session.state.status.replace(/_/g, " ");
  const rec = document.createElement("span");
  rec.textContent = recommendationText(session.recommendation);
  banner.append(status, document.createTextNode(" — "), rec);
  return banner;
}

function formatCell(value: unknown): string {
  // Verbatim rendering: numbers pass through String() untouched.
  return value === null || value === undefined ? "" : String(value);
}

export function posteriorTable(rec: Recommendation): HTMLElement | null {
  const metrics = rec.metrics as Record<string, unknown>;
  const means = metrics["mean_tox"] as number[] | undefined;
  const overdose = metrics["overdose_probability"] as number[] | undefined;
  const exceeds = metrics["prob_exceeds_target"] as number[] | undefined;
  const column = means ?? overdose;
  if (!column) return null;
  const table = document.createElement("table");
  table.className = "posterior";
  const head = table.createTHead().insertRow();
  for (const title of ["dose level", means ? "mean toxicity" : "overdose probability",
                       exceeds ? "P(tox > target)" : null]) {
    if (title === null) continue;
    const th = document.createElement("th");
    th.scope = "col";
    th.textContent = title;
    head.append(th);
  }
  const body = table.createTBody();
  column.forEach((value, i) => {
    const row = body.insertRow();
    row.insertCell().textContent = String(i + 1);
    row.insertCell().textContent = formatCell(value);
    if (exceeds) row.insertCell().textContent = formatCell(exceeds[i]);
  });
  return table;
}

export function allocationTable(rec: Recommendation): HTMLElement | null {
  const probs = rec.metrics["probabilities"] as Record<string, number> | undefined;
  if (!probs) return null;
  const table = document.createElement("table");
  table.className = "allocation";
  const head = table.createTHead().insertRow();
  for (const title of ["arm", "allocation probability"]) {
    const th = document.createElement("th");
    th.scope = "col";
    th.textContent = title;
    head.append(th);
  }
  const body = table.createTBody();
  for (const [arm, p] of Object.entries(probs)) {
    const row = body.insertRow();
    row.insertCell().textContent = arm;
    row.insertCell().textContent = formatCell(p);
  }
  return table;
}

export function renderSession(container: HTMLElement, session: SessionResponse): void {
  container.replaceChildren();
  container.append(statusBanner(session));
  const meta = document.createElement("p");
  meta.className = "session-meta";
  meta.textContent =
    `session ${session.session.id} · ${session.session.kind} · ` +
    `stage ${session.state.stage} · ${session.state.n_enrolled} enrolled`;
  container.append(meta);
  const posterior = posteriorTable(session.recommendation);
  if (posterior) container.append(posterior);
  const allocation = allocationTable(session.recommendation);
  if (allocation) container.append(allocation);
}
