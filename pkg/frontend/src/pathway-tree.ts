// Dose transition pathway explorer: the exhaustive what-if tree of next
// cohort outcomes and the engine's response to each. The rendered tree is
// isomorphic to the API payload; selecting a node reveals its
// recommendation without touching the session.

import type { PathwayNode } from "./types.js";
import { recommendationText } from "./session-view.js";

const BADGE_CLASS: Record<string, string> = {
  allocate: "badge-continue",
  escalate: "badge-escalate",
  expand_same_dose: "badge-stay",
  de_escalate: "badge-deescalate",
  declare_mtd: "badge-select",
  stop_no_mtd: "badge-stop",
};

function nodeLabel(node: PathwayNode): string {
  if (!node.outcome) return "now";
  const o = node.outcome.outcome;
  return `${o.n_events}/${o.n_treated} events at level ${o.dose_index + 1}`;
}

export function renderPathwayNode(node: PathwayNode): HTMLElement {
  const details = document.createElement("details");
  details.className = "pathway-node";
  details.open = !node.outcome;
  const summary = document.createElement("summary");
  const badge = document.createElement("span");
  badge.className = `badge ${BADGE_CLASS[node.recommendation.action] ?? "badge-other"}`;
  badge.textContent = node.recommendation.action.replace(/_/g, " ");
  summary.append(document.createTextNode(nodeLabel(node) + " "), badge);
  details.append(summary);
  const rec = document.createElement("p");
  rec.className = "pathway-recommendation";
  rec.textContent = recommendationText(node.recommendation);
  details.append(rec);
  if (node.children.length) {
    const children = document.createElement("div");
    children.className = "pathway-children";
    for (const child of node.children) {
      children.append(renderPathwayNode(child));
    }
    details.append(children);
  }
  return details;
}

export function countNodes(node: PathwayNode): number {
  return 1 + node.children.reduce((acc, child) => acc + countNodes(child), 0);
}

export function renderPathways(container: HTMLElement, root: PathwayNode): void {
  container.replaceChildren(renderPathwayNode(root));
}
