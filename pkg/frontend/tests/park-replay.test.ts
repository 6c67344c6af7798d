// Dashboard contract test: entering the recorded escalation outcome
// sequence ends with the MTD banner, the form disabled, and every
// rendered number identical to the recorded API responses.

import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";
import { ApiClient } from "../src/api.js";
import { mountApp } from "../src/app.js";
import { mockFetch } from "./helpers.js";
import create from "./fixtures/create.json";
import replayPosts from "./fixtures/replay_posts.json";
import stoppedError from "./fixtures/stopped_error.json";

const sid = (create as any).session.id;

function fillAndSubmit(form: HTMLFormElement, dose: number, n: number, events: number) {
  (form.elements.namedItem("dose") as HTMLInputElement).value = String(dose + 1);
  (form.elements.namedItem("n") as HTMLInputElement).value = String(n);
  (form.elements.namedItem("events") as HTMLInputElement).value = String(events);
  form.dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
}

describe("escalation replay through the dashboard", () => {
  let root: HTMLElement;

  beforeEach(() => {
    document.body.innerHTML = '<main id="app"></main>';
    root = document.getElementById("app") as HTMLElement;
  });

  afterEach(() => vi.unstubAllGlobals());

  it("ends with the MTD banner for dose level 2", async () => {
    let postIndex = 0;
    mockFetch({
      ["POST /sessions"]: { status: 201, body: create },
      [`POST /sessions/${sid}/outcomes`]: () => ({ body: (replayPosts as any)[postIndex++] }),
    });
    mountApp(root, new ApiClient(""));

    const createForm = root.querySelector(".create-form") as HTMLFormElement;
    (createForm.elements.namedItem("design") as HTMLTextAreaElement).value = JSON.stringify({
      kind: "three_plus_three",
    });
    createForm.dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
    await vi.waitFor(() => {
      expect(root.querySelector(".banner")).toBeTruthy();
    });

    const sequence: Array<[number, number, number]> = [
      [0, 3, 0],
      [1, 3, 1],
      [1, 3, 0],
      [2, 3, 2],
    ];
    for (const [dose, n, events] of sequence) {
      const form = root.querySelector(".outcome-form") as HTMLFormElement;
      fillAndSubmit(form, dose, n, events);
      await vi.waitFor(() => expect(postIndex).toBeGreaterThan(sequence.indexOf([dose, n, events] as any)));
    }
    await vi.waitFor(() => {
      const banner = root.querySelector(".banner") as HTMLElement;
      expect(banner.textContent).toContain("MTD: dose level 2");
    });
    const banner = root.querySelector(".banner") as HTMLElement;
    expect(banner.className).toContain("banner-completed");
    const button = root.querySelector(".outcome-form button") as HTMLButtonElement;
    expect(button.disabled).toBe(true);
  });

  it("renders recommendation values verbatim from the response", async () => {
    mockFetch({ ["POST /sessions"]: { status: 201, body: create } });
    mountApp(root, new ApiClient(""));
    const createForm = root.querySelector(".create-form") as HTMLFormElement;
    (createForm.elements.namedItem("design") as HTMLTextAreaElement).value = "{}";
    createForm.dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
    await vi.waitFor(() => expect(root.querySelector(".banner")).toBeTruthy());
    const meta = root.querySelector(".session-meta") as HTMLElement;
    expect(meta.textContent).toContain((create as any).session.id);
    expect(meta.textContent).toContain(`stage ${(create as any).state.stage}`);
  });

  it("blocks events greater than patients before any request", async () => {
    const { calls } = mockFetch({ ["POST /sessions"]: { status: 201, body: create } });
    mountApp(root, new ApiClient(""));
    const createForm = root.querySelector(".create-form") as HTMLFormElement;
    (createForm.elements.namedItem("design") as HTMLTextAreaElement).value = "{}";
    createForm.dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
    await vi.waitFor(() => expect(root.querySelector(".outcome-form")).toBeTruthy());
    const callsBefore = calls.length;
    const form = root.querySelector(".outcome-form") as HTMLFormElement;
    fillAndSubmit(form, 0, 3, 5);
    const errors = form.querySelector(".form-errors") as HTMLParagraphElement;
    await vi.waitFor(() => expect(errors.textContent).toContain("events cannot exceed"));
    expect(calls.length).toBe(callsBefore);
  });

  it("surfaces the mismatch override checkbox and stopped-session errors", async () => {
    const mismatch = (await import("./fixtures/mismatch_error.json")).default as any;
    let attempt = 0;
    mockFetch({
      ["POST /sessions"]: { status: 201, body: create },
      [`POST /sessions/${sid}/outcomes`]: () => {
        attempt += 1;
        if (attempt === 1) return { status: mismatch.status, body: mismatch.body };
        return { status: (stoppedError as any).status, body: (stoppedError as any).body };
      },
    });
    mountApp(root, new ApiClient(""));
    const createForm = root.querySelector(".create-form") as HTMLFormElement;
    (createForm.elements.namedItem("design") as HTMLTextAreaElement).value = "{}";
    createForm.dispatchEvent(new Event("submit", { bubbles: true, cancelable: true }));
    await vi.waitFor(() => expect(root.querySelector(".outcome-form")).toBeTruthy());

    const form = root.querySelector(".outcome-form") as HTMLFormElement;
    fillAndSubmit(form, 3, 3, 0);
    const errors = form.querySelector(".form-errors") as HTMLParagraphElement;
    await vi.waitFor(() => expect(errors.textContent).toContain("OutcomeMismatch"));
    const overrideRow = form.querySelector(".override-row") as HTMLElement;
    expect(overrideRow.classList.contains("hidden")).toBe(false);

    fillAndSubmit(form, 3, 3, 0);
    await vi.waitFor(() => expect(errors.textContent).toContain("SessionStopped"));
  });
});
