/**
 * End-to-end: drive a live 2-round session (20-sample batches) through the
 * rendered console against the real annotation service.
 *
 * Covers: pools advancing per round, double-submit collapsing to one state
 * change, and a mid-batch refresh preserving in-progress selections.
 */

import assert from "node:assert/strict";
import { spawn, ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { after, before, test } from "node:test";
import { JSDOM } from "jsdom";

import { AnnotationApi } from "../src/api.js";
import { SessionController } from "../src/state.js";
import { renderApp } from "../src/ui.js";

const SESSION_CONFIG = {
  dataset: { name: "digits", n_train: 400, n_test: 100, seed: 6 },
  model: { hidden_widths: [16] },
  ensemble: { n_members: 2 },
  schedule: {
    initial_budget: 20,
    step_budget: 20,
    rounds: 2,
    epochs_per_round: 6,
    batch_size: 16,
  },
  strategy: "vr",
  oracle: "live",
  seeds: [5],
};

let server: ChildProcess;
let baseUrl = "";

function waitFor<T>(
  probe: () => T | undefined | false,
  what: string,
  timeoutMs = 120_000,
  stepMs = 50,
): Promise<T> {
  const deadline = Date.now() + timeoutMs;
  return new Promise((resolve, reject) => {
    const tick = () => {
      const value = probe();
      if (value) {
        resolve(value);
      } else if (Date.now() > deadline) {
        reject(new Error(`timed out waiting for ${what}`));
      } else {
        setTimeout(tick, stepMs);
      }
    };
    tick();
  });
}

before(async () => {
  const checkpoints = mkdtempSync(join(tmpdir(), "annot-ckpt-"));
  server = spawn(
    "python3",
    ["-m", "active_ensemble.cli", "serve", "--port", "0",
     "--checkpoint-dir", checkpoints],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  let stdout = "";
  server.stdout!.on("data", (chunk) => {
    stdout += String(chunk);
  });
  let stderr = "";
  server.stderr!.on("data", (chunk) => {
    stderr += String(chunk);
  });
  server.on("exit", (code) => {
    if (baseUrl === "") {
      console.error(`service exited early (${code}): ${stderr}`);
    }
  });
  const url = await waitFor(
    () => stdout.match(/listening on (http:\/\/[\d.]+:\d+)/)?.[1],
    "service startup",
  );
  baseUrl = url;
});

after(() => {
  server.kill();
});

test("two-round session through the console", async () => {
  const api = new AnnotationApi(baseUrl);
  const { session_id } = await api.createSession(SESSION_CONFIG);

  const page = new JSDOM(
    `<!doctype html><html><body><div id="app"></div></body></html>`,
    { url: `${baseUrl}/#session=${session_id}` },
  );
  const root = page.window.document.getElementById("app") as HTMLElement;
  let controller = new SessionController(
    api,
    session_id,
    page.window.localStorage,
    100,
  );
  renderApp(root, controller);
  controller.startPolling();

  // round 0 trains, then the first 20-sample batch appears
  await waitFor(
    () => root.querySelectorAll(".card").length === 20 || undefined,
    "first batch of 20 cards",
  );
  assert.match(
    root.querySelector("#pool-stats")!.textContent ?? "",
    /20 labeled/,
  );

  // label 10 cards by clicking class buttons
  const cards = [...root.querySelectorAll<HTMLElement>(".card")];
  for (const card of cards.slice(0, 10)) {
    card.querySelectorAll<HTMLButtonElement>(".selector button")[3].click();
  }
  assert.equal(root.querySelectorAll(".card.labeled").length, 10);
  assert.equal(
    root.querySelector<HTMLButtonElement>("#submit-btn")!.disabled,
    true,
  );

  // refresh mid-batch: remount everything over the same localStorage
  controller.stopPolling();
  controller = new SessionController(
    api,
    session_id,
    page.window.localStorage,
    100,
  );
  renderApp(root, controller);
  controller.startPolling();
  await waitFor(
    () => root.querySelectorAll(".card.labeled").length === 10 || undefined,
    "selections restored after refresh",
  );

  // finish labeling with the keyboard
  for (const card of [...root.querySelectorAll<HTMLElement>(".card")].slice(10)) {
    card.focus();
    card.dispatchEvent(
      new page.window.KeyboardEvent("keydown", { key: "7", bubbles: true }),
    );
  }
  const submit = root.querySelector<HTMLButtonElement>("#submit-btn")!;
  await waitFor(() => !submit.disabled || undefined, "submit enabled");

  // double-click: the second mutation must be a no-op
  submit.click();
  submit.click();
  await waitFor(
    () =>
      (root.querySelector("#pool-stats")!.textContent ?? "").includes(
        "40 labeled",
      ) || undefined,
    "pools advanced to 40",
  );

  // round 2: a fresh batch with a fresh id
  await waitFor(
    () => root.querySelectorAll(".card").length === 20 || undefined,
    "second batch",
  );
  assert.match(
    root.querySelector("#batch-title")!.textContent ?? "",
    /round-0001/,
  );
  for (const card of root.querySelectorAll<HTMLElement>(".card")) {
    card.querySelectorAll<HTMLButtonElement>(".selector button")[0].click();
  }
  await waitFor(() => !submit.disabled || undefined, "second submit enabled");
  submit.click();

  await waitFor(
    () =>
      (root.querySelector("#phase")!.textContent ?? "").includes("finished") ||
      undefined,
    "session finished",
  );
  assert.match(
    root.querySelector("#pool-stats")!.textContent ?? "",
    /60 labeled/,
  );
  // the learning curve shows all three evaluated rounds
  assert.equal(root.querySelectorAll("#curve circle").length, 3);

  controller.stopPolling();

  // exactly one state change per submission: the server counted 20+20, not 20+40
  const status = await api.getStatus(session_id);
  assert.equal(status.n_labeled, 60);
  assert.equal(status.phase, "finished");
  assert.equal(status.history.length, 3);
});
