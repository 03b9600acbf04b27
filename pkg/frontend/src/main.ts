/**
 * Console bootstrap: attach to an existing session via #session=<id> in the
 * URL, or create one by pasting a config document (oracle must be "live").
 */

import { AnnotationApi, ApiError } from "./api.js";
import { SessionController } from "./state.js";
import { renderApp } from "./ui.js";

const api = new AnnotationApi("");

function attach(sessionId: string): void {
  window.location.hash = `session=${sessionId}`;
  const root = document.getElementById("app")!;
  const controller = new SessionController(
    api,
    sessionId,
    window.localStorage,
  );
  renderApp(root, controller);
  controller.startPolling();
}

function renderLanding(root: HTMLElement): void {
  root.innerHTML = `
    <div class="landing">
      <h1>Annotation console</h1>
      <p>Attach to a running session:</p>
      <form id="attach-form">
        <input id="session-input" placeholder="session id" required />
        <button type="submit">Attach</button>
      </form>
      <p>...or start a new one from a config document:</p>
      <form id="create-form">
        <textarea id="config-input" rows="12" spellcheck="false"></textarea>
        <button type="submit">Create session</button>
      </form>
      <div id="landing-error" class="error" hidden></div>
    </div>
  `;
  const errorBox = root.querySelector<HTMLElement>("#landing-error")!;
  root.querySelector("#attach-form")!.addEventListener("submit", (event) => {
    event.preventDefault();
    const input = root.querySelector<HTMLInputElement>("#session-input")!;
    attach(input.value.trim());
  });
  root.querySelector("#create-form")!.addEventListener("submit", (event) => {
    event.preventDefault();
    void (async () => {
      const text = root.querySelector<HTMLTextAreaElement>("#config-input")!.value;
      try {
        const { session_id } = await api.createSession(JSON.parse(text));
        attach(session_id);
      } catch (err) {
        errorBox.hidden = false;
        errorBox.textContent =
          err instanceof ApiError
            ? `${err.message}: ${JSON.stringify(err.detail)}`
            : String(err);
      }
    })();
  });
}

const fromHash = new URLSearchParams(
  window.location.hash.replace(/^#/, ""),
).get("session");
if (fromHash) {
  attach(fromHash);
} else {
  renderLanding(document.getElementById("app")!);
}
