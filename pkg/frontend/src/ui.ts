/**
 * DOM rendering for the annotation console.
 *
 * One card per queried sample: image, acquisition-score badge, and a class
 * selector.  Keys 0-9 label the focused card when there are at most ten
 * classes.  The learning curve is an SVG projection of the status history,
 * so it survives refreshes untouched.
 */

import { QueryBatch } from "./api.js";
import { SessionController, SessionView } from "./state.js";

export function renderApp(root: HTMLElement, controller: SessionController): void {
  root.innerHTML = `
    <header class="topbar">
      <div>
        <span class="session-label">session</span>
        <code id="session-id"></code>
        <span id="strategy" class="strategy-badge"></span>
      </div>
      <div id="phase" class="phase"></div>
      <div class="controls">
        <button id="pause-btn" type="button">Pause</button>
        <span id="pool-stats"></span>
      </div>
    </header>
    <section class="curve-panel">
      <h2>Learning curve</h2>
      <svg id="curve" viewBox="0 0 460 180" role="img"
           aria-label="accuracy versus labeled samples"></svg>
      <div id="curve-caption" class="caption"></div>
    </section>
    <section class="batch-panel">
      <div class="batch-header">
        <h2 id="batch-title">Waiting for the trainer...</h2>
        <div>
          <span id="progress"></span>
          <button id="submit-btn" type="button" disabled>Submit labels</button>
        </div>
      </div>
      <div id="error" class="error" hidden></div>
      <div id="grid" class="grid"></div>
    </section>
  `;
  const get = <T extends HTMLElement>(id: string) =>
    root.querySelector<T>(`#${id}`)!;
  const grid = get<HTMLDivElement>("grid");
  const submitBtn = get<HTMLButtonElement>("submit-btn");
  const pauseBtn = get<HTMLButtonElement>("pause-btn");

  submitBtn.addEventListener("click", () => {
    void controller.submit();
  });
  pauseBtn.addEventListener("click", () => {
    controller.setPaused(!controller.view.paused);
  });
  grid.addEventListener("keydown", (event) => {
    const card = (event.target as HTMLElement).closest<HTMLElement>(".card");
    if (!card) return;
    const classCount = Number(card.dataset.classCount ?? "0");
    if (classCount > 10) return;
    const digit = Number(event.key);
    if (!Number.isInteger(digit) || event.key === " ") return;
    if (digit >= 0 && digit < classCount) {
      controller.choose(Number(card.dataset.index), digit);
    }
  });

  let renderedBatchId: string | null = null;
  controller.onChange((view) => {
    get("session-id").textContent = view.sessionId;
    get("strategy").textContent = view.strategy ? `strategy: ${view.strategy}` : "";
    get("phase").textContent = view.paused ? `${view.phase} (paused)` : view.phase;
    get("pool-stats").textContent =
      `${view.nLabeled} labeled / ${view.nUnlabeled} unlabeled`;
    pauseBtn.textContent = view.paused ? "Resume" : "Pause";
    renderCurve(root.querySelector<SVGSVGElement>("#curve")!, view);
    get("curve-caption").textContent = view.history.length
      ? `round ${view.history[view.history.length - 1].round}, accuracy ` +
        `${(view.history[view.history.length - 1].accuracy * 100).toFixed(2)}%`
      : "no evaluations yet";
    const errorBox = get("error");
    errorBox.hidden = view.error === null;
    errorBox.textContent = view.error ?? "";

    if (view.batch === null) {
      renderedBatchId = null;
      grid.innerHTML = "";
      get("batch-title").textContent =
        view.phase === "finished"
          ? "Session finished"
          : view.phase === "training"
            ? "Training in progress..."
            : "Waiting for the trainer...";
    } else {
      if (view.batch.batch_id !== renderedBatchId) {
        renderBatch(grid, view.batch, controller);
        renderedBatchId = view.batch.batch_id;
        get("batch-title").textContent =
          `Batch ${view.batch.batch_id}: label all ${view.batch.items.length} samples`;
      }
      syncSelections(grid, view);
    }
    const total = view.batch?.items.length ?? 0;
    get("progress").textContent = total
      ? `${view.chosen.size}/${total} labeled`
      : "";
    submitBtn.disabled =
      view.batch === null || view.submitting ||
      view.chosen.size !== total || total === 0;
  });
}

export function renderBatch(
  grid: HTMLElement,
  batch: QueryBatch,
  controller: SessionController,
): void {
  grid.innerHTML = "";
  const doc = grid.ownerDocument;
  for (const item of batch.items) {
    const card = doc.createElement("div");
    card.className = "card";
    card.tabIndex = 0;
    card.dataset.index = String(item.index);
    card.dataset.classCount = String(batch.class_names.length);

    const img = doc.createElement("img");
    img.alt = `sample ${item.index}`;
    img.src = `data:image/png;base64,${item.image}`;
    img.addEventListener("error", () => {
      const placeholder = doc.createElement("div");
      placeholder.className = "placeholder";
      placeholder.textContent = `sample #${item.index}`;
      img.replaceWith(placeholder);
    });
    card.appendChild(img);

    const badge = doc.createElement("span");
    badge.className = "score";
    badge.textContent = item.score.toFixed(3);
    badge.title = "acquisition score";
    card.appendChild(badge);

    const selector = doc.createElement("div");
    selector.className = "selector";
    batch.class_names.forEach((name, label) => {
      const btn = doc.createElement("button");
      btn.type = "button";
      btn.textContent = name;
      btn.dataset.label = String(label);
      btn.addEventListener("click", () => {
        controller.choose(item.index, label);
      });
      selector.appendChild(btn);
    });
    card.appendChild(selector);
    grid.appendChild(card);
  }
}

function syncSelections(grid: HTMLElement, view: SessionView): void {
  for (const card of grid.querySelectorAll<HTMLElement>(".card")) {
    const index = Number(card.dataset.index);
    const chosen = view.chosen.get(index);
    card.classList.toggle("labeled", chosen !== undefined);
    for (const btn of card.querySelectorAll<HTMLButtonElement>(".selector button")) {
      btn.classList.toggle("active", Number(btn.dataset.label) === chosen);
    }
  }
}

/** Accuracy-vs-labels polyline; a pure function of the status history. */
export function renderCurve(svg: SVGSVGElement, view: SessionView): void {
  const doc = svg.ownerDocument;
  svg.innerHTML = "";
  const history = view.history;
  if (history.length === 0) return;
  const width = 460;
  const height = 180;
  const pad = 28;
  const xs = history.map((h) => h.n_labeled);
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs, xMin + 1);
  const toX = (n: number) =>
    pad + ((n - xMin) / (xMax - xMin)) * (width - 2 * pad);
  const toY = (acc: number) => height - pad - acc * (height - 2 * pad);

  const axis = doc.createElementNS("http://www.w3.org/2000/svg", "path");
  axis.setAttribute(
    "d",
    `M ${pad} ${pad} L ${pad} ${height - pad} L ${width - pad} ${height - pad}`,
  );
  axis.setAttribute("class", "axis");
  svg.appendChild(axis);

  const line = doc.createElementNS("http://www.w3.org/2000/svg", "polyline");
  line.setAttribute(
    "points",
    history.map((h) => `${toX(h.n_labeled)},${toY(h.accuracy)}`).join(" "),
  );
  line.setAttribute("class", "curve-line");
  svg.appendChild(line);

  for (const h of history) {
    const dot = doc.createElementNS("http://www.w3.org/2000/svg", "circle");
    dot.setAttribute("cx", String(toX(h.n_labeled)));
    dot.setAttribute("cy", String(toY(h.accuracy)));
    dot.setAttribute("r", "3");
    dot.setAttribute("class", "curve-dot");
    const title = doc.createElementNS("http://www.w3.org/2000/svg", "title");
    title.textContent =
      `${h.n_labeled} labels: ${(h.accuracy * 100).toFixed(2)}%`;
    dot.appendChild(title);
    svg.appendChild(dot);
  }
}
