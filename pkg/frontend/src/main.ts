// DOM wiring. All behaviour lives in the imported modules (api/feed/state/
// gates/chart/tables); this file only routes, renders, and forwards events.
// Served statically (e.g. `evoagent serve --console frontend/dist`) and talks
// to the service that served it.

import { createApi, ApiError, type Api } from "./api";
import { EventFeed, type FeedSource, type FeedStatus } from "./feed";
import { applyEvent, emptySession, type ConsoleSession } from "./state";
import { GateController } from "./gates";
import { chartGeometry, parseCurveCsv } from "./chart";
import { filterTemplates, filterTools, schemaSummary, statusBadgeClass } from "./tables";
import type { EventRecord } from "./types";

const SVG_NS = "http://www.w3.org/2000/svg";

// the console is mounted at /console; the API lives at the same origin root
const api: Api = createApi(window.location.origin);

const root = document.getElementById("app") as HTMLElement;

function el(tag: string, className = "", text = ""): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

function clear(node: HTMLElement): void {
  while (node.firstChild) node.removeChild(node.firstChild);
}

// Adapt the browser's EventSource to the feed's minimal source contract.
function liveSource(url: string): FeedSource {
  const es = new EventSource(url);
  const adapter: FeedSource = {
    onmessage: null,
    addEventListener: (type, handler) => es.addEventListener(type, handler),
    close: () => es.close(),
  };
  es.onmessage = (ev) => adapter.onmessage?.({ data: String(ev.data) });
  return adapter;
}

// -- sessions list -------------------------------------------------------------

async function renderSessions(): Promise<void> {
  clear(root);
  root.appendChild(el("h2", "", "Sessions"));
  const form = el("div", "row");
  const input = document.createElement("input");
  input.placeholder = "new goal…";
  const button = el("button", "", "start") as HTMLButtonElement;
  button.addEventListener("click", async () => {
    if (!input.value.trim()) return;
    const created = await api.createSession(input.value.trim());
    window.location.hash = `#/sessions/${created.session_id}`;
  });
  form.append(input, button);
  root.appendChild(form);

  const listing = await api.listSessions();
  const table = el("table");
  const head = el("tr");
  for (const title of ["id", "status", "goal"]) head.appendChild(el("th", "", title));
  table.appendChild(head);
  for (const s of listing.sessions) {
    const row = el("tr");
    const link = el("a", "", s.session_id) as HTMLAnchorElement;
    link.href = `#/sessions/${s.session_id}`;
    const cell = el("td");
    cell.appendChild(link);
    row.appendChild(cell);
    row.appendChild(el("td", `status-${s.status}`, s.status));
    row.appendChild(el("td", "", s.goal));
    table.appendChild(row);
  }
  if (listing.sessions.length === 0) root.appendChild(el("p", "empty", "no sessions yet"));
  else root.appendChild(table);
}

// -- single session ------------------------------------------------------------

let activeFeed: EventFeed | null = null;

async function renderSession(id: string): Promise<void> {
  clear(root);
  let state: ConsoleSession = emptySession(id);

  try {
    await api.getSession(id); // 404 -> not-found view before wiring the feed
  } catch (err) {
    if (err instanceof ApiError && err.status === 404) {
      root.appendChild(el("h2", "", "Not found"));
      root.appendChild(el("p", "empty", `no session ${id}`));
      return;
    }
    throw err;
  }

  const header = el("h2", "", id);
  const statusLine = el("p", "session-status");
  const feedBadge = el("span", "feed-badge", "connecting");
  const gateBox = el("div", "gate-box");
  const stepsTable = el("table", "steps");
  const answerBox = el("p", "final-answer");
  const timeline = el("ol", "timeline");
  root.append(header, statusLine, feedBadge, gateBox, stepsTable, answerBox, timeline);

  const gate = new GateController(api, id, renderGate);

  function renderGate(): void {
    clear(gateBox);
    if (gate.state === "idle") return;
    gateBox.appendChild(el("strong", "", `gate: ${gate.gateKind ?? ""}`));
    const approve = el("button", "", "approve") as HTMLButtonElement;
    const reject = el("button", "", "reject") as HTMLButtonElement;
    approve.disabled = reject.disabled = !gate.enabled;
    approve.addEventListener("click", () => void gate.submit("approve", "console"));
    reject.addEventListener("click", () => void gate.submit("reject", "console"));
    gateBox.append(approve, reject);
    if (gate.message) gateBox.appendChild(el("em", "gate-message", gate.message));
  }

  function renderState(): void {
    statusLine.textContent = `${state.status}${state.failureReason ? ` — ${state.failureReason}` : ""}`;
    header.textContent = `${id}: ${state.goal}`;
    clear(stepsTable);
    for (const step of state.steps) {
      const row = el("tr");
      row.appendChild(el("td", "", step.id));
      row.appendChild(el("td", "", step.description));
      row.appendChild(el("td", `badge step-${step.status}`, step.status));
      stepsTable.appendChild(row);
    }
    answerBox.textContent = state.finalAnswer
      ? `${state.abstained ? "abstained: " : "answer: "}${state.finalAnswer}`
      : "";
  }

  function onEvent(record: EventRecord): void {
    if (!applyEvent(state, record)) return; // duplicate: never re-rendered
    gate.observe(record);
    const row = state.timeline[state.timeline.length - 1];
    const item = el("li");
    item.appendChild(el("span", "seq", String(row.seq)));
    item.appendChild(el("span", "kind", row.label));
    item.appendChild(el("span", "detail", row.detail));
    timeline.appendChild(item);
    renderState();
  }

  activeFeed?.close();
  activeFeed = new EventFeed("", id, liveSource, {
    onEvent,
    onStatus: (status: FeedStatus) => {
      feedBadge.textContent = status;
      feedBadge.className = `feed-badge feed-${status}`;
    },
  });
  activeFeed.start();
  renderState();
}

// -- tools ----------------------------------------------------------------------

async function renderTools(): Promise<void> {
  clear(root);
  root.appendChild(el("h2", "", "Tool registry"));
  const search = document.createElement("input");
  search.placeholder = "search tools…";
  root.appendChild(search);
  const table = el("table");
  root.appendChild(table);
  const empty = el("p", "empty", "no tools registered");
  root.appendChild(empty);

  const { tools } = await api.listTools();

  function draw(): void {
    clear(table);
    const rows = filterTools(tools, search.value);
    empty.style.display = rows.length === 0 ? "" : "none";
    const head = el("tr");
    for (const title of ["name", "category", "status", "inputs", "outputs", "origin"]) {
      head.appendChild(el("th", "", title));
    }
    table.appendChild(head);
    for (const tool of rows) {
      const row = el("tr");
      row.appendChild(el("td", "", tool.name));
      row.appendChild(el("td", "", tool.category));
      row.appendChild(el("td", statusBadgeClass(tool.status), tool.status));
      row.appendChild(el("td", "", schemaSummary(tool.input_schema)));
      row.appendChild(el("td", "", schemaSummary(tool.output_schema)));
      row.appendChild(el("td", "", tool.created_in_session ?? tool.provenance));
      table.appendChild(row);
    }
  }

  search.addEventListener("input", draw);
  draw();
}

// -- templates -------------------------------------------------------------------

async function renderTemplates(): Promise<void> {
  clear(root);
  root.appendChild(el("h2", "", "Template library"));
  const search = document.createElement("input");
  search.placeholder = "search templates…";
  root.appendChild(search);
  const table = el("table");
  root.appendChild(table);
  const empty = el("p", "empty", "no templates distilled yet");
  root.appendChild(empty);

  const { templates } = await api.listTemplates();

  function draw(): void {
    clear(table);
    const rows = filterTemplates(templates, search.value);
    empty.style.display = rows.length === 0 ? "" : "none";
    const head = el("tr");
    for (const title of ["title", "steps", "uses", "success", "from"]) {
      head.appendChild(el("th", "", title));
    }
    table.appendChild(head);
    for (const tpl of rows) {
      const row = el("tr");
      row.appendChild(el("td", "", tpl.title));
      row.appendChild(el("td", "", tpl.pathway_skeleton.join(" → ")));
      row.appendChild(el("td", "usage", String(tpl.usage_count)));
      row.appendChild(el("td", "", tpl.success_metric.toFixed(2)));
      row.appendChild(el("td", "", tpl.provenance_session));
      table.appendChild(row);
    }
  }

  search.addEventListener("input", draw);
  draw();
}

// -- sweep chart -----------------------------------------------------------------

function renderCurve(): void {
  clear(root);
  root.appendChild(el("h2", "", "Accuracy vs trial budget"));
  const hint = el("p", "", "load a sweep curve CSV (evoagent sweep --out curve.csv)");
  const picker = document.createElement("input");
  picker.type = "file";
  picker.accept = ".csv,text/csv";
  const holder = el("div", "chart-holder");
  root.append(hint, picker, holder);

  picker.addEventListener("change", async () => {
    const file = picker.files?.[0];
    if (!file) return;
    clear(holder);
    const geometry = chartGeometry(parseCurveCsv(await file.text()));
    if (!geometry) {
      holder.appendChild(el("p", "empty", "curve file contains no rows"));
      return;
    }
    const svg = document.createElementNS(SVG_NS, "svg");
    svg.setAttribute("width", String(geometry.width));
    svg.setAttribute("height", String(geometry.height));
    const path = document.createElementNS(SVG_NS, "path");
    path.setAttribute("d", geometry.meanPath);
    path.setAttribute("class", "mean-line");
    path.setAttribute("fill", "none");
    svg.appendChild(path);
    for (const pt of geometry.runPoints) {
      const dot = document.createElementNS(SVG_NS, "circle");
      dot.setAttribute("cx", String(pt.x));
      dot.setAttribute("cy", String(pt.y));
      dot.setAttribute("r", "3");
      dot.setAttribute("class", "run-point");
      svg.appendChild(dot);
    }
    for (const pt of geometry.meanPoints) {
      const dot = document.createElementNS(SVG_NS, "circle");
      dot.setAttribute("cx", String(pt.x));
      dot.setAttribute("cy", String(pt.y));
      dot.setAttribute("r", "5");
      dot.setAttribute("class", "mean-point");
      svg.appendChild(dot);
    }
    for (const tick of geometry.xTicks) {
      const label = document.createElementNS(SVG_NS, "text");
      label.setAttribute("x", String(tick.x));
      label.setAttribute("y", String(geometry.height - 8));
      label.setAttribute("class", "tick");
      label.textContent = tick.label;
      svg.appendChild(label);
    }
    holder.appendChild(svg);
  });
}

// -- router ----------------------------------------------------------------------

function route(): void {
  const hash = window.location.hash || "#/sessions";
  const session = hash.match(/^#\/sessions\/(.+)$/);
  if (activeFeed && !session) {
    activeFeed.close();
    activeFeed = null;
  }
  if (session) void renderSession(session[1]);
  else if (hash.startsWith("#/tools")) void renderTools();
  else if (hash.startsWith("#/templates")) void renderTemplates();
  else if (hash.startsWith("#/curve")) renderCurve();
  else void renderSessions();
}

window.addEventListener("hashchange", route);
route();
