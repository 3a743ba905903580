/** DOM wiring: chat panel on the left, the memory views on the right.
 *
 * The app talks only to the documented JSON endpoints. One chat request
 * may be in flight at a time (input disabled while pending), matching
 * the service's per-session turn serialization. Chat and visualization
 * link one way: each completed turn refetches the path points and
 * extends the overlay; clicking "ask about this memory" on a hover card
 * pre-fills the chat input with the memory's context sentence.
 */

import { ExplorerApi, MemoryCard, Projection } from "./api.js";
import { buildCharacterBars } from "./characters.js";
import { buildHeatmapScene } from "./heatmap.js";
import { buildScatterScene, hitTest, ScatterScene } from "./scatter.js";
import {
  initialState, sessionReset, sessionStarted, turnCompleted, turnFailed,
  turnRequested, UISessionState,
} from "./state.js";
import { buildTimelineScene } from "./timeline.js";

const api = new ExplorerApi("");

let state: UISessionState = initialState();
let projection: Projection = { points: [], explained_variance: [0, 0] };
let scene: ScatterScene = { markers: [], path: [], width: 640, height: 480 };

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function escapeHtml(text: string): string {
  return text.replace(/[&<>"']/g, (c) =>
    ({ "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;", "'": "&#39;" }[c] as string));
}

function renderTranscript(): void {
  const log = el<HTMLDivElement>("transcript");
  log.innerHTML = state.transcript
    .map((entry) => {
      const badges = entry.retrieved
        .map((r) => `<span class="badge badge-${r.provenance}" title="score ${r.score.toFixed(3)}">${escapeHtml(r.provenance)}: ${escapeHtml(r.uid)}</span>`)
        .join(" ");
      return `
        <div class="turn">
          <p class="query">You: ${escapeHtml(entry.query)}</p>
          <p class="response">${escapeHtml(entry.response)}</p>
          <p class="badges">${badges}</p>
        </div>`;
    })
    .join("");
  log.scrollTop = log.scrollHeight;
  el<HTMLDivElement>("error-banner").textContent = state.error ?? "";
  el<HTMLDivElement>("error-banner").style.display = state.error ? "block" : "none";
  el<HTMLButtonElement>("send").disabled = state.pending || state.sessionId === null;
  el<HTMLInputElement>("query").disabled = state.pending;
}

function renderScatter(): void {
  scene = buildScatterScene(projection, state.pathPoints);
  const svg = el<HTMLElement>("memory-map");
  if (scene.markers.length === 0) {
    svg.innerHTML = `<text x="20" y="40" class="empty">No projection yet — index a dataset first.</text>`;
    return;
  }
  const markers = scene.markers
    .map((m) => `<circle cx="${m.x.toFixed(1)}" cy="${m.y.toFixed(1)}" r="6" fill="${m.color}" data-uid="${escapeHtml(m.uid)}"></circle>`)
    .join("");
  const polyline = scene.path.length
    ? `<polyline points="${scene.path.map((p) => `${p.x.toFixed(1)},${p.y.toFixed(1)}`).join(" ")}" class="path-line"></polyline>`
    : "";
  const labels = scene.path
    .map((p, i) => `<text x="${(p.x + 8).toFixed(1)}" y="${(p.y - 6).toFixed(1)}" class="turn-label">${p.turn}.${i + 1}</text>`)
    .join("");
  svg.innerHTML = markers + polyline + labels;
}

async function renderMemoryViews(): Promise<void> {
  const [series, characters, bins] = await Promise.all([
    api.affectSeries(),
    api.characters(),
    api.geoBins(currentGeoQuery()),
  ]);

  const timeline = buildTimelineScene(series.entries);
  const timelineSvg = el<HTMLElement>("timeline");
  if (timeline.valence.length === 0) {
    timelineSvg.innerHTML = `<text x="20" y="40" class="empty">No dated memories.</text>`;
  } else {
    const line = (pts: { x: number; y: number }[], cls: string) =>
      `<polyline class="${cls}" points="${pts.map((p) => `${p.x.toFixed(1)},${p.y.toFixed(1)}`).join(" ")}"></polyline>`;
    timelineSvg.innerHTML =
      `<line x1="0" x2="${timeline.width}" y1="${timeline.zeroY.toFixed(1)}" y2="${timeline.zeroY.toFixed(1)}" class="zero-line"></line>` +
      line(timeline.valence, "valence-line") +
      line(timeline.arousal, "arousal-line");
  }

  const heatmap = buildHeatmapScene(bins);
  el<HTMLElement>("heatmap").innerHTML = heatmap.cells
    .map((c) => `<rect x="${c.x.toFixed(1)}" y="${c.y.toFixed(1)}" width="${c.size.toFixed(1)}" height="${c.size.toFixed(1)}" fill="${c.color}" opacity="${c.opacity.toFixed(2)}"><title>${c.count} memories</title></rect>`)
    .join("");
  el<HTMLSpanElement>("heatmap-count").textContent = String(heatmap.totalCount);

  el<HTMLDivElement>("characters").innerHTML = buildCharacterBars(characters.entries)
    .map((bar) => `
      <div class="char-row">
        <span class="char-name">${escapeHtml(bar.name)}</span>
        <div class="char-bar" style="width:${bar.widthPct.toFixed(1)}%"></div>
        <span class="char-count">${bar.count}</span>
      </div>`)
    .join("");
}

function currentGeoQuery() {
  const vmin = el<HTMLInputElement>("vmin").value;
  const vmax = el<HTMLInputElement>("vmax").value;
  const from = el<HTMLInputElement>("from").value;
  const to = el<HTMLInputElement>("to").value;
  return {
    bin: 1.0,
    ...(vmin !== "" && vmax !== "" ? { vmin: Number(vmin), vmax: Number(vmax) } : {}),
    ...(from !== "" && to !== "" ? { from, to } : {}),
  };
}

async function showCard(uid: string, x: number, y: number): Promise<void> {
  const card = el<HTMLDivElement>("memory-card");
  let memory: MemoryCard;
  try {
    memory = await api.memory(uid);
  } catch {
    return;
  }
  card.style.display = "block";
  card.style.left = `${x + 14}px`;
  card.style.top = `${y + 14}px`;
  card.innerHTML = `
    <strong>${escapeHtml(memory.uid)}</strong> · ${escapeHtml(memory.timestamp)}
    <p>${escapeHtml(memory.augmented_context)}</p>
    <p class="meta">${escapeHtml(memory.valence_label)}, ${escapeHtml(memory.arousal_label)};
      relevance ${memory.relevance}/10</p>
    <button id="ask-about" data-context="${escapeHtml(memory.context)}">ask about this memory</button>`;
  el<HTMLButtonElement>("ask-about").onclick = () => {
    el<HTMLInputElement>("query").value = memory.context;
    card.style.display = "none";
  };
}

async function sendQuery(): Promise<void> {
  const input = el<HTMLInputElement>("query");
  const query = input.value.trim();
  const sessionId = state.sessionId;
  if (!query || !sessionId || state.pending) return;
  state = turnRequested(state);
  renderTranscript();
  try {
    const turn = await api.chat(sessionId, query);
    const path = await api.pathPoints(sessionId);
    state = turnCompleted(state, query, turn, path.points);
    input.value = "";
  } catch (err) {
    state = turnFailed(state, err instanceof Error ? err.message : String(err));
  }
  renderTranscript();
  renderScatter();
}

async function resetSession(): Promise<void> {
  if (!state.sessionId) return;
  await api.resetSession(state.sessionId);
  state = sessionReset(state);
  renderTranscript();
  renderScatter(); // path overlay clears; the scatter itself stays
}

async function boot(): Promise<void> {
  projection = await api.projection();
  const created = await api.createSession();
  state = sessionStarted(state, created.session_id);
  renderTranscript();
  renderScatter();
  await renderMemoryViews();

  el<HTMLButtonElement>("send").onclick = () => void sendQuery();
  el<HTMLInputElement>("query").addEventListener("keydown", (event) => {
    if (event.key === "Enter") void sendQuery();
  });
  el<HTMLButtonElement>("reset").onclick = () => void resetSession();
  el<HTMLButtonElement>("apply-filters").onclick = () => void renderMemoryViews();
  el<HTMLElement>("memory-map").addEventListener("mousemove", (event) => {
    const rect = (event.currentTarget as SVGSVGElement).getBoundingClientRect();
    const hit = hitTest(scene, event.clientX - rect.left, event.clientY - rect.top);
    if (hit) {
      void showCard(hit.uid, event.clientX, event.clientY);
    } else {
      el<HTMLDivElement>("memory-card").style.display = "none";
    }
  });
}

if (typeof document !== "undefined" && document.getElementById("memory-map")) {
  void boot();
}
