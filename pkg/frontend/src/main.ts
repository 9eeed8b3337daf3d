/** DOM wiring; all logic lives in the imported modules. */

import { ApiClient, ApiError } from "./api.js";
import { charIndexFromByte, selectionToSpan } from "./align.js";
import { renderContribution } from "./chart.js";
import { diffTokens, tokenGlyph, transcriptsIdentical } from "./diff.js";
import { PatchGrid } from "./grid.js";
import { drawHeatmap } from "./heatmap.js";
import { RoundInput, SessionFlow, runDiffPair } from "./state.js";
import type { GenerationResult, Params, WireSpan } from "./types.js";

const $ = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;

let client = new ApiClient("");
let flow = new SessionFlow(client);
let grid = new PatchGrid(8);
let spans: WireSpan[] = [];
let lastRunParams: Params | null = null;
let retryAction: (() => void) | null = null;

function params(): Params {
  return {
    alpha: parseFloat($<HTMLInputElement>("alpha").value),
    beta: parseFloat($<HTMLInputElement>("beta").value),
    gamma: parseFloat($<HTMLInputElement>("gamma").value),
    max_new_tokens: parseInt($<HTMLInputElement>("max-tokens").value, 10),
  };
}

function banner(message: string, retry?: () => void) {
  const el = $("banner");
  el.textContent = message;
  el.classList.toggle("hidden", message === "");
  retryAction = retry ?? null;
  $("retry").classList.toggle("hidden", !retry);
}

function failure(err: unknown, retry?: () => void) {
  if (err instanceof ApiError && err.status === 409) {
    const run = $<HTMLButtonElement>("run");
    run.disabled = true;
    banner("session is busy; the run button re-enables when it frees up");
    setTimeout(() => {
      run.disabled = flow.busy;
      banner("");
    }, 2000);
  } else if (err instanceof ApiError) {
    banner(`server error ${err.status}: ${err.message}`);
  } else {
    banner(`connection lost: ${(err as Error).message}`, retry);
  }
}

function renderPromptPreview() {
  const text = $<HTMLTextAreaElement>("prompt").value;
  const target = $("preview");
  target.innerHTML = "";
  const ordered = [...spans].sort((a, b) => a.char_start - b.char_start);
  let cursor = 0;
  for (const span of ordered) {
    const s = charIndexFromByte(text, span.char_start);
    const e = charIndexFromByte(text, span.char_end);
    if (s > cursor) target.appendChild(document.createTextNode(text.slice(cursor, s)));
    const mark = document.createElement("mark");
    mark.textContent = text.slice(s, e);
    target.appendChild(mark);
    cursor = e;
  }
  target.appendChild(document.createTextNode(text.slice(cursor)));
  $("span-count").textContent = spans.length ? `${spans.length} span(s)` : "no spans";
}

function renderGrid() {
  const table = $("grid");
  table.innerHTML = "";
  for (let r = 0; r < grid.p; r++) {
    const row = document.createElement("tr");
    for (let c = 0; c < grid.p; c++) {
      const cell = document.createElement("td");
      cell.className = grid.bits[grid.index(r, c)] ? "cell on" : "cell";
      cell.addEventListener("click", () => {
        grid.toggle(r, c);
        renderGrid();
      });
      row.appendChild(cell);
    }
    table.appendChild(row);
  }
  $("grid-count").textContent = grid.attached
    ? `${grid.count()} / ${grid.p * grid.p} patches highlighted`
    : "image not attached";
}

function roundInput(): RoundInput {
  return {
    text: $<HTMLTextAreaElement>("prompt").value,
    spans: [...spans],
    patchMask: grid.maskOrNull(),
  };
}

function renderRounds() {
  const list = $("rounds");
  list.innerHTML = "";
  flow.rounds.forEach((round, i) => {
    const item = document.createElement("li");
    const user = document.createElement("div");
    user.className = "round-user";
    const text = round.input.text;
    let cursor = 0;
    for (const span of [...round.input.spans].sort((a, b) => a.char_start - b.char_start)) {
      const s = charIndexFromByte(text, span.char_start);
      const e = charIndexFromByte(text, span.char_end);
      if (s > cursor) user.appendChild(document.createTextNode(text.slice(cursor, s)));
      const mark = document.createElement("mark");
      mark.textContent = text.slice(s, e);
      user.appendChild(mark);
      cursor = e;
    }
    user.appendChild(document.createTextNode(text.slice(cursor)));
    if (round.input.patchMask) {
      const badge = document.createElement("span");
      badge.className = "badge";
      badge.textContent = `image: ${round.input.patchMask.reduce((a, b) => a + b, 0)} patches`;
      user.appendChild(badge);
    }
    const reply = document.createElement("div");
    reply.className = "round-reply";
    reply.textContent = round.result.text || round.result.tokens.map(tokenGlyph).join("");
    const meta = document.createElement("div");
    meta.className = "round-meta";
    meta.textContent = `round ${i + 1} · γ=${round.params.gamma} β=${round.params.beta} α=${round.params.alpha} · ${round.result.finish_reason}`;
    item.append(user, reply, meta);
    list.appendChild(item);
  });
}

async function refreshAttention() {
  try {
    const att = await flow.lastAttention();
    drawHeatmap($<HTMLCanvasElement>("heatmap"), att.map.data, att.context_len);
    renderContribution(
      document.getElementById("contribution") as unknown as SVGSVGElement,
      att.contribution.per_row,
      att.contribution.mean,
    );
    const ratio = att.band.ratio === null ? "n/a" : att.band.ratio.toFixed(3);
    $("att-stats").textContent =
      `contribution mean ${att.contribution.mean.toFixed(4)} · ` +
      `G_x ${att.band.gx?.toFixed(4) ?? "n/a"} · G_y ${att.band.gy?.toFixed(4) ?? "n/a"} · ratio ${ratio}`;
  } catch (err) {
    failure(err);
  }
}

function setBusy(busy: boolean) {
  $<HTMLButtonElement>("run").disabled = busy;
  $<HTMLButtonElement>("diff").disabled = busy;
  $<HTMLButtonElement>("regen").disabled = busy || flow.rounds.length === 0;
}

async function run() {
  const stream = $("stream");
  stream.textContent = "";
  setBusy(true);
  banner("");
  try {
    lastRunParams = params();
    await flow.runRound(roundInput(), lastRunParams, (t) => {
      stream.textContent += t.text || (t.id !== null ? tokenGlyph(t.id) : "");
    });
    renderRounds();
    spans = [];
    $<HTMLTextAreaElement>("prompt").value = "";
    renderPromptPreview();
    await refreshAttention();
  } catch (err) {
    failure(err, run);
  } finally {
    setBusy(false);
  }
}

async function regenerate() {
  const stream = $("stream");
  stream.textContent = "";
  setBusy(true);
  banner("");
  try {
    lastRunParams = params();
    await flow.regenerateLast(lastRunParams, (t) => {
      stream.textContent += t.text || (t.id !== null ? tokenGlyph(t.id) : "");
    });
    renderRounds();
    await refreshAttention();
  } catch (err) {
    failure(err, regenerate);
  } finally {
    setBusy(false);
  }
}

function renderDiff(baseline: GenerationResult, highlighted: GenerationResult) {
  const segments = diffTokens(baseline.tokens, highlighted.tokens);
  const note = $("diff-note");
  note.textContent = transcriptsIdentical(segments)
    ? "outputs are identical"
    : "outputs differ at the marked tokens";
  for (const [paneId, side] of [
    ["diff-left", "left"],
    ["diff-right", "right"],
  ] as const) {
    const pane = $(paneId);
    pane.innerHTML = "";
    for (const seg of segments) {
      if (seg.kind !== "equal" && seg.kind !== side) continue;
      const el = document.createElement("span");
      el.className = seg.kind === "equal" ? "d-eq" : "d-chg";
      el.textContent = seg.tokens.map(tokenGlyph).join("");
      pane.appendChild(el);
    }
  }
}

async function diff() {
  setBusy(true);
  banner("");
  try {
    const pair = await runDiffPair(client, roundInput(), params());
    renderDiff(pair.baseline, pair.highlighted);
  } catch (err) {
    failure(err, diff);
  } finally {
    setBusy(false);
  }
}

async function connect() {
  const base = $<HTMLInputElement>("server").value.replace(/\/$/, "");
  client = new ApiClient(base);
  flow = new SessionFlow(client);
  try {
    const info = await client.config();
    grid = new PatchGrid(info.patch_grid);
    $("model-info").textContent =
      `d_model ${info.d_model} · ${info.n_layers} layers · grid ${info.patch_grid}×${info.patch_grid}`;
    for (const [id, key] of [
      ["alpha", "alpha"],
      ["beta", "beta"],
      ["gamma", "gamma"],
    ] as const) {
      const v = info.defaults[key];
      if (typeof v === "number") $<HTMLInputElement>(id).value = String(v);
    }
    renderGrid();
    renderRounds();
    setBusy(false);
    banner("");
  } catch (err) {
    failure(err, connect);
  }
}

function wire() {
  $("connect").addEventListener("click", connect);
  $("run").addEventListener("click", run);
  $("diff").addEventListener("click", diff);
  $("regen").addEventListener("click", regenerate);
  $("retry").addEventListener("click", () => retryAction?.());
  $("mark-selection").addEventListener("click", async () => {
    const area = $<HTMLTextAreaElement>("prompt");
    try {
      const { offsets } = await client.tokenize(area.value);
      const span = selectionToSpan(
        area.value,
        offsets as [number, number][],
        area.selectionStart,
        area.selectionEnd,
      );
      if (span) spans.push(span);
      renderPromptPreview();
    } catch (err) {
      failure(err);
    }
  });
  $("clear-spans").addEventListener("click", () => {
    spans = [];
    renderPromptPreview();
  });
  $("grid-all").addEventListener("click", () => {
    grid.all();
    renderGrid();
  });
  $("grid-clear").addEventListener("click", () => {
    grid.detach();
    renderGrid();
  });
  $("reset").addEventListener("click", () => {
    flow.reset();
    spans = [];
    grid.detach();
    renderRounds();
    renderGrid();
    renderPromptPreview();
    $("stream").textContent = "";
  });
  for (const id of ["alpha", "beta", "gamma"]) {
    $<HTMLInputElement>(id).addEventListener("input", () => {
      $(`${id}-value`).textContent = $<HTMLInputElement>(id).value;
    });
  }
  renderGrid();
  renderPromptPreview();
  void connect();
}

document.addEventListener("DOMContentLoaded", wire);
