import init, { pool_size, relation_algebra, mine } from "./pkg/kgaxiom_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const fmt = (x) => (Math.abs(x) < 1e-12 ? "0" : x.toFixed(4));

function showError(target, e) {
  target.innerHTML = `<p class="error">${e}</p>`;
}

function table(headers, rows) {
  const head = `<tr>${headers.map((h) => `<th>${h}</th>`).join("")}</tr>`;
  const body = rows
    .map((r) => `<tr>${r.map((c, i) => `<td${i === 0 ? ' class="name"' : ""}>${c}</td>`).join("")}</tr>`)
    .join("");
  return head + body;
}

function plotPool(canvas, result) {
  const ctx = canvas.getContext("2d");
  const { width, height } = canvas;
  const pad = 30;
  ctx.clearRect(0, 0, width, height);
  const top = result.k * 1.1;
  const x = (n) => pad + ((Math.log10(n) / 6) * (width - 2 * pad));
  const y = (v) => height - pad - (v / top) * (height - 2 * pad);
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(pad, y(0));
  ctx.lineTo(width - pad, y(0));
  ctx.stroke();
  const hline = (v, color) => {
    ctx.strokeStyle = color;
    ctx.setLineDash([4, 4]);
    ctx.beginPath();
    ctx.moveTo(pad, y(v));
    ctx.lineTo(width - pad, y(v));
    ctx.stroke();
    ctx.setLineDash([]);
  };
  hline(result.k, "#c33");
  hline(result.limit, "#888");
  ctx.strokeStyle = "#1565c0";
  ctx.beginPath();
  result.curve.forEach(([n, v], i) => (i ? ctx.lineTo(x(n), y(v)) : ctx.moveTo(x(n), y(v))));
  ctx.stroke();
  ctx.fillStyle = "#333";
  ctx.fillText("relation size N (log scale, 1 to 1e6)", width / 2 - 90, height - 8);
  ctx.fillText(`k = ${result.k}`, width - pad - 50, y(result.k) - 4);
}

function updatePool() {
  const out = $("pool-out");
  try {
    const result = JSON.parse(pool_size(num("pool-p"), num("pool-t")));
    out.innerHTML = `<p>k = <strong>${result.k}</strong> (limit of the bound: ${result.limit.toFixed(3)})</p>`;
    plotPool($("pool-plot"), result);
  } catch (e) {
    showError(out, e);
  }
}

const RELATIONS = [
  ["A", [1, 1, 30]],
  ["B", [1, 1, -30]],
  ["C", [1, 1, 0]],
];

function algebraInputs() {
  const parts = RELATIONS.map(
    ([name, [s, m, d]]) =>
      `<div><strong>${name}</strong>
        <label>scalar <input id="${name}-s" type="number" step="0.1" value="${s}"></label>
        <label>modulus <input id="${name}-m" type="number" step="0.1" value="${m}"></label>
        <label>angle <input id="${name}-d" type="range" min="-180" max="180" value="${d}"></label>
        <span id="${name}-d-val">${d}°</span></div>`,
  );
  $("algebra-inputs").innerHTML = parts.join("");
}

function matrix(name, m) {
  const rows = m.map((r) => `<tr>${r.map((v) => `<td>${fmt(v)}</td>`).join("")}</tr>`).join("");
  return `<div><strong>${name}</strong><table>${rows}</table></div>`;
}

function updateAlgebra() {
  const args = RELATIONS.flatMap(([name]) => {
    $(`${name}-d-val`).textContent = `${$(`${name}-d`).value}°`;
    return [num(`${name}-s`), num(`${name}-m`), num(`${name}-d`)];
  });
  try {
    const r = JSON.parse(relation_algebra(...args));
    $("algebra-matrices").innerHTML =
      matrix("M_A", r.a) + matrix("M_B", r.b) + matrix("M_C", r.c) + matrix("M_A M_B", r.ab);
    $("algebra-raw").innerHTML = table(["axiom", "residual"], r.raw.map(([n, v]) => [n, fmt(v)]));
  } catch (e) {
    showError($("algebra-matrices"), e);
  }
}

function sampleGraph() {
  const lines = [];
  for (let i = 0; i < 12; i++) {
    const j = (i + 1) % 12;
    lines.push(`p${i} spouse p${j}`, `p${j} spouse p${i}`);
    lines.push(`p${i} parent c${i}`, `c${i} child p${i}`);
  }
  return lines.join("\n");
}

function runMine() {
  const out = $("mine-out");
  out.textContent = "training...";
  setTimeout(() => {
    try {
      const r = JSON.parse(
        mine($("mine-text").value, num("mine-dim"), num("mine-epochs"), num("mine-threshold"), num("mine-seed")),
      );
      const losses = r.losses;
      const top = r.axioms.slice(0, 15).map((a) => [a.axiom, a.support, a.head_size, fmt(a.raw), fmt(a.score), fmt(a.hc)]);
      const inferred = r.inferred.slice(0, 30).map((i) => [i.triple.join(" "), fmt(i.truth), i.source]);
      out.innerHTML =
        `<p>${r.entities} entities, ${r.relations} relations, ${r.triples} triples.
          Loss ${losses[0].toFixed(4)} → ${losses[losses.length - 1].toFixed(4)}.</p>` +
        `<table>${table(["axiom", "support", "head", "raw", "score", "HC"], top)}</table>` +
        `<p>${r.inferred.length} inferred triples${r.inferred.length > 30 ? " (first 30 shown)" : ""}</p>` +
        `<table>${table(["triple", "truth", "axiom"], inferred)}</table>`;
    } catch (e) {
      showError(out, e);
    }
  }, 0);
}

await init();
$("pool-p").addEventListener("input", updatePool);
$("pool-t").addEventListener("input", updatePool);
updatePool();
algebraInputs();
$("algebra-inputs").addEventListener("input", updateAlgebra);
updateAlgebra();
$("mine-text").value = sampleGraph();
$("mine-run").addEventListener("click", runMine);
