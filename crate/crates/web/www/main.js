import init, { weights, simulate, bounds } from "./pkg/poolbounds_web.js";

const $ = (id) => document.getElementById(id);
const fmt = (v) => (Number.isFinite(v) ? v.toFixed(3) : String(v));

function fail(el, err) {
  el.innerHTML = "";
  const p = document.createElement("p");
  p.className = "err";
  p.textContent = String(err.message ?? err);
  el.appendChild(p);
}

function table(headers, rows) {
  const t = document.createElement("table");
  const head = t.insertRow();
  for (const h of headers) {
    const th = document.createElement("th");
    th.textContent = h;
    head.appendChild(th);
  }
  for (const r of rows) {
    const tr = t.insertRow();
    for (const c of r) tr.insertCell().textContent = typeof c === "number" ? fmt(c) : c;
  }
  return t;
}

function plotWeights() {
  const canvas = $("w-canvas");
  const ctx = canvas.getContext("2d");
  let data;
  try {
    data = JSON.parse(weights(Number($("w-pstar").value), $("w-order").value, Number($("w-n").value)));
  } catch (e) {
    fail($("w-msg"), e);
    return;
  }
  const all = data.sample.concat(data.population).map((p) => p.weight);
  let lo = Math.min(-1, ...all);
  let hi = Math.max(2, ...all);
  const clip = 20;
  lo = Math.max(lo, -clip);
  hi = Math.min(hi, clip);
  const W = canvas.width, H = canvas.height, pad = 36;
  const sx = (x) => pad + x * (W - 2 * pad);
  const sy = (y) => H - pad - ((Math.min(Math.max(y, lo), hi) - lo) / (hi - lo)) * (H - 2 * pad);

  ctx.clearRect(0, 0, W, H);
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(sx(0), sy(0));
  ctx.lineTo(sx(1), sy(0));
  ctx.moveTo(sx(0), sy(lo));
  ctx.lineTo(sx(0), sy(hi));
  ctx.stroke();
  ctx.fillStyle = "#555";
  ctx.font = "12px sans-serif";
  for (const y of [lo, 0, 1, hi]) ctx.fillText(fmt(y), 2, sy(y) + 4);
  ctx.fillText("0", sx(0) - 3, H - pad + 14);
  ctx.fillText("1", sx(1) - 3, H - pad + 14);

  ctx.strokeStyle = "#1f77b4";
  ctx.beginPath();
  data.population.forEach((p, i) => (i ? ctx.lineTo(sx(p.x), sy(p.weight)) : ctx.moveTo(sx(p.x), sy(p.weight))));
  ctx.stroke();

  ctx.fillStyle = "#d62728";
  for (const p of data.sample) {
    ctx.beginPath();
    ctx.arc(sx(p.x), sy(p.weight), 4, 0, 2 * Math.PI);
    ctx.fill();
  }
  $("w-msg").textContent =
    `q = ${data.q}. Sample weights: ` + data.sample.map((p) => fmt(p.weight)).join(", ");
}

function drawSample() {
  const out = $("s-out");
  try {
    const r = JSON.parse(
      simulate(
        $("s-dgp").value,
        $("s-cov").value,
        Number($("s-n").value),
        Number($("s-l").value),
        $("s-q").value,
        1,
        Number($("s-rep").value),
      ),
    );
    out.innerHTML = "";
    const p = document.createElement("p");
    p.textContent = `True ATT ${fmt(r.truth)}; oracle ${fmt(r.oracle)}, RPS ${fmt(r.rps)}, NN ${fmt(r.nn)}`;
    out.appendChild(p);
    out.appendChild(
      table(
        ["Q", "lower", "upper", "CI lower", "CI upper"],
        r.orders.map((o) => [o.q, o.lower, o.upper, o.ci.lower, o.ci.upper]),
      ),
    );
  } catch (e) {
    fail(out, e);
  }
}

function estimate() {
  const out = $("b-out");
  try {
    const report = JSON.parse(bounds($("b-csv").value, $("b-config").value));
    out.innerHTML = "";
    const prov = report.provenance;
    const p = document.createElement("p");
    p.textContent = `n = ${prov.n}, treated = ${prov.n_treated}, clusters = ${prov.m}`;
    out.appendChild(p);
    out.appendChild(
      table(
        ["target", "lower", "upper", "CI lower", "CI upper"],
        report.results.map((r) => [r.target, r.lower, r.upper, r.confidence.ci_union.lower, r.confidence.ci_union.upper]),
      ),
    );
    for (const w of prov.warnings) {
      const wp = document.createElement("p");
      wp.textContent = "Note: " + w;
      out.appendChild(wp);
    }
  } catch (e) {
    fail(out, e);
  }
}

await init();
$("status").textContent = "";
$("w-run").addEventListener("click", plotWeights);
$("s-run").addEventListener("click", drawSample);
$("b-run").addEventListener("click", estimate);
plotWeights();
