// Built with `wasm-pack build crates/wasm --target web --out-dir www/pkg`.
import init, { shuffle, certify, costCurve } from "./pkg/sigbasis_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function show(el, text, isError) {
  el.textContent = text;
  el.className = isError ? "err" : "";
}

function runShuffle() {
  const r = JSON.parse(shuffle(num("sh-d"), $("sh-l").value, $("sh-r").value));
  show($("sh-out"), r.error ?? r.text, !!r.error);
}

function runCertify() {
  const r = JSON.parse(certify(num("bc-d"), num("bc-n"), $("bc-w").value));
  if (r.error) return show($("bc-out"), r.error, true);
  const c = r.certificate;
  const full = (c.d + 1) ** c.N;
  let lines = [`verdict: ${c.verdict}`, `rank: ${c.rank} of ${full}`];
  lines.push(r.filter.result === "pass" ? "filter: pass" : `filter: fail (${r.filter.reason})`);
  for (const b of c.blocks) {
    if (b.rank < b.required || b.cardinality !== b.required) {
      lines.push(`  class ${b.gamma || "e"}: ${b.cardinality} words, rank ${b.rank}, need ${b.required}`);
    }
  }
  show($("bc-out"), lines.join("\n"), false);
}

function plot(canvas, xs, ys) {
  const g = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height, pad = 36;
  g.clearRect(0, 0, w, h);
  const lo = 0.4, hi = Math.max(0.6, ...ys);
  const px = (x) => pad + ((x - xs[0]) / Math.max(1, xs[xs.length - 1] - xs[0])) * (w - 2 * pad);
  const py = (y) => h - pad - ((y - lo) / (hi - lo)) * (h - 2 * pad);
  g.strokeStyle = "#bbb";
  g.setLineDash([4, 4]);
  g.beginPath();
  g.moveTo(pad, py(0.5));
  g.lineTo(w - pad, py(0.5));
  g.stroke();
  g.setLineDash([]);
  g.fillStyle = "#555";
  g.font = "12px sans-serif";
  g.fillText("0.5", 4, py(0.5) + 4);
  g.fillText(hi.toFixed(2), 4, py(hi) + 4);
  g.fillText(`K = ${xs[0]}`, pad, h - 10);
  g.fillText(`K = ${xs[xs.length - 1]}`, w - pad - 60, h - 10);
  g.strokeStyle = "#1f5fa8";
  g.lineWidth = 2;
  g.beginPath();
  xs.forEach((x, i) => (i ? g.lineTo(px(x), py(ys[i])) : g.moveTo(px(x), py(ys[i]))));
  g.stroke();
}

function runCost() {
  const r = JSON.parse(costCurve(num("cc-d"), num("cc-n"), num("cc-k")));
  if (r.error) return show($("cc-out"), r.error, true);
  plot($("cc-plot"), r.segments, r.ratio);
  const last = r.segments.length - 1;
  show(
    $("cc-out"),
    `${r.size_all} words vs ${r.size_suffix} words\n` +
      `K = ${r.segments[last]}: ${r.all[last]} vs ${r.suffix[last]} operations, ratio ${r.ratio[last].toFixed(4)}`,
    false,
  );
}

await init();
for (const [ids, f] of [
  [["sh-d", "sh-l", "sh-r"], runShuffle],
  [["bc-d", "bc-n", "bc-w"], runCertify],
  [["cc-d", "cc-n", "cc-k"], runCost],
]) {
  ids.forEach((id) => $(id).addEventListener("input", f));
  f();
}
