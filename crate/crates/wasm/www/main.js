import init, { shrinkageHeatmap, riskCurves, mpDensity } from "./pkg/flowridge_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function guard(errId, f) {
  $(errId).textContent = "";
  try {
    f();
  } catch (e) {
    $(errId).textContent = String(e.message ?? e);
  }
}

// Viridis-ish ramp on [0, 1], diverging blue/red on [-1, 1].
function ramp(v) {
  const stops = [[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]];
  const x = Math.min(Math.max(v, 0), 1) * (stops.length - 1);
  const i = Math.min(Math.floor(x), stops.length - 2);
  const f = x - i;
  return stops[i].map((c, k) => Math.round(c + f * (stops[i + 1][k] - c)));
}
function diverging(v) {
  const a = Math.min(Math.abs(v) / 0.3, 1);
  return v >= 0 ? [255, Math.round(255 * (1 - a)), Math.round(255 * (1 - a))]
                : [Math.round(255 * (1 - a)), Math.round(255 * (1 - a)), 255];
}

function drawHeatmap() {
  const sN = 120, tN = 80;
  const h = shrinkageHeatmap(num("h-slo"), num("h-shi"), sN, num("h-tlo"), num("h-thi"), tN);
  const flow = h.subarray(sN + tN, sN + tN + sN * tN);
  const ridge = h.subarray(sN + tN + sN * tN);
  const which = $("h-which").value;
  const canvas = $("h-canvas");
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(sN, tN);
  for (let r = 0; r < tN; r++) {
    for (let c = 0; c < sN; c++) {
      const k = r * sN + c;
      const rgb = which === "flow" ? ramp(flow[k]) : which === "ridge" ? ramp(ridge[k]) : diverging(flow[k] - ridge[k]);
      // t grows upward
      const o = ((tN - 1 - r) * sN + c) * 4;
      img.data.set([...rgb, 255], o);
    }
  }
  const off = new OffscreenCanvas(sN, tN);
  off.getContext("2d").putImageData(img, 0, 0);
  ctx.imageSmoothingEnabled = false;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(off, 40, 10, canvas.width - 50, canvas.height - 40);
  ctx.fillStyle = "#222";
  ctx.fillText(`s: ${$("h-slo").value} → ${$("h-shi").value}`, 40, canvas.height - 12);
  ctx.save();
  ctx.translate(14, canvas.height / 2 + 40);
  ctx.rotate(-Math.PI / 2);
  ctx.fillText(`t: ${$("h-tlo").value} → ${$("h-thi").value}`, 0, 0);
  ctx.restore();
}

function plot(canvas, series, { logX = false, logY = false } = {}) {
  const ctx = canvas.getContext("2d");
  const W = canvas.width, H = canvas.height, L = 50, B = 30;
  ctx.clearRect(0, 0, W, H);
  const tx = logX ? Math.log10 : (v) => v;
  const ty = logY ? Math.log10 : (v) => v;
  let x0 = Infinity, x1 = -Infinity, y0 = Infinity, y1 = -Infinity;
  for (const s of series) {
    s.x.forEach((x, i) => {
      const y = s.y[i];
      if (!Number.isFinite(y)) return;
      x0 = Math.min(x0, tx(x)); x1 = Math.max(x1, tx(x));
      y0 = Math.min(y0, ty(y)); y1 = Math.max(y1, ty(y));
    });
  }
  if (y1 === y0) y1 = y0 + 1;
  const px = (x) => L + (tx(x) - x0) / (x1 - x0) * (W - L - 10);
  const py = (y) => H - B - (ty(y) - y0) / (y1 - y0) * (H - B - 10);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(L, 10, W - L - 10, H - B - 10);
  ctx.fillStyle = "#222";
  const fmt = (v) => (logX ? 10 ** v : v).toPrecision(3);
  ctx.fillText(fmt(x0), L, H - 12);
  ctx.fillText(fmt(x1), W - 45, H - 12);
  const fy = (v) => (logY ? 10 ** v : v).toPrecision(3);
  ctx.fillText(fy(y1), 2, 18);
  ctx.fillText(fy(y0), 2, H - B);
  for (const s of series) {
    ctx.strokeStyle = s.color;
    ctx.setLineDash(s.dash ?? []);
    ctx.beginPath();
    let started = false;
    s.x.forEach((x, i) => {
      const y = s.y[i];
      if (!Number.isFinite(y)) { started = false; return; }
      started ? ctx.lineTo(px(x), py(y)) : ctx.moveTo(px(x), py(y));
      started = true;
    });
    ctx.stroke();
  }
  ctx.setLineDash([]);
}

function drawRisk() {
  const k = 120;
  const r = riskCurves($("r-dist").value, num("r-n"), num("r-p"), num("r-rho"), num("r-seed"),
    num("r-s2"), num("r-r2"), $("r-flavor").value, k);
  const part = (i) => Array.from(r.subarray(i * k, (i + 1) * k));
  const t = part(0), flow = part(1), ridge = part(2);
  plot($("r-canvas"), [
    { x: t, y: flow, color: "#1f77b4" },
    { x: t, y: ridge, color: "#d62728" },
    { x: t, y: part(3), color: "#1f77b4", dash: [4, 4] },
    { x: t, y: part(4), color: "#d62728", dash: [4, 4] },
  ], { logX: true });
  const ratio = Math.max(...flow.map((f, i) => f / ridge[i]));
  const minRatio = Math.min(...flow) / Math.min(...ridge);
  $("r-ratio").textContent = `max flow/ridge ratio ${ratio.toFixed(4)}, ratio of minima ${minRatio.toFixed(4)}`;
}

function drawMp() {
  const m = 400;
  const c = mpDensity(num("m-gamma"), m);
  const [a, b, mass0] = c;
  const s = Array.from(c.subarray(3, 3 + m));
  const d = Array.from(c.subarray(3 + m));
  plot($("m-canvas"), [{ x: s, y: d, color: "#2ca02c" }]);
  $("m-info").textContent = `support [${a.toFixed(4)}, ${b.toFixed(4)}], point mass at zero ${mass0.toFixed(4)}`;
}

await init();
$("h-go").onclick = () => guard("h-err", drawHeatmap);
$("h-which").onchange = () => guard("h-err", drawHeatmap);
$("r-go").onclick = () => guard("r-err", drawRisk);
$("m-gamma").oninput = () => guard("m-err", drawMp);
guard("h-err", drawHeatmap);
guard("r-err", drawRisk);
guard("m-err", drawMp);
