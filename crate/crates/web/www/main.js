import init, { offlineAllocation, tp1Curves, requestProbabilityCurve } from "./pkg/prosched_web.js";

const $ = (id) => document.getElementById(id);
const nums = (s) => s.trim().split(/[\s,]+/).filter(Boolean).map(Number);

function frame(canvas) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.font = "12px sans-serif";
  return ctx;
}

function axes(ctx, w, h, pad, xLabel, yLabel, yMax) {
  ctx.strokeStyle = "#444";
  ctx.beginPath();
  ctx.moveTo(pad, pad / 2);
  ctx.lineTo(pad, h - pad);
  ctx.lineTo(w - pad / 2, h - pad);
  ctx.stroke();
  ctx.fillStyle = "#444";
  ctx.fillText(xLabel, w / 2, h - 8);
  ctx.fillText(yLabel, 4, pad / 2);
  ctx.fillText(yMax.toFixed(2), 4, pad / 2 + 14);
}

function fail(out, e) {
  out.className = "err";
  out.textContent = e.message ?? String(e);
}

function drawWaterfill() {
  const out = $("wf-out");
  const canvas = $("wf-canvas");
  const ctx = frame(canvas);
  try {
    const bits = Number($("wf-bits").value);
    const p = Number($("wf-p").value);
    const gains = nums($("wf-gains").value);
    const res = offlineAllocation(bits, Float64Array.from(gains), p);
    const alloc = Array.from(res.slice(0, gains.length));
    const threshold = res[gains.length];
    const { width: w, height: h } = canvas;
    const pad = 40;
    const yMax = Math.max(...alloc, 1e-9);
    axes(ctx, w, h, pad, "slot (deadline on the right)", "bits", yMax);
    const bw = (w - 1.5 * pad) / alloc.length;
    alloc.forEach((b, i) => {
      const x = pad + i * bw + 4;
      const bh = (b / yMax) * (h - 1.5 * pad);
      ctx.fillStyle = i === alloc.length - 1 ? "#c77" : "#58a";
      ctx.fillRect(x, h - pad - bh, bw - 8, bh);
      ctx.fillStyle = "#222";
      ctx.fillText(`h=${gains[i]}`, x, h - pad + 14);
      ctx.fillText(b.toFixed(3), x, h - pad - bh - 4);
    });
    out.className = "";
    out.textContent = `threshold ${Number.isFinite(threshold) ? threshold.toFixed(4) : "none"}; ` +
      `slots with gain below it stay silent. The deadline slot counts with gain h1/p.`;
  } catch (e) {
    fail(out, e);
  }
}

function drawTp1() {
  const out = $("tp1-out");
  const canvas = $("tp1-canvas");
  const ctx = frame(canvas);
  try {
    const bits = Number($("tp1-bits").value);
    const gains = Float64Array.from({ length: 200 }, (_, i) => 0.02 + i * 0.025);
    const res = tp1Curves(bits, Number($("tp1-p").value), Number($("tp1-h1").value),
      Number($("tp1-rate").value), Number($("tp1-floor").value), gains);
    const { width: w, height: h } = canvas;
    const pad = 40;
    const hMax = gains[gains.length - 1];
    axes(ctx, w, h, pad, "current gain h2", "b2", bits);
    const X = (v) => pad + (v / hMax) * (w - 1.5 * pad);
    const Y = (v) => h - pad - (bits > 0 ? v / bits : 0) * (h - 1.5 * pad);
    for (const [col, dash, color] of [[1, [], "#58a"], [2, [6, 4], "#c77"]]) {
      ctx.strokeStyle = color;
      ctx.setLineDash(dash);
      ctx.beginPath();
      for (let i = 0; i < res.length; i += 3) {
        const f = i === 0 ? "moveTo" : "lineTo";
        ctx[f](X(res[i]), Y(res[i + col]));
      }
      ctx.stroke();
    }
    ctx.setLineDash([]);
    out.className = "";
    out.textContent = "";
  } catch (e) {
    fail(out, e);
  }
}

function drawRequestCurve() {
  const out = $("pt-out");
  const canvas = $("pt-canvas");
  const ctx = frame(canvas);
  try {
    const rows = $("pt-matrix").value.trim().split("\n").map(nums);
    const g = nums($("pt-g").value);
    const slots = Number($("pt-slots").value);
    const curve = requestProbabilityCurve(Float64Array.from(rows.flat()), Float64Array.from(g),
      Number($("pt-loc").value), slots);
    const { width: w, height: h } = canvas;
    const pad = 40;
    axes(ctx, w, h, pad, "slots before the deadline (t)", "p_t", 1);
    const X = (t) => pad + ((t - 1) / Math.max(slots - 1, 1)) * (w - 1.5 * pad);
    const Y = (v) => h - pad - v * (h - 1.5 * pad);
    ctx.strokeStyle = "#58a";
    ctx.beginPath();
    curve.forEach((v, i) => (i === 0 ? ctx.moveTo(X(1), Y(v)) : ctx.lineTo(X(i + 1), Y(v))));
    ctx.stroke();
    ctx.fillStyle = "#58a";
    curve.forEach((v, i) => ctx.fillRect(X(i + 1) - 2, Y(v) - 2, 4, 4));
    out.className = "";
    out.textContent = `p_1 = ${curve[0].toFixed(4)}, p_${slots} = ${curve[slots - 1].toFixed(4)}`;
  } catch (e) {
    fail(out, e);
  }
}

await init();
for (const [section, draw] of [["wf", drawWaterfill], ["tp1", drawTp1], ["pt", drawRequestCurve]]) {
  $(section).addEventListener("input", draw);
  draw();
}
