import init, { rate_vs_distance, rate_vs_block_size, mc_histogram } from "./pkg/cvqkd_web.js";

const COLORS = ["#000", "#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const MARGIN = { left: 70, right: 20, top: 20, bottom: 45 };

function num(form, name) {
  const value = Number(form.querySelector(`[name=${name}]`).value);
  if (!Number.isFinite(value)) throw new Error(`${name} is not a number`);
  return value;
}

function extent(values) {
  const finite = values.filter(Number.isFinite);
  return [Math.min(...finite), Math.max(...finite)];
}

// Draws line or bar series on linear or log10 axes.
function plot(canvas, { series, xLog = false, yLog = false, xLabel, yLabel, bars = false }) {
  const ctx = canvas.getContext("2d");
  const w = canvas.width, h = canvas.height;
  ctx.clearRect(0, 0, w, h);
  const tx = xLog ? Math.log10 : (v) => v;
  const ty = yLog ? Math.log10 : (v) => v;
  const usable = (s) => s.x.map((x, i) => [tx(x), ty(s.y[i])]).filter(([a, b]) => Number.isFinite(a) && Number.isFinite(b));
  const points = series.map(usable);
  const all = points.flat();
  if (all.length === 0) return;
  let [x0, x1] = extent(all.map((p) => p[0]));
  let [y0, y1] = extent(all.map((p) => p[1]));
  if (!yLog) y0 = Math.min(y0, 0);
  if (x0 === x1) x1 = x0 + 1;
  if (y0 === y1) y1 = y0 + 1;
  const px = (v) => MARGIN.left + ((v - x0) / (x1 - x0)) * (w - MARGIN.left - MARGIN.right);
  const py = (v) => h - MARGIN.bottom - ((v - y0) / (y1 - y0)) * (h - MARGIN.top - MARGIN.bottom);

  ctx.strokeStyle = "#999";
  ctx.fillStyle = "#333";
  ctx.font = "12px system-ui";
  ctx.strokeRect(MARGIN.left, MARGIN.top, w - MARGIN.left - MARGIN.right, h - MARGIN.top - MARGIN.bottom);
  const fmt = (v, log) => (log ? `1e${v.toFixed(1)}` : Number(v.toPrecision(3)).toString());
  for (let i = 0; i <= 5; i++) {
    const xv = x0 + ((x1 - x0) * i) / 5;
    const yv = y0 + ((y1 - y0) * i) / 5;
    ctx.textAlign = "center";
    ctx.fillText(fmt(xv, xLog), px(xv), h - MARGIN.bottom + 16);
    ctx.textAlign = "right";
    ctx.fillText(fmt(yv, yLog), MARGIN.left - 6, py(yv) + 4);
  }
  ctx.textAlign = "center";
  ctx.fillText(xLabel, (w + MARGIN.left) / 2, h - 8);
  ctx.save();
  ctx.translate(14, h / 2);
  ctx.rotate(-Math.PI / 2);
  ctx.fillText(yLabel, 0, 0);
  ctx.restore();

  series.forEach((s, k) => {
    const color = s.color ?? COLORS[k % COLORS.length];
    ctx.strokeStyle = color;
    ctx.fillStyle = color;
    ctx.setLineDash(s.dashed ? [6, 4] : []);
    if (bars && k === 0) {
      const width = Math.max(1, (px(x0 + 1) - px(x0)) * 0.8);
      for (const [x, y] of points[k]) ctx.fillRect(px(x) - width / 2, py(y), width, py(y0) - py(y));
    } else {
      ctx.beginPath();
      points[k].forEach(([x, y], i) => (i ? ctx.lineTo(px(x), py(y)) : ctx.moveTo(px(x), py(y))));
      ctx.stroke();
    }
    ctx.textAlign = "left";
    ctx.fillText(s.label, w - MARGIN.right - 190, MARGIN.top + 16 + 15 * k);
  });
  ctx.setLineDash([]);
}

function wire(formId, statusId, action) {
  const form = document.getElementById(formId);
  const status = document.getElementById(statusId);
  form.querySelector("button").addEventListener("click", () => {
    status.className = "status";
    status.textContent = "computing...";
    // Let the status paint before the synchronous computation.
    setTimeout(() => {
      try {
        const start = performance.now();
        const text = action(form);
        status.textContent = `${text} (${(performance.now() - start).toFixed(0)} ms)`;
      } catch (err) {
        status.className = "status error";
        status.textContent = String(err.message ?? err);
      }
    }, 0);
  });
  form.querySelector("button").click();
}

function distanceAction(form) {
  const data = JSON.parse(
    rate_vs_distance(num(form, "v"), num(form, "xi"), num(form, "beta"), num(form, "max"), num(form, "steps")),
  );
  const x = data.distance_km;
  const series = [{ label: "PLOB bound", x, y: data.plob, dashed: true, color: "#777" }];
  data.curves.forEach((c, k) => series.push({ label: c.label, x, y: c.rates, color: COLORS[k] }));
  plot(document.getElementById("distance-plot"), {
    series, yLog: true, xLabel: "total distance (km)", yLabel: "key rate (bits per use)",
  });
  const reach = data.curves.map((c) => {
    const last = c.rates.reduce((acc, r, i) => (r > 0 ? x[i] : acc), null);
    return `${c.label}: ${last === null ? "no key" : `positive to ${last} km`}`;
  });
  return reach.join("\n");
}

function blockAction(form) {
  const data = JSON.parse(
    rate_vs_block_size(
      num(form, "d"), num(form, "v"), num(form, "xi"), num(form, "beta"),
      num(form, "from"), num(form, "to"), num(form, "steps"),
    ),
  );
  plot(document.getElementById("block-plot"), {
    series: [{ label: "coherent-attack rate", x: data.block_size, y: data.rate }],
    xLog: true, yLog: true, xLabel: "block size N", yLabel: "key rate (bits per use)",
  });
  const first = data.block_size.find((n, i) => data.rate[i] > 0);
  return first === undefined ? "no positive rate on this grid" : `first positive rate at N = ${first.toExponential(2)}`;
}

function mcAction(form) {
  const data = JSON.parse(
    mc_histogram(num(form, "d"), num(form, "v"), num(form, "n"), num(form, "delta"), num(form, "seed")),
  );
  plot(document.getElementById("mc-plot"), {
    series: [
      { label: "simulated", x: data.k, y: data.empirical, color: "#9ecae1" },
      { label: "lattice model", x: data.k, y: data.model, color: "#d62728" },
    ],
    bars: true, xLabel: "bin distance x_A - x_B", yLabel: "probability",
  });
  const outcome = data.abort_reason ? `aborted: ${data.abort_reason}` : `key rate ${data.key_rate.toFixed(4)} bits per use`;
  return `${data.signals} sifted signals, d_PE = ${data.d_pe?.toFixed(3)}, d0 = ${data.d0.toFixed(3)}, ${outcome}`;
}

await init();
wire("distance-form", "distance-status", distanceAction);
wire("block-form", "block-status", blockAction);
wire("mc-form", "mc-status", mcAction);
