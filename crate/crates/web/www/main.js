import init, { maskView, distillationSweep, herdingView } from "./pkg/cilfuse_web.js";

const $ = (id) => document.getElementById(id);
const COLORS = ["#d62728", "#1f77b4", "#2ca02c"];
const SHADES = ["#f6d5d5", "#d5e3f3", "#d8efd8"];

function guard(fn) {
  return (...args) => {
    try {
      $("err").textContent = "";
      fn(...args);
    } catch (e) {
      $("err").textContent = String(e.message ?? e);
    }
  };
}

// Masks

let logits = [];

function buildSliders() {
  const n = Math.max(1, Math.min(16, Number($("mask-n").value) | 0));
  logits = Array.from({ length: n }, (_, i) => logits[i] ?? 0);
  const box = $("mask-sliders");
  box.innerHTML = "";
  logits.forEach((v, i) => {
    const s = document.createElement("input");
    s.type = "range";
    s.min = -4;
    s.max = 4;
    s.step = 0.1;
    s.value = v;
    s.oninput = guard(() => {
      logits[i] = Number(s.value);
      renderMask();
    });
    box.appendChild(s);
  });
  renderMask();
}

function renderMask() {
  const v = JSON.parse(maskView(new Float64Array(logits), Number($("mask-s").value)));
  const bars = $("mask-bars");
  bars.innerHTML = "";
  v.mask.forEach((m, i) => {
    const b = document.createElement("div");
    b.className = v.keep[i] ? "bar" : "bar dropped";
    b.style.height = `${Math.max(4, 130 * Math.min(1, m * 2))}px`;
    b.textContent = m.toFixed(2);
    bars.appendChild(b);
  });
  $("mask-out").textContent =
    `threshold ${v.threshold.toFixed(3)}; ${v.kept} of ${v.mask.length} kernels kept; ` +
    `channel scales ${v.channel_scale.map((s) => s.toFixed(2)).join(" ")}`;
}

// Distillation

const parse = (s) => s.split(/[\s,]+/).filter(Boolean).map(Number);

function renderDistill() {
  const teacher = new Float64Array(parse($("d-teacher").value));
  const student = new Float64Array(parse($("d-student").value));
  const chosen = Number($("d-temp").value);
  $("d-temp-v").textContent = chosen;
  const temps = [];
  for (let t = 1; t <= 20; t += 0.25) temps.push(t);
  const pts = JSON.parse(distillationSweep(teacher, student, new Float64Array(temps)));
  const [at] = JSON.parse(distillationSweep(teacher, student, new Float64Array([chosen])));

  const c = $("d-canvas").getContext("2d");
  const { width: w, height: h } = c.canvas;
  c.clearRect(0, 0, w, h);
  const max = Math.max(...pts.map((p) => p.loss)) * 1.05;
  const min = Math.min(...pts.map((p) => p.loss)) * 0.95;
  const x = (t) => 40 + ((t - 1) / 19) * (w - 60);
  const y = (l) => h - 20 - ((l - min) / (max - min || 1)) * (h - 40);
  c.strokeStyle = "#999";
  c.strokeRect(40, 20, w - 60, h - 40);
  c.fillStyle = "#444";
  c.fillText("T = 1", 40, h - 5);
  c.fillText("T = 20", w - 50, h - 5);
  c.fillText(max.toFixed(3), 2, 26);
  c.fillText(min.toFixed(3), 2, h - 22);
  c.strokeStyle = COLORS[1];
  c.beginPath();
  pts.forEach((p, i) => (i ? c.lineTo(x(p.temperature), y(p.loss)) : c.moveTo(x(p.temperature), y(p.loss))));
  c.stroke();
  c.fillStyle = COLORS[0];
  c.beginPath();
  c.arc(x(at.temperature), y(at.loss), 4, 0, 2 * Math.PI);
  c.fill();

  const row = (name, xs) => `<tr><th>${name}</th>${xs.map((p) => `<td>${p.toFixed(3)}</td>`).join("")}</tr>`;
  $("d-table").innerHTML =
    row("teacher", at.teacher) + row("student", at.student) + `<tr><th>loss</th><td>${at.loss.toFixed(4)}</td></tr>`;
}

// Herding

const points = [];
const SPAN = 3;

function gauss() {
  const u = 1 - Math.random();
  return Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * Math.random());
}

function randomClusters() {
  points.length = 0;
  for (let c = 0; c < 3; c++) {
    const a = (2 * Math.PI * c) / 3 + Math.random();
    for (let i = 0; i < 15; i++) {
      points.push({ x: 1.6 * Math.cos(a) + 0.5 * gauss(), y: 1.6 * Math.sin(a) + 0.5 * gauss(), c });
    }
  }
}

function renderHerding() {
  const cv = $("h-canvas");
  const c = cv.getContext("2d");
  const size = cv.width;
  const px = (v) => ((v + SPAN) / (2 * SPAN)) * size;
  c.clearRect(0, 0, size, size);
  const present = new Set(points.map((p) => p.c));
  const classes = present.size ? Math.max(...present) + 1 : 0;
  const complete = classes > 0 && present.size === classes;
  if (complete) {
    const cells = 50;
    const v = JSON.parse(
      herdingView(
        new Float64Array(points.flatMap((p) => [p.x, p.y])),
        new Uint32Array(points.map((p) => p.c)),
        Math.max(1, Number($("h-k").value) | 0),
        cells,
        -SPAN,
        SPAN,
        -SPAN,
        SPAN,
      ),
    );
    const cw = size / cells;
    v.grid.forEach((k, i) => {
      c.fillStyle = SHADES[k];
      c.fillRect((i % cells) * cw, (Math.floor(i / cells)) * cw, cw + 1, cw + 1);
    });
    const chosen = new Set(v.exemplars.flat());
    points.forEach((p, i) => {
      if (!chosen.has(i)) return;
      c.strokeStyle = "#000";
      c.lineWidth = 2;
      c.beginPath();
      c.arc(px(p.x), px(p.y), 8, 0, 2 * Math.PI);
      c.stroke();
    });
    v.class_means.forEach((m, k) => {
      c.fillStyle = COLORS[k];
      c.fillRect(px(m[0]) - 5, px(m[1]) - 5, 10, 10);
    });
    $("h-out").textContent =
      `NME accuracy on all points ${(100 * v.accuracy).toFixed(1)}%; squares are full class means.`;
  } else {
    $("h-out").textContent = points.length ? "add at least one point to every class up to the highest one" : "";
  }
  c.lineWidth = 1;
  points.forEach((p) => {
    c.fillStyle = COLORS[p.c];
    c.beginPath();
    c.arc(px(p.x), px(p.y), 4, 0, 2 * Math.PI);
    c.fill();
  });
  c.strokeStyle = "#888";
  c.beginPath();
  c.moveTo(size / 2 - 5, size / 2);
  c.lineTo(size / 2 + 5, size / 2);
  c.moveTo(size / 2, size / 2 - 5);
  c.lineTo(size / 2, size / 2 + 5);
  c.stroke();
}

await init();

$("mask-n").onchange = guard(buildSliders);
$("mask-s").oninput = guard(renderMask);
$("mask-random").onclick = guard(() => {
  logits = logits.map(() => Math.round(40 * (Math.random() * 2 - 1)) / 10);
  buildSliders();
});
["d-teacher", "d-student", "d-temp"].forEach((id) => ($(id).oninput = guard(renderDistill)));
$("h-canvas").onclick = guard((e) => {
  const r = e.target.getBoundingClientRect();
  const to = (v, len) => (v / len) * 2 * SPAN - SPAN;
  points.push({ x: to(e.clientX - r.left, r.width), y: to(e.clientY - r.top, r.height), c: Number($("h-class").value) });
  renderHerding();
});
$("h-k").oninput = guard(renderHerding);
$("h-random").onclick = guard(() => {
  randomClusters();
  renderHerding();
});
$("h-clear").onclick = guard(() => {
  points.length = 0;
  renderHerding();
});

guard(buildSliders)();
guard(renderDistill)();
randomClusters();
guard(renderHerding)();
