import init, { run_simulation, hash_mapping, phy_table_row } from "./pkg/noma_web.js";

const $ = (id) => document.getElementById(id);
const fmt = (x) => (x === null || x === undefined ? "–" : Number(x).toPrecision(4));

function guard(target, fn) {
  try {
    fn();
  } catch (e) {
    $(target).innerHTML = `<p class="error">${e.message ?? e}</p>`;
  }
}

function drawTrace(trace, window) {
  const c = $("trace");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  if (trace.length === 0) return;
  const hi = Math.max(...trace) * 1.1 || 1;
  g.strokeStyle = "#1f77b4";
  g.beginPath();
  trace.forEach((y, i) => {
    const px = 30 + (i / Math.max(trace.length - 1, 1)) * (c.width - 40);
    const py = c.height - 20 - (y / hi) * (c.height - 30);
    i === 0 ? g.moveTo(px, py) : g.lineTo(px, py);
  });
  g.stroke();
  g.fillStyle = "#222";
  g.fillText(hi.toFixed(2), 2, 14);
  g.fillText("0", 2, c.height - 20);
  g.fillText(`frame (window ${window})`, c.width / 2 - 40, c.height - 4);
}

function runSimulation() {
  $("sim-out").textContent = "running…";
  // Let the status paint before the synchronous run.
  setTimeout(() =>
    guard("sim-out", () => {
      const r = JSON.parse(
        run_simulation(
          $("scheme").value,
          $("reward").value,
          Number($("lambda").value),
          Number($("frames").value),
          4, 8, 8,
          Number($("sim-seed").value),
        ),
      );
      $("sim-out").innerHTML = `
        <table>
          <tr><th></th><th>C1</th><th>C2</th><th>system</th></tr>
          <tr><th>throughput</th><td>${fmt(r.gamma[0])}</td><td>${fmt(r.gamma[1])}</td><td>${fmt(r.gamma_s)}</td></tr>
          <tr><th>delay (frames)</th><td>${fmt(r.delay[0])}</td><td>${fmt(r.delay[1])}</td><td></td></tr>
          <tr><th>energy (mJ)</th><td>${fmt(r.energy_mj[0])}</td><td>${fmt(r.energy_mj[1])}</td><td></td></tr>
          <tr><th>Jain index</th><td colspan="3">${fmt(r.jain_hat)}</td></tr>
        </table>`;
      drawTrace(r.trace, r.trace_window);
    }), 10);
}

function mapSeeds() {
  guard("hash-out", () => {
    const slots = Number($("hash-slots").value);
    const r = JSON.parse(hash_mapping($("hash-seed").value, Number($("hash-devices").value), slots));
    const bins = Array.from({ length: slots }, () => []);
    r.slots.forEach((s, id) => bins[s].push(id));
    $("hash-out").innerHTML =
      `<p>${r.collisions} device(s) share a slot.</p><div class="slots">` +
      bins.map((b, i) => `<div class="slot${b.length > 1 ? " collide" : ""}"><b>slot ${i}</b><br>${b.join(", ")}</div>`).join("") +
      "</div>";
  });
}

function sampleDetection() {
  guard("phy-out", () => {
    const r = JSON.parse(phy_table_row(Number($("n1").value), Number($("n2").value), Number($("samples").value), 1));
    const header = r.simulated[0].map((_, u) => `<th>S${u}</th>`).join("");
    const row = (label, v) => `<tr><th>${label}</th>${v.map((x) => `<td>${fmt(x)}</td>`).join("")}</tr>`;
    let rows = row("C1 sampled", r.simulated[0]) + row("C2 sampled", r.simulated[1]);
    if (r.tabulated) rows += row("C1 table", r.tabulated[0]) + row("C2 table", r.tabulated[1]);
    $("phy-out").innerHTML = `<table><tr><th></th>${header}</tr>${rows}</table>`;
  });
}

await init();
$("run").addEventListener("click", runSimulation);
$("map").addEventListener("click", mapSeeds);
$("detect").addEventListener("click", sampleDetection);
mapSeeds();
sampleDetection();
