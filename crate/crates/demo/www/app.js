import init, { columnTest, antiConcentration, tailExperiment } from "./pkg/semirandom_dl_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function verdict(el, ok, yes, no) {
  el.textContent = ok ? yes : no;
  el.className = "verdict " + (ok ? "yes" : "no");
}

function guard(out, f) {
  try {
    f();
  } catch (e) {
    out.textContent = "error: " + (e.message ?? e);
  }
}

function drawHistogram(canvas, view) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  ctx.clearRect(0, 0, w, h);
  const max = Math.max(...view.counts, 1);
  const xmax = view.edges[view.edges.length - 1];
  const x = (v) => (v / xmax) * w;
  ctx.fillStyle = "rgba(40,140,60,0.15)";
  ctx.fillRect(x(view.spike_band[0]), 0, x(view.spike_band[1]) - x(view.spike_band[0]), h);
  ctx.fillStyle = "rgba(40,60,160,0.15)";
  ctx.fillRect(0, 0, Math.max(x(view.zero_band[1]), 2), h);
  const bw = w / view.counts.length;
  ctx.fillStyle = "#555";
  view.counts.forEach((c, i) => {
    // square root scale keeps the small spike visible next to the zero bin
    const bh = Math.sqrt(c / max) * (h - 10);
    ctx.fillRect(i * bw + 1, h - bh, bw - 2, bh);
  });
}

function runColumnTest() {
  guard($("ct-out"), () => {
    const view = JSON.parse(
      columnTest(num("ct-m"), num("ct-k"), num("ct-n"), num("ct-seed"), num("ct-mix"),
        num("ct-eta"), num("ct-k0"), num("ct-k1"), $("ct-rad").checked));
    const o = view.outcome;
    verdict($("ct-verdict"), o.accepted, "accepted", "rejected" + (o.reject_reason ? ` (${o.reject_reason})` : ""));
    drawHistogram($("ct-hist"), view);
    $("ct-out").textContent = JSON.stringify({ ...o, refined: o.refined ? "[...]" : null, overlaps: view.overlaps }, null, 2);
  });
}

function runAnticonc() {
  guard($("ac-out"), () => {
    const r = JSON.parse(antiConcentration(num("ac-l"), num("ac-t"), num("ac-eta"), num("ac-beta")));
    $("ac-out").textContent = JSON.stringify(r, null, 2);
  });
}

function runTail() {
  guard($("tl-out"), () => {
    const v = JSON.parse(tailExperiment($("tl-fam").value, num("tl-d"), num("tl-m"), num("tl-k"),
      num("tl-eta"), num("tl-trials"), num("tl-seed")));
    verdict($("tl-verdict"), v.report.pass,
      `exceed rate ${v.report.empirical} within 3 eta`, `exceed rate ${v.report.empirical} above 3 eta`);
    $("tl-out").textContent = JSON.stringify(v, null, 2);
  });
}

await init();
$("status").textContent = "Ready.";
$("ct-mix").addEventListener("input", () => { $("ct-mix-v").textContent = $("ct-mix").value; });
$("ct-run").addEventListener("click", runColumnTest);
$("ac-run").addEventListener("click", runAnticonc);
$("tl-run").addEventListener("click", runTail);
runColumnTest();
