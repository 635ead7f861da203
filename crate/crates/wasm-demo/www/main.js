import init, { chunkPreview, comparePipelines, scoreAnswer } from "./pkg/ragev_wasm.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

const DOCS = [
  { id: "insulin", title: "Insulin resistance", text: "Insulin resistance rises with obesity in adults. Regular exercise improves insulin sensitivity. Weight loss lowers fasting glucose." },
  { id: "vaccines", title: "Measles vaccination", text: "Vaccination protects young children against measles. Two doses give durable immunity. Outbreaks follow drops in coverage." },
  { id: "statins", title: "Statin therapy", text: "Statins lower cholesterol in older patients. Muscle pain is a common side effect. Exercise does not interact with statins." },
];

function show(out, fn) {
  try {
    out.classList.remove("error");
    fn();
  } catch (e) {
    out.classList.add("error");
    out.textContent = String(e.message ?? e);
  }
}

function esc(s) {
  return s.replace(/[&<>]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;" })[c]);
}

function runChunk() {
  const out = $("chunk-out");
  show(out, () => {
    const res = JSON.parse(chunkPreview($("chunk-text").value, num("chunk-size"), num("chunk-overlap")));
    const rows = res.chunks.map((c) => `<tr><td>${c.id}</td><td>${c.start}..${c.end}</td><td>${esc(c.text)}</td></tr>`);
    out.innerHTML = `<p>stride ${res.stride}, ${res.chunks.length} chunks</p><table>${rows.join("")}</table>`;
  });
}

function runCompare() {
  const out = $("compare-out");
  show(out, () => {
    const res = JSON.parse(comparePipelines($("docs").value, $("query").value, num("top-k"), num("per-doc"), num("doc-chunk")));
    out.innerHTML = Object.entries(res)
      .map(([name, hits]) => {
        const items = hits.map((h) => `<li title="${esc(h.text)}">${h.chunk} <small>${h.score.toFixed(4)}</small></li>`);
        return `<div><h3>${name}</h3><ol>${items.join("") || "<li>(none)</li>"}</ol></div>`;
      })
      .join("");
  });
}

function runScore() {
  const out = $("score-out");
  show(out, () => {
    const res = JSON.parse(scoreAnswer($("candidate").value, $("reference").value));
    const row = (name, s) => `<tr><td>${name}</td><td>${s.recall.toFixed(4)}</td><td>${s.precision.toFixed(4)}</td><td>${s.f1.toFixed(4)}</td></tr>`;
    out.innerHTML =
      "<table><tr><th></th><th>recall</th><th>precision</th><th>f1</th></tr>" +
      ["rouge1", "rouge2", "rougeL", "rougeLsum", "bert"].map((k) => row(k, res[k])).join("") +
      "</table>";
  });
}

await init();
$("docs").value = JSON.stringify(DOCS, null, 1);
$("chunk-run").onclick = runChunk;
$("compare-run").onclick = runCompare;
$("score-run").onclick = runScore;
runChunk();
runCompare();
runScore();
