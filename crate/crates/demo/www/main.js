import init, { synthetic, bands, spectrum, quantize } from "./pkg/nfig_demo.js";

const SIZE = 128;
const $ = (id) => document.getElementById(id);
const source = $("source").getContext("2d");

function pixels() {
  return new Uint8Array(source.getImageData(0, 0, SIZE, SIZE).data.buffer);
}

function put(ctx, rgba) {
  ctx.putImageData(new ImageData(new Uint8ClampedArray(rgba), SIZE, SIZE), 0, 0);
}

function frames(container, bytes, label) {
  container.replaceChildren();
  const n = bytes.length / (SIZE * SIZE * 4);
  for (let i = 0; i < n; i++) {
    const fig = document.createElement("figure");
    const c = document.createElement("canvas");
    c.width = c.height = SIZE;
    put(c.getContext("2d"), bytes.subarray(i * SIZE * SIZE * 4, (i + 1) * SIZE * SIZE * 4));
    const cap = document.createElement("figcaption");
    cap.textContent = label(i);
    fig.append(c, cap);
    container.append(fig);
  }
}

function guarded(fn) {
  return () => {
    $("status").textContent = "";
    try {
      fn();
    } catch (e) {
      $("status").textContent = String(e.message ?? e);
    }
  };
}

function drawProfile(values) {
  const ctx = $("profile").getContext("2d");
  const { width, height } = ctx.canvas;
  ctx.clearRect(0, 0, width, height);
  const pts = values
    .map((p, i) => [Math.log10(i + 0.5), p > 0 ? Math.log10(p) : null])
    .filter(([, y]) => y !== null);
  const xs = pts.map((p) => p[0]);
  const ys = pts.map((p) => p[1]);
  const [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  const [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  const sx = (x) => 20 + ((x - x0) / (x1 - x0 || 1)) * (width - 40);
  const sy = (y) => height - 20 - ((y - y0) / (y1 - y0 || 1)) * (height - 40);
  ctx.strokeStyle = "#36c";
  ctx.beginPath();
  pts.forEach(([x, y], i) => (i ? ctx.lineTo(sx(x), sy(y)) : ctx.moveTo(sx(x), sy(y))));
  ctx.stroke();
  ctx.fillStyle = "#666";
  ctx.fillText("log power vs log radius", 24, 14);
}

await init();

$("synth").onclick = guarded(() => put(source, synthetic(SIZE, BigInt($("seed").value || 0))));

$("file").onchange = async (ev) => {
  const file = ev.target.files[0];
  if (!file) return;
  const bmp = await createImageBitmap(file);
  source.drawImage(bmp, 0, 0, SIZE, SIZE);
};

$("run-bands").onclick = guarded(() => {
  const out = bands(pixels(), SIZE, SIZE, $("schedule").value);
  frames($("bands"), out, (i) => `bands 1-${i + 1}`);
});

$("run-spectrum").onclick = guarded(() => {
  const out = spectrum(pixels(), SIZE, SIZE, 64);
  const alpha = out[out.length - 1];
  $("alpha").textContent = `fitted exponent ${alpha.toFixed(3)}`;
  drawProfile(Array.from(out.subarray(0, out.length - 1)));
});

$("run-quantize").onclick = guarded(() => {
  const q = quantize(pixels(), SIZE, SIZE, $("schedule").value, Number($("k").value), BigInt($("seed").value || 0));
  $("mae").textContent = `MAE ${q.mae.toFixed(4)}`;
  frames($("steps"), q.frames, (i) => `step ${i + 1}`);
  q.free();
});

$("synth").click();
