/** Page entry: fetch the model, wire up orbit controls, render loop, HUD. */

import { decodePpng } from "./model.js";
import { Viewer } from "./renderer.js";

const DRAG_SENSITIVITY = 0.008; // radians per pixel
const ZOOM_SENSITIVITY = 0.0012;

function showError(message: string): void {
  const el = document.getElementById("error")!;
  el.textContent = message;
  el.style.display = "block";
}

async function start(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const url = params.get("model") ?? "scene.ppng";

  let viewer: Viewer;
  try {
    const resp = await fetch(url);
    if (!resp.ok) throw new Error(`fetch ${url}: HTTP ${resp.status}`);
    const model = decodePpng(await resp.arrayBuffer());
    const canvas = document.getElementById("view") as HTMLCanvasElement;
    viewer = new Viewer(canvas, model);
    const meta = document.getElementById("meta")!;
    meta.textContent =
      `type ${model.type}  Q=${model.q} L=${model.levels} D=${model.channels}` +
      (model.type === 3 ? "" : ` R=${model.rank}`) +
      `  occ ${model.occupancy.resolution}^3`;
  } catch (err) {
    showError(err instanceof Error ? `${err.name}: ${err.message}` : String(err));
    return;
  }

  const canvas = document.getElementById("view") as HTMLCanvasElement;
  const resize = () => {
    canvas.width = window.innerWidth;
    canvas.height = window.innerHeight;
  };
  resize();
  window.addEventListener("resize", resize);

  let dragging = false;
  let lastX = 0;
  let lastY = 0;
  canvas.addEventListener("pointerdown", (e) => {
    dragging = true;
    lastX = e.clientX;
    lastY = e.clientY;
    canvas.setPointerCapture(e.pointerId);
  });
  canvas.addEventListener("pointerup", () => {
    dragging = false;
  });
  canvas.addEventListener("pointermove", (e) => {
    if (!dragging) return;
    viewer.camera.rotate(
      -(e.clientX - lastX) * DRAG_SENSITIVITY,
      (e.clientY - lastY) * DRAG_SENSITIVITY
    );
    lastX = e.clientX;
    lastY = e.clientY;
  });
  canvas.addEventListener(
    "wheel",
    (e) => {
      e.preventDefault();
      viewer.camera.zoom(Math.exp(e.deltaY * ZOOM_SENSITIVITY));
    },
    { passive: false }
  );

  const fpsEl = document.getElementById("fps")!;
  let frames = 0;
  let lastReport = performance.now();
  const loop = () => {
    viewer.draw();
    frames += 1;
    const now = performance.now();
    if (now - lastReport >= 500) {
      fpsEl.textContent = `${((frames * 1000) / (now - lastReport)).toFixed(1)} fps`;
      frames = 0;
      lastReport = now;
    }
    requestAnimationFrame(loop);
  };
  requestAnimationFrame(loop);
}

start();
