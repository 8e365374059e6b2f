// Browser entry point: socket wiring, controls, and canvas rendering.

import { DrawSurface, renderFrame } from "./render.js";
import { ViewState, handleMessage, initialState } from "./state.js";
import { listPiecesCommand, setTempoCommand, startCommand, stopCommand } from "./protocol.js";
import { StripPayload, TrackEvent } from "./types.js";

const $ = <T extends HTMLElement>(id: string) => document.getElementById(id) as T;

class CanvasSurface implements DrawSurface {
  private strip: ImageBitmap | null = null;

  constructor(private ctx: CanvasRenderingContext2D,
              private width: number, private height: number) {}

  async setStrip(payload: StripPayload): Promise<void> {
    const raw = atob(payload.pixels_b64);
    const rgba = new Uint8ClampedArray(payload.width * payload.height * 4);
    for (let i = 0; i < raw.length; i++) {
      const v = raw.charCodeAt(i);
      rgba[4 * i] = v;
      rgba[4 * i + 1] = v;
      rgba[4 * i + 2] = v;
      rgba[4 * i + 3] = 255;
    }
    this.strip = await createImageBitmap(
      new ImageData(rgba, payload.width, payload.height));
  }

  clear(): void {
    this.ctx.fillStyle = "#ffffff";
    this.ctx.fillRect(0, 0, this.width, this.height);
  }

  drawStrip(scrollX: number): void {
    if (this.strip) this.ctx.drawImage(this.strip, -scrollX, 0);
  }

  fillRect(x: number, y: number, w: number, h: number, color: string): void {
    this.ctx.fillStyle = color;
    this.ctx.fillRect(x, y, w, h);
  }

  vline(x: number, y0: number, y1: number, color: string, width: number): void {
    this.ctx.strokeStyle = color;
    this.ctx.lineWidth = width;
    this.ctx.beginPath();
    this.ctx.moveTo(x, y0);
    this.ctx.lineTo(x, y1);
    this.ctx.stroke();
  }
}

class App {
  state: ViewState = initialState();
  ws: WebSocket | null = null;
  surface: CanvasSurface;
  stripWidth = 0;
  scrollX = 0;
  rendered = 0;

  constructor() {
    const canvas = $<HTMLCanvasElement>("strip-canvas");
    this.surface = new CanvasSurface(canvas.getContext("2d")!,
                                     canvas.width, canvas.height);
    this.connect();
    this.wireControls();
  }

  connect(): void {
    const url = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws`;
    this.ws = new WebSocket(url);
    this.ws.onopen = () => {
      this.state = { ...this.state, connected: true };
      this.ws!.send(listPiecesCommand());
      this.refreshPanel();
    };
    this.ws.onclose = () => {
      this.state = { ...this.state, connected: false };
      this.refreshPanel();
      setTimeout(() => this.connect(), 1500);
    };
    this.ws.onmessage = (ev) => this.onMessage(String(ev.data));
  }

  onMessage(text: string): void {
    const before = this.state.pieces;
    this.state = handleMessage(this.state, text);
    if (this.state.pieces !== before) this.renderPieceList();
    if (this.state.latest && this.state.trajectory.length > 0
        && this.state.latest === this.state.trajectory[this.state.trajectory.length - 1]) {
      this.renderEvent(this.state.latest);
    }
    this.refreshPanel();
  }

  renderEvent(event: TrackEvent): void {
    const canvas = $<HTMLCanvasElement>("strip-canvas");
    const report = renderFrame(this.surface, event, this.scrollX,
                               canvas.width, this.stripWidth);
    this.scrollX = report.scrollX;
    this.rendered++;
  }

  async loadStrip(name: string): Promise<void> {
    const payload = await fetch(`/api/pieces/${name}/strip`).then(r => r.json());
    this.stripWidth = payload.width;
    await this.surface.setStrip(payload);
  }

  wireControls(): void {
    $("btn-start").onclick = async () => {
      const piece = ($("piece-list") as HTMLSelectElement).value;
      if (!piece || !this.ws) return;
      await this.loadStrip(piece);
      this.scrollX = 0;
      this.ws.send(startCommand({
        piece,
        tempo: Number(($("tempo-slider") as HTMLInputElement).value),
        smooth: ($("smooth-toggle") as HTMLInputElement).checked,
      }));
    };
    $("btn-stop").onclick = () => this.ws?.send(stopCommand());
    $("tempo-slider").onchange = () => {
      const v = Number(($("tempo-slider") as HTMLInputElement).value);
      $("tempo-value").textContent = v.toFixed(2);
      if (this.state.running) this.ws?.send(setTempoCommand(v));
    };
  }

  renderPieceList(): void {
    const sel = $("piece-list") as HTMLSelectElement;
    sel.innerHTML = "";
    for (const name of this.state.pieces) {
      const opt = document.createElement("option");
      opt.value = name;
      opt.textContent = name;
      sel.appendChild(opt);
    }
  }

  refreshPanel(): void {
    $("conn-status").textContent = this.state.connected ? "connected" : "disconnected";
    $("conn-status").className = this.state.connected ? "ok" : "bad";
    const latest = this.state.latest;
    if (latest) {
      $("conf-fill").style.width = `${(latest.confidence * 100).toFixed(0)}%`;
      $("lost-badge").style.display = latest.lost ? "inline-block" : "none";
      $("frame-info").textContent =
        `frame ${latest.frame}  t=${latest.time.toFixed(2)}s  ` +
        `raw=${latest.raw_x.toFixed(1)}px smooth=${latest.smooth_x.toFixed(1)}px`;
    }
    if (this.state.lastError) $("diag").textContent = this.state.lastError;
  }
}

window.addEventListener("DOMContentLoaded", () => new App());
