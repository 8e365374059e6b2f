// Drawing in strip coordinates against a minimal surface abstraction.
// main.ts adapts a real canvas context; tests record calls.

import { TrackEvent } from "./types.js";

export interface DrawSurface {
  clear(): void;
  drawStrip(scrollX: number): void;
  fillRect(x: number, y: number, w: number, h: number, color: string): void;
  vline(x: number, y0: number, y1: number, color: string, width: number): void;
}

export interface RenderReport {
  cursors: number;
  bars: number;
  scrollX: number;
}

export const STRIP_HEIGHT = 40;
export const BAR_AREA_HEIGHT = 30;
export const RAW_COLOR = "#e4572e";
export const SMOOTH_COLOR = "#1c7ed6";
export const BAR_COLOR = "#748ffc";

/** Keep the smoothed cursor inside the middle third of the viewport. */
export function autoScroll(prevScroll: number, smoothX: number,
                           viewWidth: number, stripWidth: number): number {
  const lo = prevScroll + viewWidth / 3;
  const hi = prevScroll + (2 * viewWidth) / 3;
  let scroll = prevScroll;
  if (smoothX < lo || smoothX > hi) {
    scroll = smoothX - viewWidth / 2;
  }
  return Math.max(0, Math.min(scroll, Math.max(0, stripWidth - viewWidth)));
}

/** Draw one event: strip, 40 belief bars under it, then both cursors. */
export function renderFrame(surface: DrawSurface, event: TrackEvent,
                            prevScroll: number, viewWidth: number,
                            stripWidth: number): RenderReport {
  const scrollX = autoScroll(prevScroll, event.smooth_x, viewWidth, stripWidth);
  surface.clear();
  surface.drawStrip(scrollX);

  let bars = 0;
  const peak = Math.max(...event.dist, 1e-9);
  for (let b = 0; b < event.dist.length; b++) {
    const x = event.origin + 5 * b - scrollX;
    const h = (event.dist[b] / peak) * BAR_AREA_HEIGHT;
    surface.fillRect(x, STRIP_HEIGHT + (BAR_AREA_HEIGHT - h), 5, h, BAR_COLOR);
    bars++;
  }

  surface.vline(event.raw_x - scrollX, 0, STRIP_HEIGHT + BAR_AREA_HEIGHT,
                RAW_COLOR, 1);
  surface.vline(event.smooth_x - scrollX, 0, STRIP_HEIGHT + BAR_AREA_HEIGHT,
                SMOOTH_COLOR, 2);
  return { cursors: 2, bars, scrollX };
}
