import { describe, expect, it } from "vitest";
import { TRAJECTORY_CAP, handleMessage, initialState } from "../src/state.js";
import { TrackEvent } from "../src/types.js";

function event(frame: number, over: Partial<TrackEvent> = {}): string {
  const dist = new Array(40).fill(1 / 40);
  return JSON.stringify({
    frame,
    time: frame / 15,
    origin: 0,
    dist,
    raw_bin: 20,
    raw_x: 102.5,
    smooth_x: 102.5,
    confidence: 0.8,
    lost: false,
    ...over,
  });
}

describe("handleMessage", () => {
  it("applies track events to latest and trajectory", () => {
    let s = initialState();
    s = handleMessage(s, event(0));
    s = handleMessage(s, event(1, { raw_x: 107.5 }));
    expect(s.latest?.frame).toBe(1);
    expect(s.latest?.raw_x).toBe(107.5);
    expect(s.trajectory.length).toBe(2);
  });

  it("caps the trajectory at 300", () => {
    let s = initialState();
    for (let i = 0; i < 350; i++) s = handleMessage(s, event(i));
    expect(s.trajectory.length).toBe(TRAJECTORY_CAP);
    expect(s.trajectory[0].frame).toBe(50);
    expect(s.latest?.frame).toBe(349);
  });

  it("records lost flag from the event", () => {
    let s = initialState();
    s = handleMessage(s, event(3, { lost: true, confidence: 0.2 }));
    expect(s.latest?.lost).toBe(true);
  });

  it("skips malformed messages without breaking the stream", () => {
    let s = initialState();
    s = handleMessage(s, event(0));
    s = handleMessage(s, "{broken json");
    s = handleMessage(s, JSON.stringify({ frame: 1, dist: [0.5] }));
    s = handleMessage(s, event(2));
    expect(s.latest?.frame).toBe(2);
    expect(s.trajectory.length).toBe(2);
    expect(s.diagnostics.length).toBe(2);
  });

  it("tracks service replies", () => {
    let s = initialState();
    s = handleMessage(s, JSON.stringify({ type: "pieces", pieces: ["a", "b"] }));
    expect(s.pieces).toEqual(["a", "b"]);
    s = handleMessage(s, JSON.stringify(
      { type: "started", piece: "a", tempo: 1.2, smooth: true }));
    expect(s.activePiece).toBe("a");
    expect(s.running).toBe(true);
    s = handleMessage(s, JSON.stringify({ type: "stopped" }));
    expect(s.running).toBe(false);
    expect(s.terminal).toBe("stopped");
  });

  it("keeps errors visible but non-fatal", () => {
    let s = initialState();
    s = handleMessage(s, JSON.stringify({ type: "error", error: "nope" }));
    expect(s.lastError).toBe("nope");
    s = handleMessage(s, event(5));
    expect(s.latest?.frame).toBe(5);
  });

  it("resumes cleanly after a reconnect (fresh state, mid-session events)", () => {
    // the UI holds no tracking state: a new state picks up from any frame
    let s = initialState();
    s = handleMessage(s, event(210, { raw_x: 500, smooth_x: 495 }));
    expect(s.latest?.frame).toBe(210);
    expect(s.latest?.smooth_x).toBe(495);
    expect(s.trajectory.length).toBe(1);
  });
});
