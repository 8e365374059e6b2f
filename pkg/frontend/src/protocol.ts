// Builders for the control messages the session service understands.
// Kept as plain functions so tests can pin the exact JSON schema.

export interface StartOptions {
  piece: string;
  tempo: number;
  smooth: boolean;
  source?: "synth" | "live";
  pacing?: "realtime" | "fast";
}

export function listPiecesCommand(): string {
  return JSON.stringify({ cmd: "list_pieces" });
}

export function startCommand(opts: StartOptions): string {
  return JSON.stringify({
    cmd: "start",
    piece: opts.piece,
    tempo: opts.tempo,
    smooth: opts.smooth,
    source: opts.source ?? "synth",
    pacing: opts.pacing ?? "realtime",
  });
}

export function stopCommand(): string {
  return JSON.stringify({ cmd: "stop" });
}

export function setTempoCommand(tempo: number): string {
  return JSON.stringify({ cmd: "set_tempo", tempo });
}
