// Wire types shared with the session service.

export interface TrackEvent {
  frame: number;
  time: number;
  origin: number;
  dist: number[];
  raw_bin: number;
  raw_x: number;
  smooth_x: number;
  confidence: number;
  lost: boolean;
}

export interface PiecesReply {
  type: "pieces";
  pieces: string[];
}

export interface StartedReply {
  type: "started";
  piece: string;
  tempo: number;
  smooth: boolean;
}

export interface TerminalReply {
  type: "stopped" | "summary";
  frames?: number;
  lost_frames?: number;
}

export interface ErrorReply {
  type: "error";
  error: string;
}

export interface TempoSetReply {
  type: "tempo_set";
  tempo: number;
}

export type ServiceReply =
  | PiecesReply
  | StartedReply
  | TerminalReply
  | ErrorReply
  | TempoSetReply;

export type ServerMessage = TrackEvent | ServiceReply;

export interface StripPayload {
  name: string;
  width: number;
  height: number;
  pixels_b64: string;
  anchors: number[];
}

export function isTrackEvent(msg: ServerMessage): msg is TrackEvent {
  return !("type" in msg);
}
