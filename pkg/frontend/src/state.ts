// View state and the message reducer. Pure logic, no DOM: the browser
// entry point owns rendering, tests drive this directly.

import { ServerMessage, TrackEvent, isTrackEvent } from "./types.js";

export const TRAJECTORY_CAP = 300;

export interface ViewState {
  connected: boolean;
  pieces: string[];
  activePiece: string | null;
  running: boolean;
  tempo: number;
  smooth: boolean;
  latest: TrackEvent | null;
  trajectory: TrackEvent[];
  lastError: string | null;
  diagnostics: string[];
  terminal: string | null;
}

export function initialState(): ViewState {
  return {
    connected: false,
    pieces: [],
    activePiece: null,
    running: false,
    tempo: 1.0,
    smooth: true,
    latest: null,
    trajectory: [],
    lastError: null,
    diagnostics: [],
    terminal: null,
  };
}

/** Parse one socket text message; malformed input is logged and skipped. */
export function handleMessage(state: ViewState, text: string): ViewState {
  let msg: ServerMessage;
  try {
    msg = JSON.parse(text) as ServerMessage;
    if (typeof msg !== "object" || msg === null) throw new Error("not an object");
  } catch (err) {
    return {
      ...state,
      diagnostics: [...state.diagnostics.slice(-49), `unparseable message: ${err}`],
    };
  }
  return applyMessage(state, msg);
}

export function applyMessage(state: ViewState, msg: ServerMessage): ViewState {
  if (isTrackEvent(msg)) {
    if (!Array.isArray(msg.dist) || msg.dist.length !== 40) {
      return {
        ...state,
        diagnostics: [...state.diagnostics.slice(-49),
          `bad event at frame ${msg.frame}: dist length ${msg.dist?.length}`],
      };
    }
    const trajectory = [...state.trajectory, msg];
    if (trajectory.length > TRAJECTORY_CAP) {
      trajectory.splice(0, trajectory.length - TRAJECTORY_CAP);
    }
    return { ...state, latest: msg, trajectory, running: true };
  }
  switch (msg.type) {
    case "pieces":
      return { ...state, pieces: msg.pieces };
    case "started":
      return {
        ...state,
        activePiece: msg.piece,
        tempo: msg.tempo,
        smooth: msg.smooth,
        running: true,
        terminal: null,
        trajectory: [],
      };
    case "stopped":
    case "summary":
      return { ...state, running: false, terminal: msg.type };
    case "tempo_set":
      return { ...state, tempo: msg.tempo };
    case "error":
      return {
        ...state,
        lastError: msg.error,
        diagnostics: [...state.diagnostics.slice(-49), `service: ${msg.error}`],
      };
    default:
      return {
        ...state,
        diagnostics: [...state.diagnostics.slice(-49),
          `unknown message type ${(msg as { type?: string }).type}`],
      };
  }
}
