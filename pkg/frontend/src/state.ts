/** UI session state and its transitions.
 *
 * The transcript is append-only within a session; the live path mirrors
 * the path endpoint exactly. Service errors surface as a banner without
 * touching the transcript. Reset clears conversation artifacts but not
 * the underlying memory map.
 */

import { ChatTurn, PathPoint, RetrievedRef } from "./api.js";

export interface TranscriptEntry {
  query: string;
  response: string;
  retrieved: RetrievedRef[];
  turn: number;
}

export interface UISessionState {
  sessionId: string | null;
  transcript: TranscriptEntry[];
  pathPoints: PathPoint[];
  pending: boolean;
  error: string | null;
}

export function initialState(): UISessionState {
  return { sessionId: null, transcript: [], pathPoints: [], pending: false, error: null };
}

export function sessionStarted(state: UISessionState, sessionId: string): UISessionState {
  return { ...initialState(), sessionId };
}

export function turnRequested(state: UISessionState): UISessionState {
  return { ...state, pending: true, error: null };
}

export function turnCompleted(
  state: UISessionState,
  query: string,
  turn: ChatTurn,
  pathPoints: PathPoint[],
): UISessionState {
  return {
    ...state,
    pending: false,
    error: null,
    transcript: [
      ...state.transcript,
      { query, response: turn.response_text, retrieved: turn.retrieved, turn: turn.turn },
    ],
    pathPoints,
  };
}

export function turnFailed(state: UISessionState, message: string): UISessionState {
  // Transcript stays exactly as it was; only the banner changes.
  return { ...state, pending: false, error: message };
}

export function sessionReset(state: UISessionState): UISessionState {
  return { ...state, transcript: [], pathPoints: [], pending: false, error: null };
}
