/** Dual-line affect timeline scene: weighted valence and arousal by year. */

import { AffectEntry } from "./api.js";

export interface TimelinePoint {
  year: number;
  x: number;
  y: number;
  value: number;
}

export interface TimelineScene {
  valence: TimelinePoint[];
  arousal: TimelinePoint[];
  ticks: number[];
  width: number;
  height: number;
  zeroY: number;
}

export function buildTimelineScene(
  entries: AffectEntry[],
  width = 640,
  height = 220,
  padding = 28,
): TimelineScene {
  if (entries.length === 0) {
    return { valence: [], arousal: [], ticks: [], width, height, zeroY: height / 2 };
  }
  const years = entries.map((e) => e.year);
  const minYear = Math.min(...years);
  const maxYear = Math.max(...years);
  const span = maxYear === minYear ? 1 : maxYear - minYear;
  const innerW = width - 2 * padding;
  const innerH = height - 2 * padding;
  const xFor = (year: number) => padding + ((year - minYear) / span) * innerW;
  // Values live in [-1, 1]; zero sits mid-panel.
  const yFor = (v: number) => padding + ((1 - v) / 2) * innerH;

  const line = (pick: (e: AffectEntry) => number): TimelinePoint[] =>
    entries.map((e) => ({ year: e.year, x: xFor(e.year), y: yFor(pick(e)), value: pick(e) }));

  return {
    valence: line((e) => e.weighted_valence),
    arousal: line((e) => e.weighted_arousal),
    ticks: years,
    width,
    height,
    zeroY: yFor(0),
  };
}
