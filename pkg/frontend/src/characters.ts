/** Character tally bars; widths are shares straight from the API. */

import { CharacterEntry } from "./api.js";

export interface CharacterBar {
  name: string;
  count: number;
  share: number;
  widthPct: number;
}

export function buildCharacterBars(
  entries: CharacterEntry[],
  limit = 12,
): CharacterBar[] {
  const top = entries.slice(0, limit);
  const maxShare = Math.max(1e-9, ...top.map((e) => e.share));
  return top.map((e) => ({
    name: e.name,
    count: e.count,
    share: e.share,
    widthPct: (e.share / maxShare) * 100,
  }));
}
