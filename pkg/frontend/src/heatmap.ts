/** Geographic heat layer scene from floor-aligned bins.
 *
 * Cells map onto a simple equirectangular panel; intensity scales with
 * count, fill color with mean valence.
 */

import { GeoBinGrid } from "./api.js";
import { valenceColor } from "./color.js";

export interface HeatCell {
  lat: number;
  lon: number;
  x: number;
  y: number;
  size: number;
  count: number;
  color: string;
  opacity: number;
}

export interface HeatmapScene {
  cells: HeatCell[];
  totalCount: number;
  width: number;
  height: number;
}

export function buildHeatmapScene(
  grid: GeoBinGrid,
  width = 640,
  height = 320,
): HeatmapScene {
  const cells: HeatCell[] = [];
  const maxCount = Math.max(1, ...grid.bins.map((b) => b.count));
  const cellW = (grid.bin_degrees / 360) * width;
  const cellH = (grid.bin_degrees / 180) * height;
  for (const bin of grid.bins) {
    cells.push({
      lat: bin.lat,
      lon: bin.lon,
      x: ((bin.lon + 180) / 360) * width,
      y: ((90 - (bin.lat + grid.bin_degrees)) / 180) * height,
      size: Math.max(cellW, cellH, 3),
      count: bin.count,
      color: valenceColor(bin.mean_valence),
      opacity: 0.35 + 0.65 * (bin.count / maxCount),
    });
  }
  return {
    cells,
    totalCount: grid.bins.reduce((acc, b) => acc + b.count, 0),
    width,
    height,
  };
}
