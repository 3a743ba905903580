/** Timeline, heatmap, character bars, and the color ramp. */

import { describe, expect, it } from "vitest";

import { ExplorerApi } from "../src/api.js";
import { buildCharacterBars } from "../src/characters.js";
import { DARK_BLUE, YELLOW, valenceColor } from "../src/color.js";
import { buildHeatmapScene } from "../src/heatmap.js";
import { buildTimelineScene } from "../src/timeline.js";
import { mockFetch } from "./helpers.js";

describe("valence color scale", () => {
  it("hits the anchors exactly at the extremes", () => {
    expect(valenceColor(-1)).toBe(DARK_BLUE);
    expect(valenceColor(1)).toBe(YELLOW);
  });

  it("clamps out-of-range valence to the anchors", () => {
    expect(valenceColor(-3)).toBe(DARK_BLUE);
    expect(valenceColor(7)).toBe(YELLOW);
  });

  it("interpolates to valid hex colors in between", () => {
    for (const v of [-0.6, -0.1, 0, 0.33, 0.9]) {
      expect(valenceColor(v)).toMatch(/^#[0-9a-f]{6}$/);
    }
    expect(valenceColor(0)).not.toBe(DARK_BLUE);
    expect(valenceColor(0)).not.toBe(YELLOW);
  });
});

describe("timeline scene", () => {
  it("single-year series makes one tick and one point per line", () => {
    const scene = buildTimelineScene([{
      year: 1851, weighted_valence: 0.4, weighted_arousal: -0.1,
      memory_count: 2, weight_sum: 9,
    }]);
    expect(scene.ticks).toEqual([1851]);
    expect(scene.valence).toHaveLength(1);
    expect(scene.arousal).toHaveLength(1);
  });

  it("zero valence sits on the zero line", () => {
    const scene = buildTimelineScene([
      { year: 1850, weighted_valence: 0, weighted_arousal: 0.5, memory_count: 1, weight_sum: 1 },
      { year: 1860, weighted_valence: -1, weighted_arousal: 1, memory_count: 1, weight_sum: 1 },
    ]);
    expect(scene.valence[0]!.y).toBeCloseTo(scene.zeroY, 9);
    // Extremes span the panel: -1 below the zero line, +1 above.
    expect(scene.valence[1]!.y).toBeGreaterThan(scene.zeroY);
    expect(scene.arousal[1]!.y).toBeLessThan(scene.zeroY);
  });

  it("empty series yields an empty scene", () => {
    expect(buildTimelineScene([]).valence).toEqual([]);
  });
});

describe("heatmap scene", () => {
  const grid = {
    bin_degrees: 1,
    bins: [
      { lat: 45, lon: 4, count: 3, mean_valence: 0.5 },
      { lat: 48, lon: 2, count: 1, mean_valence: -0.5 },
    ],
  };

  it("one cell per bin, intensity scaled to the densest bin", () => {
    const scene = buildHeatmapScene(grid);
    expect(scene.cells).toHaveLength(2);
    expect(scene.totalCount).toBe(4);
    const dense = scene.cells.find((c) => c.count === 3)!;
    const sparse = scene.cells.find((c) => c.count === 1)!;
    expect(dense.opacity).toBeGreaterThan(sparse.opacity);
  });

  it("narrowing the valence filter never increases the binned total", async () => {
    // The mock serves what the real endpoint would: fewer memories pass
    // the narrower filter. The UI must reflect payloads, not recompute.
    const api = new ExplorerApi("", mockFetch({
      "/analytics/geo-bins": (req: { url: string }) => {
        const url = new URL(req.url, "http://x");
        const vmin = Number(url.searchParams.get("vmin") ?? "-1");
        const bins = grid.bins.filter((b) => b.mean_valence >= vmin);
        return { bin_degrees: 1, bins };
      },
    }));
    const wide = buildHeatmapScene(await api.geoBins({ vmin: -1, vmax: 1 }));
    const narrow = buildHeatmapScene(await api.geoBins({ vmin: 0, vmax: 1 }));
    expect(narrow.totalCount).toBeLessThanOrEqual(wide.totalCount);
  });
});

describe("character bars", () => {
  it("widths are proportional to share with the top name full width", () => {
    const bars = buildCharacterBars([
      { name: "henri varenne", count: 4, share: 0.5 },
      { name: "camille roux", count: 2, share: 0.25 },
    ]);
    expect(bars[0]!.widthPct).toBeCloseTo(100, 6);
    expect(bars[1]!.widthPct).toBeCloseTo(50, 6);
  });

  it("respects the display limit", () => {
    const entries = Array.from({ length: 30 }, (_, i) => ({
      name: `person ${i}`, count: 30 - i, share: (30 - i) / 100,
    }));
    expect(buildCharacterBars(entries, 12)).toHaveLength(12);
  });
});
