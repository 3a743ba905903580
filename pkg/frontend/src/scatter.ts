/** Memory-map scene geometry: one marker per memory colored by valence,
 * the session's conversation path overlaid as an ordered polyline.
 *
 * Builds plain data, no DOM: the renderer turns scenes into SVG, and
 * tests assert on scenes directly. Path order is exactly the order the
 * path endpoint returned — the UI never re-sorts it.
 */

import { PathPoint, Projection } from "./api.js";
import { valenceColor } from "./color.js";

export interface Marker {
  uid: string;
  x: number; // viewport coordinates
  y: number;
  color: string;
  valence: number;
}

export interface PathVertex {
  turn: number;
  uid: string;
  x: number;
  y: number;
}

export interface ScatterScene {
  markers: Marker[];
  path: PathVertex[];
  width: number;
  height: number;
}

export interface Viewport {
  width: number;
  height: number;
  padding: number;
}

interface Extent {
  minX: number;
  maxX: number;
  minY: number;
  maxY: number;
}

function extentOf(projection: Projection): Extent {
  const xs = projection.points.map((p) => p.x);
  const ys = projection.points.map((p) => p.y);
  const minX = Math.min(...xs);
  const maxX = Math.max(...xs);
  const minY = Math.min(...ys);
  const maxY = Math.max(...ys);
  return {
    minX,
    maxX: maxX === minX ? minX + 1 : maxX,
    minY,
    maxY: maxY === minY ? minY + 1 : maxY,
  };
}

function scaler(extent: Extent, viewport: Viewport) {
  const innerW = viewport.width - 2 * viewport.padding;
  const innerH = viewport.height - 2 * viewport.padding;
  return (x: number, y: number): [number, number] => [
    viewport.padding + ((x - extent.minX) / (extent.maxX - extent.minX)) * innerW,
    // SVG y grows downward; projection y grows upward.
    viewport.padding + (1 - (y - extent.minY) / (extent.maxY - extent.minY)) * innerH,
  ];
}

export function buildScatterScene(
  projection: Projection,
  pathPoints: PathPoint[],
  viewport: Viewport = { width: 640, height: 480, padding: 24 },
): ScatterScene {
  if (projection.points.length === 0) {
    return { markers: [], path: [], width: viewport.width, height: viewport.height };
  }
  const extent = extentOf(projection);
  const scale = scaler(extent, viewport);

  const markers = projection.points.map((p) => {
    const [x, y] = scale(p.x, p.y);
    return { uid: p.uid, x, y, color: valenceColor(p.valence), valence: p.valence };
  });

  const path = pathPoints.map((p) => {
    const [x, y] = scale(p.x, p.y);
    return { turn: p.turn, uid: p.uid, x, y };
  });

  return { markers, path, width: viewport.width, height: viewport.height };
}

/** Nearest marker within `radius` viewport units, for hover cards. */
export function hitTest(
  scene: ScatterScene,
  x: number,
  y: number,
  radius = 12,
): Marker | null {
  let best: Marker | null = null;
  let bestDist = radius * radius;
  for (const marker of scene.markers) {
    const dx = marker.x - x;
    const dy = marker.y - y;
    const d = dx * dx + dy * dy;
    if (d <= bestDist) {
      best = marker;
      bestDist = d;
    }
  }
  return best;
}
