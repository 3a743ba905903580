/** Valence color scale: dark blue (-1) to yellow (+1).
 *
 * The two anchors are fixed; the ramp between them interpolates in CIELAB
 * so perceived lightness changes evenly across the scale.
 */

export const DARK_BLUE = "#08306b"; // valence -1 anchor
export const YELLOW = "#ffff00"; // valence +1 anchor

type Rgb = [number, number, number];
type Lab = [number, number, number];

function hexToRgb(hex: string): Rgb {
  const value = hex.replace("#", "");
  return [
    parseInt(value.slice(0, 2), 16),
    parseInt(value.slice(2, 4), 16),
    parseInt(value.slice(4, 6), 16),
  ];
}

function rgbToHex([r, g, b]: Rgb): string {
  const channel = (v: number) =>
    Math.max(0, Math.min(255, Math.round(v))).toString(16).padStart(2, "0");
  return `#${channel(r)}${channel(g)}${channel(b)}`;
}

// sRGB <-> CIELAB via the D65 reference white.
function srgbToLinear(channel: number): number {
  const c = channel / 255;
  return c <= 0.04045 ? c / 12.92 : Math.pow((c + 0.055) / 1.055, 2.4);
}

function linearToSrgb(linear: number): number {
  const c =
    linear <= 0.0031308 ? linear * 12.92 : 1.055 * Math.pow(linear, 1 / 2.4) - 0.055;
  return c * 255;
}

const WHITE = [0.95047, 1.0, 1.08883] as const;

function rgbToLab(rgb: Rgb): Lab {
  const [r, g, b] = rgb.map(srgbToLinear) as Rgb;
  const x = (0.4124564 * r + 0.3575761 * g + 0.1804375 * b) / WHITE[0];
  const y = (0.2126729 * r + 0.7151522 * g + 0.072175 * b) / WHITE[1];
  const z = (0.0193339 * r + 0.119192 * g + 0.9503041 * b) / WHITE[2];
  const f = (t: number) =>
    t > 216 / 24389 ? Math.cbrt(t) : (24389 / 27) * t / 116 + 16 / 116;
  const [fx, fy, fz] = [f(x), f(y), f(z)];
  return [116 * fy - 16, 500 * (fx - fy), 200 * (fy - fz)];
}

function labToRgb([l, a, b]: Lab): Rgb {
  const fy = (l + 16) / 116;
  const fx = fy + a / 500;
  const fz = fy - b / 200;
  const finv = (t: number) => {
    const cubed = t * t * t;
    return cubed > 216 / 24389 ? cubed : (116 * t - 16) * (27 / 24389);
  };
  const x = finv(fx) * WHITE[0];
  const y = finv(fy) * WHITE[1];
  const z = finv(fz) * WHITE[2];
  const rLin = 3.2404542 * x - 1.5371385 * y - 0.4985314 * z;
  const gLin = -0.969266 * x + 1.8760108 * y + 0.041556 * z;
  const bLin = 0.0556434 * x - 0.2040259 * y + 1.0572252 * z;
  return [linearToSrgb(rLin), linearToSrgb(gLin), linearToSrgb(bLin)];
}

const LAB_BLUE = rgbToLab(hexToRgb(DARK_BLUE));
const LAB_YELLOW = rgbToLab(hexToRgb(YELLOW));

/** Map valence in [-1, 1] to a hex color; the endpoints hit the anchors
 * exactly. Out-of-range values clamp. */
export function valenceColor(valence: number): string {
  const t = Math.max(0, Math.min(1, (valence + 1) / 2));
  if (t === 0) return DARK_BLUE;
  if (t === 1) return YELLOW;
  const lab: Lab = [
    LAB_BLUE[0] + (LAB_YELLOW[0] - LAB_BLUE[0]) * t,
    LAB_BLUE[1] + (LAB_YELLOW[1] - LAB_BLUE[1]) * t,
    LAB_BLUE[2] + (LAB_YELLOW[2] - LAB_BLUE[2]) * t,
  ];
  return rgbToHex(labToRgb(lab));
}
