/**
 * Mask overlay blending and click marker colors.
 *
 * Foreground pixels blend toward the overlay color; background pixels pass
 * through untouched. Rounding is half-up, matching the server's own pixel
 * arithmetic. Positive clicks render green, negative red.
 */

export interface Rgb {
  r: number;
  g: number;
  b: number;
}

export const MASK_COLOR: Rgb = { r: 0, g: 0, b: 255 };
export const POSITIVE_CLICK_COLOR = "#16a34a";
export const NEGATIVE_CLICK_COLOR = "#dc2626";

function roundHalfUp(x: number): number {
  return Math.floor(x + 0.5);
}

export function overlayBlend(
  pixel: Rgb,
  maskBit: boolean,
  opacity: number,
  color: Rgb = MASK_COLOR,
): Rgb {
  if (opacity < 0 || opacity > 1) {
    throw new RangeError(`opacity must lie in [0, 1], got ${opacity}`);
  }
  if (!maskBit) return pixel;
  return {
    r: roundHalfUp((1 - opacity) * pixel.r + opacity * color.r),
    g: roundHalfUp((1 - opacity) * pixel.g + opacity * color.g),
    b: roundHalfUp((1 - opacity) * pixel.b + opacity * color.b),
  };
}

/**
 * Blend a whole RGBA buffer in place (ImageData.data layout, row-major).
 * `maskBits` holds one boolean per pixel in the same order.
 */
export function blendImageData(
  rgba: Uint8ClampedArray | Uint8Array,
  maskBits: ArrayLike<boolean | number>,
  opacity: number,
  color: Rgb = MASK_COLOR,
): void {
  const n = Math.floor(rgba.length / 4);
  for (let i = 0; i < n; i++) {
    if (!maskBits[i]) continue;
    const o = i * 4;
    rgba[o] = roundHalfUp((1 - opacity) * rgba[o] + opacity * color.r);
    rgba[o + 1] = roundHalfUp((1 - opacity) * rgba[o + 1] + opacity * color.g);
    rgba[o + 2] = roundHalfUp((1 - opacity) * rgba[o + 2] + opacity * color.b);
  }
}
