/** Canvas-point to image-pixel mapping under the display transform. */

export interface ViewTransform {
  /** display pixels per image pixel */
  scale: number;
  /** canvas position of the image's top-left corner */
  panX: number;
  panY: number;
}

export interface ImagePoint {
  u: number;
  v: number;
}

/**
 * Invert the scale/pan transform and round to the nearest pixel.
 * Returns null for points that land outside the image: those clicks are
 * ignored and no request is sent.
 */
export function clickToImageCoords(
  canvasX: number,
  canvasY: number,
  transform: ViewTransform,
  imageWidth: number,
  imageHeight: number,
): ImagePoint | null {
  if (transform.scale <= 0) return null;
  const u = Math.round((canvasX - transform.panX) / transform.scale);
  const v = Math.round((canvasY - transform.panY) / transform.scale);
  if (u < 0 || v < 0 || u >= imageWidth || v >= imageHeight) return null;
  return { u, v };
}

/** Scale-to-fit transform that centers the image in the canvas. */
export function fitTransform(
  imageWidth: number,
  imageHeight: number,
  canvasWidth: number,
  canvasHeight: number,
): ViewTransform {
  const scale = Math.min(canvasWidth / imageWidth, canvasHeight / imageHeight);
  return {
    scale,
    panX: (canvasWidth - imageWidth * scale) / 2,
    panY: (canvasHeight - imageHeight * scale) / 2,
  };
}
