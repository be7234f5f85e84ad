// Segmentation overlay compositing: decoded masks become a half-transparent
// foreground tint layered over the image.

export const FG_TINT: [number, number, number] = [255, 80, 40]

/** RGBA bytes for a mask overlay at the given alpha (foreground pixels only). */
export function maskToRgba(
  mask: Uint8Array, width: number, height: number, alpha = 0.5,
): Uint8ClampedArray {
  if (mask.length !== width * height) {
    throw new Error(`mask length ${mask.length} != ${width}x${height}`)
  }
  const out = new Uint8ClampedArray(width * height * 4)
  const a = Math.round(alpha * 255)
  for (let i = 0; i < mask.length; i++) {
    if (mask[i] === 1) {
      out[i * 4] = FG_TINT[0]
      out[i * 4 + 1] = FG_TINT[1]
      out[i * 4 + 2] = FG_TINT[2]
      out[i * 4 + 3] = a
    }
  }
  return out
}

/** Count of foreground pixels, handy for sanity displays. */
export function maskArea(mask: Uint8Array): number {
  let n = 0
  for (const v of mask) n += v
  return n
}
