// Brush geometry: canvas-to-image coordinate mapping, gesture downsampling,
// and the exact disk rasterization the service applies (so the cursor preview
// shows precisely the pixels a stroke will claim).

export interface CanvasRect {
  left: number
  top: number
  width: number
  height: number
}

/** Map a pointer position to integer image coordinates, immune to CSS scaling
 *  and devicePixelRatio: only the bounding rect vs image size ratio matters. */
export function canvasToImage(
  clientX: number, clientY: number, rect: CanvasRect,
  imageW: number, imageH: number,
): [number, number] | null {
  const fx = (clientX - rect.left) / rect.width
  const fy = (clientY - rect.top) / rect.height
  if (fx < 0 || fy < 0 || fx >= 1 || fy >= 1) return null
  return [Math.floor(fx * imageW), Math.floor(fy * imageH)]
}

/** Collapse a raw pointer trail to integer waypoints, dropping consecutive
 *  duplicates and points closer than minStep pixels (last point always kept). */
export function downsamplePolyline(
  points: [number, number][], minStep = 1,
): [number, number][] {
  const out: [number, number][] = []
  for (let i = 0; i < points.length; i++) {
    const p: [number, number] = [Math.round(points[i][0]), Math.round(points[i][1])]
    if (out.length === 0) {
      out.push(p)
      continue
    }
    const last = out[out.length - 1]
    const d = Math.max(Math.abs(p[0] - last[0]), Math.abs(p[1] - last[1]))
    if (d >= minStep || i === points.length - 1) {
      if (p[0] !== last[0] || p[1] !== last[1]) out.push(p)
    }
  }
  return out
}

/** Pixels of the closed disk (squared-distance rule), clipped to the image.
 *  Mirrors the service's rasterization exactly; radius 0 is a single pixel. */
export function diskPixels(
  cx: number, cy: number, radius: number, imageW: number, imageH: number,
): [number, number][] {
  const out: [number, number][] = []
  const r2 = radius * radius
  for (let y = Math.max(0, cy - radius); y <= Math.min(imageH - 1, cy + radius); y++) {
    for (let x = Math.max(0, cx - radius); x <= Math.min(imageW - 1, cx + radius); x++) {
      const dx = x - cx
      const dy = y - cy
      if (dx * dx + dy * dy <= r2) out.push([x, y])
    }
  }
  return out
}
