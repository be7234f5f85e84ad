import { describe, expect, it } from "vitest"

import { canvasToImage, diskPixels, downsamplePolyline } from "../src/brush.js"

describe("canvasToImage", () => {
  const rect = { left: 10, top: 20, width: 608, height: 456 }

  it("maps corners to integer pixel coordinates", () => {
    expect(canvasToImage(10, 20, rect, 76, 57)).toEqual([0, 0])
    expect(canvasToImage(10 + 607.9, 20 + 455.9, rect, 76, 57)).toEqual([75, 56])
  })

  it("is immune to display scaling (rect already in CSS pixels)", () => {
    // same gesture on a rect twice the size lands on the same image pixel
    const big = { left: 0, top: 0, width: 1216, height: 912 }
    const small = { left: 0, top: 0, width: 304, height: 228 }
    expect(canvasToImage(640, 480, big, 76, 57))
      .toEqual(canvasToImage(160, 120, small, 76, 57))
  })

  it("returns null outside the canvas", () => {
    expect(canvasToImage(5, 20, rect, 76, 57)).toBeNull()
    expect(canvasToImage(10 + 608, 20, rect, 76, 57)).toBeNull()
  })
})

describe("downsamplePolyline", () => {
  it("drops consecutive duplicates", () => {
    expect(downsamplePolyline([[1, 1], [1, 1], [2, 2]])).toEqual([[1, 1], [2, 2]])
  })

  it("keeps the final point", () => {
    const pts = downsamplePolyline([[0, 0], [0.2, 0], [0.4, 0], [5, 0]], 3)
    expect(pts[pts.length - 1]).toEqual([5, 0])
  })

  it("rounds to integers", () => {
    for (const [x, y] of downsamplePolyline([[0.4, 0.6], [3.5, 2.2]])) {
      expect(Number.isInteger(x) && Number.isInteger(y)).toBe(true)
    }
  })
})

describe("diskPixels", () => {
  it("radius 0 is the single pixel", () => {
    expect(diskPixels(3, 4, 0, 10, 10)).toEqual([[3, 4]])
  })

  it("uses the squared-distance inclusion rule", () => {
    const pts = diskPixels(5, 5, 2, 11, 11)
    for (let y = 0; y < 11; y++) {
      for (let x = 0; x < 11; x++) {
        const inside = (x - 5) ** 2 + (y - 5) ** 2 <= 4
        expect(pts.some(([px, py]) => px === x && py === y)).toBe(inside)
      }
    }
  })

  it("clips to the image", () => {
    for (const [x, y] of diskPixels(0, 0, 4, 8, 6)) {
      expect(x).toBeGreaterThanOrEqual(0)
      expect(y).toBeGreaterThanOrEqual(0)
      expect(x).toBeLessThan(8)
      expect(y).toBeLessThan(6)
    }
  })
})
