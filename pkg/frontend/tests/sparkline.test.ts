import { describe, expect, it } from "vitest"

import { maskArea, maskToRgba } from "../src/overlay.js"
import {
  curveExtent, drawSparkline, makeSparkline, pushHumanError, setRobotCurve,
  toPolyline, transferWeight,
} from "../src/sparkline.js"

describe("transferWeight", () => {
  it("matches the service-side thresholds", () => {
    expect(transferWeight(1.5)).toBe(0)
    expect(transferWeight(2.5)).toBeCloseTo(3.75, 12)
    expect(transferWeight(1e6)).toBeLessThan(5)
    expect(transferWeight(1e6)).toBeGreaterThan(5 - 1e-6)
  })
})

describe("overlay", () => {
  it("tints only foreground pixels at the requested alpha", () => {
    const mask = new Uint8Array([0, 1, 1, 0])
    const rgba = maskToRgba(mask, 2, 2, 0.5)
    expect(rgba.length).toBe(16)
    expect(rgba[3]).toBe(0)
    expect(rgba[7]).toBe(128)
    expect(maskArea(mask)).toBe(2)
  })

  it("rejects mismatched dimensions", () => {
    expect(() => maskToRgba(new Uint8Array(3), 2, 2)).toThrow()
  })
})

describe("sparkline data", () => {
  it("appends human errors and ignores nulls", () => {
    const d = makeSparkline()
    pushHumanError(d, 4.2)
    pushHumanError(d, null)
    pushHumanError(d, 1.0)
    expect(d.human).toEqual([4.2, 1.0])
  })

  it("shares one y-scale across both curves", () => {
    const d = makeSparkline()
    pushHumanError(d, 2)
    setRobotCurve(d, [9, 3, 1])
    expect(curveExtent(d)).toBe(9)
  })

  it("maps curves into the canvas box", () => {
    const pts = toPolyline([0, 5, 10], 100, 50, 10, 2)
    for (const [x, y] of pts) {
      expect(x).toBeGreaterThanOrEqual(0)
      expect(x).toBeLessThanOrEqual(100)
      expect(y).toBeGreaterThanOrEqual(0)
      expect(y).toBeLessThanOrEqual(50)
    }
    expect(pts[0][1]).toBeGreaterThan(pts[2][1]) // higher error sits higher up
  })

  it("draws both curves through a 2d-context stand-in", () => {
    const calls: string[] = []
    const ctx = {
      strokeStyle: "", lineWidth: 0,
      clearRect: () => calls.push("clear"),
      beginPath: () => calls.push("begin"),
      moveTo: () => calls.push("move"),
      lineTo: () => calls.push("line"),
      stroke: () => calls.push("stroke"),
    }
    const d = makeSparkline()
    pushHumanError(d, 5)
    pushHumanError(d, 2)
    setRobotCurve(d, [5, 4, 3])
    drawSparkline(ctx, d, {
      width: 100, height: 40, humanColor: "#f00", robotColor: "#00f",
    })
    expect(calls.filter((c) => c === "stroke").length).toBe(2)
  })
})
