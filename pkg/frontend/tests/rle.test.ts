import { describe, expect, it } from "vitest"

import { decodeMaskRle, encodeMaskRle } from "../src/rle.js"

function randomMask(n: number, seed: number): Uint8Array {
  // tiny LCG so the test is deterministic without extra deps
  let s = seed >>> 0
  const out = new Uint8Array(n)
  for (let i = 0; i < n; i++) {
    s = (1664525 * s + 1013904223) >>> 0
    out[i] = s & 0x10000 ? 1 : 0
  }
  return out
}

describe("mask RLE codec", () => {
  it("round-trips random masks", () => {
    for (let seed = 1; seed <= 20; seed++) {
      const w = 1 + (seed % 9)
      const h = 1 + ((seed * 3) % 7)
      const mask = randomMask(w * h, seed)
      const decoded = decodeMaskRle(encodeMaskRle(mask), w, h)
      expect(Array.from(decoded)).toEqual(Array.from(mask))
    }
  })

  it("starts with a background run even for leading foreground", () => {
    const mask = new Uint8Array([1, 1, 0])
    const data = encodeMaskRle(mask)
    const raw = atob(data)
    const bytes = new Uint8Array(raw.length)
    for (let i = 0; i < raw.length; i++) bytes[i] = raw.charCodeAt(i)
    const runs = Array.from(new Uint32Array(bytes.buffer))
    expect(runs).toEqual([0, 2, 1])
  })

  it("decodes a known all-background payload", () => {
    const mask = new Uint8Array(12)
    const decoded = decodeMaskRle(encodeMaskRle(mask), 4, 3)
    expect(decoded.length).toBe(12)
    expect(decoded.every((v) => v === 0)).toBe(true)
  })

  it("rejects payloads of the wrong pixel count", () => {
    const data = encodeMaskRle(new Uint8Array([0, 1, 0, 1]))
    expect(() => decodeMaskRle(data, 3, 3)).toThrow(/expected 9/)
  })
})
