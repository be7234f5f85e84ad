// Full round trip against the real session service: scripted stand-in for a
// browser session (no browser is available in this environment, so the same
// functions main.ts calls are driven directly).

import { spawn, spawnSync, ChildProcess } from "node:child_process"
import { mkdtempSync, rmSync } from "node:fs"
import { tmpdir } from "node:os"
import { join } from "node:path"
import { afterAll, beforeAll, describe, expect, it } from "vitest"

import { ServiceClient } from "../src/api.js"
import { decodeMaskRle } from "../src/rle.js"
import { maskToRgba } from "../src/overlay.js"
import { makeSparkline, pushHumanError, setRobotCurve } from "../src/sparkline.js"

const PYTHON = process.env.BRUSHBENCH_PYTHON ?? "python3"
const PORT = 18473 + (process.pid % 997)
const BASE = `http://127.0.0.1:${PORT}`

let proc: ChildProcess | null = null
let workdir = ""

function pythonAvailable(): boolean {
  const probe = spawnSync(PYTHON, ["-c", "import brushbench"], { timeout: 30_000 })
  return probe.status === 0
}

const haveService = pythonAvailable()
const d = haveService ? describe : describe.skip

async function waitForHealth(timeoutMs = 60_000): Promise<void> {
  const deadline = Date.now() + timeoutMs
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${BASE}/health`)
      if (resp.ok) return
    } catch {
      /* not up yet */
    }
    await new Promise((r) => setTimeout(r, 250))
  }
  throw new Error("service did not become healthy in time")
}

d("live service round trip", () => {
  const client = new ServiceClient(BASE)

  beforeAll(async () => {
    workdir = mkdtempSync(join(tmpdir(), "brushbench-ui-"))
    const dataset = join(workdir, "dataset")
    const gen = spawnSync(PYTHON, ["-m", "brushbench.synthetic", "--out", dataset,
                                   "--kind", "eval", "--n", "2"],
                          { timeout: 120_000 })
    if (gen.status !== 0) {
      throw new Error(`dataset generation failed: ${gen.stderr}`)
    }
    proc = spawn(PYTHON, ["-m", "brushbench.service", "--dataset", dataset,
                          "--state-dir", join(workdir, "state"),
                          "--port", String(PORT)],
                 { stdio: "ignore" })
    await waitForHealth()
  }, 180_000)

  afterAll(() => {
    proc?.kill()
    if (workdir) rmSync(workdir, { recursive: true, force: true })
  })

  it("paints one disk stroke and renders its error", async () => {
    const { images } = await client.listImages()
    expect(images.length).toBe(2)
    const image = images.find((i) => i.has_gt)!
    const session = await client.createSession(image.id, "GCS", true)

    const spark = makeSparkline()
    const out = await client.postStroke(session.session_id, {
      label: "fg", center: [Math.floor(image.width / 2),
                            Math.floor(image.height / 2)], radius: 4,
    })
    expect(out.mask_rle).not.toBeNull()
    const mask = decodeMaskRle(out.mask_rle!, out.width, out.height)
    expect(mask.length).toBe(image.width * image.height)
    const rgba = maskToRgba(mask, out.width, out.height)
    expect(rgba.length).toBe(image.width * image.height * 4)

    expect(out.er_b).not.toBeNull()
    pushHumanError(spark, out.er_b)
    expect(spark.human.length).toBe(1)
  }, 120_000)

  it("round-trips stroke coordinates exactly", async () => {
    const { images } = await client.listImages()
    const session = await client.createSession(images[0].id, "GCS", true)
    const out = await client.postStroke(session.session_id, {
      label: "bg", center: [13, 7], radius: 2,
    })
    expect(out.echo.center).toEqual([13, 7])
    expect(out.echo.radius).toBe(2)
    expect(out.echo.label).toBe("bg")
  }, 120_000)

  it("overlays a robot replay without touching the human session", async () => {
    const { images } = await client.listImages()
    const image = images.find((i) => i.has_gt)!
    const session = await client.createSession(image.id, "GCS", true)
    await client.postStroke(session.session_id, {
      label: "fg", center: [10, 10], radius: 3,
    })
    const before = await client.getSession(session.session_id)

    const replay = await client.robotReplay(session.session_id, "center", 10, 0)
    expect(replay.errors.length).toBe(11)
    // non-increasing trend: the curve ends no higher than it starts and its
    // best point is at (or past) the midpoint
    const errors = replay.errors
    expect(errors[errors.length - 1]).toBeLessThanOrEqual(errors[0])
    expect(Math.min(...errors.slice(5))).toBeLessThanOrEqual(
      Math.min(...errors.slice(0, 5)))

    const spark = makeSparkline()
    setRobotCurve(spark, replay.errors)
    expect(spark.robot.length).toBe(11)

    const after = await client.getSession(session.session_id)
    expect(after.mask_rle).toEqual(before.mask_rle)
    expect(after.errors).toEqual(before.errors)
    expect(after.stroke_count).toBe(before.stroke_count)
  }, 120_000)
})
