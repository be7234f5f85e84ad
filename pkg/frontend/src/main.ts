// Page wiring: image picker, brush canvas, live error sparkline, robot overlay.

import { ServiceClient, StrokeRequest } from "./api.js"
import { canvasToImage, diskPixels, downsamplePolyline } from "./brush.js"
import { decodeMaskRle } from "./rle.js"
import { maskToRgba } from "./overlay.js"
import {
  SparklineData, drawSparkline, makeSparkline, pushHumanError,
  setRobotCurve, transferWeight,
} from "./sparkline.js"

const client = new ServiceClient("")

interface UiState {
  sessionId: string | null
  imageId: string | null
  imageW: number
  imageH: number
  imageBitmap: ImageBitmap | null
  label: "fg" | "bg"
  radius: number
  busy: boolean
  trail: [number, number][]
  spark: SparklineData
  lastMask: Uint8Array | null
  hasGt: boolean
}

const state: UiState = {
  sessionId: null, imageId: null, imageW: 0, imageH: 0, imageBitmap: null,
  label: "fg", radius: 4, busy: false, trail: [], spark: makeSparkline(),
  lastMask: null, hasGt: false,
}

const $ = (id: string) => document.getElementById(id)!
const canvas = () => $("view") as HTMLCanvasElement
const sparkCanvas = () => $("spark") as HTMLCanvasElement

function setStatus(text: string) {
  $("status").textContent = text
}

async function loadImageList() {
  const { images } = await client.listImages()
  const sel = $("image-select") as HTMLSelectElement
  sel.innerHTML = ""
  for (const im of images) {
    const opt = document.createElement("option")
    opt.value = im.id
    opt.textContent = `${im.id} (${im.width}x${im.height}${im.has_gt ? ", gt" : ""})`
    sel.appendChild(opt)
  }
  if (images.length) await openImage(images[0].id)
}

async function openImage(id: string) {
  const data = await client.getImage(id)
  const blob = await (await fetch(`data:image/png;base64,${data.image_png}`)).blob()
  state.imageBitmap = await createImageBitmap(blob)
  state.imageId = id
  state.imageW = data.width
  state.imageH = data.height
  state.hasGt = data.has_gt
  state.lastMask = null
  state.spark = makeSparkline()
  const session = await client.createSession(id, (
    $("system-select") as HTMLSelectElement).value, data.has_gt)
  state.sessionId = session.session_id
  const c = canvas()
  c.width = data.width
  c.height = data.height
  render()
  setStatus(session.started ? "session ready" : "paint one fg and one bg stroke to start")
  ;($("robot-btn") as HTMLButtonElement).disabled = !data.has_gt
}

function render(cursor?: [number, number]) {
  const c = canvas()
  const ctx = c.getContext("2d")!
  ctx.clearRect(0, 0, c.width, c.height)
  if (state.imageBitmap) ctx.drawImage(state.imageBitmap, 0, 0)
  if (state.lastMask) {
    const rgba = maskToRgba(state.lastMask, state.imageW, state.imageH, 0.5)
    const overlay = new ImageData(state.imageW, state.imageH)
    overlay.data.set(rgba)
    const tmp = document.createElement("canvas")
    tmp.width = state.imageW
    tmp.height = state.imageH
    tmp.getContext("2d")!.putImageData(overlay, 0, 0)
    ctx.drawImage(tmp, 0, 0)
  }
  if (cursor) {
    // show exactly the pixels the next click would claim
    ctx.fillStyle = state.label === "fg" ? "rgba(255,80,40,0.6)" : "rgba(40,120,255,0.6)"
    for (const [x, y] of diskPixels(cursor[0], cursor[1], state.radius,
                                    state.imageW, state.imageH)) {
      ctx.fillRect(x, y, 1, 1)
    }
  }
  drawSparkline(sparkCanvas().getContext("2d")!, state.spark, {
    width: sparkCanvas().width, height: sparkCanvas().height,
    humanColor: "#d2401e", robotColor: "#3069c9",
  })
  const er = state.spark.human.at(-1)
  $("er-label").textContent = er === undefined
    ? "er: -" : `er: ${er.toFixed(2)}%  f(er): ${transferWeight(er).toFixed(2)}`
}

async function submitStroke(stroke: StrokeRequest) {
  if (!state.sessionId || state.busy) return
  state.busy = true
  const maskBefore = state.lastMask
  try {
    const out = await client.postStroke(state.sessionId, stroke)
    if (out.mask_rle) {
      state.lastMask = decodeMaskRle(out.mask_rle, out.width, out.height)
    }
    pushHumanError(state.spark, out.er_b)
    setStatus(`stroke ${out.stroke_index} (${out.elapsed_ms.toFixed(0)} ms)`)
  } catch (err) {
    state.lastMask = maskBefore // roll the overlay back
    setStatus(`stroke failed: ${err}`)
  } finally {
    state.busy = false
    render()
  }
}

function wireCanvas() {
  const c = canvas()
  let painting = false
  const toImage = (ev: PointerEvent) =>
    canvasToImage(ev.clientX, ev.clientY, c.getBoundingClientRect(),
                  state.imageW, state.imageH)

  c.addEventListener("pointerdown", (ev) => {
    const p = toImage(ev)
    if (!p) return
    painting = true
    state.trail = [p]
  })
  c.addEventListener("pointermove", (ev) => {
    const p = toImage(ev)
    if (!p) return
    if (painting) state.trail.push(p)
    render(p)
  })
  const finish = () => {
    if (!painting) return
    painting = false
    const pts = downsamplePolyline(state.trail, 1)
    state.trail = []
    if (pts.length === 1) {
      void submitStroke({ label: state.label, center: pts[0], radius: state.radius })
    } else if (pts.length > 1) {
      void submitStroke({ label: state.label, polyline: pts, radius: state.radius })
    }
  }
  c.addEventListener("pointerup", finish)
  c.addEventListener("pointerleave", () => {
    finish()
    render()
  })
}

async function compareRobot() {
  if (!state.sessionId || !state.hasGt) return
  setStatus("running robot replay...")
  const budget = parseInt(($("budget") as HTMLInputElement).value, 10) || 20
  const out = await client.robotReplay(state.sessionId, "center", budget, 0)
  setRobotCurve(state.spark, out.errors)
  setStatus(`robot replay: ${out.trace.length} strokes, `
    + `final er ${out.errors[out.errors.length - 1].toFixed(2)}%`)
  render()
}

function wireControls() {
  ;($("image-select") as HTMLSelectElement).addEventListener("change", (ev) => {
    void openImage((ev.target as HTMLSelectElement).value)
  })
  ;($("label-toggle") as HTMLButtonElement).addEventListener("click", () => {
    state.label = state.label === "fg" ? "bg" : "fg"
    $("label-toggle").textContent = state.label === "fg" ? "foreground" : "background"
  })
  ;($("radius") as HTMLInputElement).addEventListener("input", (ev) => {
    state.radius = parseInt((ev.target as HTMLInputElement).value, 10)
    $("radius-label").textContent = `r=${state.radius}`
  })
  ;($("robot-btn") as HTMLButtonElement).addEventListener("click", () => {
    void compareRobot()
  })
  ;($("export-btn") as HTMLButtonElement).addEventListener("click", () => {
    // exported PNG is the sparkline canvas itself, so dimensions always match
    const a = document.createElement("a")
    a.href = sparkCanvas().toDataURL("image/png")
    a.download = `brushbench-errors-${state.imageId ?? "session"}.png`
    a.click()
  })
}

window.addEventListener("DOMContentLoaded", () => {
  wireControls()
  wireCanvas()
  loadImageList().catch((err) => setStatus(`failed to load images: ${err}`))
})
