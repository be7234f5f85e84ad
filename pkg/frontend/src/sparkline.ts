// Error sparkline: tracks raw er_b plus its saturating weight, optionally a
// robot trace alongside, and renders both on a small canvas.

export const TRANSFER_CAP = 5.0

/** The saturating error weight the evaluation protocol uses: negligible below
 *  1.5, never more than the cap. */
export function transferWeight(er: number, cap = TRANSFER_CAP): number {
  if (er <= 1.5) return 0
  return cap - cap / ((er - 0.5) * (er - 0.5))
}

export interface SparklineData {
  human: number[]
  robot: number[]
}

export function makeSparkline(): SparklineData {
  return { human: [], robot: [] }
}

export function pushHumanError(data: SparklineData, er: number | null): void {
  if (er !== null && er !== undefined) data.human.push(er)
}

export function setRobotCurve(data: SparklineData, errors: number[]): void {
  data.robot = errors.slice()
}

export interface DrawStyle {
  width: number
  height: number
  humanColor: string
  robotColor: string
}

/** Shared y-scale over both curves so they are visually comparable. */
export function curveExtent(data: SparklineData): number {
  const all = [...data.human, ...data.robot]
  return all.length ? Math.max(1e-9, ...all) : 1
}

export function toPolyline(
  values: number[], width: number, height: number, yMax: number, xMax: number,
): [number, number][] {
  return values.map((v, i) => [
    xMax > 0 ? (i / xMax) * (width - 4) + 2 : 2,
    height - 2 - (v / yMax) * (height - 4),
  ])
}

type Ctx2d = {
  clearRect(x: number, y: number, w: number, h: number): void
  beginPath(): void
  moveTo(x: number, y: number): void
  lineTo(x: number, y: number): void
  stroke(): void
  strokeStyle: string | unknown
  lineWidth: number
}

export function drawSparkline(ctx: Ctx2d, data: SparklineData, style: DrawStyle): void {
  ctx.clearRect(0, 0, style.width, style.height)
  const yMax = curveExtent(data)
  const xMax = Math.max(data.human.length - 1, data.robot.length - 1, 1)
  for (const [values, color] of [
    [data.human, style.humanColor],
    [data.robot, style.robotColor],
  ] as [number[], string][]) {
    if (values.length < 2) continue
    const pts = toPolyline(values, style.width, style.height, yMax, xMax)
    ctx.beginPath()
    ctx.strokeStyle = color
    ctx.lineWidth = 1.5
    ctx.moveTo(pts[0][0], pts[0][1])
    for (const [x, y] of pts.slice(1)) ctx.lineTo(x, y)
    ctx.stroke()
  }
}
