// Mask run-length codec shared with the session service: base64 of uint32-LE
// run lengths over row-major order, alternating and starting with background.

export function decodeMaskRle(data: string, width: number, height: number): Uint8Array {
  const raw = atob(data)
  if (raw.length % 4 !== 0) {
    throw new Error(`RLE payload length ${raw.length} is not a uint32 array`)
  }
  const bytes = new Uint8Array(raw.length)
  for (let i = 0; i < raw.length; i++) bytes[i] = raw.charCodeAt(i)
  const runs = new Uint32Array(bytes.buffer)

  const mask = new Uint8Array(width * height)
  let pos = 0
  for (let i = 0; i < runs.length; i++) {
    const run = runs[i]
    if (i % 2 === 1) mask.fill(1, pos, pos + run)
    pos += run
  }
  if (pos !== width * height) {
    throw new Error(`RLE covers ${pos} pixels, expected ${width * height}`)
  }
  return mask
}

export function encodeMaskRle(mask: Uint8Array): string {
  const runs: number[] = []
  let current = 0
  let run = 0
  for (const v of mask) {
    if (v === current) {
      run++
    } else {
      runs.push(run)
      current = v
      run = 1
    }
  }
  runs.push(run)
  const buf = new Uint32Array(runs)
  let out = ""
  const bytes = new Uint8Array(buf.buffer)
  for (const b of bytes) out += String.fromCharCode(b)
  return btoa(out)
}
