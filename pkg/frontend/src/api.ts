// Typed client for the session service. The UI never segments locally: every
// mask comes from these endpoints.

export interface ImageInfo {
  id: string
  width: number
  height: number
  has_gt: boolean
  has_brush: boolean
}

export interface ImageData64 {
  id: string
  width: number
  height: number
  image_png: string
  has_gt: boolean
}

export interface SessionInfo {
  session_id: string
  image_id: string
  stroke_count: number
  errors: number[]
  mask_rle: string | null
  width: number
  height: number
  started: boolean
}

export interface StrokeRequest {
  label: "fg" | "bg"
  center?: [number, number]
  polyline?: [number, number][]
  radius: number
}

export interface StrokeResponse {
  stroke_index: number
  mask_rle: string | null
  width: number
  height: number
  er_b: number | null
  elapsed_ms: number
  echo: StrokeRequest & { center: [number, number] | null; polyline: [number, number][] | null }
}

export interface RobotTraceEntry {
  index: number
  center: [number, number]
  radius: number
  label: number
  er_b: number
  elapsed_ms: number
}

export interface RobotReplayResponse {
  errors: number[]
  trace: RobotTraceEntry[]
}

export class ServiceClient {
  constructor(readonly baseUrl: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.baseUrl + path, init)
    if (!resp.ok) {
      let detail = resp.statusText
      try {
        detail = (await resp.json()).detail ?? detail
      } catch {
        /* non-JSON error body */
      }
      throw new Error(`${resp.status}: ${detail}`)
    }
    return resp.json() as Promise<T>
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    })
  }

  listImages(): Promise<{ images: ImageInfo[] }> {
    return this.request("/images")
  }

  getImage(id: string): Promise<ImageData64> {
    return this.request(`/images/${id}`)
  }

  createSession(imageId: string, system = "GCA", withGt = true):
      Promise<{ session_id: string; width: number; height: number; started: boolean }> {
    return this.post("/sessions", {
      image_id: imageId,
      with_gt: withGt,
      config: { system },
    })
  }

  getSession(id: string): Promise<SessionInfo> {
    return this.request(`/sessions/${id}`)
  }

  postStroke(id: string, stroke: StrokeRequest): Promise<StrokeResponse> {
    return this.post(`/sessions/${id}/strokes`, stroke)
  }

  robotReplay(id: string, policy = "center", budget = 20, seed = 0):
      Promise<RobotReplayResponse> {
    return this.post(`/sessions/${id}/robot-replay`, { policy, budget, seed })
  }
}
