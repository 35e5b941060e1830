// Typed client for the review API. Mirrors the server schemas exactly and
// never invents fields.

export interface Rect {
  x: number
  y: number
  w: number
  h: number
}

export interface BoxView {
  id: string
  column_id: string
  box: Rect
  adjusted_box: Rect | null
  class_id: number
  origin: string
  status: string
  cycle: number
  confidence: number | null
  model_id: string | null
}

export interface ColumnSummary {
  column_id: string
  manuscript: string
  page: number
  side: string
  column_index: number
  width: number
  height: number
  scribe: string | null
  pending_boxes: number
  decided_boxes: number
}

export interface Progress {
  cycle: number
  phase: string
  pending_count: number
}

export type DecisionAction = 'accept' | 'reject' | 'adjust'

export class ApiError extends Error {
  constructor(
    public code: string,
    public detail: string,
    public status: number,
  ) {
    super(`${code}: ${detail}`)
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  try {
    const body = (await resp.json()) as { error?: string; detail?: string }
    return new ApiError(body.error ?? String(resp.status), body.detail ?? '', resp.status)
  } catch {
    return new ApiError(String(resp.status), resp.statusText, resp.status)
  }
}

export class ApiClient {
  constructor(private readonly base: string = '') {}

  private async get<T>(path: string): Promise<T> {
    const resp = await fetch(this.base + path)
    if (!resp.ok) throw await parseError(resp)
    return (await resp.json()) as T
  }

  async progress(): Promise<Progress> {
    return this.get('/api/progress')
  }

  async columns(status?: string): Promise<ColumnSummary[]> {
    const query = status ? `?status=${encodeURIComponent(status)}&page_size=500` : '?page_size=500'
    const page = await this.get<{ items: ColumnSummary[] }>(`/api/columns${query}`)
    return page.items
  }

  async boxes(columnId: string): Promise<BoxView[]> {
    const body = await this.get<{ items: BoxView[] }>(
      `/api/columns/${encodeURIComponent(columnId)}/boxes`,
    )
    return body.items
  }

  imageUrl(columnId: string): string {
    return `${this.base}/api/columns/${encodeURIComponent(columnId)}/image`
  }

  async decide(boxId: string, action: DecisionAction, box?: Rect): Promise<BoxView> {
    const resp = await fetch(`${this.base}/api/boxes/${encodeURIComponent(boxId)}/decision`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(box ? { action, box } : { action }),
    })
    if (!resp.ok) throw await parseError(resp)
    return (await resp.json()) as BoxView
  }
}
