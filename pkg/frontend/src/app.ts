// Composition root: wires the API client, review state, DOM rendering and
// input handling. The server owns all annotation state; a reload rebuilds
// the view purely from API responses.

import { ApiClient, ApiError } from './api.js'
import type { BoxView, ColumnSummary, Rect } from './api.js'
import { attachKeyboard } from './keyboard.js'
import { ReviewState } from './state.js'

const ZOOM_STEP = 1.25
const MIN_BOX_SIZE = 2

function effectiveRect(box: BoxView): Rect {
  return box.adjusted_box ?? box.box
}

export class ReviewApp {
  readonly state = new ReviewState()
  zoom = 1
  columns: ColumnSummary[] = []
  private detachKeyboard: (() => void) | null = null

  private constructor(
    private readonly root: HTMLElement,
    readonly api: ApiClient,
    private readonly doc: Document,
  ) {}

  static async start(root: HTMLElement, baseUrl = ''): Promise<ReviewApp> {
    const app = new ReviewApp(root, new ApiClient(baseUrl), root.ownerDocument)
    app.buildSkeleton()
    app.detachKeyboard = attachKeyboard(app.doc, {
      onAccept: () => void app.decideSelected('accept'),
      onReject: () => void app.decideSelected('reject'),
      onNext: () => {
        app.state.selectNext()
        app.renderBoxes()
      },
      onPrevious: () => {
        app.state.selectPrevious()
        app.renderBoxes()
      },
      onZoomIn: () => app.zoomBy(ZOOM_STEP),
      onZoomOut: () => app.zoomBy(1 / ZOOM_STEP),
      onZoomReset: () => app.setZoom(1),
    })
    await app.refreshColumns()
    const first = app.columns.find((c) => c.pending_boxes > 0) ?? app.columns[0]
    if (first) {
      await app.openColumn(first.column_id)
    }
    await app.refreshProgress()
    return app
  }

  dispose(): void {
    this.detachKeyboard?.()
    this.root.innerHTML = ''
  }

  // -- data -------------------------------------------------------------

  async refreshColumns(): Promise<void> {
    this.columns = await this.api.columns()
    this.renderColumnSelect()
  }

  async openColumn(columnId: string): Promise<void> {
    const boxes = await this.api.boxes(columnId)
    this.state.loadColumn(columnId, boxes)
    this.renderStage()
  }

  async resync(): Promise<void> {
    if (this.state.columnId) {
      await this.openColumn(this.state.columnId)
    }
    await this.refreshProgress()
  }

  async refreshProgress(): Promise<void> {
    const progress = await this.api.progress()
    this.el('progress').textContent =
      `cycle ${progress.cycle} · ${progress.phase} · ${progress.pending_count} pending`
  }

  async decideSelected(action: 'accept' | 'reject', rect?: Rect): Promise<void> {
    const box = this.state.selected()
    if (!box) return
    await this.decideBox(box.id, action, rect)
  }

  async decideBox(boxId: string, action: 'accept' | 'reject' | 'adjust', rect?: Rect): Promise<void> {
    try {
      const updated = await this.api.decide(boxId, action, rect)
      this.state.applyDecision(updated)
      this.showMessage('')
      this.renderBoxes()
      await this.refreshProgress()
    } catch (err) {
      if (err instanceof ApiError && err.code === 'AlreadyDecided') {
        this.showMessage('already decided elsewhere; reloading server state')
        await this.resync()
      } else if (err instanceof ApiError) {
        this.showMessage(`${err.code}: ${err.detail}`)
      } else {
        throw err
      }
    }
  }

  // -- rendering ----------------------------------------------------------

  private buildSkeleton(): void {
    this.root.innerHTML = `
      <div class="review">
        <header class="toolbar">
          <select id="column-select" aria-label="column"></select>
          <span id="progress"></span>
          <span class="zoom">
            <button id="zoom-out" title="zoom out">−</button>
            <span id="zoom-level">100%</span>
            <button id="zoom-in" title="zoom in">+</button>
          </span>
          <button id="accept-btn">accept (a)</button>
          <button id="reject-btn">reject (r)</button>
          <span id="message" role="status"></span>
        </header>
        <div class="viewport">
          <div class="stage" id="stage"></div>
          <p id="empty-state" class="empty" hidden>nothing pending in this column</p>
        </div>
      </div>`
    this.el('column-select').addEventListener('change', (e) => {
      void this.openColumn((e.target as HTMLSelectElement).value)
    })
    this.el('zoom-in').addEventListener('click', () => this.zoomBy(ZOOM_STEP))
    this.el('zoom-out').addEventListener('click', () => this.zoomBy(1 / ZOOM_STEP))
    this.el('accept-btn').addEventListener('click', () => void this.decideSelected('accept'))
    this.el('reject-btn').addEventListener('click', () => void this.decideSelected('reject'))
  }

  private renderColumnSelect(): void {
    const select = this.el('column-select') as HTMLSelectElement
    select.innerHTML = ''
    for (const col of this.columns) {
      const option = this.doc.createElement('option')
      option.value = col.column_id
      option.textContent = `${col.column_id} (${col.pending_boxes} pending)`
      select.appendChild(option)
    }
    if (this.state.columnId) select.value = this.state.columnId
  }

  private renderStage(): void {
    const column = this.columns.find((c) => c.column_id === this.state.columnId)
    const stage = this.el('stage')
    stage.innerHTML = ''
    if (!column) return
    stage.style.width = `${column.width}px`
    stage.style.height = `${column.height}px`
    const img = this.doc.createElement('img')
    img.className = 'column-image'
    img.width = column.width
    img.height = column.height
    img.src = this.api.imageUrl(column.column_id)
    img.draggable = false
    stage.appendChild(img)
    this.setZoom(this.zoom)
    this.renderBoxes()
  }

  renderBoxes(): void {
    const stage = this.el('stage')
    for (const el of Array.from(stage.querySelectorAll('.box'))) el.remove()
    for (const box of this.state.boxes) {
      stage.appendChild(this.boxElement(box))
    }
    const empty = this.el('empty-state')
    empty.hidden = this.state.pending().length > 0
    const select = this.el('column-select') as HTMLSelectElement
    if (this.state.columnId) select.value = this.state.columnId
  }

  private boxElement(box: BoxView): HTMLElement {
    const rect = effectiveRect(box)
    const el = this.doc.createElement('div')
    el.className = `box box--${box.status}`
    if (box.id === this.state.selectedId) el.classList.add('box--selected')
    el.dataset.boxId = box.id
    el.dataset.status = box.status
    el.style.left = `${rect.x}px`
    el.style.top = `${rect.y}px`
    el.style.width = `${rect.w}px`
    el.style.height = `${rect.h}px`
    const label = this.doc.createElement('span')
    label.className = 'box-label'
    label.textContent =
      box.confidence === null ? `c${box.class_id}` : `c${box.class_id} ${box.confidence.toFixed(2)}`
    el.appendChild(label)
    el.addEventListener('mousedown', () => {
      if (box.status === 'pending') {
        this.state.selectedId = box.id
        this.renderBoxes()
      }
    })
    if (box.status === 'pending' && box.id === this.state.selectedId) {
      el.appendChild(this.resizeHandle(box))
    }
    return el
  }

  private resizeHandle(box: BoxView): HTMLElement {
    const handle = this.doc.createElement('div')
    handle.className = 'handle handle-se'
    handle.dataset.boxId = box.id
    handle.addEventListener('mousedown', (down: MouseEvent) => {
      down.preventDefault()
      down.stopPropagation()
      const origin = effectiveRect(box)
      const startX = down.clientX
      const startY = down.clientY
      let next: Rect = { ...origin }
      const move = (ev: MouseEvent) => {
        const dw = Math.round((ev.clientX - startX) / this.zoom)
        const dh = Math.round((ev.clientY - startY) / this.zoom)
        next = {
          x: origin.x,
          y: origin.y,
          w: Math.max(MIN_BOX_SIZE, origin.w + dw),
          h: Math.max(MIN_BOX_SIZE, origin.h + dh),
        }
        const el = this.el('stage').querySelector<HTMLElement>(`[data-box-id="${box.id}"].box`)
        if (el) {
          el.style.width = `${next.w}px`
          el.style.height = `${next.h}px`
        }
      }
      const up = () => {
        this.doc.removeEventListener('mousemove', move)
        this.doc.removeEventListener('mouseup', up)
        void this.decideBox(box.id, 'adjust', next)
      }
      this.doc.addEventListener('mousemove', move)
      this.doc.addEventListener('mouseup', up)
    })
    return handle
  }

  zoomBy(factor: number): void {
    this.setZoom(this.zoom * factor)
  }

  setZoom(zoom: number): void {
    this.zoom = Math.min(8, Math.max(0.125, zoom))
    const stage = this.el('stage')
    stage.style.transform = `scale(${this.zoom})`
    stage.style.transformOrigin = '0 0'
    this.el('zoom-level').textContent = `${Math.round(this.zoom * 100)}%`
  }

  showMessage(text: string): void {
    this.el('message').textContent = text
  }

  private el(id: string): HTMLElement {
    const found = this.root.querySelector<HTMLElement>(`#${id}`)
    if (!found) throw new Error(`missing element #${id}`)
    return found
  }
}
