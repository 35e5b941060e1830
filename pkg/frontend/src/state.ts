// Review-session state. The server stays authoritative: this holds only
// the fetched snapshot plus the review cursor, and any conflict triggers a
// refetch rather than a local guess.

import type { BoxView } from './api.js'

export class ReviewState {
  boxes: BoxView[] = []
  columnId: string | null = null
  selectedId: string | null = null

  loadColumn(columnId: string, boxes: BoxView[]): void {
    this.columnId = columnId
    this.boxes = boxes
    this.selectedId = this.firstPendingId()
  }

  pending(): BoxView[] {
    return this.boxes.filter((b) => b.status === 'pending')
  }

  firstPendingId(): string | null {
    return this.pending()[0]?.id ?? null
  }

  selected(): BoxView | null {
    return this.boxes.find((b) => b.id === this.selectedId) ?? null
  }

  applyDecision(updated: BoxView): void {
    this.boxes = this.boxes.map((b) => (b.id === updated.id ? updated : b))
    this.advance()
  }

  advance(): void {
    const from = this.boxes.findIndex((b) => b.id === this.selectedId)
    const n = this.boxes.length
    for (let i = 1; i <= n; i++) {
      const candidate = this.boxes[(from + i) % n]
      if (candidate && candidate.status === 'pending') {
        this.selectedId = candidate.id
        return
      }
    }
    this.selectedId = null
  }

  selectNext(): void {
    this.moveSelection(1)
  }

  selectPrevious(): void {
    this.moveSelection(-1)
  }

  private moveSelection(step: number): void {
    const pending = this.pending()
    if (pending.length === 0) {
      this.selectedId = null
      return
    }
    const index = pending.findIndex((b) => b.id === this.selectedId)
    const next = index < 0 ? 0 : (index + step + pending.length) % pending.length
    this.selectedId = pending[next]!.id
  }
}
