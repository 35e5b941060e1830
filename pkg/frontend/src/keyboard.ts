// Keyboard bindings for the review flow. Ignores events while the user is
// typing in an input so shortcuts never eat form text.

export interface KeyboardActions {
  onAccept: () => void
  onReject: () => void
  onNext: () => void
  onPrevious: () => void
  onZoomIn: () => void
  onZoomOut: () => void
  onZoomReset: () => void
}

export function attachKeyboard(target: Document, actions: KeyboardActions): () => void {
  const handler = (event: KeyboardEvent) => {
    const el = event.target as HTMLElement | null
    if (el && (el.tagName === 'INPUT' || el.tagName === 'TEXTAREA' || el.isContentEditable)) {
      return
    }
    switch (event.key) {
      case 'a':
        event.preventDefault()
        actions.onAccept()
        break
      case 'r':
        event.preventDefault()
        actions.onReject()
        break
      case 'n':
      case 'ArrowDown':
        event.preventDefault()
        actions.onNext()
        break
      case 'p':
      case 'ArrowUp':
        event.preventDefault()
        actions.onPrevious()
        break
      case '+':
      case '=':
        actions.onZoomIn()
        break
      case '-':
        actions.onZoomOut()
        break
      case '0':
        actions.onZoomReset()
        break
    }
  }
  target.addEventListener('keydown', handler)
  return () => target.removeEventListener('keydown', handler)
}
