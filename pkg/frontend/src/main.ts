// Browser bootstrap: wires the queue store to the DOM. Everything testable
// lives in the sibling modules; this file only renders and dispatches.

import { HttpReviewApi } from './api.js'
import { validateBoxAnswer } from './grammar.js'
import { resolveKey } from './keyboard.js'
import { overlayRects } from './overlay.js'
import { QueueStore } from './state.js'
import type { QueueState } from './state.js'
import type { ReviewState, SampleDetail, TurnModel } from './types.js'

const BOX_KINDS = new Set(['visual_grounding', 'phrase_grounding'])

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag)
  if (className) node.className = className
  if (text !== undefined) node.textContent = text
  return node
}

function badge(state: ReviewState): HTMLElement {
  return el('span', `badge badge-${state}`, state)
}

class ReviewApp {
  private readonly api: HttpReviewApi
  private readonly store: QueueStore
  private editing = false

  constructor(private readonly root: HTMLElement) {
    const token = window.localStorage.getItem('forge-token')
    this.api = new HttpReviewApi('', token)
    this.store = new QueueStore(this.api, 10,
      window.localStorage.getItem('forge-reviewer') ?? 'curator')
    this.store.subscribe((state) => this.render(state))
    window.addEventListener('keydown', (event) => this.onKey(event))
  }

  async start(): Promise<void> {
    await this.store.loadPage(0)
  }

  private onKey(event: KeyboardEvent): void {
    if (event.target instanceof HTMLInputElement || event.target instanceof HTMLTextAreaElement) {
      return
    }
    const action = resolveKey(event.key, this.editing)
    if (!action) return
    event.preventDefault()
    if (action === 'accept') void this.store.decide('accept')
    else if (action === 'reject') void this.store.decide('reject')
    else if (action === 'edit') this.openEditor()
    else if (action === 'next-page') void this.store.nextPage()
    else if (action === 'prev-page') void this.store.prevPage()
    else if (action === 'next-sample' || action === 'prev-sample') {
      const state = this.store.snapshot()
      const index = state.items.findIndex(
        (item) => item.sample_id === state.current?.sample_id,
      )
      const target = action === 'next-sample' ? index + 1 : index - 1
      void this.store.openByIndex(Math.max(0, target))
    }
  }

  private render(state: QueueState): void {
    this.root.replaceChildren()
    const header = el('header')
    header.append(el('h1', undefined, 'sample review'))
    const countsBar = el('div', 'counts')
    for (const key of ['pending', 'accepted', 'rejected', 'edited'] as const) {
      const chip = el('span', `count count-${key}`, `${key}: ${state.counts[key]}`)
      countsBar.append(chip)
    }
    header.append(countsBar)
    if (state.error) header.append(el('div', 'error-banner', state.error))
    this.root.append(header)

    const layout = el('main', 'layout')
    layout.append(this.renderQueue(state), this.renderDetail(state))
    this.root.append(layout)
  }

  private renderQueue(state: QueueState): HTMLElement {
    const panel = el('section', 'queue')
    const list = el('ul', 'queue-list')
    if (state.items.length === 0 && !state.loading) {
      panel.append(el('p', 'empty', 'no samples match this filter'))
    }
    for (const item of state.items) {
      const row = el('li', 'queue-row')
      if (item.sample_id === state.current?.sample_id) row.classList.add('selected')
      row.append(
        el('code', 'sid', item.sample_id.slice(0, 10)),
        el('span', 'kinds', item.kinds.join('+')),
        badge(item.review_state),
      )
      row.addEventListener('click', () => void this.store.open(item.sample_id))
      list.append(row)
    }
    panel.append(list)
    const nav = el('div', 'pager')
    const prev = el('button', undefined, 'prev (p)')
    prev.disabled = state.pageIndex === 0
    prev.addEventListener('click', () => void this.store.prevPage())
    const next = el('button', undefined, 'next (n)')
    next.disabled = !state.hasNext
    next.addEventListener('click', () => void this.store.nextPage())
    nav.append(prev, el('span', undefined, `page ${state.pageIndex + 1}`), next)
    panel.append(nav)
    return panel
  }

  private renderDetail(state: QueueState): HTMLElement {
    const panel = el('section', 'detail')
    const sample = state.current
    if (!sample) {
      panel.append(el('p', 'empty', 'select a sample (or press j)'))
      return panel
    }
    const head = el('div', 'detail-head')
    head.append(el('code', undefined, sample.sample_id.slice(0, 16)), badge(sample.review_state))
    panel.append(head)
    panel.append(this.renderMedia(sample))
    for (const turn of sample.turns) {
      const block = el('div', 'turn')
      block.append(el('div', 'instruction', turn.instruction))
      block.append(el('div', 'answer', turn.answer))
      panel.append(block)
    }
    const controls = el('div', 'controls')
    for (const [label, verdict] of [
      ['accept (a)', 'accept'],
      ['reject (r)', 'reject'],
    ] as const) {
      const button = el('button', `verdict-${verdict}`, label)
      button.addEventListener('click', () => void this.store.decide(verdict))
      controls.append(button)
    }
    const editButton = el('button', 'verdict-edit', 'edit (e)')
    editButton.addEventListener('click', () => this.openEditor())
    controls.append(editButton)
    panel.append(controls)
    return panel
  }

  private renderMedia(sample: SampleDetail): HTMLElement {
    const frame = el('div', 'media-frame')
    const image = el('img') as HTMLImageElement
    image.alt = sample.media.path
    void this.api
      .fetchMediaBlob(sample.media_url)
      .then((url) => {
        image.src = url
      })
      .catch(() => {
        frame.append(el('p', 'empty', `media unavailable: ${sample.media.path}`))
      })
    image.addEventListener('load', () => {
      const boxes = sample.turns.flatMap((turn) => turn.boxes)
      for (const rect of overlayRects(boxes, image.clientWidth, image.clientHeight)) {
        const overlay = el('div', 'box-overlay')
        overlay.style.left = `${rect.left}px`
        overlay.style.top = `${rect.top}px`
        overlay.style.width = `${rect.width}px`
        overlay.style.height = `${rect.height}px`
        frame.append(overlay)
      }
    })
    frame.append(image)
    return frame
  }

  private openEditor(): void {
    const sample = this.store.snapshot().current
    if (!sample || this.editing) return
    this.editing = true
    const dialog = el('div', 'editor')
    const fields: HTMLTextAreaElement[] = []
    const errorBox = el('div', 'editor-errors')
    for (const turn of sample.turns) {
      dialog.append(el('div', 'instruction', turn.instruction))
      const area = el('textarea') as HTMLTextAreaElement
      area.value = turn.answer
      fields.push(area)
      dialog.append(area)
    }
    const submit = el('button', undefined, 'submit edit')
    submit.addEventListener('click', () => {
      const errors: string[] = []
      const turns: TurnModel[] = sample.turns.map((turn, index) => {
        const answer = fields[index]?.value ?? turn.answer
        if (BOX_KINDS.has(turn.kind)) {
          for (const problem of validateBoxAnswer(answer)) {
            errors.push(`turn ${index + 1}: ${problem}`)
          }
        }
        return {
          kind: turn.kind,
          instruction: turn.instruction,
          answer,
          identifier: turn.identifier ?? null,
        }
      })
      if (errors.length > 0) {
        errorBox.replaceChildren(...errors.map((err) => el('p', 'error', err)))
        return
      }
      this.editing = false
      dialog.remove()
      void this.store.decide('edit', turns)
    })
    const cancel = el('button', undefined, 'cancel')
    cancel.addEventListener('click', () => {
      this.editing = false
      dialog.remove()
    })
    dialog.append(errorBox, submit, cancel)
    this.root.append(dialog)
  }
}

if (typeof document !== 'undefined') {
  const root = document.getElementById('app')
  if (root) void new ReviewApp(root).start()
}
