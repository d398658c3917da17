// Queue store: pagination, selection, and decision flow. All review
// states shown to the user come from service responses; the store only
// caches what the server said.

import type {
  DecisionResponse,
  ListParams,
  ReviewApi,
  ReviewState,
  SampleDetail,
  SampleSummary,
  TurnModel,
  Verdict,
} from './types.js'

export interface QueueFilter {
  state?: ReviewState
  kind?: string
  dataset_id?: string
  recipe?: string
}

export interface QueueState {
  items: SampleSummary[]
  pageIndex: number
  hasNext: boolean
  totalMatched: number
  counts: Record<ReviewState, number>
  current: SampleDetail | null
  error: string | null
  loading: boolean
}

type Listener = (state: QueueState) => void

const EMPTY_COUNTS: Record<ReviewState, number> = {
  pending: 0,
  accepted: 0,
  rejected: 0,
  edited: 0,
}

export class QueueStore {
  private state: QueueState = {
    items: [],
    pageIndex: 0,
    hasNext: false,
    totalMatched: 0,
    counts: { ...EMPTY_COUNTS },
    current: null,
    error: null,
    loading: false,
  }

  /** cursor that opens page i; page 0 starts from the beginning */
  private cursors: (string | undefined)[] = [undefined]
  private filter: QueueFilter = {}
  private listeners: Listener[] = []

  constructor(
    private readonly api: ReviewApi,
    readonly pageSize = 10,
    public reviewer = 'curator',
  ) {}

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener)
    listener(this.snapshot())
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener)
    }
  }

  snapshot(): QueueState {
    return { ...this.state, items: [...this.state.items], counts: { ...this.state.counts } }
  }

  private emit(patch: Partial<QueueState>): void {
    this.state = { ...this.state, ...patch }
    const snapshot = this.snapshot()
    for (const listener of this.listeners) listener(snapshot)
  }

  async setFilter(filter: QueueFilter): Promise<void> {
    this.filter = filter
    this.cursors = [undefined]
    await this.loadPage(0)
  }

  async loadPage(index: number): Promise<void> {
    const cursor = this.cursors[index]
    if (index > 0 && cursor === undefined) return
    this.emit({ loading: true, error: null })
    try {
      const params: ListParams = { ...this.filter, page_size: this.pageSize }
      if (cursor !== undefined) params.cursor = cursor
      const page = await this.api.listSamples(params)
      this.cursors[index + 1] = page.next_cursor ?? undefined
      this.emit({
        items: page.items,
        pageIndex: index,
        hasNext: page.next_cursor !== null,
        totalMatched: page.total_matched,
        counts: page.counts,
        loading: false,
      })
    } catch (error) {
      this.emit({ loading: false, error: describe(error) })
    }
  }

  async nextPage(): Promise<void> {
    if (this.state.hasNext) await this.loadPage(this.state.pageIndex + 1)
  }

  async prevPage(): Promise<void> {
    if (this.state.pageIndex > 0) await this.loadPage(this.state.pageIndex - 1)
  }

  async open(sampleId: string): Promise<void> {
    this.emit({ loading: true, error: null })
    try {
      const detail = await this.api.getSample(sampleId)
      this.emit({ current: detail, loading: false })
    } catch (error) {
      this.emit({ loading: false, error: describe(error) })
    }
  }

  async openByIndex(index: number): Promise<void> {
    const item = this.state.items[index]
    if (item) await this.open(item.sample_id)
  }

  /**
   * Submit a decision for the open sample. The queue row and badge are
   * updated optimistically and reconciled with (or rolled back to) what
   * the server answers.
   */
  async decide(verdict: Verdict, editedTurns?: TurnModel[]): Promise<DecisionResponse | null> {
    const current = this.state.current
    if (!current) return null
    const before = this.snapshot()
    const optimistic: ReviewState =
      verdict === 'accept' ? 'accepted' : verdict === 'reject' ? 'rejected' : 'edited'
    this.applyState(current.sample_id, optimistic, before)
    try {
      const response = await this.api.postDecision({
        sample_id: current.sample_id,
        verdict,
        reviewer: this.reviewer,
        edited_turns: editedTurns ?? null,
      })
      // reconcile with the authoritative state
      this.applyState(current.sample_id, response.review_state, before)
      await this.advance(current.sample_id)
      return response
    } catch (error) {
      this.emit({ ...before, error: describe(error) })
      return null
    }
  }

  /** Set one sample's state, recomputing counts as a delta from the
   * pre-decision snapshot so optimistic apply and server reconcile are
   * both idempotent. */
  private applyState(sampleId: string, state: ReviewState, base: QueueState): void {
    const items = this.state.items.map((item) =>
      item.sample_id === sampleId ? { ...item, review_state: state } : item,
    )
    const previous =
      base.items.find((i) => i.sample_id === sampleId)?.review_state ??
      (base.current?.sample_id === sampleId ? base.current.review_state : undefined)
    const counts = { ...base.counts }
    if (previous && previous !== state) {
      counts[previous] = Math.max(0, counts[previous] - 1)
      counts[state] = counts[state] + 1
    }
    const current =
      this.state.current && this.state.current.sample_id === sampleId
        ? { ...this.state.current, review_state: state }
        : this.state.current
    this.emit({ items, counts, current })
  }

  /** Move to the next still-pending sample after a decision. */
  private async advance(decidedId: string): Promise<void> {
    const index = this.state.items.findIndex((i) => i.sample_id === decidedId)
    const next = this.state.items.slice(index + 1).find((i) => i.review_state === 'pending')
    if (next) {
      await this.open(next.sample_id)
      return
    }
    if (this.state.hasNext) {
      await this.nextPage()
      const candidate = this.state.items.find((i) => i.review_state === 'pending')
      if (candidate) await this.open(candidate.sample_id)
    }
  }
}

function describe(error: unknown): string {
  if (error instanceof Error) return error.message
  return String(error)
}
