// Mirrors of the /v1 API response and request bodies.

export type ReviewState = 'pending' | 'accepted' | 'rejected' | 'edited'
export type Verdict = 'accept' | 'reject' | 'edit'

export interface SampleSummary {
  sample_id: string
  dataset_id: string
  path: string
  kinds: string[]
  source_recipe: string
  review_state: ReviewState
  turn_count: number
  first_instruction: string
}

export interface SampleListResponse {
  items: SampleSummary[]
  next_cursor: string | null
  total_matched: number
  counts: Record<ReviewState, number>
}

export interface BoxModel {
  x1: number
  y1: number
  x2: number
  y2: number
}

export interface TurnModel {
  kind: string
  instruction: string
  answer: string
  identifier?: string | null
}

export interface TurnDetail extends TurnModel {
  boxes: BoxModel[]
}

export interface MediaModel {
  dataset_id: string
  media_kind: string
  path: string
  width: number
  height: number
  frame_paths?: string[] | null
}

export interface DecisionInfo {
  verdict: Verdict
  reviewer: string
  timestamp: string
  note?: string | null
}

export interface SampleDetail {
  sample_id: string
  media: MediaModel
  media_url: string
  turns: TurnDetail[]
  conversation_text: string
  stage_tags: string[]
  source_recipe: string
  review_state: ReviewState
  edited_from?: string | null
  latest_decision?: DecisionInfo | null
}

export interface DecisionRequest {
  sample_id: string
  verdict: Verdict
  reviewer: string
  edited_turns?: TurnModel[] | null
  note?: string | null
}

export interface DecisionResponse {
  sample_id: string
  review_state: ReviewState
  appended: boolean
}

export interface ListParams {
  state?: ReviewState
  kind?: string
  dataset_id?: string
  recipe?: string
  cursor?: string
  page_size?: number
}

export interface ReviewApi {
  listSamples(params: ListParams): Promise<SampleListResponse>
  getSample(sampleId: string): Promise<SampleDetail>
  postDecision(request: DecisionRequest): Promise<DecisionResponse>
  health(): Promise<{ status: string; samples: number }>
}
