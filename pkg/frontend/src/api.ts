// Thin typed client for the /v1 review API.

import type {
  DecisionRequest,
  DecisionResponse,
  ListParams,
  ReviewApi,
  SampleDetail,
  SampleListResponse,
} from './types.js'

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message)
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>

export class HttpReviewApi implements ReviewApi {
  constructor(
    private readonly baseUrl: string = '',
    private token: string | null = null,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  setToken(token: string | null): void {
    this.token = token
  }

  private headers(): Record<string, string> {
    const headers: Record<string, string> = { 'Content-Type': 'application/json' }
    if (this.token) headers['Authorization'] = `Bearer ${this.token}`
    return headers
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      ...init,
      headers: { ...this.headers(), ...(init?.headers ?? {}) },
    })
    if (!response.ok) {
      let code = 'error'
      let message = `${response.status} ${response.statusText}`
      try {
        const body = await response.json()
        if (body && typeof body === 'object') {
          code = body.code ?? code
          message = body.message ?? message
        }
      } catch {
        // non-JSON error body: keep the status text
      }
      throw new ApiError(response.status, code, message)
    }
    return response.json() as Promise<T>
  }

  listSamples(params: ListParams): Promise<SampleListResponse> {
    const query = new URLSearchParams()
    for (const [key, value] of Object.entries(params)) {
      if (value !== undefined && value !== null) query.set(key, String(value))
    }
    const suffix = query.toString() ? `?${query.toString()}` : ''
    return this.request(`/v1/samples${suffix}`)
  }

  getSample(sampleId: string): Promise<SampleDetail> {
    return this.request(`/v1/samples/${sampleId}`)
  }

  postDecision(request: DecisionRequest): Promise<DecisionResponse> {
    return this.request('/v1/decisions', { method: 'POST', body: JSON.stringify(request) })
  }

  health(): Promise<{ status: string; samples: number }> {
    return this.request('/v1/healthz')
  }

  async fetchMediaBlob(mediaUrl: string): Promise<string> {
    const response = await this.fetchImpl(`${this.baseUrl}${mediaUrl}`, {
      headers: this.headers(),
    })
    if (!response.ok) throw new ApiError(response.status, 'media_error', 'cannot load media')
    return URL.createObjectURL(await response.blob())
  }
}
