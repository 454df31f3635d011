// HTTP/event-stream client for the engine service. The event reader keeps
// a resume cursor so a reconnect continues from the last applied sequence
// number with no gaps.

import type { SessionEvent, StateSnapshot } from './types'

export type ChunkSource = (url: string) => AsyncIterable<string>

export interface CaptureOk {
  ok: true
  handle: number
}

export interface CaptureBusy {
  ok: false
  busy: true
  detail: string
}

export interface CaptureError {
  ok: false
  busy: false
  detail: string
}

export type CaptureOutcome = CaptureOk | CaptureBusy | CaptureError

export class ApiClient {
  constructor(private readonly base: string = '') {}

  async capture(image: Blob, instruments: string, filename = 'frame.jpg'): Promise<CaptureOutcome> {
    const body = new FormData()
    body.append('image', image, filename)
    body.append('instruments', instruments)
    const resp = await fetch(`${this.base}/capture`, { method: 'POST', body })
    const data = (await resp.json()) as Record<string, unknown>
    if (resp.status === 202) return { ok: true, handle: Number(data.handle) }
    if (resp.status === 409) {
      return { ok: false, busy: true, detail: String(data.detail ?? 'generation busy') }
    }
    return { ok: false, busy: false, detail: String(data.detail ?? data.error ?? resp.status) }
  }

  async state(): Promise<StateSnapshot | null> {
    const resp = await fetch(`${this.base}/state`)
    if (!resp.ok) return null
    return (await resp.json()) as StateSnapshot
  }

  async control(body: Record<string, unknown>): Promise<Response> {
    return fetch(`${this.base}/control`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    })
  }

  async exportWav(): Promise<Blob | null> {
    const resp = await this.control({ op: 'export' })
    if (!resp.ok) return null
    return resp.blob()
  }
}

/** Split an incoming chunk stream into complete newline-delimited records. */
export async function* ndjsonRecords(chunks: AsyncIterable<string>): AsyncGenerator<SessionEvent> {
  let buffer = ''
  for await (const chunk of chunks) {
    buffer += chunk
    let newline = buffer.indexOf('\n')
    while (newline >= 0) {
      const line = buffer.slice(0, newline).trim()
      buffer = buffer.slice(newline + 1)
      if (line) yield JSON.parse(line) as SessionEvent
      newline = buffer.indexOf('\n')
    }
  }
  const rest = buffer.trim()
  if (rest) yield JSON.parse(rest) as SessionEvent
}

export async function* streamResponseText(resp: Response): AsyncIterable<string> {
  if (!resp.body) return
  const reader = resp.body.getReader()
  const decoder = new TextDecoder()
  for (;;) {
    const { done, value } = await reader.read()
    if (done) break
    yield decoder.decode(value, { stream: true })
  }
}

export interface StreamStats {
  connections: number
  gaps: number
}

/**
 * Consume the event stream, reconnecting with `since=lastSeq+1` until
 * `stopAfterIdle` connections yield nothing new. Events are delivered to
 * `onEvent` exactly once, in order; a sequence gap is counted (and the
 * record still delivered) so callers can surface protocol violations.
 */
export async function consumeEventStream(
  source: ChunkSource,
  onEvent: (event: SessionEvent) => void,
  options: { follow?: boolean; maxReconnects?: number } = {},
): Promise<StreamStats> {
  const { follow = false, maxReconnects = 3 } = options
  let lastSeq = -1
  const stats: StreamStats = { connections: 0, gaps: 0 }
  for (let attempt = 0; attempt <= maxReconnects; attempt++) {
    stats.connections++
    const url = `/events?since=${lastSeq + 1}&follow=${follow}`
    let sawNew = false
    try {
      for await (const event of ndjsonRecords(source(url))) {
        if (event.seq <= lastSeq) continue
        if (lastSeq >= 0 && event.seq !== lastSeq + 1) stats.gaps++
        lastSeq = event.seq
        sawNew = true
        onEvent(event)
      }
    } catch {
      continue // dropped connection: reconnect from the cursor
    }
    if (!sawNew) break
  }
  return stats
}
