// Wire types mirroring the engine's HTTP/event contract.

export type EventKind =
  | 'capture'
  | 'caption_ready'
  | 'generation_ready'
  | 'section_scheduled'
  | 'mix_submitted'
  | 'swap_committed'
  | 'error'
  | 'control'

export interface SessionEvent {
  seq: number
  kind: EventKind
  at: number
  payload: Record<string, unknown>
}

export interface SectionView {
  index: number
  captureIndex: number
  role: string
  startTime: number
  nominalStart: number
  lengthSeconds: number
  barCount: number
  family: string
}

export interface JobView {
  taskId: string
  kind: string
  status: 'processing' | 'delivered' | 'failed'
}

export interface SwapView {
  reason: string
  boundary: number
  taskId: string
}

export interface StateSnapshot {
  session: {
    id: string
    bpm: number | null
    genre: string | null
    auto_mix: boolean
    t_bar: number | null
    crossfade_seconds: number | null
  }
  sections: Array<{
    index: number
    role: string
    start_time: number
    nominal_start: number
    length_seconds: number
    bar_count: number
    prompt: string
    family: string
  }>
  jobs: Array<{ task_id: string; kind: string; status: string }>
  display: {
    tempo: number
    genre: string
    section_role: string
    audio_level: number
    led_mask: number
  }
  playhead: number
  pending_captures: number
  events_seq: number
  underruns: number
}

export const INSTRUMENTS = ['keys', 'guitar', 'bass', 'percussion'] as const
export type Instrument = (typeof INSTRUMENTS)[number]
