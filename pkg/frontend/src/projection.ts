// Pure projection of the server event stream into UI state.
//
// The view is a fold over events and nothing else: no local mutation ever
// lands here without a server event backing it, so replaying the same
// stream always rebuilds the same state.

import type { JobView, SectionView, SessionEvent, SwapView } from './types'

export interface SessionView {
  bpm: number | null
  tBar: number | null
  genre: string | null
  autoMix: boolean
  instruments: string[]
  sections: SectionView[]
  pendingCaptures: number[]
  jobs: JobView[]
  swaps: SwapView[]
  errors: Array<{ stage: string; message: string }>
  lastSeq: number
  prompts: Record<number, string>
}

export function emptyView(): SessionView {
  return {
    bpm: null,
    tBar: null,
    genre: null,
    autoMix: false,
    instruments: [],
    sections: [],
    pendingCaptures: [],
    jobs: [],
    swaps: [],
    errors: [],
    lastSeq: -1,
    prompts: {},
  }
}

function asNumber(value: unknown): number {
  return typeof value === 'number' ? value : Number(value)
}

export function applyEvent(view: SessionView, event: SessionEvent): SessionView {
  if (event.seq <= view.lastSeq) return view // already applied (resume overlap)
  const next: SessionView = {
    ...view,
    sections: [...view.sections],
    pendingCaptures: [...view.pendingCaptures],
    jobs: [...view.jobs],
    swaps: [...view.swaps],
    errors: [...view.errors],
    prompts: { ...view.prompts },
    lastSeq: event.seq,
  }
  const p = event.payload
  switch (event.kind) {
    case 'capture': {
      next.pendingCaptures.push(asNumber(p.index))
      next.instruments = (p.instruments as string[]) ?? next.instruments
      break
    }
    case 'caption_ready': {
      if (next.bpm === null) {
        const caption = p.caption as { bpm?: number; genre?: string } | undefined
        if (caption?.bpm) {
          next.bpm = caption.bpm
          next.tBar = 240 / caption.bpm
        }
        next.genre = caption?.genre ?? next.genre
      }
      next.prompts[asNumber(p.index)] = String(p.prompt ?? '')
      break
    }
    case 'generation_ready':
      break
    case 'section_scheduled': {
      const captureIndex = asNumber(p.capture_index)
      next.sections.push({
        index: asNumber(p.index),
        captureIndex,
        role: String(p.role ?? ''),
        startTime: asNumber(p.start_time),
        nominalStart: asNumber(p.nominal_start),
        lengthSeconds: asNumber(p.length_seconds),
        barCount: asNumber(p.bar_count),
        family: String(p.family ?? ''),
      })
      next.pendingCaptures = next.pendingCaptures.filter((i) => i !== captureIndex)
      break
    }
    case 'mix_submitted': {
      next.jobs.push({
        taskId: String(p.task_id ?? ''),
        kind: String(p.kind ?? ''),
        status: 'processing',
      })
      break
    }
    case 'swap_committed': {
      next.swaps.push({
        reason: String(p.reason ?? ''),
        boundary: asNumber(p.boundary),
        taskId: String(p.task_id ?? ''),
      })
      next.jobs = next.jobs.map((job) =>
        job.taskId === p.task_id ? { ...job, status: 'delivered' } : job,
      )
      break
    }
    case 'error': {
      next.errors.push({ stage: String(p.stage ?? ''), message: String(p.message ?? '') })
      if (typeof p.index === 'number') {
        next.pendingCaptures = next.pendingCaptures.filter((i) => i !== p.index)
      }
      next.jobs = next.jobs.map((job) =>
        p.stage === 'mix' && job.status === 'processing' ? { ...job, status: 'failed' } : job,
      )
      break
    }
    case 'control': {
      if (p.op === 'toggle_auto_mix') next.autoMix = Boolean(p.auto_mix)
      if (p.op === 'select_instruments') next.instruments = (p.instruments as string[]) ?? []
      break
    }
  }
  return next
}

export function project(events: SessionEvent[], base?: SessionView): SessionView {
  let view = base ?? emptyView()
  for (const event of events) view = applyEvent(view, event)
  return view
}

/** Session length in seconds: last downbeat plus its section's length. */
export function sessionLength(view: SessionView): number {
  const last = view.sections[view.sections.length - 1]
  return last ? last.startTime + last.lengthSeconds : 0
}
