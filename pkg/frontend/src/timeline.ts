// Pure timeline layout: sections and swaps to positioned blocks on a bar
// grid. Section starts are taken exactly as the server reports them; the
// client never re-quantizes.

import { sessionLength, type SessionView } from './projection'

export interface TimelineBlock {
  index: number
  captureIndex: number
  role: string
  family: string
  startSeconds: number
  lengthSeconds: number
  startBars: number
  widthBars: number
  badges: string[]
}

export interface SwapMarker {
  reason: string
  boundarySeconds: number
  boundaryBars: number
}

export interface TimelineLayout {
  totalBars: number
  barSeconds: number
  blocks: TimelineBlock[]
  swapMarkers: SwapMarker[]
  pendingCount: number
}

export function layoutTimeline(view: SessionView): TimelineLayout {
  const barSeconds = view.tBar ?? 0
  const blocks: TimelineBlock[] = view.sections.map((section, i) => {
    const nextStart = view.sections[i + 1]?.startTime
    const audible = nextStart !== undefined
      ? nextStart - section.startTime
      : section.lengthSeconds
    const badges: string[] = []
    if (section.family === 'power_law') badges.push('soft-fade')
    return {
      index: section.index,
      captureIndex: section.captureIndex,
      role: section.role,
      family: section.family,
      startSeconds: section.startTime,
      lengthSeconds: audible,
      startBars: barSeconds > 0 ? section.startTime / barSeconds : 0,
      widthBars: barSeconds > 0 ? audible / barSeconds : 0,
      badges,
    }
  })
  const swapMarkers: SwapMarker[] = view.swaps.map((swap) => ({
    reason: swap.reason,
    boundarySeconds: swap.boundary,
    boundaryBars: barSeconds > 0 ? swap.boundary / barSeconds : 0,
  }))
  for (const marker of swapMarkers) {
    const block = blocks.find(
      (b) =>
        marker.boundarySeconds >= b.startSeconds &&
        marker.boundarySeconds < b.startSeconds + b.lengthSeconds,
    )
    const badge = marker.reason === 'mastered' ? 'mastered' : 'mixed'
    if (block && !block.badges.includes(badge)) block.badges.push(badge)
  }
  const total = sessionLength(view)
  return {
    totalBars: barSeconds > 0 ? total / barSeconds : 0,
    barSeconds,
    blocks,
    swapMarkers,
    pendingCount: view.pendingCaptures.length,
  }
}

/** Client-side playhead interpolation between authoritative snapshots. */
export function interpolatePlayhead(
  snapshotPlayhead: number,
  snapshotAtMs: number,
  nowMs: number,
  loopLength: number,
): number {
  if (loopLength <= 0) return 0
  const advanced = snapshotPlayhead + (nowMs - snapshotAtMs) / 1000
  return ((advanced % loopLength) + loopLength) % loopLength
}
