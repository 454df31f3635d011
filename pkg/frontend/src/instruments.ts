// Instrument picker model: an ordered pick of 1 to 3 distinct instruments,
// enforced client-side before anything is submitted.

import { INSTRUMENTS, type Instrument } from './types'

export const MAX_PICK = 3

export interface PickResult {
  selection: Instrument[]
  changed: boolean
}

export function togglePick(selection: Instrument[], name: Instrument): PickResult {
  if (!INSTRUMENTS.includes(name)) return { selection, changed: false }
  if (selection.includes(name)) {
    return { selection: selection.filter((i) => i !== name), changed: true }
  }
  if (selection.length >= MAX_PICK) {
    return { selection, changed: false } // cap: fourth pick is refused
  }
  return { selection: [...selection, name], changed: true }
}

export function canSubmit(selection: Instrument[]): boolean {
  return selection.length >= 1 && selection.length <= MAX_PICK
}

export function selectionParam(selection: Instrument[]): string {
  return selection.join(',')
}
