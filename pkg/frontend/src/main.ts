// Browser console wiring: camera or file frames in, captures out, and a
// live timeline that is a pure projection of the server event stream.

import { ApiClient, consumeEventStream, streamResponseText } from './apiClient'
import { canSubmit, selectionParam, togglePick } from './instruments'
import { applyEvent, emptyView, sessionLength, type SessionView } from './projection'
import { interpolatePlayhead, layoutTimeline } from './timeline'
import { INSTRUMENTS, type Instrument } from './types'

const api = new ApiClient('')

let view: SessionView = emptyView()
let selection: Instrument[] = ['keys']
let pendingLocal = 0 // captures submitted and not yet visible in the stream
let snapshotPlayhead = 0
let snapshotAtMs = 0

const app = document.querySelector<HTMLDivElement>('#app')
if (!app) throw new Error('missing #app root')

app.innerHTML = `
  <header>
    <h1>sceneloop console</h1>
    <div id="display" class="display"></div>
  </header>
  <section class="capture">
    <video id="camera" autoplay playsinline muted width="320" height="180"></video>
    <canvas id="grab" width="320" height="180" hidden></canvas>
    <div>
      <div id="instruments" class="instruments"></div>
      <input id="file" type="file" accept="image/jpeg" />
      <button id="shoot">capture frame</button>
      <span id="pending" class="pending"></span>
    </div>
  </section>
  <section>
    <div id="timeline" class="timeline"></div>
    <div id="playhead-readout"></div>
  </section>
  <section class="controls">
    <label><input id="automix" type="checkbox" /> auto-mix</label>
    <button id="master">master</button>
    <button id="export">export wav</button>
    <span id="toast" class="toast"></span>
  </section>
  <pre id="errors" class="errors"></pre>
`

const el = {
  camera: document.querySelector<HTMLVideoElement>('#camera')!,
  grab: document.querySelector<HTMLCanvasElement>('#grab')!,
  instruments: document.querySelector<HTMLDivElement>('#instruments')!,
  file: document.querySelector<HTMLInputElement>('#file')!,
  shoot: document.querySelector<HTMLButtonElement>('#shoot')!,
  pending: document.querySelector<HTMLSpanElement>('#pending')!,
  timeline: document.querySelector<HTMLDivElement>('#timeline')!,
  playheadReadout: document.querySelector<HTMLDivElement>('#playhead-readout')!,
  automix: document.querySelector<HTMLInputElement>('#automix')!,
  master: document.querySelector<HTMLButtonElement>('#master')!,
  exportBtn: document.querySelector<HTMLButtonElement>('#export')!,
  toast: document.querySelector<HTMLSpanElement>('#toast')!,
  display: document.querySelector<HTMLDivElement>('#display')!,
  errors: document.querySelector<HTMLPreElement>('#errors')!,
}

function toast(message: string) {
  el.toast.textContent = message
  setTimeout(() => {
    if (el.toast.textContent === message) el.toast.textContent = ''
  }, 4000)
}

function renderInstruments() {
  el.instruments.innerHTML = ''
  for (const name of INSTRUMENTS) {
    const button = document.createElement('button')
    button.textContent = name
    button.className = selection.includes(name) ? 'picked' : ''
    button.onclick = () => {
      const result = togglePick(selection, name)
      if (!result.changed) toast('pick 1 to 3 instruments')
      selection = result.selection
      renderInstruments()
    }
    el.instruments.appendChild(button)
  }
  el.shoot.disabled = !canSubmit(selection)
}

function renderTimeline() {
  const layout = layoutTimeline(view)
  el.timeline.innerHTML = ''
  if (layout.barSeconds <= 0) {
    el.timeline.textContent = 'no sections yet: capture a frame'
    return
  }
  const barPx = 18
  el.timeline.style.width = `${Math.ceil(layout.totalBars) * barPx}px`
  for (const block of layout.blocks) {
    const div = document.createElement('div')
    div.className = `section role-${block.role}`
    div.style.left = `${block.startBars * barPx}px`
    div.style.width = `${block.widthBars * barPx}px`
    div.title = view.prompts[block.captureIndex] ?? ''
    div.textContent = `${block.index}: ${block.role}${block.badges.length ? ' [' + block.badges.join(',') + ']' : ''}`
    el.timeline.appendChild(div)
  }
  for (const marker of layout.swapMarkers) {
    const div = document.createElement('div')
    div.className = `swap swap-${marker.reason}`
    div.style.left = `${marker.boundaryBars * barPx}px`
    div.title = `${marker.reason} @ ${marker.boundarySeconds.toFixed(2)}s`
    el.timeline.appendChild(div)
  }
  const cursor = document.createElement('div')
  cursor.className = 'cursor'
  const playhead = interpolatePlayhead(
    snapshotPlayhead,
    snapshotAtMs,
    performance.now(),
    sessionLength(view),
  )
  cursor.style.left = `${(playhead / layout.barSeconds) * barPx}px`
  el.timeline.appendChild(cursor)
  el.playheadReadout.textContent = `playhead ${playhead.toFixed(2)}s / ${sessionLength(view).toFixed(2)}s`
}

function renderAll() {
  renderInstruments()
  renderTimeline()
  const pendingTotal = view.pendingCaptures.length + pendingLocal
  el.pending.textContent = pendingTotal > 0 ? `${pendingTotal} generating...` : ''
  el.automix.checked = view.autoMix
  el.errors.textContent = view.errors.map((e) => `${e.stage}: ${e.message}`).join('\n')
}

async function refreshDisplay() {
  const snapshot = await api.state()
  if (!snapshot) return
  snapshotPlayhead = snapshot.playhead
  snapshotAtMs = performance.now()
  const d = snapshot.display
  el.display.textContent = `${Math.round(d.tempo)} bpm | ${d.genre || '...'} | ${d.section_role} | level ${d.audio_level}`
}

async function startCamera() {
  if (!navigator.mediaDevices?.getUserMedia) return
  try {
    const stream = await navigator.mediaDevices.getUserMedia({ video: true, audio: false })
    el.camera.srcObject = stream
  } catch {
    /* fall back to file upload */
  }
}

function grabCameraFrame(): Promise<Blob | null> {
  const ctx = el.grab.getContext('2d')
  if (!ctx || !el.camera.srcObject) return Promise.resolve(null)
  ctx.drawImage(el.camera, 0, 0, el.grab.width, el.grab.height)
  return new Promise((resolve) => el.grab.toBlob(resolve, 'image/jpeg', 0.85))
}

async function submitCapture(image: Blob) {
  if (!canSubmit(selection)) {
    toast('pick 1 to 3 instruments')
    return
  }
  pendingLocal++
  renderAll()
  const outcome = await api.capture(image, selectionParam(selection))
  if (!outcome.ok) {
    pendingLocal--
    toast(outcome.busy ? 'generation busy' : outcome.detail) // selection preserved
    renderAll()
  }
}

el.shoot.onclick = async () => {
  const frame = await grabCameraFrame()
  if (frame) {
    await submitCapture(frame)
  } else {
    el.file.click()
  }
}

el.file.onchange = async () => {
  const file = el.file.files?.[0]
  if (file) await submitCapture(file)
  el.file.value = ''
}

el.automix.onchange = async () => {
  await api.control({ op: 'toggle_auto_mix', enabled: el.automix.checked })
}

el.master.onclick = async () => {
  const resp = await api.control({ op: 'request_master' })
  if (!resp.ok) toast('nothing to master yet')
}

el.exportBtn.onclick = async () => {
  const blob = await api.exportWav()
  if (!blob) {
    toast('nothing to export yet')
    return
  }
  const url = URL.createObjectURL(blob)
  const link = document.createElement('a')
  link.href = url
  link.download = 'session.wav'
  link.click()
  URL.revokeObjectURL(url)
}

async function followEvents() {
  for (;;) {
    await consumeEventStream(
      async function* (url) {
        const resp = await fetch(`${url}&timeout=25`)
        if (resp.status === 404) return // no session yet
        yield* streamResponseText(resp)
      },
      (event) => {
        if (event.kind === 'capture' && pendingLocal > 0) pendingLocal--
        view = applyEvent(view, event)
        renderAll()
      },
      { follow: true, maxReconnects: 0 },
    )
    await new Promise((resolve) => setTimeout(resolve, 500))
  }
}

renderAll()
void startCamera()
void followEvents()
setInterval(() => void refreshDisplay(), 1000)
setInterval(renderTimeline, 100)
