/**
 * Browser entry point: mounts the client into #app and wires DOM events.
 *
 * Connect with ?ws=ws://HOST:PORT&token=seat-N. The WebSocket endpoint is
 * any WS-to-TCP bridge in front of the session server (see protocol.md).
 */

import { Side } from './protocol'
import { TraderClient } from './client'
import { render } from './views'
import { WebSocketTransport } from './transport'

function mount(): void {
  const root = document.getElementById('app')
  if (root === null) throw new Error('missing #app element')
  const params = new URLSearchParams(window.location.search)
  const url = params.get('ws') ?? 'ws://localhost:9000'
  const token = params.get('token') ?? 'seat-1'
  let dollars = false

  const transport = new WebSocketTransport(url)
  const client = new TraderClient(transport, () => {
    root.innerHTML = render(client.state, dollars)
  })
  client.join(token)

  // cosmetic countdown; phase changes come from the server only
  window.setInterval(() => {
    client.state.tick(1)
    const el = document.getElementById('countdown')
    if (el !== null) el.textContent = `${Math.ceil(client.state.countdown)}s`
  }, 1000)

  root.addEventListener('click', (event) => {
    const target = event.target as HTMLElement
    if (target.id === 'submit-questionnaire') {
      try {
        client.submitQuestionnaire()
      } catch {
        /* button enabled only when valid; double-click safe */
      }
      root.innerHTML = render(client.state, dollars)
    } else if (target.id === 'submit-order') {
      event.preventDefault()
      const side = (document.getElementById('order-side') as HTMLSelectElement).value as Side
      const price = Number((document.getElementById('order-price') as HTMLInputElement).value)
      const qty = Number((document.getElementById('order-qty') as HTMLInputElement).value)
      const problem = client.state.orderProblem(side, price, qty)
      if (problem !== null) {
        client.state.lastReject = { reason: 'blocked', detail: problem }
      } else {
        client.postOrder(side, price, qty)
      }
      root.innerHTML = render(client.state, dollars)
    } else if (target.dataset.cancelOrder !== undefined) {
      client.cancelOrder(Number(target.dataset.cancelOrder))
    } else if (target.id === 'toggle-dollars') {
      dollars = !dollars
      root.innerHTML = render(client.state, dollars)
    }
  })

  root.addEventListener('input', (event) => {
    const target = event.target as HTMLInputElement
    if (target.dataset.declaredIndex !== undefined) {
      const value = target.value === '' ? null : Number(target.value)
      client.state.setDeclared(Number(target.dataset.declaredIndex), value)
      const button = document.getElementById('submit-questionnaire') as HTMLButtonElement | null
      if (button !== null) button.disabled = client.state.questionnaireProblem() !== null
    } else if (target.dataset.ratingItem !== undefined) {
      client.state.setRating(target.dataset.ratingItem, Number(target.value))
      const button = document.getElementById('submit-questionnaire') as HTMLButtonElement | null
      if (button !== null) button.disabled = client.state.questionnaireProblem() !== null
    }
  })
}

if (typeof document !== 'undefined') {
  window.addEventListener('DOMContentLoaded', mount)
}
