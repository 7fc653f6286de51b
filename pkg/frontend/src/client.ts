/**
 * The trading client: a state machine fed by a transport.
 *
 * Every outbound message goes through a guard on the current state; an
 * out-of-phase or infeasible action throws locally and nothing is sent.
 * That makes the communication restriction structural: there is no code
 * path that emits anything but the protocol's order-flow messages.
 */

import { decodeFrame, encodeFrame, Side } from './protocol'
import { TraderState } from './state'
import type { Transport } from './transport'

export class TraderClient {
  readonly state = new TraderState()

  constructor(private transport: Transport, onUpdate?: (state: TraderState) => void) {
    transport.onFrame((frame) => {
      const msg = decodeFrame(frame)
      if (msg === null) return // unknown type: tolerated and ignored
      this.state.apply(msg)
      onUpdate?.(this.state)
    })
  }

  join(token: string): void {
    this.transport.send(encodeFrame({ type: 'HELLO', token }))
  }

  submitQuestionnaire(): void {
    this.transport.send(encodeFrame(this.state.buildQuestionnaire()))
  }

  postOrder(side: Side, priceCents: number, quantity = 1): void {
    this.transport.send(encodeFrame(this.state.buildOrder(side, priceCents, quantity)))
  }

  cancelOrder(orderId: number): void {
    this.transport.send(encodeFrame(this.state.buildCancel(orderId)))
  }

  ping(): void {
    this.transport.send(encodeFrame({ type: 'PING' }))
  }
}
