/**
 * Transports deliver protocol frames. The production transport is a
 * WebSocket carrying the exact newline-delimited JSON frames from
 * protocol.md (bridge it to the TCP server with any WS-to-TCP relay);
 * tests replay recorded frames instead.
 */

import { FrameSplitter } from './protocol'

export interface Transport {
  send(frame: string): void
  onFrame(callback: (frame: string) => void): void
  close(): void
}

export class WebSocketTransport implements Transport {
  private socket: WebSocket
  private splitter = new FrameSplitter()
  private callbacks: ((frame: string) => void)[] = []

  constructor(url: string) {
    this.socket = new WebSocket(url)
    this.socket.onmessage = (event) => {
      for (const frame of this.splitter.push(String(event.data))) {
        for (const cb of this.callbacks) cb(frame)
      }
    }
  }

  send(frame: string): void {
    this.socket.send(frame)
  }

  onFrame(callback: (frame: string) => void): void {
    this.callbacks.push(callback)
  }

  close(): void {
    this.socket.close()
  }
}

/**
 * Replays a recorded server transcript. `step()` delivers the next frame;
 * everything the client sends is captured with the phase-relevant context
 * left to the caller to assert on.
 */
export class ReplayTransport implements Transport {
  readonly sent: string[] = []
  private callbacks: ((frame: string) => void)[] = []
  private cursor = 0

  constructor(private frames: string[]) {}

  send(frame: string): void {
    this.sent.push(frame)
  }

  onFrame(callback: (frame: string) => void): void {
    this.callbacks.push(callback)
  }

  close(): void {}

  get exhausted(): boolean {
    return this.cursor >= this.frames.length
  }

  /** Deliver the next recorded frame; returns it, or null when done. */
  step(): string | null {
    if (this.exhausted) return null
    const frame = this.frames[this.cursor++]
    for (const cb of this.callbacks) cb(frame)
    return frame
  }
}
