import { describe, expect, it } from 'vitest'

import { decodeFrame, encodeFrame, FrameSplitter } from '../src/protocol'

describe('frame codec', () => {
  it('encodes client messages as single newline-terminated lines', () => {
    const frame = encodeFrame({ type: 'POST_ORDER', side: 'BID', price_cents: 95, quantity: 1 })
    expect(frame.endsWith('\n')).toBe(true)
    expect(frame.slice(0, -1).includes('\n')).toBe(false)
    expect(JSON.parse(frame)).toEqual({
      type: 'POST_ORDER',
      side: 'BID',
      price_cents: 95,
      quantity: 1,
    })
  })

  it('decodes server frames', () => {
    const msg = decodeFrame('{"session_id":"s","trader_id":"t1","type":"WELCOME"}\n')
    expect(msg).toEqual({ type: 'WELCOME', trader_id: 't1', session_id: 's' })
  })

  it('tolerates unknown fields and ignores unknown types', () => {
    const msg = decodeFrame('{"type":"WELCOME","trader_id":"t1","session_id":"s","hat":"tall"}')
    expect(msg && msg.type).toBe('WELCOME')
    expect(decodeFrame('{"type":"SOMETHING_NEW","x":1}')).toBeNull()
  })

  it('throws on malformed frames', () => {
    expect(() => decodeFrame('{"type":')).toThrow()
    expect(() => decodeFrame('')).toThrow()
    expect(() => decodeFrame('[1,2]')).toThrow()
  })
})

describe('frame splitter', () => {
  it('reassembles frames across chunk boundaries', () => {
    const splitter = new FrameSplitter()
    expect(splitter.push('{"type":"PI')).toEqual([])
    expect(splitter.push('NG"}\n{"type":"PING"}\n{"ty')).toEqual(['{"type":"PING"}', '{"type":"PING"}'])
    expect(splitter.push('pe":"PING"}\n')).toEqual(['{"type":"PING"}'])
  })
})
