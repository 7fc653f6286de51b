/**
 * Protocol conformance against a recorded server transcript.
 *
 * The fixture is every frame seat t1 received during a real loopback
 * session (regenerate with scripts/record_transcript.py). The client must
 * walk QUESTIONNAIRE -> 10 x (TRADING -> SUMMARY) -> PAYOUT, never send
 * anything out of phase, and never hold another seat's identity in its
 * state.
 */

import { readFileSync } from 'node:fs'
import { fileURLToPath } from 'node:url'
import { describe, expect, it } from 'vitest'

import { TraderClient } from '../src/client'
import { ASSESSMENT_FORM } from '../src/state'
import type { Phase } from '../src/state'
import { ReplayTransport } from '../src/transport'

const FIXTURE = fileURLToPath(new URL('./fixtures/transcript.jsonl', import.meta.url))

function loadTranscript(): string[] {
  return readFileSync(FIXTURE, 'utf-8')
    .split('\n')
    .filter((line) => line.trim().length > 0)
}

function deepStrings(value: unknown, out: string[] = []): string[] {
  if (typeof value === 'string') out.push(value)
  else if (Array.isArray(value)) value.forEach((v) => deepStrings(v, out))
  else if (value !== null && typeof value === 'object') {
    Object.values(value as Record<string, unknown>).forEach((v) => deepStrings(v, out))
  }
  return out
}

describe('transcript conformance', () => {
  it('walks the full session with no out-of-phase submissions', () => {
    const frames = loadTranscript()
    const transport = new ReplayTransport(frames)
    const client = new TraderClient(transport)
    const state = client.state

    client.join('seat-1')
    expect(transport.sent).toHaveLength(1)

    const sentDuringPhase: Phase[] = ['CONNECTING'] // phase at each send; index 0 = HELLO
    let blockedAttempts = 0
    let ordersPosted = 0
    let lastPhase: Phase = state.phase

    while (!transport.exhausted) {
      transport.step()
      if (state.phase === lastPhase) continue
      lastPhase = state.phase

      if (state.phase === 'QUESTIONNAIRE') {
        const periods = state.config?.n_periods ?? 0
        expect(periods).toBe(10)
        for (let i = 0; i < periods; i++) state.setDeclared(i, 100 - 10 * i)
        for (const item of ASSESSMENT_FORM) state.setRating(item.id, 4)
        client.submitQuestionnaire()
        sentDuringPhase.push('QUESTIONNAIRE')
      } else if (state.phase === 'TRADING') {
        // a minimal affordable bid must pass the guard and go out
        expect(state.orderProblem('BID', 1, 1)).toBeNull()
        client.postOrder('BID', 1, 1)
        sentDuringPhase.push('TRADING')
        ordersPosted += 1
        // resubmitting the questionnaire mid-trading must be impossible
        expect(() => client.submitQuestionnaire()).toThrow()
      } else if (state.phase === 'SUMMARY') {
        const before = transport.sent.length
        expect(state.orderProblem('BID', 1, 1)).not.toBeNull()
        expect(() => client.postOrder('BID', 1, 1)).toThrow()
        expect(transport.sent.length).toBe(before) // nothing escaped
        blockedAttempts += 1
      }
    }

    // QUESTIONNAIRE -> 10 x (TRADING -> SUMMARY) -> PAYOUT
    const walked = state.phaseTrace.filter((p) =>
      ['QUESTIONNAIRE', 'TRADING', 'SUMMARY', 'PAYOUT'].includes(p),
    )
    const expected: Phase[] = ['QUESTIONNAIRE']
    for (let t = 0; t < 10; t++) expected.push('TRADING', 'SUMMARY')
    expected.push('PAYOUT')
    expect(walked).toEqual(expected)
    expect(state.phase).toBe('PAYOUT')
    expect(ordersPosted).toBe(10)
    expect(blockedAttempts).toBe(10)

    // every frame sent after HELLO went out in a legal phase
    expect(sentDuringPhase.slice(1)).toEqual([
      'QUESTIONNAIRE',
      ...Array(10).fill('TRADING'),
    ])
    expect(transport.sent).toHaveLength(12) // HELLO + questionnaire + 10 orders

    // payout arithmetic from the live server: cash + show-up fee
    expect(state.payout).not.toBeNull()
    expect(state.payout!.total).toBe(state.payout!.cash + state.payout!.showupFee)
  })

  it('client state never contains another seat identity', () => {
    const frames = loadTranscript()
    const transport = new ReplayTransport(frames)
    const client = new TraderClient(transport)
    client.join('seat-1')
    while (!transport.exhausted) {
      transport.step()
      const strings = deepStrings(JSON.parse(JSON.stringify(client.state)))
      for (const s of strings) {
        expect(s).not.toBe('t2')
        expect(s).not.toMatch(/counterparty|buyer_id|seller_id/)
      }
    }
    expect(client.state.traderId).toBe('t1')
  })

  it('summary screens in the transcript show the own dividend math', () => {
    const frames = loadTranscript()
    const transport = new ReplayTransport(frames)
    const client = new TraderClient(transport)
    client.join('seat-1')
    let checked = 0
    while (!transport.exhausted) {
      transport.step()
      const s = client.state.summary
      if (client.state.phase === 'SUMMARY' && s !== null && s.period === checked + 1) {
        expect(s.dividendIncome).toBe(s.dividendPerShare * s.shares)
        checked += 1
      }
    }
    expect(checked).toBe(10)
  })
})
