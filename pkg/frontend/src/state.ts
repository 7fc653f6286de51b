/**
 * Client-side session state.
 *
 * The state machine is driven exclusively by server messages: the phase
 * changes only on SESSION_INFO, PERIOD_START, PERIOD_SUMMARY and
 * FINAL_PAYOUT, never on local timers. The countdown is cosmetic — the
 * server decides when a period is over.
 *
 * The state holds nothing about other participants: no identities, no
 * holdings, no questionnaire answers. Book rows carry an `own` flag for
 * this seat only and the trade tape is anonymous.
 */

import type {
  AssessmentItem,
  BookEntry,
  ClientMessage,
  ServerMessage,
  SessionConfigInfo,
  Side,
} from './protocol'

export type Phase =
  | 'CONNECTING'
  | 'LOBBY'
  | 'QUESTIONNAIRE'
  | 'WAITING' // questionnaire submitted, others still writing
  | 'TRADING'
  | 'SUMMARY'
  | 'PAYOUT'

export interface OwnOrder {
  orderId: number
  side: Side
  price: number
  quantity: number
}

export interface TapeEntry {
  period: number
  tradeSeq: number
  price: number
  quantity: number
  ownSide: 'BUY' | 'SELL' | null
}

export interface SummaryInfo {
  period: number
  dividendPerShare: number
  tradesMade: number
  dividendIncome: number
  cash: number
  shares: number
}

export interface PayoutInfo {
  cash: number
  showupFee: number
  total: number
}

/** Assessment items shown in the pre-trade form; ratings are 1..7. */
export const ASSESSMENT_FORM: { id: string; group: AssessmentItem['item_group']; label: string }[] = [
  { id: 'self-1', group: 'SELF_PRECISION', label: 'My value estimates are precise' },
  { id: 'self-2', group: 'SELF_PRECISION', label: 'I can price this asset accurately' },
  { id: 'self-3', group: 'SELF_PRECISION', label: 'My answers in the price form are reliable' },
  { id: 'others-1', group: 'OTHERS_PRECISION', label: 'Other participants estimate values precisely' },
  { id: 'others-2', group: 'OTHERS_PRECISION', label: 'Other participants can price this asset accurately' },
  { id: 'others-3', group: 'OTHERS_PRECISION', label: 'Other participants answer the price form reliably' },
]

export const RATING_MIN = 1
export const RATING_MAX = 7

export class TraderState {
  phase: Phase = 'CONNECTING'
  traderId = ''
  sessionId = ''
  config: SessionConfigInfo | null = null

  period = 0
  periodSeconds = 0
  countdown = 0
  intrinsicValue = 0

  cash = 0
  shares = 0

  bestBid: number | null = null
  bestAsk: number | null = null
  bids: BookEntry[] = []
  asks: BookEntry[] = []
  ownOrders: OwnOrder[] = []
  tape: TapeEntry[] = []

  lastReject: { reason: string; detail: string } | null = null
  lastError: { reason: string; detail: string } | null = null
  summary: SummaryInfo | null = null
  payout: PayoutInfo | null = null

  // form state
  declaredDraft: (number | null)[] = []
  ratingDraft: Map<string, number> = new Map()
  questionnaireSubmitted = false

  /** Phase trace for conformance checks: every phase in arrival order. */
  readonly phaseTrace: Phase[] = ['CONNECTING']

  // ------------------------------------------------------------- transitions

  apply(msg: ServerMessage): void {
    switch (msg.type) {
      case 'WELCOME':
        this.traderId = msg.trader_id
        this.sessionId = msg.session_id
        break
      case 'SESSION_INFO':
        this.config = msg.config
        this.cash = msg.cash_cents
        this.shares = msg.shares
        this.period = msg.period
        if (this.declaredDraft.length !== msg.config.n_periods) {
          this.declaredDraft = new Array(msg.config.n_periods).fill(null)
        }
        if (msg.phase === 'LOBBY') this.setPhase('LOBBY')
        else if (msg.phase === 'QUESTIONNAIRE') {
          this.setPhase(this.questionnaireSubmitted ? 'WAITING' : 'QUESTIONNAIRE')
        }
        // TRADING / SUMMARY / PAYOUT snapshots arrive on reconnect; the
        // dedicated broadcasts below carry the data those phases need.
        else if (msg.phase === 'TRADING') this.setPhase('TRADING')
        break
      case 'PERIOD_START':
        this.period = msg.period
        this.periodSeconds = msg.period_seconds
        this.countdown = msg.period_seconds
        this.intrinsicValue = msg.intrinsic_value_cents
        this.summary = null
        this.ownOrders = []
        this.lastReject = null
        this.setPhase('TRADING')
        break
      case 'BOOK_UPDATE':
        this.bestBid = msg.best_bid
        this.bestAsk = msg.best_ask
        this.bids = msg.bids
        this.asks = msg.asks
        this.reconcileOwnOrders()
        break
      case 'TRADE_NOTICE':
        this.tape.push({
          period: msg.period,
          tradeSeq: msg.trade_seq,
          price: msg.price_cents,
          quantity: msg.quantity,
          ownSide: msg.own_side,
        })
        if (msg.own_side !== null && msg.cash_cents !== null && msg.shares !== null) {
          this.cash = msg.cash_cents
          this.shares = msg.shares
        }
        break
      case 'ORDER_ACK':
        if (msg.cancelled) {
          this.ownOrders = this.ownOrders.filter((o) => o.orderId !== msg.order_id)
        } else if (msg.resting && (msg.side === 'BID' || msg.side === 'ASK')) {
          this.ownOrders.push({
            orderId: msg.order_id,
            side: msg.side,
            price: msg.price_cents,
            quantity: msg.quantity,
          })
        }
        this.lastReject = null
        break
      case 'ORDER_REJECT':
        this.lastReject = { reason: msg.reason, detail: msg.detail }
        break
      case 'PERIOD_SUMMARY':
        this.summary = {
          period: msg.period,
          dividendPerShare: msg.dividend_cents_per_share,
          tradesMade: msg.trades_made,
          dividendIncome: msg.dividend_income_cents,
          cash: msg.cash_cents,
          shares: msg.shares,
        }
        this.cash = msg.cash_cents
        this.shares = msg.shares
        this.setPhase('SUMMARY')
        break
      case 'FINAL_PAYOUT':
        this.payout = {
          cash: msg.cash_cents,
          showupFee: msg.showup_fee_cents,
          total: msg.total_cents,
        }
        this.setPhase('PAYOUT')
        break
      case 'ERROR':
        this.lastError = { reason: msg.reason, detail: msg.detail }
        break
    }
  }

  private setPhase(phase: Phase): void {
    if (this.phase !== phase) {
      this.phase = phase
      this.phaseTrace.push(phase)
    }
  }

  /**
   * Local display tick. Never changes the phase: after the countdown hits
   * zero the screen keeps waiting for the server's PERIOD_SUMMARY.
   */
  tick(seconds = 1): void {
    if (this.phase === 'TRADING') {
      this.countdown = Math.max(0, this.countdown - seconds)
    }
  }

  // --------------------------------------------------------------- exposure

  get committedBidCents(): number {
    return this.ownOrders
      .filter((o) => o.side === 'BID')
      .reduce((sum, o) => sum + o.price * o.quantity, 0)
  }

  get committedAskShares(): number {
    return this.ownOrders
      .filter((o) => o.side === 'ASK')
      .reduce((sum, o) => sum + o.quantity, 0)
  }

  /**
   * After each book update, trim own orders to the quantity the book
   * still shows as ours at each (side, price): fills consume the oldest
   * order first, matching the exchange's time priority.
   */
  private reconcileOwnOrders(): void {
    const remaining = new Map<string, number>()
    for (const [price, qty, mine] of this.bids) {
      if (mine) remaining.set(`BID:${price}`, (remaining.get(`BID:${price}`) ?? 0) + qty)
    }
    for (const [price, qty, mine] of this.asks) {
      if (mine) remaining.set(`ASK:${price}`, (remaining.get(`ASK:${price}`) ?? 0) + qty)
    }
    const kept: OwnOrder[] = []
    for (const order of this.ownOrders) {
      const key = `${order.side}:${order.price}`
      const left = remaining.get(key) ?? 0
      if (left <= 0) continue
      const take = Math.min(order.quantity, left)
      remaining.set(key, left - take)
      kept.push(take === order.quantity ? order : { ...order, quantity: take })
    }
    this.ownOrders = kept
  }

  // ----------------------------------------------------- guarded submissions

  /** Validate an order draft against phase, funds and holdings. */
  orderProblem(side: Side, price: number, quantity: number): string | null {
    if (this.phase !== 'TRADING') return 'orders can only be posted while a period is trading'
    if (!Number.isInteger(price) || price < 1) return 'price must be a whole number of cents'
    if (!Number.isInteger(quantity) || quantity < 1) return 'quantity must be a positive whole number'
    if (side === 'BID' && price * quantity + this.committedBidCents > this.cash) {
      return 'not enough cash for this bid and your open bids'
    }
    if (side === 'ASK' && quantity + this.committedAskShares > this.shares) {
      return 'not enough shares for this ask and your open asks'
    }
    return null
  }

  buildOrder(side: Side, price: number, quantity = 1): ClientMessage {
    const problem = this.orderProblem(side, price, quantity)
    if (problem !== null) throw new Error(problem)
    return { type: 'POST_ORDER', side, price_cents: price, quantity }
  }

  buildCancel(orderId: number): ClientMessage {
    if (this.phase !== 'TRADING') throw new Error('cancels are only valid while trading')
    if (!this.ownOrders.some((o) => o.orderId === orderId)) {
      throw new Error('not one of your open orders')
    }
    return { type: 'CANCEL_ORDER', order_id: orderId }
  }

  setDeclared(index: number, value: number | null): void {
    if (index < 0 || index >= this.declaredDraft.length) throw new Error('no such period')
    this.declaredDraft[index] = value
  }

  setRating(itemId: string, rating: number): void {
    if (!ASSESSMENT_FORM.some((item) => item.id === itemId)) throw new Error('no such item')
    if (!Number.isInteger(rating) || rating < RATING_MIN || rating > RATING_MAX) {
      throw new Error(`ratings run ${RATING_MIN}..${RATING_MAX}`)
    }
    this.ratingDraft.set(itemId, rating)
  }

  questionnaireProblem(): string | null {
    if (this.phase !== 'QUESTIONNAIRE') return 'the questionnaire phase is over'
    if (this.questionnaireSubmitted) return 'already submitted'
    if (this.declaredDraft.some((v) => v === null || !Number.isInteger(v) || v < 0)) {
      return 'every period needs a declared value in whole cents'
    }
    for (const item of ASSESSMENT_FORM) {
      if (!this.ratingDraft.has(item.id)) return 'every assessment item needs a rating'
    }
    return null
  }

  buildQuestionnaire(): ClientMessage {
    const problem = this.questionnaireProblem()
    if (problem !== null) throw new Error(problem)
    const assessments: AssessmentItem[] = ASSESSMENT_FORM.map((item) => ({
      item_id: item.id,
      item_group: item.group,
      rating: this.ratingDraft.get(item.id)!,
    }))
    this.questionnaireSubmitted = true
    this.setPhase('WAITING')
    return {
      type: 'SUBMIT_QUESTIONNAIRE',
      declared_values: this.declaredDraft.map((v) => v as number),
      assessments,
    }
  }
}
