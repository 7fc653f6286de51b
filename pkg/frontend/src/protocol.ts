/**
 * Wire protocol types and framing, mirroring protocol.md.
 *
 * Frames are newline-delimited JSON objects. Decoding is tolerant of
 * unknown fields; frames with an unknown `type` are surfaced as `null`
 * so callers can ignore them (forward compatibility).
 */

export type Side = 'BID' | 'ASK'

// ---------------------------------------------------------------- client

export interface HelloMsg {
  type: 'HELLO'
  token: string
}

export interface AssessmentItem {
  item_id: string
  item_group: 'SELF_PRECISION' | 'OTHERS_PRECISION'
  rating: number
}

export interface SubmitQuestionnaireMsg {
  type: 'SUBMIT_QUESTIONNAIRE'
  declared_values: number[]
  assessments: AssessmentItem[]
}

export interface PostOrderMsg {
  type: 'POST_ORDER'
  side: Side
  price_cents: number
  quantity: number
}

export interface CancelOrderMsg {
  type: 'CANCEL_ORDER'
  order_id: number
}

export interface PingMsg {
  type: 'PING'
}

export type ClientMessage =
  | HelloMsg
  | SubmitQuestionnaireMsg
  | PostOrderMsg
  | CancelOrderMsg
  | PingMsg

// ---------------------------------------------------------------- server

export interface WelcomeMsg {
  type: 'WELCOME'
  trader_id: string
  session_id: string
}

export interface SessionConfigInfo {
  n_traders: number
  n_periods: number
  period_seconds: number
  dividend_value: number
  dividend_prob: number
  endowment_shares: number
  endowment_cash: number
  showup_fee: number
  session_id: string
}

export interface SessionInfoMsg {
  type: 'SESSION_INFO'
  phase: string
  period: number
  config: SessionConfigInfo
  cash_cents: number
  shares: number
}

export interface PeriodStartMsg {
  type: 'PERIOD_START'
  period: number
  period_seconds: number
  server_time: number
  intrinsic_value_cents: number
  max_present_value_cents: number
}

/** Book entries are [price_cents, quantity, mine]. */
export type BookEntry = [number, number, boolean]

export interface BookUpdateMsg {
  type: 'BOOK_UPDATE'
  period: number
  best_bid: number | null
  best_ask: number | null
  bids: BookEntry[]
  asks: BookEntry[]
}

export interface TradeNoticeMsg {
  type: 'TRADE_NOTICE'
  period: number
  trade_seq: number
  price_cents: number
  quantity: number
  own_side: 'BUY' | 'SELL' | null
  cash_cents: number | null
  shares: number | null
}

export interface OrderAckMsg {
  type: 'ORDER_ACK'
  order_id: number
  side: Side | ''
  price_cents: number
  quantity: number
  resting: boolean
  cancelled: boolean
}

export interface OrderRejectMsg {
  type: 'ORDER_REJECT'
  reason: string
  detail: string
}

export interface PeriodSummaryMsg {
  type: 'PERIOD_SUMMARY'
  period: number
  dividend_cents_per_share: number
  trades_made: number
  dividend_income_cents: number
  cash_cents: number
  shares: number
}

export interface FinalPayoutMsg {
  type: 'FINAL_PAYOUT'
  cash_cents: number
  showup_fee_cents: number
  total_cents: number
}

export interface ErrorMsg {
  type: 'ERROR'
  reason: string
  detail: string
}

export type ServerMessage =
  | WelcomeMsg
  | SessionInfoMsg
  | PeriodStartMsg
  | BookUpdateMsg
  | TradeNoticeMsg
  | OrderAckMsg
  | OrderRejectMsg
  | PeriodSummaryMsg
  | FinalPayoutMsg
  | ErrorMsg

const SERVER_TYPES = new Set([
  'WELCOME',
  'SESSION_INFO',
  'PERIOD_START',
  'BOOK_UPDATE',
  'TRADE_NOTICE',
  'ORDER_ACK',
  'ORDER_REJECT',
  'PERIOD_SUMMARY',
  'FINAL_PAYOUT',
  'ERROR',
])

/** One message to one newline-terminated frame. */
export function encodeFrame(msg: ClientMessage): string {
  return JSON.stringify(msg) + '\n'
}

/**
 * One frame back to a server message; `null` for frames of unknown type
 * (tolerant reader). Throws on unparsable frames.
 */
export function decodeFrame(frame: string): ServerMessage | null {
  const text = frame.trim()
  if (text.length === 0) throw new Error('empty frame')
  const data = JSON.parse(text)
  if (typeof data !== 'object' || data === null || Array.isArray(data)) {
    throw new Error('frame is not a JSON object')
  }
  if (!SERVER_TYPES.has(data.type)) return null
  return data as ServerMessage
}

/**
 * Incremental splitter for a byte-stream transport: feed chunks, get
 * complete frames; partial trailing data is buffered.
 */
export class FrameSplitter {
  private buffer = ''

  push(chunk: string): string[] {
    this.buffer += chunk
    const parts = this.buffer.split('\n')
    this.buffer = parts.pop() ?? ''
    return parts.filter((p) => p.trim().length > 0)
  }
}
