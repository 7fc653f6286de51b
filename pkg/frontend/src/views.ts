/**
 * Pure render functions: state in, HTML string out. The app layer mounts
 * these into the page and wires events by element id / data attributes,
 * which keeps everything here unit-testable without a DOM.
 */

import { ASSESSMENT_FORM, RATING_MAX, RATING_MIN, TraderState } from './state'

export function formatCents(cents: number, dollars = false): string {
  if (dollars) return `$${(cents / 100).toFixed(2)}`
  return `${cents}¢`
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
}

export function render(state: TraderState, dollars = false): string {
  switch (state.phase) {
    case 'CONNECTING':
      return '<p class="status">Connecting…</p>'
    case 'LOBBY':
      return '<p class="status">Waiting for all participants to join…</p>'
    case 'QUESTIONNAIRE':
      return renderQuestionnaires(state)
    case 'WAITING':
      return '<p class="status">Thanks — waiting for the other participants to finish…</p>'
    case 'TRADING':
      return renderTradingScreen(state, dollars)
    case 'SUMMARY':
      return renderSummary(state, dollars)
    case 'PAYOUT':
      return renderPayout(state, dollars)
  }
}

export function renderQuestionnaires(state: TraderState): string {
  const periods = state.config?.n_periods ?? state.declaredDraft.length
  const priceInputs = Array.from({ length: periods }, (_, i) => {
    const value = state.declaredDraft[i]
    return (
      `<label class="declared">Period ${i + 1}` +
      `<input type="number" min="0" step="1" data-declared-index="${i}"` +
      ` value="${value === null || value === undefined ? '' : value}"></label>`
    )
  }).join('\n')

  const ratingRows = ASSESSMENT_FORM.map((item) => {
    const buttons = Array.from({ length: RATING_MAX - RATING_MIN + 1 }, (_, i) => {
      const rating = RATING_MIN + i
      const checked = state.ratingDraft.get(item.id) === rating ? ' checked' : ''
      return (
        `<label><input type="radio" name="${item.id}" value="${rating}"` +
        ` data-rating-item="${item.id}"${checked}>${rating}</label>`
      )
    }).join('')
    return `<div class="likert" data-group="${item.group}"><span>${escapeHtml(item.label)}</span>${buttons}</div>`
  }).join('\n')

  const problem = state.questionnaireProblem()
  const disabled = problem === null ? '' : ' disabled'
  const hint = problem === null ? '' : `<p class="hint">${escapeHtml(problem)}</p>`
  return `
<section id="questionnaire">
  <h2>Price questionnaire</h2>
  <p>Your value of one share at the start of each period, in cents:</p>
  ${priceInputs}
  <h2>Assessment questionnaire</h2>
  <p>Rate each statement from ${RATING_MIN} (disagree) to ${RATING_MAX} (agree):</p>
  ${ratingRows}
  <button id="submit-questionnaire"${disabled}>Submit</button>
  ${hint}
</section>`
}

export function renderTradingScreen(state: TraderState, dollars = false): string {
  const money = (c: number) => formatCents(c, dollars)
  const depthRows = (entries: [number, number, boolean][]) =>
    entries
      .map(
        ([price, qty, mine]) =>
          `<tr class="${mine ? 'own' : ''}"><td>${money(price)}</td><td>${qty}</td><td>${mine ? 'you' : ''}</td></tr>`,
      )
      .join('')

  const ownRows = state.ownOrders
    .map(
      (o) =>
        `<tr><td>${o.side}</td><td>${money(o.price)}</td><td>${o.quantity}</td>` +
        `<td><button class="cancel" data-cancel-order="${o.orderId}">cancel</button></td></tr>`,
    )
    .join('')

  const tapeRows = state.tape
    .filter((t) => t.period === state.period)
    .slice(-12)
    .map(
      (t) =>
        `<li>${money(t.price)} × ${t.quantity}${t.ownSide ? ` <em>(you ${t.ownSide === 'BUY' ? 'bought' : 'sold'})</em>` : ''}</li>`,
    )
    .join('')

  const reject = state.lastReject
    ? `<p class="reject">Rejected: ${escapeHtml(state.lastReject.reason)}</p>`
    : ''

  return `
<section id="trading">
  <header>
    <span id="period">Period ${state.period} / ${state.config?.n_periods ?? '?'}</span>
    <span id="countdown">${Math.ceil(state.countdown)}s</span>
    <span id="balances">cash ${money(state.cash)} · shares ${state.shares}</span>
  </header>
  <div class="book">
    <div><h3>Bids</h3><table>${depthRows(state.bids)}</table></div>
    <div><h3>Asks</h3><table>${depthRows(state.asks)}</table></div>
    <p id="best">best bid ${state.bestBid === null ? '—' : money(state.bestBid)} ·
       best ask ${state.bestAsk === null ? '—' : money(state.bestAsk)}</p>
  </div>
  <form id="order-entry">
    <select id="order-side"><option value="BID">buy</option><option value="ASK">sell</option></select>
    <input id="order-price" type="number" min="1" step="1" placeholder="price in cents">
    <input id="order-qty" type="number" min="1" step="1" value="1">
    <button id="submit-order">post</button>
  </form>
  ${reject}
  <h3>Your orders</h3>
  <table id="own-orders">${ownRows || '<tr><td>none</td></tr>'}</table>
  <h3>Trades</h3>
  <ul id="tape">${tapeRows || '<li>no trades yet</li>'}</ul>
</section>`
}

export function renderSummary(state: TraderState, dollars = false): string {
  const s = state.summary
  if (s === null) return '<p class="status">Waiting for the period summary…</p>'
  const money = (c: number) => formatCents(c, dollars)
  const trades = s.tradesMade === 0 ? 'no trades this period' : `${s.tradesMade} trade${s.tradesMade === 1 ? '' : 's'}`
  return `
<section id="summary">
  <h2>Period ${s.period} results</h2>
  <ul>
    <li id="summary-trades">${trades}</li>
    <li id="summary-dividend">dividend ${money(s.dividendPerShare)} per share,
        +${money(s.dividendIncome)} dividends</li>
    <li id="summary-balances">cash ${money(s.cash)} · shares ${s.shares}</li>
  </ul>
  <p class="status">The next period starts automatically.</p>
</section>`
}

export function renderPayout(state: TraderState, dollars = false): string {
  const p = state.payout
  if (p === null) return '<p class="status">Waiting for the payout…</p>'
  const money = (c: number) => formatCents(c, dollars)
  return `
<section id="payout">
  <h2>Session complete</h2>
  <ul>
    <li>trading earnings: ${money(p.cash)}</li>
    <li>show-up fee: ${money(p.showupFee)}</li>
    <li id="payout-total"><strong>total payment: ${money(p.total)}</strong></li>
  </ul>
</section>`
}
