/**
 * Annotator console view: renders the current item list, captures one
 * action per item (watch seconds bounded by the item's duration), asks for
 * an instruction or exit on leave, shows refreshed lists, and renders the
 * simulated-vs-annotator comparison panel once the session ends.
 *
 * Every transition round-trips through the service; reloading the page and
 * calling resume(sessionId) reconstructs the same view from server state.
 * Optimistic UI is deliberately off: controls are disabled while a request
 * is in flight, and failed requests surface inline with a retry that reuses
 * the same idempotency token.
 */

import {
  ALL_ACTIONS,
  ActionKind,
  ApiError,
  ComparisonPayload,
  ItemPayload,
  SessionApi,
  SessionStatus,
  TrajectoryPayload,
  freshToken,
} from './api.js';

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, className?: string, text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

const REWARD_FIELDS = [
  'total_watch_s', 'clicks', 'likes', 'shares', 'comments',
  'items_consumed', 'turns', 'session_span_s', 'composite',
];

export class AnnotatorConsole {
  private sessionId: string | null = null;
  private status: SessionStatus | null = null;
  private busy = false;
  private pendingRetry: (() => Promise<void>) | null = null;
  private lastError: string | null = null;

  constructor(private root: HTMLElement, private api: SessionApi) {}

  async start(profile: Parameters<SessionApi['createSession']>[0], k?: number): Promise<void> {
    const created = await this.api.createSession(profile, k);
    this.sessionId = created.session_id;
    this.status = created.status;
    await this.refresh();
  }

  async resume(sessionId: string): Promise<void> {
    this.sessionId = sessionId;
    this.status = await this.api.getStatus(sessionId);
    await this.refresh();
  }

  currentItem(): ItemPayload | null {
    const s = this.status;
    if (!s || !s.list || s.awaiting !== 'action') return null;
    return s.list.items[s.position] ?? null;
  }

  /** Re-pull the trajectory (for the log pane) and redraw everything. */
  private async refresh(): Promise<void> {
    if (!this.sessionId) return;
    const trajectory = await this.api.getTrajectory(this.sessionId);
    let comparison: ComparisonPayload | null = null;
    if (this.status?.done) {
      comparison = await this.api.getComparison(this.sessionId);
    }
    this.render(trajectory, comparison);
  }

  private async guarded(call: () => Promise<void>): Promise<void> {
    if (this.busy) return;
    this.busy = true;
    this.lastError = null;
    try {
      await call();
      this.pendingRetry = null;
    } catch (err) {
      this.lastError = err instanceof ApiError ? err.detail : String(err);
      this.pendingRetry = call;
    } finally {
      this.busy = false;
    }
    await this.refresh();
  }

  async submitAction(action: ActionKind, watchSeconds?: number): Promise<void> {
    const item = this.currentItem();
    if (!item || !this.sessionId) return;
    const token = freshToken();
    const sessionId = this.sessionId;
    await this.guarded(async () => {
      const result = await this.api.submitAction(
        sessionId, item.item_id, action,
        action === 'watch' ? watchSeconds : undefined, token);
      this.status = result.status;
    });
  }

  async submitInstruction(text: string | null): Promise<void> {
    if (!this.sessionId) return;
    const token = freshToken();
    const sessionId = this.sessionId;
    await this.guarded(async () => {
      const result = await this.api.submitInstruction(sessionId, text, token);
      this.status = result.status;
    });
  }

  async retryLast(): Promise<void> {
    const retry = this.pendingRetry;
    if (!retry) return;
    await this.guarded(retry);
  }

  // ── rendering ────────────────────────────────────────────────────

  private render(trajectory: TrajectoryPayload, comparison: ComparisonPayload | null): void {
    this.root.replaceChildren();
    if (!this.status) return;
    this.root.append(this.renderHeader());
    if (this.lastError) this.root.append(this.renderError());
    if (this.status.done) {
      this.root.append(this.renderDoneBanner());
    } else if (this.status.awaiting === 'instruction') {
      this.root.append(this.renderInstructionBox());
    } else {
      const item = this.currentItem();
      if (item) this.root.append(this.renderItemCard(item));
    }
    if (this.status.list && !this.status.done) {
      this.root.append(this.renderListPane(this.status));
    }
    this.root.append(this.renderLogPane(trajectory));
    if (comparison) this.root.append(this.renderComparison(comparison));
  }

  private renderHeader(): HTMLElement {
    const header = el('div', 'console-header');
    header.append(el('h1', undefined, 'Annotator session'));
    const meta = el('p', 'session-meta');
    meta.dataset.sessionId = this.sessionId ?? '';
    meta.textContent = `session ${this.sessionId} - turn ${this.status?.turn_index ?? 0}`;
    header.append(meta);
    return header;
  }

  private renderError(): HTMLElement {
    const box = el('div', 'error-box');
    box.append(el('span', 'error-text', this.lastError ?? 'request failed'));
    const retry = el('button', 'retry-button', 'Retry');
    retry.addEventListener('click', () => { void this.retryLast(); });
    box.append(retry);
    return box;
  }

  private renderItemCard(item: ItemPayload): HTMLElement {
    const card = el('div', 'item-card');
    card.dataset.itemId = item.item_id;
    card.append(el('h2', 'item-title', item.title || item.item_id));
    card.append(el('p', 'item-category', item.category));
    card.append(el('p', 'item-description', item.description));
    if (item.duration_s > 0) {
      card.append(el('p', 'item-duration', `${item.duration_s}s ${item.content_type}`));
    } else {
      card.append(el('p', 'item-duration', item.content_type));
    }
    card.append(this.renderActionSelector(item));
    return card;
  }

  private renderActionSelector(item: ItemPayload): HTMLElement {
    const form = el('form', 'action-selector');
    const watchRow = el('div', 'watch-seconds-row');
    const watchInput = el('input') as HTMLInputElement;
    watchInput.type = 'number';
    watchInput.name = 'watch_s';
    watchInput.min = '1';
    watchInput.max = String(item.duration_s);
    watchInput.value = String(Math.min(10, Math.max(1, item.duration_s)));
    watchRow.append(el('label', undefined, 'watch seconds'), watchInput);
    watchRow.style.display = 'none';

    for (const action of ALL_ACTIONS) {
      const label = el('label', 'action-option');
      const radio = el('input') as HTMLInputElement;
      radio.type = 'radio';
      radio.name = 'action';
      radio.value = action;
      if (action === 'watch' && item.duration_s === 0) {
        radio.disabled = true; // untimed content cannot be watched
      }
      radio.addEventListener('change', () => {
        watchRow.style.display = action === 'watch' ? '' : 'none';
      });
      label.append(radio, document.createTextNode(action));
      form.append(label);
    }
    form.append(watchRow);

    const submit = el('button', 'submit-action', 'Submit');
    submit.type = 'submit';
    submit.disabled = this.busy;
    form.addEventListener('submit', (event) => {
      event.preventDefault();
      const chosen = form.querySelector<HTMLInputElement>('input[name="action"]:checked');
      if (!chosen) return;
      const action = chosen.value as ActionKind;
      // The input itself is bounded by [1, duration]; clamp keeps keyboard
      // overrides inside the same range the server enforces.
      const raw = Number(watchInput.value);
      const watch = Math.max(1, Math.min(item.duration_s, Math.round(raw || 1)));
      void this.submitAction(action, action === 'watch' ? watch : undefined);
    });
    form.append(submit);
    return form;
  }

  private renderInstructionBox(): HTMLElement {
    const box = el('div', 'instruction-box');
    box.append(el('h2', undefined, 'You chose to leave'));
    box.append(el('p', undefined,
      'Tell the recommender what to change, or exit without feedback.'));
    const input = el('textarea', 'instruction-input') as HTMLTextAreaElement;
    input.placeholder = 'e.g. show me less chess content';
    box.append(input);
    const send = el('button', 'send-instruction', 'Send instruction');
    send.addEventListener('click', () => {
      const text = input.value.trim();
      if (text) void this.submitInstruction(text);
    });
    const exit = el('button', 'exit-session', 'Exit without feedback');
    exit.addEventListener('click', () => { void this.submitInstruction(null); });
    box.append(send, exit);
    return box;
  }

  private renderListPane(status: SessionStatus): HTMLElement {
    const pane = el('div', 'list-pane');
    pane.append(el('h3', undefined, `Current list (turn ${status.turn_index})`));
    const note = status.list?.strategy_note;
    if (note) pane.append(el('p', 'strategy-note', note));
    const ul = el('ul', 'list-items');
    status.list?.items.forEach((item, index) => {
      const li = el('li', index === status.position ? 'current' : undefined);
      li.textContent = `${index + 1}. ${item.title || item.item_id} [${item.category}]`;
      li.dataset.itemId = item.item_id;
      ul.append(li);
    });
    pane.append(ul);
    return pane;
  }

  private renderLogPane(trajectory: TrajectoryPayload): HTMLElement {
    const pane = el('div', 'log-pane');
    pane.append(el('h3', undefined, 'Session log'));
    const ul = el('ul', 'log-entries');
    for (const turn of trajectory.turns) {
      for (const decision of turn.decisions) {
        const entry = el('li', 'log-entry');
        const watch = decision.watch_s !== undefined ? ` (${decision.watch_s}s)` : '';
        entry.textContent = `turn ${turn.turn_index}: ${decision.item_id} -> ${decision.action}${watch}`;
        ul.append(entry);
      }
      if (turn.instruction_out) {
        const entry = el('li', 'log-entry instruction');
        entry.textContent = `instruction: "${turn.instruction_out.text}"`;
        ul.append(entry);
      }
    }
    pane.append(ul);
    return pane;
  }

  private renderDoneBanner(): HTMLElement {
    const banner = el('div', 'done-banner');
    banner.append(el('h2', undefined, 'Session complete'));
    banner.append(el('p', undefined, `ended by ${this.status?.ended_by ?? 'unknown'}`));
    return banner;
  }

  private renderComparison(comparison: ComparisonPayload): HTMLElement {
    const panel = el('div', 'comparison-panel');
    panel.append(el('h3', undefined, 'You vs the simulated user'));
    const table = el('table', 'comparison-table');
    const head = el('tr');
    for (const title of ['metric', 'annotator', 'simulated', 'delta']) {
      head.append(el('th', undefined, title));
    }
    table.append(head);
    for (const field of REWARD_FIELDS) {
      const row = el('tr');
      row.dataset.metric = field;
      row.append(el('td', undefined, field));
      row.append(el('td', undefined, String(comparison.annotator_stats[field] ?? 0)));
      row.append(el('td', undefined, String(comparison.simulated_stats[field] ?? 0)));
      row.append(el('td', undefined, String(comparison.per_metric_delta[field] ?? 0)));
      table.append(row);
    }
    panel.append(table);
    return panel;
  }
}
