// Console state machine: polls the gateway, holds the current board, and
// funnels every mutation through the server. No optimistic updates: the UI
// changes only when a response (or the next poll) says so.

import { GatewayClient, GatewayError } from './client.js';
import type { ApiSession, AuditEvent, Decision } from './types.js';

export const LIST_POLL_MS = 2000;
export const ESCALATED_POLL_MS = 1000;

export interface ConsoleState {
  sessions: ApiSession[];
  selectedId: string | null;
  selected: ApiSession | null;
  audit: AuditEvent[];
  pinnedFeedback: string[];
  submitting: boolean;
  notice: string | null;
  error: string | null;
}

export function computePollDelay(sessions: ApiSession[]): number {
  // Escalations want prompt surfacing; everything else can relax.
  const anyEscalated = sessions.some((session) => session.state === 'ESCALATE');
  return anyEscalated ? ESCALATED_POLL_MS : LIST_POLL_MS;
}

type RenderFn = (state: ConsoleState) => void;

export class ConsoleController {
  readonly state: ConsoleState = {
    sessions: [],
    selectedId: null,
    selected: null,
    audit: [],
    pinnedFeedback: [],
    submitting: false,
    notice: null,
    error: null,
  };

  private timer: ReturnType<typeof setTimeout> | null = null;
  private stopped = false;

  constructor(
    private readonly client: GatewayClient,
    private readonly render: RenderFn,
  ) {}

  start(): void {
    this.stopped = false;
    void this.pollLoop();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }

  private async pollLoop(): Promise<void> {
    await this.tick();
    if (this.stopped) return;
    const delay = computePollDelay(this.state.sessions);
    this.timer = setTimeout(() => void this.pollLoop(), delay);
  }

  /** One refresh cycle: session list, selected detail, audit tail. */
  async tick(): Promise<void> {
    try {
      const sessions = await this.client.listSessions();
      this.state.sessions = sessions;
      this.state.error = null;
      if (this.state.selectedId === null && sessions.length > 0) {
        // Surface whichever session needs a human first.
        const urgent = sessions.find((s) => s.awaiting_decision) ?? sessions[0];
        this.state.selectedId = urgent.session_id;
      }
      if (this.state.selectedId !== null) {
        await this.refreshSelected();
      }
    } catch (error) {
      this.state.error = error instanceof Error ? error.message : String(error);
    }
    this.render(this.state);
  }

  private async refreshSelected(): Promise<void> {
    if (this.state.selectedId === null) return;
    this.state.selected = await this.client.getSession(this.state.selectedId);
    this.state.audit = await this.client.getAudit(this.state.selectedId);
  }

  select(sessionId: string): void {
    this.state.selectedId = sessionId;
    this.state.notice = null;
    void this.tick();
  }

  /**
   * Decision integrity: only option ids present in the fetched payload are
   * submittable; anything else is refused client-side before any request.
   */
  canSubmitOption(optionId: string): boolean {
    const payload = this.state.selected?.pending_escalation;
    if (!payload) return false;
    return payload.options.some((option) => option.option_id === optionId);
  }

  async submitDecision(decision: Decision): Promise<void> {
    if (this.state.submitting) return; // double-click guard
    if (this.state.selectedId === null) return;
    if ('option_id' in decision && !this.canSubmitOption(decision.option_id)) {
      this.state.notice = `Option ${decision.option_id} is not part of the payload.`;
      this.render(this.state);
      return;
    }
    this.state.submitting = true;
    this.state.notice = null;
    this.render(this.state);
    try {
      const updated = await this.client.postDecision(this.state.selectedId, decision);
      this.state.selected = updated;
      this.state.sessions = this.state.sessions.map((session) =>
        session.session_id === updated.session_id ? updated : session,
      );
      this.state.audit = await this.client.getAudit(updated.session_id);
    } catch (error) {
      if (error instanceof GatewayError && error.code === 'CONFLICT') {
        this.state.notice =
          'This payload was already decided; refreshing the session view.';
        await this.refreshSelected().catch(() => undefined);
      } else {
        this.state.notice = error instanceof Error ? error.message : String(error);
      }
    } finally {
      this.state.submitting = false;
      this.render(this.state);
    }
  }

  approveOption(optionId: string): Promise<void> {
    return this.submitDecision({ option_id: optionId });
  }

  decline(): Promise<void> {
    return this.submitDecision({ kind: 'decline' });
  }

  async guidance(text: string): Promise<void> {
    const trimmed = text.trim();
    if (!trimmed) {
      this.state.notice = 'Guidance text is required.';
      this.render(this.state);
      return;
    }
    return this.submitDecision({ kind: 'guidance', guidance: trimmed });
  }

  approveDraft(): Promise<void> {
    return this.submitDecision({ kind: 'approve_draft' });
  }

  rejectDraft(): Promise<void> {
    return this.submitDecision({ kind: 'reject_draft' });
  }

  async sendFeedback(text: string): Promise<void> {
    const trimmed = text.trim();
    if (this.state.selectedId === null) return;
    if (!trimmed) {
      // Blocked client-side; the gateway would reject it anyway.
      this.state.notice = 'Feedback text is required.';
      this.render(this.state);
      return;
    }
    try {
      await this.client.postFeedback(this.state.selectedId, { text: trimmed });
      this.state.pinnedFeedback = [...this.state.pinnedFeedback, trimmed];
      this.state.notice = 'Directive pinned and audited.';
      await this.refreshSelected().catch(() => undefined);
    } catch (error) {
      this.state.notice = error instanceof Error ? error.message : String(error);
    }
    this.render(this.state);
  }
}
