// Pure view functions: gateway data in, HTML strings out. Nothing here
// recomputes protocol numbers; every figure shown is exactly what the
// gateway returned.

import type {
  ApiSession,
  AuditEvent,
  EscalationPayload,
  PendingApproval,
} from './types.js';

export function escapeHtml(raw: unknown): string {
  return String(raw)
    .replaceAll('&', '&amp;')
    .replaceAll('<', '&lt;')
    .replaceAll('>', '&gt;')
    .replaceAll('"', '&quot;')
    .replaceAll("'", '&#39;');
}

// D33: completeness reads as both a count and the fraction, verbatim from
// the gateway's numbers.
export function tciLabel(session: ApiSession): string {
  const percent = (session.tci * 100).toFixed(1);
  return `${session.revealed_count}/${session.required_count} (${percent}%)`;
}

const STATE_CLASSES: Record<string, string> = {
  START: 'badge-idle',
  STCC: 'badge-active',
  SCREEN: 'badge-active',
  NEGOTIATE: 'badge-active',
  SUMMARIZE: 'badge-active',
  AGREE: 'badge-success',
  NO_DEAL: 'badge-neutral',
  ESCALATE: 'badge-alert',
  STALL: 'badge-neutral',
};

export function stateBadge(state: string): string {
  const cls = STATE_CLASSES[state] ?? 'badge-idle';
  return `<span class="badge ${cls}" data-state="${escapeHtml(state)}">${escapeHtml(state)}</span>`;
}

export function renderSessionList(sessions: ApiSession[], selectedId: string | null): string {
  if (sessions.length === 0) {
    return '<div class="empty">No sessions yet.</div>';
  }
  const rows = sessions.map((session) => {
    const width = Math.round(session.tci * 100);
    const chips = session.missing
      .map((field) => `<span class="chip">${escapeHtml(field)}</span>`)
      .join('');
    const selected = session.session_id === selectedId ? ' selected' : '';
    const attention = session.awaiting_decision
      ? '<span class="attention">decision needed</span>'
      : '';
    return `
      <div class="session-card${selected}" data-session="${escapeHtml(session.session_id)}">
        <div class="session-head">
          <span class="session-id">${escapeHtml(session.session_id)}</span>
          ${stateBadge(session.state)}
          ${attention}
          <span class="round">round ${session.round}</span>
        </div>
        <div class="tci-row">
          <div class="tci-bar"><div class="tci-fill" style="width:${width}%"></div></div>
          <span class="tci-label">${escapeHtml(tciLabel(session))}</span>
        </div>
        <div class="chips">${chips || '<span class="chip chip-done">checklist complete</span>'}</div>
      </div>`;
  });
  return rows.join('\n');
}

const PAYLOAD_REQUIRED: Array<[keyof EscalationPayload, string]> = [
  ['state_snapshot', 'state snapshot'],
  ['tci_ledger', 'completeness ledger'],
  ['boundary_at_risk', 'boundary at risk'],
  ['safety_events', 'safety events'],
  ['options', 'options'],
  ['approval_request', 'approval request'],
];

export function missingPayloadFields(payload: Partial<EscalationPayload>): string[] {
  const missing: string[] = [];
  for (const [key, label] of PAYLOAD_REQUIRED) {
    const value = payload[key];
    if (value === undefined || value === null) {
      missing.push(label);
    } else if (key === 'options' && (value as unknown[]).length === 0) {
      missing.push(label);
    }
  }
  return missing;
}

export function renderErrorBanner(text: string): string {
  return `<div class="banner banner-error" role="alert">${escapeHtml(text)}</div>`;
}

export function renderNotice(text: string): string {
  return `<div class="banner banner-notice">${escapeHtml(text)}</div>`;
}

/**
 * Escalation detail: snapshot, ledger, boundary delta, safety events, one
 * card per payload option (never a synthesized one), and the decision
 * controls. A malformed payload renders an error banner and no controls.
 */
export function renderEscalation(
  payload: Partial<EscalationPayload> | null,
  submitting: boolean,
): string {
  if (payload === null) {
    return '<div class="empty">No pending escalation for this session.</div>';
  }
  const missing = missingPayloadFields(payload);
  if (missing.length > 0) {
    return renderErrorBanner(`Escalation payload is missing: ${missing.join(', ')}`);
  }
  const full = payload as EscalationPayload;
  const disabled = submitting ? ' disabled' : '';
  const snapshot = full.state_snapshot.last_messages
    .map(
      (message) =>
        `<li><span class="speaker">${escapeHtml(message.speaker)}</span> ${escapeHtml(message.text)}</li>`,
    )
    .join('');
  const revealed = full.tci_ledger.revealed.map(escapeHtml).join(', ') || 'none';
  const ledgerMissing = full.tci_ledger.missing.map(escapeHtml).join(', ') || 'none';
  const safety = full.safety_events.length
    ? full.safety_events
        .map((event) => `<li>${escapeHtml(JSON.stringify(event))}</li>`)
        .join('')
    : '<li>none recorded</li>';
  const cards = full.options
    .map(
      (option) => `
      <div class="option-card" data-option="${escapeHtml(option.option_id)}">
        <div class="option-head">
          <span class="option-id">${escapeHtml(option.option_id)}</span>
          <span class="option-label">${escapeHtml(option.label)}</span>
        </div>
        <p class="tradeoff">${escapeHtml(option.tradeoff)}</p>
        <button class="approve" data-action="approve-option"
                data-option-id="${escapeHtml(option.option_id)}"${disabled}>
          Approve ${escapeHtml(option.option_id)}
        </button>
      </div>`,
    )
    .join('\n');
  return `
    <section class="escalation" data-trigger="${escapeHtml(full.trigger)}">
      <h2>Escalation: ${escapeHtml(full.trigger)}</h2>
      <div class="payload-grid">
        <div class="panel">
          <h3>Situation</h3>
          <p>Phase: ${escapeHtml(full.state_snapshot.phase)}</p>
          <ul class="snapshot">${snapshot}</ul>
        </div>
        <div class="panel">
          <h3>Completeness ledger</h3>
          <p>TCI ${escapeHtml(full.tci_ledger.tci.toFixed(4))}
             (weighted ${escapeHtml(full.tci_ledger.tci_weighted.toFixed(4))})</p>
          <p>Revealed: ${revealed}</p>
          <p>Missing: ${ledgerMissing}</p>
        </div>
        <div class="panel">
          <h3>Problem</h3>
          <p class="boundary">${escapeHtml(full.boundary_at_risk)}</p>
          <h3>Safety events</h3>
          <ul class="safety">${safety}</ul>
        </div>
      </div>
      <h3>Options</h3>
      <div class="options">${cards}</div>
      <p class="approval-request">${escapeHtml(full.approval_request)}</p>
      <div class="decision-controls">
        <button data-action="decline"${disabled}>Decline</button>
        <textarea data-role="guidance" placeholder="...or provide guidance"${disabled}></textarea>
        <button data-action="guidance"${disabled}>Send guidance</button>
      </div>
    </section>`;
}

export function renderApprovalCard(held: PendingApproval, submitting: boolean): string {
  const disabled = submitting ? ' disabled' : '';
  return `
    <section class="approval-card">
      <h2>Draft awaiting approval</h2>
      <p class="draft-original"><strong>Original:</strong> ${escapeHtml(held.draft.text)}</p>
      <p class="draft-deliverable"><strong>Will send:</strong> ${escapeHtml(held.deliverable_text)}</p>
      <div class="decision-controls">
        <button data-action="approve-draft"${disabled}>Approve and send</button>
        <button data-action="reject-draft"${disabled}>Reject</button>
      </div>
    </section>`;
}

export function renderFeedbackComposer(disabled: boolean): string {
  const attr = disabled ? ' disabled' : '';
  return `
    <section class="composer">
      <h3>Micro-feedback</h3>
      <textarea data-role="feedback-text" placeholder="e.g. Never offer relocation assistance"${attr}></textarea>
      <button data-action="send-feedback"${attr}>Pin directive</button>
    </section>`;
}

export function renderPinnedFeedback(texts: string[]): string {
  if (texts.length === 0) return '';
  const items = texts.map((text) => `<li class="pinned">${escapeHtml(text)}</li>`).join('');
  return `<ul class="pinned-feedback">${items}</ul>`;
}

export function renderAuditTimeline(events: AuditEvent[]): string {
  if (events.length === 0) {
    return '<div class="empty">No audit events.</div>';
  }
  const rows = events
    .map((event) => {
      const summary =
        event.kind === 'transition'
          ? `${event.payload['from'] ?? 'init'} -> ${event.payload['to']}`
          : event.rationale || event.kind;
      return `
        <li class="audit-row" data-kind="${escapeHtml(event.kind)}">
          <span class="seq">#${event.seq}</span>
          <span class="kind">${escapeHtml(event.kind)}</span>
          <span class="summary">${escapeHtml(summary)}</span>
          <span class="stamp">${escapeHtml(event.timestamp)}</span>
        </li>`;
    })
    .join('\n');
  return `<ol class="audit-timeline">${rows}</ol>`;
}
