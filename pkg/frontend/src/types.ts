// Wire types mirroring the gateway's request/response bodies field-for-field.

export interface TranscriptMessage {
  turn: number;
  speaker: string;
  text: string;
  structured_values: Record<string, unknown>;
}

export interface EscalationOption {
  option_id: string;
  label: string;
  tradeoff: string;
  effect: Record<string, unknown>;
}

export interface TciLedgerView {
  revealed: string[];
  missing: string[];
  tci: number;
  tci_weighted: number;
}

export interface EscalationPayload {
  trigger: string;
  state_snapshot: { phase: string; last_messages: TranscriptMessage[] };
  tci_ledger: TciLedgerView;
  boundary_at_risk: string;
  safety_events: Record<string, unknown>[];
  options: EscalationOption[];
  approval_request: string;
  resume_state: string;
}

export interface PendingApproval {
  draft_id: string;
  draft: { text: string; intent: Record<string, unknown>; phase: string };
  verdict: Record<string, unknown>;
  deliverable_text: string;
  kind: string;
  next_state: string | null;
  terms: Record<string, unknown> | null;
}

export interface ApiSession {
  session_id: string;
  state: string;
  terminal: boolean;
  awaiting_decision: boolean;
  tci: number;
  tci_weighted: number;
  revealed_count: number;
  required_count: number;
  missing: string[];
  round: number;
  pending_escalation: EscalationPayload | null;
  pending_approval: PendingApproval | null;
  last_updated: string | null;
  audit_tail_seq: number;
  scenario: Record<string, unknown>;
}

export interface AuditEvent {
  seq: number;
  timestamp: string;
  session_id: string;
  kind: string;
  payload: Record<string, unknown>;
  rationale: string;
}

export interface ApiErrorBody {
  code: 'NOT_FOUND' | 'CONFLICT' | 'INVALID' | 'TERMINAL';
  message: string;
}

export type Decision =
  | { option_id: string }
  | { kind: 'decline' }
  | { kind: 'guidance'; guidance: string }
  | { kind: 'approve_draft' }
  | { kind: 'reject_draft' };

export interface FeedbackBody {
  text: string;
  category?: string;
  constrains?: string;
  directive?: string;
}
