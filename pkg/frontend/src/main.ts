// Browser bootstrap: wires the controller to the DOM and the gateway.

import { GatewayClient } from './client.js';
import { ConsoleController, type ConsoleState } from './controller.js';
import {
  renderApprovalCard,
  renderAuditTimeline,
  renderErrorBanner,
  renderEscalation,
  renderFeedbackComposer,
  renderNotice,
  renderPinnedFeedback,
  renderSessionList,
} from './views.js';

function gatewayBase(): string {
  const params = new URLSearchParams(window.location.search);
  return params.get('gateway') ?? 'http://127.0.0.1:8000';
}

function renderPage(state: ConsoleState): void {
  const list = document.getElementById('session-list');
  const detail = document.getElementById('detail');
  const timeline = document.getElementById('timeline');
  if (!list || !detail || !timeline) return;

  list.innerHTML = renderSessionList(state.sessions, state.selectedId);

  const parts: string[] = [];
  if (state.error) parts.push(renderErrorBanner(`Gateway unreachable: ${state.error}`));
  if (state.notice) parts.push(renderNotice(state.notice));
  const selected = state.selected;
  if (selected) {
    if (selected.pending_escalation) {
      parts.push(renderEscalation(selected.pending_escalation, state.submitting));
    } else if (selected.pending_approval) {
      parts.push(renderApprovalCard(selected.pending_approval, state.submitting));
    } else {
      parts.push(`<div class="empty">Session is in ${selected.state}; nothing to decide.</div>`);
    }
    parts.push(renderPinnedFeedback(state.pinnedFeedback));
    parts.push(renderFeedbackComposer(selected.terminal));
  }
  detail.innerHTML = parts.join('\n');
  timeline.innerHTML = renderAuditTimeline(state.audit);
}

function main(): void {
  const client = new GatewayClient(gatewayBase());
  const controller = new ConsoleController(client, renderPage);

  document.addEventListener('click', (event) => {
    const target = event.target as HTMLElement;
    const card = target.closest<HTMLElement>('.session-card');
    if (card?.dataset.session && !target.closest('button')) {
      controller.select(card.dataset.session);
      return;
    }
    const action = target.closest<HTMLElement>('[data-action]')?.dataset.action;
    if (!action) return;
    if (action === 'approve-option') {
      const optionId = (target.closest<HTMLElement>('[data-option-id]')?.dataset
        .optionId) as string;
      void controller.approveOption(optionId);
    } else if (action === 'decline') {
      void controller.decline();
    } else if (action === 'guidance') {
      const box = document.querySelector<HTMLTextAreaElement>('[data-role="guidance"]');
      void controller.guidance(box?.value ?? '');
    } else if (action === 'approve-draft') {
      void controller.approveDraft();
    } else if (action === 'reject-draft') {
      void controller.rejectDraft();
    } else if (action === 'send-feedback') {
      const box = document.querySelector<HTMLTextAreaElement>(
        '[data-role="feedback-text"]',
      );
      void controller.sendFeedback(box?.value ?? '');
      if (box) box.value = '';
    }
  });

  controller.start();
}

main();
