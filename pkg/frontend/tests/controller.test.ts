import { describe, expect, it } from 'vitest';

import { GatewayClient } from '../src/client.js';
import {
  computePollDelay,
  ConsoleController,
  ESCALATED_POLL_MS,
  LIST_POLL_MS,
} from '../src/controller.js';
import type { ApiSession } from '../src/types.js';

function session(overrides: Partial<ApiSession> = {}): ApiSession {
  return {
    session_id: 'wt',
    state: 'ESCALATE',
    terminal: false,
    awaiting_decision: true,
    tci: 8 / 11,
    tci_weighted: 8 / 11,
    revealed_count: 8,
    required_count: 11,
    missing: [],
    round: 9,
    pending_escalation: {
      trigger: 'boundary_violation',
      state_snapshot: { phase: 'NEGOTIATE', last_messages: [] },
      tci_ledger: { revealed: [], missing: [], tci: 8 / 11, tci_weighted: 8 / 11 },
      boundary_at_risk: 'requests $105K, approved band $80K-$100K',
      safety_events: [],
      options: [
        { option_id: 'A', label: 'Counter', tradeoff: 't', effect: {} },
        { option_id: 'B', label: 'Increase', tradeoff: 't', effect: {} },
        { option_id: 'C', label: 'Decline', tradeoff: 't', effect: {} },
      ],
      approval_request: 'Approve A, B, or C.',
      resume_state: 'NEGOTIATE',
    },
    pending_approval: null,
    last_updated: null,
    audit_tail_seq: 1,
    scenario: {},
    ...overrides,
  };
}

interface FakeCall {
  method: string;
  path: string;
  body?: unknown;
}

/** In-memory gateway double speaking the same JSON dialect. */
function fakeGateway(initial: ApiSession) {
  const calls: FakeCall[] = [];
  let current = initial;
  let decisionCount = 0;
  const fetchImpl = (async (url: string | URL | Request, init?: RequestInit) => {
    const path = String(url).replace('http://fake', '');
    const method = init?.method ?? 'GET';
    const body = init?.body ? JSON.parse(String(init.body)) : undefined;
    calls.push({ method, path, body });
    const json = (data: unknown, status = 200) =>
      new Response(JSON.stringify(data), {
        status,
        headers: { 'content-type': 'application/json' },
      });
    if (path === '/sessions') return json([current]);
    if (path === '/sessions/wt') return json(current);
    if (path.startsWith('/sessions/wt/audit')) return json({ events: [] });
    if (path === '/sessions/wt/decision' && method === 'POST') {
      decisionCount += 1;
      if (current.pending_escalation === null) {
        return json({ code: 'CONFLICT', message: 'no pending decision' }, 409);
      }
      current = session({ state: 'NEGOTIATE', pending_escalation: null, awaiting_decision: false });
      return json(current);
    }
    if (path === '/sessions/wt/feedback' && method === 'POST') {
      return json({ stored: true, audited_seq: 99 });
    }
    return json({ code: 'NOT_FOUND', message: 'nope' }, 404);
  }) as typeof fetch;
  return {
    calls,
    client: new GatewayClient('http://fake', fetchImpl),
    decisions: () => decisionCount,
    close: () => undefined,
  };
}

describe('computePollDelay', () => {
  it('polls the list every 2s normally', () => {
    expect(computePollDelay([session({ state: 'SCREEN', pending_escalation: null })])).toBe(
      LIST_POLL_MS,
    );
  });

  it('tightens to 1s while anything is escalated', () => {
    expect(computePollDelay([session()])).toBe(ESCALATED_POLL_MS);
  });
});

describe('ConsoleController', () => {
  it('tick selects the session that needs a decision', async () => {
    const fake = fakeGateway(session());
    const controller = new ConsoleController(fake.client, () => undefined);
    await controller.tick();
    expect(controller.state.selectedId).toBe('wt');
    expect(controller.state.selected?.state).toBe('ESCALATE');
  });

  it('refuses option ids that are not in the payload', async () => {
    const fake = fakeGateway(session());
    const controller = new ConsoleController(fake.client, () => undefined);
    await controller.tick();
    await controller.approveOption('Z');
    expect(controller.state.notice).toContain('not part of the payload');
    expect(fake.calls.some((call) => call.path.endsWith('/decision'))).toBe(false);
  });

  it('applies a decision only via the server response', async () => {
    const fake = fakeGateway(session());
    const renders: string[] = [];
    const controller = new ConsoleController(fake.client, (state) => {
      renders.push(state.selected?.state ?? 'none');
    });
    await controller.tick();
    const submission = controller.approveOption('B');
    // No optimistic flip: still ESCALATE until the response lands.
    expect(controller.state.selected?.state).toBe('ESCALATE');
    await submission;
    expect(controller.state.selected?.state).toBe('NEGOTIATE');
    expect(renders.at(-1)).toBe('NEGOTIATE');
  });

  it('guards against double-click while a submission is in flight', async () => {
    const fake = fakeGateway(session());
    const controller = new ConsoleController(fake.client, () => undefined);
    await controller.tick();
    await Promise.all([controller.approveOption('B'), controller.approveOption('B')]);
    expect(fake.decisions()).toBe(1);
  });

  it('maps a late duplicate to the stale-payload notice', async () => {
    const fake = fakeGateway(session());
    const controller = new ConsoleController(fake.client, () => undefined);
    await controller.tick();
    await controller.approveOption('B');
    // Payload is gone server-side; a second approve comes back CONFLICT.
    controller.state.selected = session();
    await controller.approveOption('B');
    expect(fake.decisions()).toBe(2);
    expect(controller.state.notice).toContain('already decided');
    expect(controller.state.selected?.state).toBe('NEGOTIATE');
  });

  it('blocks empty guidance and empty feedback client-side', async () => {
    const fake = fakeGateway(session());
    const controller = new ConsoleController(fake.client, () => undefined);
    await controller.tick();
    await controller.guidance('   ');
    expect(controller.state.notice).toContain('Guidance text');
    await controller.sendFeedback('');
    expect(controller.state.notice).toContain('Feedback text');
    expect(fake.calls.filter((call) => call.method === 'POST')).toHaveLength(0);
  });

  it('pins feedback after the gateway stores it', async () => {
    const fake = fakeGateway(session());
    const controller = new ConsoleController(fake.client, () => undefined);
    await controller.tick();
    await controller.sendFeedback('Never offer relocation assistance');
    expect(controller.state.pinnedFeedback).toEqual(['Never offer relocation assistance']);
  });
});
