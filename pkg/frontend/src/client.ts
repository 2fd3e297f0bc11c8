// Thin typed client over the gateway endpoints. Errors become GatewayError
// carrying the machine-readable code so the controller can branch on it.

import type {
  ApiErrorBody,
  ApiSession,
  AuditEvent,
  Decision,
  EscalationPayload,
  FeedbackBody,
} from './types.js';

export class GatewayError extends Error {
  readonly code: ApiErrorBody['code'] | 'NETWORK';
  readonly status: number;

  constructor(code: GatewayError['code'], message: string, status = 0) {
    super(message);
    this.code = code;
    this.status = status;
  }
}

async function parseError(response: Response): Promise<GatewayError> {
  try {
    const body = (await response.json()) as ApiErrorBody;
    return new GatewayError(body.code, body.message, response.status);
  } catch {
    return new GatewayError('NETWORK', `HTTP ${response.status}`, response.status);
  }
}

export class GatewayClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`);
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as T;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    });
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as T;
  }

  listSessions(): Promise<ApiSession[]> {
    return this.get('/sessions');
  }

  getSession(sessionId: string): Promise<ApiSession> {
    return this.get(`/sessions/${sessionId}`);
  }

  getEscalation(sessionId: string): Promise<EscalationPayload> {
    return this.get(`/sessions/${sessionId}/escalation`);
  }

  postDecision(sessionId: string, decision: Decision): Promise<ApiSession> {
    return this.post(`/sessions/${sessionId}/decision`, decision);
  }

  postFeedback(
    sessionId: string,
    feedback: FeedbackBody,
  ): Promise<{ stored: boolean; audited_seq: number }> {
    return this.post(`/sessions/${sessionId}/feedback`, feedback);
  }

  async getAudit(sessionId: string, fromSeq = 1): Promise<AuditEvent[]> {
    const body = await this.get<{ events: AuditEvent[] }>(
      `/sessions/${sessionId}/audit?from=${fromSeq}`,
    );
    return body.events;
  }
}
