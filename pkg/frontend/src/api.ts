/**
 * Typed client for the feedsim /v1 session API.
 *
 * Mirrors the JSON schemas documented in the service README. The console
 * performs no business logic of its own: every state transition happens on
 * the server and the client just carries payloads back and forth. POST
 * calls send idempotency tokens so a retried request is never recorded
 * twice.
 */

export type ActionKind =
  | 'click'
  | 'comment'
  | 'share'
  | 'like'
  | 'watch'
  | 'skip'
  | 'leave';

export const ALL_ACTIONS: ActionKind[] = [
  'click', 'comment', 'share', 'like', 'watch', 'skip', 'leave',
];

export interface ItemPayload {
  item_id: string;
  title: string;
  description: string;
  category: string;
  content_type: string;
  duration_s: number;
}

export interface ListPayload {
  items: ItemPayload[];
  strategy_note: string;
}

export interface SessionStatus {
  session_id: string;
  done: boolean;
  awaiting: 'action' | 'instruction' | null;
  turn_index: number;
  position: number;
  ended_by: string | null;
  list: ListPayload | null;
}

export interface ProfileInput {
  user_id: string;
  age?: number;
  gender?: string;
  location?: string;
  interests?: Record<string, number>;
  social_groups?: string[];
  context?: { time_of_day?: string; day_of_week?: string; device?: string };
}

export interface DecisionRecord {
  item_id: string;
  action: ActionKind;
  watch_s?: number;
  reasoning: string;
  mindset_update: string;
}

export interface TurnRecord {
  turn_index: number;
  shown: { items: string[]; strategy_note: string };
  decisions: DecisionRecord[];
  instruction_out: { text: string; source: string; issued_after_item: string } | null;
}

export interface TrajectoryPayload {
  session_id: string;
  user_id: string;
  mode: string;
  ended_by: string | null;
  turns: TurnRecord[];
}

export type RewardStats = Record<string, number>;

export interface ComparisonPayload {
  session_id: string;
  annotator_stats: RewardStats;
  simulated_stats: RewardStats;
  per_metric_delta: RewardStats;
}

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`API error ${status}: ${detail}`);
  }
}

async function parseOrThrow<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      detail = typeof body.detail === 'string' ? body.detail : JSON.stringify(body.detail);
    } catch {
      /* non-JSON error body; keep statusText */
    }
    throw new ApiError(response.status, detail);
  }
  return response.json() as Promise<T>;
}

let tokenCounter = 0;

export function freshToken(): string {
  tokenCounter += 1;
  return `tok-${Date.now().toString(36)}-${tokenCounter}-${Math.floor(Math.random() * 1e9).toString(36)}`;
}

export class SessionApi {
  constructor(
    private baseUrl: string = '',
    private fetchImpl: typeof fetch = fetch,
  ) {}

  private url(path: string): string {
    return `${this.baseUrl}/v1${path}`;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchImpl(this.url(path), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    });
    return parseOrThrow<T>(response);
  }

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchImpl(this.url(path));
    return parseOrThrow<T>(response);
  }

  async createSession(
    profile: ProfileInput, k?: number,
  ): Promise<{ session_id: string; status: SessionStatus }> {
    const body: Record<string, unknown> = { profile };
    if (k !== undefined) body.k = k;
    return this.post('/sessions', body);
  }

  async getStatus(sessionId: string): Promise<SessionStatus> {
    return this.get(`/sessions/${sessionId}`);
  }

  async submitAction(
    sessionId: string,
    itemId: string,
    action: ActionKind,
    watchSeconds: number | undefined,
    token: string,
  ): Promise<{ recorded: boolean; status: SessionStatus }> {
    const body: Record<string, unknown> = { item_id: itemId, action, token };
    if (watchSeconds !== undefined) body.watch_s = watchSeconds;
    return this.post(`/sessions/${sessionId}/actions`, body);
  }

  async submitInstruction(
    sessionId: string, text: string | null, token: string,
  ): Promise<{ status: SessionStatus }> {
    return this.post(`/sessions/${sessionId}/instruction`, { text, token });
  }

  async getTrajectory(sessionId: string): Promise<TrajectoryPayload> {
    return this.get(`/sessions/${sessionId}/trajectory`);
  }

  async getComparison(sessionId: string): Promise<ComparisonPayload> {
    return this.get(`/sessions/${sessionId}/comparison`);
  }
}
