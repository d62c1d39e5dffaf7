/** Typed client for the play server.  One method per route, no state. */

export interface ModelInfo {
  id: string;
  loadable: boolean;
  config: string;
  elo_lower: number | null;
  elo_upper: number | null;
  val_accuracy: number | null;
  error: string;
}

export interface HistoryEntry {
  ply: number;
  side: 'Red' | 'Black';
  mover: 'human' | 'model';
  token: string;
  iccs: string;
}

export type SessionStatus = 'Ongoing' | 'HumanWins' | 'ModelWins';

export interface SessionView {
  session_id: string;
  model_id: string;
  human_side: 'Red' | 'Black';
  policy: 'argmax' | 'sample';
  seed: number;
  status: SessionStatus;
  history: HistoryEntry[];
  board: string[];
  turn: 'Red' | 'Black' | null;
  legal_moves: string[];
}

export interface DistributionEntry {
  token: string;
  iccs: string;
  p: number;
}

export interface MoveReply extends SessionView {
  reply: HistoryEntry | null;
  distribution?: DistributionEntry[];
}

export interface SessionRequest {
  model_id: string;
  human_side: 'Red' | 'Black';
  policy: 'argmax' | 'sample';
  seed?: number;
}

export interface AnalyzeRequest {
  model_id: string;
  history: string[];
  actual?: string;
  ks?: number[];
  ps?: number[];
}

export interface AnalyzeResponse {
  model_id: string;
  distribution: DistributionEntry[];
  [extra: string]: unknown;
}

/** A non-2xx reply, carrying the server's {code, message, detail} body. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly detail: Record<string, unknown> = {},
  ) {
    super(message);
    this.name = 'ApiError';
  }

  /** Playable alternatives the server attached to an illegal-move reply. */
  get legalMoves(): string[] {
    const moves = this.detail['legal_moves'];
    return Array.isArray(moves) ? moves.map(String) : [];
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class Api {
  constructor(
    private readonly base: string = '',
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  async listModels(): Promise<ModelInfo[]> {
    const body = await this.request<{ models: ModelInfo[] }>('GET', '/models');
    return body.models;
  }

  createSession(req: SessionRequest): Promise<SessionView> {
    return this.request('POST', '/sessions', req);
  }

  getSession(id: string): Promise<SessionView> {
    return this.request('GET', `/sessions/${encodeURIComponent(id)}`);
  }

  playMove(id: string, move: string, includeDistribution = false): Promise<MoveReply> {
    return this.request('POST', `/sessions/${encodeURIComponent(id)}/moves`, {
      move,
      include_distribution: includeDistribution,
    });
  }

  analyze(req: AnalyzeRequest): Promise<AnalyzeResponse> {
    return this.request('POST', '/analyze', req);
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: {} };
    if (body !== undefined) {
      init.headers = { 'content-type': 'application/json' };
      init.body = JSON.stringify(body);
    }
    let response: Response;
    try {
      response = await this.fetchFn(this.base + path, init);
    } catch (err) {
      throw new ApiError(0, 'unreachable', `server unreachable: ${String(err)}`);
    }
    if (!response.ok) {
      const fallback = { code: 'http_error', message: `HTTP ${response.status}`, detail: {} };
      const payload = await response.json().catch(() => fallback);
      throw new ApiError(
        response.status,
        typeof payload.code === 'string' ? payload.code : fallback.code,
        typeof payload.message === 'string' ? payload.message : fallback.message,
        payload.detail && typeof payload.detail === 'object' ? payload.detail : {},
      );
    }
    return response.json() as Promise<T>;
  }
}
