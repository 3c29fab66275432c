/** Typed client for the aroma composition HTTP API.
 *
 * The client is the only place the UI talks to the network; every number
 * the UI displays originates from one of these responses.
 */

export interface PaletteOdorant {
  name: string;
  volatility: number;
  note: string;
  categories: string[];
  location: number;
}

export interface PaletteDoc {
  cycle_seconds: number;
  odorants: PaletteOdorant[];
}

export interface TurnPayload {
  index: number;
  ratios: Record<string, string>; // two-decimal strings, e.g. "0.25"
  justification: string;
  changes_made: string | null;
  feedback: string | null;
  latency_ms: number;
  repaired: boolean;
  modalities: string[];
}

export interface DiffEntry {
  name: string;
  kind: "increased" | "decreased" | "zeroed" | "introduced";
  old: number;
  new: number;
  delta: number;
}

export interface CreateSessionResponse {
  session_id: string;
  turn: TurnPayload;
  active_count_ok: boolean;
}

export interface RefineResponse {
  turn: TurnPayload;
  diff: DiffEntry[];
}

export interface PlayStep {
  channel: number;
  requested_ms: number;
  started_at_ms: number;
  ended_at_ms: number;
}

export interface PlayReport {
  completed: boolean;
  aborted_at_step: number | null;
  total_ms: number;
  steps: PlayStep[];
}

export interface SatisfiedResponse {
  session_id: string;
  status: string;
  refinement_turns: number;
}

export interface SessionPayload {
  session_id: string;
  status: "active" | "satisfied" | "abandoned";
  original_input: {
    text: string | null;
    image_description: string | null;
    transcript: string | null;
  };
  turns: TurnPayload[];
}

/** Error body the service returns for every non-2xx response. */
export interface ErrorBody {
  code: string;
  message: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export type FetchLike = (
  input: string,
  init?: {
    method?: string;
    headers?: Record<string, string>;
    body?: string;
  },
) => Promise<{ status: number; json(): Promise<unknown> }>;

export interface CreateSessionBody {
  text?: string;
  image_base64?: string;
  audio_base64?: string;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) =>
      fetch(input, init),
  ) {}

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, {
      method,
      headers: body === undefined ? {} : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const doc = (await response.json()) as T | ErrorBody;
    if (response.status >= 400) {
      const err = doc as ErrorBody;
      throw new ApiError(
        response.status,
        err.code ?? "unknown",
        err.message ?? `HTTP ${response.status}`,
      );
    }
    return doc as T;
  }

  getPalette(): Promise<PaletteDoc> {
    return this.request("GET", "/palette");
  }

  createSession(body: CreateSessionBody): Promise<CreateSessionResponse> {
    return this.request("POST", "/sessions", body);
  }

  refine(sessionId: string, feedback: string): Promise<RefineResponse> {
    return this.request("POST", `/sessions/${sessionId}/refine`, { feedback });
  }

  play(sessionId: string): Promise<PlayReport> {
    return this.request("POST", `/sessions/${sessionId}/play`);
  }

  markSatisfied(sessionId: string): Promise<SatisfiedResponse> {
    return this.request("POST", `/sessions/${sessionId}/satisfied`);
  }

  getSession(sessionId: string): Promise<SessionPayload> {
    return this.request("GET", `/sessions/${sessionId}`);
  }
}
