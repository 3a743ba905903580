/** Typed client for the dialogue/analytics JSON API.
 *
 * Every number the UI displays comes out of these payloads; the client
 * performs no analytics of its own. The fetch function is injectable so
 * tests can serve fixtures without a network.
 */

export interface SessionConfig {
  k_direct: number;
  conv_threshold: number;
  n_direct_with_conv: number;
}

export interface CreatedSession {
  session_id: string;
  config: SessionConfig;
}

export interface RetrievedRef {
  uid: string;
  score: number;
  provenance: "conversational" | "associated" | "direct";
}

export interface TurnTiming {
  embed_ms: number;
  retrieve_ms: number;
  assemble_ms: number;
  prompt_total_ms: number;
  generate_ms: number;
}

export interface ChatTurn {
  response_text: string;
  retrieved: RetrievedRef[];
  timing: TurnTiming;
  turn: number;
}

export interface MemoryCard {
  uid: string;
  voiceover: string;
  context: string;
  characters: string[];
  valence: number;
  arousal: number;
  valence_label: string;
  arousal_label: string;
  timestamp: string;
  latitude: number | null;
  longitude: number | null;
  relevance: number;
  augmented_context: string;
}

export interface ProjectionPoint {
  uid: string;
  x: number;
  y: number;
  valence: number;
}

export interface Projection {
  points: ProjectionPoint[];
  explained_variance: [number, number];
}

export interface PathPoint {
  turn: number;
  uid: string;
  x: number;
  y: number;
}

export interface AffectEntry {
  year: number;
  weighted_valence: number;
  weighted_arousal: number;
  memory_count: number;
  weight_sum: number;
}

export interface CharacterEntry {
  name: string;
  count: number;
  share: number;
}

export interface GeoBin {
  lat: number;
  lon: number;
  count: number;
  mean_valence: number;
}

export interface GeoBinGrid {
  bin_degrees: number;
  bins: GeoBin[];
}

export interface GeoBinQuery {
  bin?: number;
  from?: string;
  to?: string;
  vmin?: number;
  vmax?: number;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

export class ExplorerApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = await resp.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        /* non-JSON error body; keep statusText */
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  createSession(overrides: Partial<SessionConfig> = {}): Promise<CreatedSession> {
    return this.post<CreatedSession>("/sessions", overrides);
  }

  chat(sessionId: string, query: string): Promise<ChatTurn> {
    return this.post<ChatTurn>(`/sessions/${sessionId}/chat`, { query });
  }

  resetSession(sessionId: string): Promise<{ session_id: string }> {
    return this.post<{ session_id: string }>(`/sessions/${sessionId}/reset`, {});
  }

  pathPoints(sessionId: string): Promise<{ points: PathPoint[] }> {
    return this.request<{ points: PathPoint[] }>(`/sessions/${sessionId}/path-points`);
  }

  memory(uid: string): Promise<MemoryCard> {
    return this.request<MemoryCard>(`/memories/${encodeURIComponent(uid)}`);
  }

  projection(): Promise<Projection> {
    return this.request<Projection>("/analytics/projection");
  }

  affectSeries(): Promise<{ entries: AffectEntry[] }> {
    return this.request<{ entries: AffectEntry[] }>("/analytics/affect-series");
  }

  characters(): Promise<{ entries: CharacterEntry[] }> {
    return this.request<{ entries: CharacterEntry[] }>("/analytics/characters");
  }

  geoBins(query: GeoBinQuery = {}): Promise<GeoBinGrid> {
    const params = new URLSearchParams();
    if (query.bin !== undefined) params.set("bin", String(query.bin));
    if (query.from !== undefined) params.set("from", query.from);
    if (query.to !== undefined) params.set("to", query.to);
    if (query.vmin !== undefined) params.set("vmin", String(query.vmin));
    if (query.vmax !== undefined) params.set("vmax", String(query.vmax));
    const suffix = params.toString() ? `?${params.toString()}` : "";
    return this.request<GeoBinGrid>(`/analytics/geo-bins${suffix}`);
  }
}
