// Typed client for the policy service. The console performs no local
// inference: every probability it shows came out of one of these calls.

export type Action = "INC" | "DEC" | "SAME";

export interface KnobPrediction {
  action: Action;
  p_same: number;
  p_increase: number;
  p_decrease: number;
  tau: number;
  change_probability: number;
}

export type Recommendations = Record<string, KnobPrediction>;

export interface SessionState {
  step: number;
  values: Record<string, number>;
  previous_values: Record<string, number>;
  features: Record<string, number>;
  ecmo_type: string;
  on_ecmo: boolean;
}

export interface SessionResponse {
  session_id: string;
  state: SessionState;
  recommendations: Recommendations;
}

export interface RegistryEntry {
  name: string;
  unit: string;
  category: string;
  age_normalized: boolean;
}

export interface KnobInfo {
  name: string;
  threshold: number | null;
  tau: number;
  fallback_direction: Action;
  has_direction_model: boolean;
}

export interface ModelInfo {
  fingerprint: Record<string, unknown>;
  format_version: number;
  feature_names: string[];
  knobs: KnobInfo[];
  registry: RegistryEntry[];
}

export interface PredictResponse {
  fingerprint: Record<string, unknown>;
  per_knob: Recommendations;
}

export interface SessionOptions {
  seed?: number;
  age_years?: number;
  ecmo_type?: "VA" | "VV";
  on_ecmo?: boolean;
}

export class ServiceError extends Error {
  constructor(
    message: string,
    public readonly status: number,
    public readonly detail: unknown,
  ) {
    super(message);
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  let response: Response;
  try {
    response = await fetch(base + path, init);
  } catch (err) {
    throw new ServiceError(`service unreachable at ${base}`, 0, err);
  }
  const body = await response.json().catch(() => null);
  if (!response.ok) {
    throw new ServiceError(`${path} failed (${response.status})`, response.status, body?.detail ?? body);
  }
  return body as T;
}

function post<T>(base: string, path: string, payload: unknown): Promise<T> {
  return request<T>(base, path, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(payload),
  });
}

export class ServiceClient {
  constructor(public readonly baseUrl: string) {}

  health(): Promise<{ status: string; version: string; knobs: string[] }> {
    return request(this.baseUrl, "/health");
  }

  modelInfo(): Promise<ModelInfo> {
    return request(this.baseUrl, "/model/info");
  }

  predict(features: Record<string, number>): Promise<PredictResponse> {
    return post(this.baseUrl, "/predict", { features });
  }

  startSession(options: SessionOptions): Promise<SessionResponse> {
    return post(this.baseUrl, "/session", options);
  }

  step(sessionId: string, actions: Record<string, Action>): Promise<SessionResponse> {
    return post(this.baseUrl, `/session/${sessionId}/step`, { actions });
  }
}
