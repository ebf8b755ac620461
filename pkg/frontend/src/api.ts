/** Typed client for the vigan serving API. All traffic goes through here so
 * tests can substitute a recorded-fixture fetch. */

export interface AttributeGroup {
  name: string;
  start: number;
  size: number;
}

export interface ModelInfo {
  image_size: number;
  channels: number;
  z_dim: number;
  c_dim: number;
  step: number;
  groups: AttributeGroup[];
  free_attributes: number[];
}

export interface EncodeResponse {
  z: number[];
  c_hat: number[];
}

export interface EditResponse {
  image: string; // base64 PNG
  c_effective: number[];
}

export type AttributeSet = Record<string, number>;

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function parse<T>(resp: Response): Promise<T> {
  let body: unknown;
  try {
    body = await resp.json();
  } catch {
    throw new ApiError(resp.status, `invalid response (HTTP ${resp.status})`);
  }
  const record = body as { status?: string; message?: string };
  if (!resp.ok || record.status !== "ok") {
    throw new ApiError(resp.status, record.message ?? `HTTP ${resp.status}`);
  }
  return body as T;
}

export class ApiClient {
  constructor(
    private readonly base: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.fetchImpl(`${this.base}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    }).then((r) => parse<T>(r));
  }

  async modelInfo(): Promise<ModelInfo> {
    const resp = await this.fetchImpl(`${this.base}/model/info`, { method: "GET" });
    const body = await parse<{ model_info: ModelInfo }>(resp);
    return body.model_info;
  }

  encode(imageB64: string): Promise<EncodeResponse> {
    return this.post<EncodeResponse>("/encode", { image: imageB64 });
  }

  edit(imageB64: string, set: AttributeSet): Promise<EditResponse> {
    return this.post<EditResponse>("/edit", { image: imageB64, set });
  }

  generate(c: number[], seed?: number): Promise<{ image: string }> {
    const body: { c: number[]; seed?: number } = { c };
    if (seed !== undefined) body.seed = seed;
    return this.post<{ image: string }>("/generate", body);
  }
}
