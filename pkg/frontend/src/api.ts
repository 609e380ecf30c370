import type {
  ApiError,
  ClassifyResponse,
  FrameMeta,
  Mode,
  PixelReadout,
  Status,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ServerError extends Error {
  readonly code: string;
  readonly status: number;

  constructor(status: number, body: ApiError) {
    super(body.message);
    this.code = body.code;
    this.status = status;
  }
}

export interface FrameResult {
  meta: FrameMeta;
  blob: Blob;
}

/** Typed client over the instrument service JSON API.  The console never
 * recomputes anything the server reports; it only echoes these payloads. */
export class InstrumentApi {
  private readonly base: string;
  private readonly fetchFn: FetchLike;

  constructor(base = "", fetchFn: FetchLike = (i, init) => fetch(i, init)) {
    this.base = base.replace(/\/$/, "");
    this.fetchFn = fetchFn;
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.base + path, init);
    const body = await resp.json();
    if (!resp.ok) {
      throw new ServerError(resp.status, body as ApiError);
    }
    return body as T;
  }

  status(): Promise<Status> {
    return this.json<Status>("/api/status");
  }

  setMode(mode: Mode): Promise<Status> {
    return this.json<Status>("/api/mode", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ mode }),
    });
  }

  putConfig(patch: Record<string, unknown>): Promise<Status> {
    return this.json<Status>("/api/config", {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(patch),
    });
  }

  classify(channels: number[]): Promise<ClassifyResponse> {
    return this.json<ClassifyResponse>("/api/classify", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ channels }),
    });
  }

  pixel(x: number, y: number): Promise<PixelReadout> {
    return this.json<PixelReadout>(`/api/pixel?x=${x}&y=${y}`);
  }

  /** Long-poll one frame newer than `since`; null when the server timed
   * out with 204 (caller just polls again). */
  async frame(since: number, timeoutS?: number): Promise<FrameResult | null> {
    const timeout = timeoutS === undefined ? "" : `&timeout=${timeoutS}`;
    const resp = await this.fetchFn(`${this.base}/api/frame?since=${since}${timeout}`);
    if (resp.status === 204) {
      return null;
    }
    if (!resp.ok) {
      throw new ServerError(resp.status, (await resp.json()) as ApiError);
    }
    const metaHeader = resp.headers.get("X-Frame-Meta");
    if (!metaHeader) {
      throw new Error("frame response missing X-Frame-Meta header");
    }
    return { meta: JSON.parse(metaHeader) as FrameMeta, blob: await resp.blob() };
  }
}
