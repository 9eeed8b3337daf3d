/** Thin client over the service API; every displayed number originates here. */

import { SseParser } from "./sse.js";
import type {
  AttentionPayload,
  GenerateBody,
  GenerationResult,
  ModelInfo,
  Offsets,
  TokenEvent,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

export class StreamError extends Error {}

async function errorMessage(resp: Response): Promise<string> {
  try {
    const data = await resp.json();
    return data.error ?? resp.statusText;
  } catch {
    return resp.statusText;
  }
}

export class ApiClient {
  constructor(
    public base: string,
    private fetchFn: typeof fetch = (...args) => fetch(...args),
  ) {}

  private async getJson(path: string): Promise<any> {
    const resp = await this.fetchFn(`${this.base}${path}`);
    if (!resp.ok) throw new ApiError(resp.status, await errorMessage(resp));
    return resp.json();
  }

  private async postJson(path: string, body: unknown): Promise<any> {
    const resp = await this.fetchFn(`${this.base}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!resp.ok) throw new ApiError(resp.status, await errorMessage(resp));
    return resp.json();
  }

  config(): Promise<ModelInfo> {
    return this.getJson("/v1/config");
  }

  async tokenize(text: string): Promise<{ tokens: number[]; offsets: Offsets }> {
    return this.postJson("/v1/tokenize", { text });
  }

  async createSession(): Promise<string> {
    const data = await this.postJson("/v1/sessions", {});
    return data.id;
  }

  attention(sessionId: string): Promise<AttentionPayload> {
    return this.getJson(`/v1/sessions/${sessionId}/attention`);
  }

  /** Stream one generation; resolves with the final result after `done`. */
  async generate(
    sessionId: string,
    body: GenerateBody,
    onToken?: (t: TokenEvent) => void,
  ): Promise<GenerationResult> {
    const resp = await this.fetchFn(`${this.base}/v1/sessions/${sessionId}/generate`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!resp.ok) throw new ApiError(resp.status, await errorMessage(resp));
    if (!resp.body) throw new StreamError("response has no body stream");

    const reader = resp.body.getReader();
    const decoder = new TextDecoder();
    const parser = new SseParser();
    let result: GenerationResult | null = null;
    for (;;) {
      const { value, done } = await reader.read();
      const chunk = done ? decoder.decode() : decoder.decode(value, { stream: true });
      for (const ev of parser.push(chunk)) {
        if (ev.event === "token") onToken?.(ev.data as TokenEvent);
        else if (ev.event === "done") result = ev.data as GenerationResult;
        else if (ev.event === "error") throw new StreamError(ev.data.message ?? "generation failed");
      }
      if (done) break;
    }
    if (!result) throw new StreamError("stream ended without a done event");
    return result;
  }
}
