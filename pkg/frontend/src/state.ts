/**
 * Conversation flow state.
 *
 * The server owns all model math; this module only assembles request
 * bodies, tracks rounds, and replays the conversation into a fresh
 * session when a knob change asks for regeneration (the server rebuilds
 * its caches from the resubmitted history, and greedy decoding makes
 * unchanged rounds reproduce exactly).
 */

import type {
  AttentionPayload,
  GenerateBody,
  GenerationResult,
  Params,
  TokenEvent,
  WireSpan,
} from "./types.js";

/** The slice of the API client the flow depends on (mockable in tests). */
export interface Api {
  createSession(): Promise<string>;
  generate(
    sessionId: string,
    body: GenerateBody,
    onToken?: (t: TokenEvent) => void,
  ): Promise<GenerationResult>;
  attention(sessionId: string): Promise<AttentionPayload>;
}

export interface RoundInput {
  text: string;
  spans: WireSpan[];
  patchMask: number[] | null;
}

export interface RoundRecord {
  input: RoundInput;
  params: Params;
  result: GenerationResult;
}

export function buildGenerateBody(input: RoundInput, params: Params): GenerateBody {
  const body: GenerateBody = {
    text: input.text,
    spans: input.spans.map((s) => ({ ...s })),
    params: { ...params },
  };
  if (input.patchMask !== null) body.patch_mask = [...input.patchMask];
  return body;
}

export class SessionFlow {
  rounds: RoundRecord[] = [];
  busy = false;
  private sessionId: string | null = null;

  constructor(private client: Api) {}

  private async ensureSession(): Promise<string> {
    if (this.sessionId === null) this.sessionId = await this.client.createSession();
    return this.sessionId;
  }

  /** Append a round to the live conversation and stream its reply. */
  async runRound(
    input: RoundInput,
    params: Params,
    onToken?: (t: TokenEvent) => void,
  ): Promise<GenerationResult> {
    if (this.busy) throw new Error("a generation is already running");
    this.busy = true;
    try {
      const sid = await this.ensureSession();
      const result = await this.client.generate(sid, buildGenerateBody(input, params), onToken);
      this.rounds.push({ input, params, result });
      return result;
    } finally {
      this.busy = false;
    }
  }

  /**
   * Re-run the last round with new params: fresh session, full history
   * replayed (earlier rounds keep their own params), last round swapped
   * onto the new knobs.
   */
  async regenerateLast(params: Params, onToken?: (t: TokenEvent) => void): Promise<GenerationResult> {
    if (this.rounds.length === 0) throw new Error("nothing to regenerate");
    if (this.busy) throw new Error("a generation is already running");
    this.busy = true;
    try {
      const sid = await this.client.createSession();
      let last: GenerationResult | null = null;
      const replay = this.rounds.map((r, i) => ({
        input: r.input,
        params: i === this.rounds.length - 1 ? params : r.params,
      }));
      const newRounds: RoundRecord[] = [];
      for (let i = 0; i < replay.length; i++) {
        const isLast = i === replay.length - 1;
        last = await this.client.generate(
          sid,
          buildGenerateBody(replay[i].input, replay[i].params),
          isLast ? onToken : undefined,
        );
        newRounds.push({ input: replay[i].input, params: replay[i].params, result: last });
      }
      this.sessionId = sid;
      this.rounds = newRounds;
      return last!;
    } finally {
      this.busy = false;
    }
  }

  /** Attention payload for the conversation's most recent generation. */
  async lastAttention(): Promise<AttentionPayload> {
    if (this.sessionId === null) throw new Error("no session yet");
    return this.client.attention(this.sessionId);
  }

  reset(): void {
    this.rounds = [];
    this.sessionId = null;
  }
}

/**
 * One-click side-by-side comparison: the same single round generated in
 * two throwaway sessions, once with the gamma=1, beta=1 baseline and
 * once with the current knobs.
 */
export async function runDiffPair(
  client: Api,
  input: RoundInput,
  params: Params,
): Promise<{ baseline: GenerationResult; highlighted: GenerationResult }> {
  const baselineParams: Params = { ...params, gamma: 1.0, beta: 1.0 };
  const sidA = await client.createSession();
  const baseline = await client.generate(sidA, buildGenerateBody(input, baselineParams));
  const sidB = await client.createSession();
  const highlighted = await client.generate(sidB, buildGenerateBody(input, params));
  return { baseline, highlighted };
}
