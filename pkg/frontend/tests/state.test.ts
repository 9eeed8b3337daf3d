import { describe, expect, it } from "vitest";

import { diffTokens, transcriptsIdentical } from "../src/diff.js";
import { Api, SessionFlow, buildGenerateBody, runDiffPair } from "../src/state.js";
import type { AttentionPayload, GenerateBody, GenerationResult, Params } from "../src/types.js";

import golden from "./fixtures/golden_transcripts.json";

const PARAMS: Params = { alpha: 0.01, beta: 2.0, gamma: 1.3, max_new_tokens: 12 };

function resultFor(tokens: number[], text: string, params: Params): GenerationResult {
  return {
    text,
    tokens,
    steps: [],
    params: { ...params },
    context_len: 10,
    finish_reason: "max_tokens",
  };
}

/**
 * Network mock emulating the server's collapse behavior on the golden
 * fixture: gamma=1 & beta=1 (or no spans) returns the baseline
 * transcript, anything else the guided one.  The UI never computes
 * these; it can only display what arrives here.
 */
class MockApi implements Api {
  requests: Array<{ sessionId: string; body: GenerateBody }> = [];
  sessions = 0;

  async createSession(): Promise<string> {
    this.sessions += 1;
    return `session-${this.sessions}`;
  }

  async generate(
    sessionId: string,
    body: GenerateBody,
    onToken?: (t: { id: number | null; text: string }) => void,
  ): Promise<GenerationResult> {
    this.requests.push({ sessionId, body });
    const vanilla =
      body.spans.length === 0 || (body.params.gamma === 1.0 && body.params.beta === 1.0);
    const src = vanilla ? golden.baseline : golden.guided;
    for (const id of src.tokens) onToken?.({ id, text: "" });
    return resultFor(src.tokens, src.text, body.params);
  }

  async attention(): Promise<AttentionPayload> {
    return {
      context_len: 10,
      size: 16,
      map: { rows: 2, cols: 2, data: [[0.5, 0.5], [0.25, 0.75]] },
      contribution: { per_row: [0.2, 0.3], mean: 0.25 },
      band: { gx: 1.0, gy: 0.5, ratio: 2.0 },
    };
  }
}

const goldenInput = {
  text: golden.prompt,
  spans: [golden.span],
  patchMask: null,
};

describe("buildGenerateBody", () => {
  it("produces the wire shape", () => {
    const body = buildGenerateBody(goldenInput, PARAMS);
    expect(body).toEqual({
      text: golden.prompt,
      spans: [{ char_start: 10, char_end: 17 }],
      params: PARAMS,
    });
    expect("patch_mask" in body).toBe(false);
  });

  it("includes the patch mask only when an image is attached", () => {
    const mask = new Array(64).fill(0);
    mask[5] = 1;
    const body = buildGenerateBody({ ...goldenInput, patchMask: mask }, PARAMS);
    expect(body.patch_mask).toEqual(mask);
  });
});

describe("SessionFlow", () => {
  it("runs rounds in one session and records transcripts verbatim", async () => {
    const api = new MockApi();
    const flow = new SessionFlow(api);
    const streamed: number[] = [];
    const result = await flow.runRound(goldenInput, PARAMS, (t) => {
      if (t.id !== null) streamed.push(t.id);
    });
    // thin-client rule: displayed transcript is exactly the service response
    expect(result.text).toBe(golden.guided.text);
    expect(result.tokens).toEqual(golden.guided.tokens);
    expect(streamed).toEqual(golden.guided.tokens);
    await flow.runRound({ ...goldenInput, text: "round two" }, PARAMS);
    expect(api.requests.map((r) => r.sessionId)).toEqual(["session-1", "session-1"]);
    expect(flow.rounds).toHaveLength(2);
  });

  it("slider change regenerates with the new gamma and a changed transcript", async () => {
    const api = new MockApi();
    const flow = new SessionFlow(api);
    const baselineParams: Params = { ...PARAMS, gamma: 1.0, beta: 1.0 };
    const first = await flow.runRound(goldenInput, baselineParams);
    expect(api.requests[0].body.params.gamma).toBe(1.0);

    // user raises the gamma slider from 1.0 to 1.3 and regenerates
    const second = await flow.regenerateLast({ ...PARAMS, gamma: 1.3 });
    const regen = api.requests[1];
    expect(regen.body.params.gamma).toBe(1.3);
    expect(regen.sessionId).toBe("session-2"); // fresh session, full resubmit
    expect(second.text).not.toBe(first.text);
    expect(second.tokens).not.toEqual(first.tokens);
    expect(flow.rounds).toHaveLength(1);
    expect(flow.rounds[0].result.text).toBe(golden.guided.text);
  });

  it("replays earlier rounds with their own params on regenerate", async () => {
    const api = new MockApi();
    const flow = new SessionFlow(api);
    await flow.runRound(goldenInput, { ...PARAMS, gamma: 1.0, beta: 1.0 });
    await flow.runRound({ ...goldenInput, text: "second round" }, PARAMS);
    await flow.regenerateLast({ ...PARAMS, gamma: 2.0 });
    const replayed = api.requests.slice(2);
    expect(replayed).toHaveLength(2);
    expect(replayed[0].body.params.gamma).toBe(1.0); // round 1 keeps its params
    expect(replayed[1].body.params.gamma).toBe(2.0); // final round gets the new knob
    expect(new Set(replayed.map((r) => r.sessionId)).size).toBe(1);
  });

  it("rejects overlapping generations client-side", async () => {
    const api = new MockApi();
    let release: () => void = () => {};
    const gate = new Promise<void>((resolve) => (release = resolve));
    const slow: Api = {
      ...api,
      createSession: () => api.createSession(),
      attention: () => api.attention(),
      generate: async (sid, body, onToken) => {
        await gate;
        return api.generate(sid, body, onToken);
      },
    };
    const flow = new SessionFlow(slow);
    const first = flow.runRound(goldenInput, PARAMS);
    await expect(flow.runRound(goldenInput, PARAMS)).rejects.toThrow(/already running/);
    release();
    await first;
  });
});

describe("runDiffPair", () => {
  it("issues a gamma=1 beta=1 baseline plus the current knobs, two sessions", async () => {
    const api = new MockApi();
    const pair = await runDiffPair(api, goldenInput, PARAMS);
    expect(api.requests).toHaveLength(2);
    expect(api.requests[0].body.params.gamma).toBe(1.0);
    expect(api.requests[0].body.params.beta).toBe(1.0);
    expect(api.requests[1].body.params.gamma).toBe(1.3);
    expect(api.requests[0].sessionId).not.toBe(api.requests[1].sessionId);
    // golden fixture: the transcripts genuinely differ
    const segments = diffTokens(pair.baseline.tokens, pair.highlighted.tokens);
    expect(transcriptsIdentical(segments)).toBe(false);
  });

  it("renders identical outputs for the empty-mask case", async () => {
    const api = new MockApi();
    const input = { text: golden.prompt, spans: [], patchMask: null };
    const pair = await runDiffPair(api, input, PARAMS);
    const segments = diffTokens(pair.baseline.tokens, pair.highlighted.tokens);
    expect(transcriptsIdentical(segments)).toBe(true);
    expect(pair.baseline.text).toBe(pair.highlighted.text);
  });
});
