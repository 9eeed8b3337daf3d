/** Wire types mirroring the service API. */

export type Offsets = Array<[number, number]>;

export interface WireSpan {
  char_start: number;
  char_end: number;
}

export interface Params {
  alpha: number;
  beta: number;
  gamma: number;
  max_new_tokens: number;
}

export interface GenerateBody {
  text: string;
  spans: WireSpan[];
  patch_mask?: number[];
  params: Params;
}

export interface StepRecord {
  chosen: number;
  top_cond: Array<[number, number]>;
  top_uncond: Array<[number, number]>;
  top_combined: Array<[number, number]>;
}

export interface GenerationResult {
  text: string;
  tokens: number[];
  steps: StepRecord[];
  params: Record<string, unknown>;
  context_len: number;
  finish_reason: string;
}

export interface TokenEvent {
  id: number | null;
  text: string;
}

export interface ModelInfo {
  d_model: number;
  n_layers: number;
  n_heads: number;
  max_seq: number;
  n_patches: number;
  patch_grid: number;
  defaults: Record<string, number | string>;
}

export interface AttentionPayload {
  context_len: number;
  size: number;
  map: { rows: number; cols: number; data: number[][] };
  contribution: { per_row: number[]; mean: number };
  band: { gx: number | null; gy: number | null; ratio: number | null };
}
