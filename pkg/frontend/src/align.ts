/**
 * Span widening over tokenizer offsets.
 *
 * The server aligns byte selections outward to token boundaries; the UI
 * previews the same widening from the offsets that /v1/tokenize returns,
 * so what the user sees highlighted is exactly what the server will
 * highlight.  Offsets are contiguous half-open byte ranges, one per token.
 */

import type { Offsets, WireSpan } from "./types.js";

export interface TokenSpan {
  tokenStart: number;
  tokenEnd: number;
  charStart: number;
  charEnd: number;
}

/** Minimal token range whose byte coverage is a superset of [charStart, charEnd). */
export function widenSelection(offsets: Offsets, charStart: number, charEnd: number): TokenSpan {
  if (offsets.length === 0) {
    throw new RangeError("cannot align a span against an empty token sequence");
  }
  const total = offsets[offsets.length - 1][1];
  if (!(charStart >= 0 && charStart < charEnd && charEnd <= total)) {
    throw new RangeError(`byte range [${charStart}, ${charEnd}) outside text of length ${total}`);
  }
  let tokenStart = -1;
  let tokenEnd = -1;
  for (let t = 0; t < offsets.length; t++) {
    const [s, e] = offsets[t];
    if (s <= charStart && charStart < e) tokenStart = t;
    if (s < charEnd && charEnd <= e) tokenEnd = t + 1;
  }
  if (tokenStart < 0 || tokenEnd < 0) {
    throw new RangeError(`offset table does not cover [${charStart}, ${charEnd})`);
  }
  return {
    tokenStart,
    tokenEnd,
    charStart: offsets[tokenStart][0],
    charEnd: offsets[tokenEnd - 1][1],
  };
}

const encoder = new TextEncoder();

/** UTF-8 byte length of a JS string. */
export function byteLength(text: string): number {
  return encoder.encode(text).length;
}

/** Byte offset of a UTF-16 code-unit index into text. */
export function byteOffset(text: string, charIndex: number): number {
  return encoder.encode(text.slice(0, charIndex)).length;
}

/** Inverse of byteOffset: UTF-16 index whose byte offset is byteOff. */
export function charIndexFromByte(text: string, byteOff: number): number {
  let bytes = 0;
  let i = 0;
  for (const ch of text) {
    if (bytes >= byteOff) return i;
    bytes += encoder.encode(ch).length;
    i += ch.length;
  }
  return text.length;
}

/** Textarea selection (UTF-16 indices) to a widened wire span, or null if empty. */
export function selectionToSpan(
  text: string,
  offsets: Offsets,
  selStart: number,
  selEnd: number,
): WireSpan | null {
  if (selStart >= selEnd) return null;
  const cs = byteOffset(text, selStart);
  const ce = byteOffset(text, selEnd);
  const widened = widenSelection(offsets, cs, ce);
  return { char_start: widened.charStart, char_end: widened.charEnd };
}
