/** Token-sequence diff for the vanilla-vs-highlighted side-by-side view. */

export type DiffKind = "equal" | "left" | "right";

export interface DiffSegment {
  kind: DiffKind;
  tokens: number[];
}

/** LCS diff over token ids; "left" = only in a, "right" = only in b. */
export function diffTokens(a: number[], b: number[]): DiffSegment[] {
  const n = a.length;
  const m = b.length;
  // lcs[i][j] = LCS length of a[i:], b[j:]
  const lcs: number[][] = Array.from({ length: n + 1 }, () => new Array(m + 1).fill(0));
  for (let i = n - 1; i >= 0; i--) {
    for (let j = m - 1; j >= 0; j--) {
      lcs[i][j] = a[i] === b[j] ? lcs[i + 1][j + 1] + 1 : Math.max(lcs[i + 1][j], lcs[i][j + 1]);
    }
  }
  const segments: DiffSegment[] = [];
  const emit = (kind: DiffKind, token: number) => {
    const last = segments[segments.length - 1];
    if (last && last.kind === kind) last.tokens.push(token);
    else segments.push({ kind, tokens: [token] });
  };
  let i = 0;
  let j = 0;
  while (i < n && j < m) {
    if (a[i] === b[j]) {
      emit("equal", a[i]);
      i++;
      j++;
    } else if (lcs[i + 1][j] >= lcs[i][j + 1]) {
      emit("left", a[i]);
      i++;
    } else {
      emit("right", b[j]);
      j++;
    }
  }
  while (i < n) emit("left", a[i++]);
  while (j < m) emit("right", b[j++]);
  return segments;
}

export function transcriptsIdentical(segments: DiffSegment[]): boolean {
  return segments.every((s) => s.kind === "equal");
}

/** Display form of one byte/special token id. */
export function tokenGlyph(id: number): string {
  if (id >= 32 && id < 127) return String.fromCharCode(id);
  if (id === 256) return "<s>";
  if (id === 257) return "</s>";
  if (id === 258) return "<img>";
  if (id === 259) return "<pad>";
  return `·${id.toString(16).padStart(2, "0")}`;
}
