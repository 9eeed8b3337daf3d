/** Patch-brush state over the model's P x P grid; one cell per patch. */

export class PatchGrid {
  bits: number[];
  /** Patch masks are only submitted once the user engages the image. */
  attached = false;

  constructor(public p: number) {
    this.bits = new Array(p * p).fill(0);
  }

  index(row: number, col: number): number {
    return row * this.p + col;
  }

  toggle(row: number, col: number): void {
    const i = this.index(row, col);
    this.bits[i] = this.bits[i] ? 0 : 1;
    this.attached = true;
  }

  paint(row: number, col: number, value: 0 | 1): void {
    this.bits[this.index(row, col)] = value;
    this.attached = true;
  }

  all(): void {
    this.bits.fill(1);
    this.attached = true;
  }

  clear(): void {
    this.bits.fill(0);
  }

  detach(): void {
    this.clear();
    this.attached = false;
  }

  count(): number {
    return this.bits.reduce((a, b) => a + b, 0);
  }

  maskOrNull(): number[] | null {
    return this.attached ? [...this.bits] : null;
  }
}
