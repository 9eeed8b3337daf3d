/** Canvas heatmap for the downsampled attention matrix. */

/** Dark-blue to warm-yellow ramp over v in [0, max]. */
export function heatColor(v: number, max: number): [number, number, number] {
  const t = max > 0 ? Math.min(1, Math.max(0, v / max)) : 0;
  const r = Math.round(20 + 235 * t);
  const g = Math.round(24 + 180 * t);
  const b = Math.round(60 + 40 * (1 - t));
  return [r, g, b];
}

export function drawHeatmap(canvas: HTMLCanvasElement, data: number[][], contextLen?: number): void {
  const rows = data.length;
  const cols = rows > 0 ? data[0].length : 0;
  const ctx = canvas.getContext("2d");
  if (!ctx || rows === 0 || cols === 0) return;
  const cw = canvas.width / cols;
  const ch = canvas.height / rows;
  let max = 0;
  for (const row of data) for (const v of row) max = Math.max(max, v);
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) {
      const [red, green, blue] = heatColor(data[r][c], max);
      ctx.fillStyle = `rgb(${red},${green},${blue})`;
      ctx.fillRect(c * cw, r * ch, Math.ceil(cw), Math.ceil(ch));
    }
  }
  if (contextLen !== undefined && contextLen > 0) {
    // context/generation boundary marker (scaled into the pooled grid)
    ctx.strokeStyle = "rgba(255,255,255,0.8)";
    ctx.setLineDash([4, 3]);
    const x = (contextLen / Math.max(contextLen, cols)) * canvas.width;
    ctx.beginPath();
    ctx.moveTo(x, 0);
    ctx.lineTo(x, canvas.height);
    ctx.stroke();
    ctx.setLineDash([]);
  }
}
