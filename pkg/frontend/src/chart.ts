/** Minimal SVG line chart for the per-step contribution series. */

/** SVG path for values in [0, 1] across a w x h viewport (y grows down). */
export function polylinePath(values: number[], w: number, h: number): string {
  if (values.length === 0) return "";
  const step = values.length > 1 ? w / (values.length - 1) : 0;
  return values
    .map((v, i) => {
      const x = (i * step).toFixed(2);
      const y = (h - Math.min(1, Math.max(0, v)) * h).toFixed(2);
      return `${i === 0 ? "M" : "L"}${x},${y}`;
    })
    .join(" ");
}

export function renderContribution(svg: SVGSVGElement, values: number[], mean: number): void {
  const w = svg.viewBox.baseVal.width || 300;
  const h = svg.viewBox.baseVal.height || 80;
  svg.innerHTML = "";
  const ns = "http://www.w3.org/2000/svg";
  const meanLine = document.createElementNS(ns, "line");
  const meanY = (h - Math.min(1, Math.max(0, mean)) * h).toFixed(2);
  meanLine.setAttribute("x1", "0");
  meanLine.setAttribute("x2", String(w));
  meanLine.setAttribute("y1", meanY);
  meanLine.setAttribute("y2", meanY);
  meanLine.setAttribute("class", "chart-mean");
  svg.appendChild(meanLine);
  const path = document.createElementNS(ns, "path");
  path.setAttribute("d", polylinePath(values, w, h));
  path.setAttribute("class", "chart-line");
  path.setAttribute("fill", "none");
  svg.appendChild(path);
}
