// Plain SVG bar charts; no charting dependency.

const SVG_NS = "http://www.w3.org/2000/svg";

export function barChart(
  values: Record<string, number>,
  options: { width?: number; height?: number; title?: string; errorBars?: Record<string, number> } = {},
): SVGSVGElement {
  const width = options.width ?? 420;
  const height = options.height ?? 180;
  const entries = Object.entries(values);
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.setAttribute("width", String(width));
  svg.setAttribute("height", String(height));
  svg.setAttribute("role", "img");
  if (options.title) {
    const title = document.createElementNS(SVG_NS, "title");
    title.textContent = options.title;
    svg.append(title);
  }
  if (!entries.length) return svg;
  const maxValue = Math.max(...entries.map(([, v]) => v), 1e-12);
  const pad = 24;
  const barSpace = (width - 2 * pad) / entries.length;
  entries.forEach(([key, value], i) => {
    const barHeight = ((height - 2 * pad) * value) / maxValue;
    const x = pad + i * barSpace + barSpace * 0.15;
    const y = height - pad - barHeight;
    const rect = document.createElementNS(SVG_NS, "rect");
    rect.setAttribute("x", String(x));
    rect.setAttribute("y", String(y));
    rect.setAttribute("width", String(barSpace * 0.7));
    rect.setAttribute("height", String(barHeight));
    rect.setAttribute("class", "bar");
    rect.setAttribute("data-key", key);
    rect.setAttribute("data-value", String(value));
    svg.append(rect);
    const se = options.errorBars?.[key];
    if (se !== undefined && se > 0) {
      const errHalf = ((height - 2 * pad) * se) / maxValue;
      const cx = x + barSpace * 0.35;
      const line = document.createElementNS(SVG_NS, "line");
      line.setAttribute("x1", String(cx));
      line.setAttribute("x2", String(cx));
      line.setAttribute("y1", String(Math.max(pad, y - errHalf)));
      line.setAttribute("y2", String(Math.min(height - pad, y + errHalf)));
      line.setAttribute("class", "error-bar");
      svg.append(line);
    }
    const label = document.createElementNS(SVG_NS, "text");
    label.setAttribute("x", String(x + barSpace * 0.35));
    label.setAttribute("y", String(height - pad + 14));
    label.setAttribute("text-anchor", "middle");
    label.setAttribute("class", "bar-label");
    label.textContent = key;
    svg.append(label);
  });
  return svg;
}
