/** Minimal deterministic SVG assembly: fixed styles, fixed precision, no
 * timestamps, so identical inputs always render identical bytes. */

export const WIDTH = 720;
export const HEIGHT = 480;
export const MARGIN = { left: 70, right: 24, top: 40, bottom: 52 };

export const PALETTE = ['#1f77b4', '#d62728', '#2ca02c', '#9467bd', '#ff7f0e', '#8c564b'];

export function fmt(x: number): string {
  return x.toFixed(2);
}

export interface Scale {
  (value: number): number;
  ticks: number[];
  log: boolean;
}

function niceTicksLinear(lo: number, hi: number, count = 6): number[] {
  if (!(hi > lo)) return [lo];
  const span = hi - lo;
  const step0 = span / count;
  const mag = 10 ** Math.floor(Math.log10(step0));
  const norm = step0 / mag;
  const step = (norm >= 5 ? 5 : norm >= 2 ? 2 : 1) * mag;
  const first = Math.ceil(lo / step) * step;
  const out: number[] = [];
  for (let v = first; v <= hi + 1e-12 * span; v += step) out.push(v);
  return out;
}

function decadeTicks(lo: number, hi: number): number[] {
  const out: number[] = [];
  for (let e = Math.ceil(Math.log10(lo) - 1e-9); 10 ** e <= hi * (1 + 1e-9); e++) {
    out.push(10 ** e);
  }
  return out.length >= 2 ? out : [lo, hi];
}

export function linScale(lo: number, hi: number, outLo: number, outHi: number): Scale {
  const span = hi - lo || 1;
  const fn = ((v: number) => outLo + ((v - lo) / span) * (outHi - outLo)) as Scale;
  fn.ticks = niceTicksLinear(lo, hi);
  fn.log = false;
  return fn;
}

export function logScale(lo: number, hi: number, outLo: number, outHi: number): Scale {
  const llo = Math.log10(lo);
  const lhi = Math.log10(hi);
  const span = lhi - llo || 1;
  const fn = ((v: number) => outLo + ((Math.log10(v) - llo) / span) * (outHi - outLo)) as Scale;
  fn.ticks = decadeTicks(lo, hi);
  fn.log = true;
  return fn;
}

function tickLabel(v: number, log: boolean): string {
  if (log) {
    const e = Math.round(Math.log10(v));
    if (Math.abs(v - 10 ** e) < 1e-9 * v) return `1e${e}`;
  }
  const rounded = Math.round(v * 1e6) / 1e6;
  return String(rounded);
}

export class Figure {
  private parts: string[] = [];

  constructor(public title: string) {
    this.parts.push(
      `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}" font-family="Helvetica, Arial, sans-serif">`);
    this.parts.push(`<rect width="${WIDTH}" height="${HEIGHT}" fill="#ffffff"/>`);
    this.parts.push(
      `<text x="${WIDTH / 2}" y="24" font-size="15" text-anchor="middle">${escapeXml(title)}</text>`);
  }

  raw(el: string) {
    this.parts.push(el);
  }

  axes(x: Scale, y: Scale, xLabel: string, yLabel: string) {
    const x0 = MARGIN.left, x1 = WIDTH - MARGIN.right;
    const y0 = HEIGHT - MARGIN.bottom, y1 = MARGIN.top;
    this.parts.push(
      `<line x1="${x0}" y1="${y0}" x2="${x1}" y2="${y0}" stroke="#222222" stroke-width="1"/>`);
    this.parts.push(
      `<line x1="${x0}" y1="${y0}" x2="${x0}" y2="${y1}" stroke="#222222" stroke-width="1"/>`);
    for (const t of x.ticks) {
      const px = x(t);
      if (px < x0 - 0.5 || px > x1 + 0.5) continue;
      this.parts.push(
        `<line x1="${fmt(px)}" y1="${y0}" x2="${fmt(px)}" y2="${y0 + 5}" stroke="#222222"/>`);
      this.parts.push(
        `<text x="${fmt(px)}" y="${y0 + 18}" font-size="11" text-anchor="middle">${tickLabel(t, x.log)}</text>`);
    }
    for (const t of y.ticks) {
      const py = y(t);
      if (py > y0 + 0.5 || py < y1 - 0.5) continue;
      this.parts.push(
        `<line x1="${x0 - 5}" y1="${fmt(py)}" x2="${x0}" y2="${fmt(py)}" stroke="#222222"/>`);
      this.parts.push(
        `<text x="${x0 - 8}" y="${fmt(py + 4)}" font-size="11" text-anchor="end">${tickLabel(t, y.log)}</text>`);
    }
    this.parts.push(
      `<text x="${(x0 + x1) / 2}" y="${HEIGHT - 14}" font-size="12" text-anchor="middle">${escapeXml(xLabel)}</text>`);
    this.parts.push(
      `<text x="18" y="${(y0 + y1) / 2}" font-size="12" text-anchor="middle" transform="rotate(-90 18 ${(y0 + y1) / 2})">${escapeXml(yLabel)}</text>`);
  }

  polyline(points: Array<[number, number]>, color: string, dashed = false) {
    const attr = dashed ? ' stroke-dasharray="6 4"' : '';
    const pts = points.map(([px, py]) => `${fmt(px)},${fmt(py)}`).join(' ');
    this.parts.push(
      `<polyline points="${pts}" fill="none" stroke="${color}" stroke-width="1.8"${attr}/>`);
  }

  markers(points: Array<[number, number]>, color: string) {
    for (const [px, py] of points) {
      this.parts.push(`<circle cx="${fmt(px)}" cy="${fmt(py)}" r="3.2" fill="${color}"/>`);
    }
  }

  label(x: number, y: number, text: string, color = '#222222', size = 12) {
    this.parts.push(
      `<text x="${fmt(x)}" y="${fmt(y)}" font-size="${size}" fill="${color}">${escapeXml(text)}</text>`);
  }

  rect(x: number, y: number, w: number, h: number, fill: string) {
    this.parts.push(
      `<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(w)}" height="${fmt(h)}" fill="${fill}"/>`);
  }

  render(): string {
    return this.parts.join('\n') + '\n</svg>\n';
  }
}

function escapeXml(s: string): string {
  return s.replace(/&/g, '&amp;').replace(/</g, '&lt;').replace(/>/g, '&gt;');
}

/** Small diverging color ramp (blue - white - red), deterministic. */
export function heatColor(t: number): string {
  const clamped = Math.max(0, Math.min(1, t));
  const mix = (a: number, b: number, u: number) => Math.round(a + (b - a) * u);
  let r: number, g: number, b: number;
  if (clamped < 0.5) {
    const u = clamped * 2;
    r = mix(33, 247, u); g = mix(102, 247, u); b = mix(172, 247, u);
  } else {
    const u = clamped * 2 - 1;
    r = mix(247, 178, u); g = mix(247, 24, u); b = mix(247, 43, u);
  }
  return `rgb(${r},${g},${b})`;
}
