import { component, readMaField } from './mafield';
import { Figure, HEIGHT, MARGIN, PALETTE, WIDTH, fmt, heatColor, linScale,
         logScale } from './svg';
import { MissingSeriesError, SolveReportPayload, StageReportPayload, loadCsv,
         loadReport } from './types';

export const KINDS = ['decay', 'errors', 'holder', 'slice'] as const;
export type FigureKind = (typeof KINDS)[number];

const X0 = MARGIN.left;
const X1 = WIDTH - MARGIN.right;
const Y0 = HEIGHT - MARGIN.bottom;
const Y1 = MARGIN.top;

/** Defect norm per stage on a log scale, with the fitted slope annotated. */
export function decayFigure(solvePath: string): string {
  const doc = loadReport<SolveReportPayload>(solvePath, 'solve');
  const history = doc.report.defect_history;
  if (!history || history.length < 2) {
    throw new MissingSeriesError(`${solvePath}: defect history needs at least two points`);
  }
  const fig = new Figure(
    `defect decay (sigma=${doc.report.sigma}, K=${doc.report.steps}, N=${doc.report.reduction})`);
  const x = linScale(0, history.length - 1, X0, X1);
  x.ticks = history.map((_, i) => i);
  const y = logScale(Math.min(...history) * 0.8, Math.max(...history) * 1.25, Y0, Y1);
  fig.axes(x, y, 'stage', 'defect sup norm');
  const pts = history.map((d, i) => [x(i), y(d)] as [number, number]);
  fig.polyline(pts, PALETTE[0]);
  fig.markers(pts, PALETTE[0]);
  const slope = doc.report.decay_slope;
  const perStage = history[history.length - 1] / history[history.length - 2];
  const note = slope !== null && slope !== undefined
    ? `fitted slope ${slope.toFixed(3)} per stage (log)`
    : `last-stage ratio ${perStage.toFixed(3)}`;
  fig.label(X0 + 10, Y1 + 16, note, PALETTE[0]);
  fig.label(X0 + 10, Y1 + 32, `termination: ${doc.report.termination}`, '#555555', 11);
  return fig.render();
}

interface ErrorSeries {
  sigma: number;
  absorption: number;
  boundary: number;
  history: number;
  quad: number;
}

/** Error-field norms against sigma on log-log axes with reference slopes
 * -(N+2), -N, -2N anchored at the first sigma. */
export function errorsFigure(stagePaths: string[]): string {
  if (stagePaths.length < 2) {
    throw new MissingSeriesError('errors figure needs at least two stage reports');
  }
  const series: ErrorSeries[] = [];
  let reduction = 1;
  for (const path of stagePaths) {
    const doc = loadReport<StageReportPayload>(path, 'stage');
    const log = doc.report.step_logs[0];
    if (!log) {
      throw new MissingSeriesError(`${path}: stage report has no step logs`);
    }
    reduction = doc.report.reduction;
    series.push({
      sigma: doc.report.sigma,
      absorption: log.absorption_residual_norm,
      boundary: Math.max(...log.first_pass_error_norms),
      history: Math.max(...log.higher_error_norms, log.quad_error_norm),
      quad: log.quad_error_norm,
    });
  }
  series.sort((a, b) => a.sigma - b.sigma);
  const values = series.flatMap(s => [s.boundary, s.history, s.quad])
    .filter(v => v > 0);
  if (values.length === 0) {
    throw new MissingSeriesError('all error norms vanish; nothing to plot');
  }
  const sigmas = series.map(s => s.sigma);
  const fig = new Figure(`error-field norms vs sigma (N=${reduction})`);
  const x = logScale(sigmas[0] * 0.95, sigmas[sigmas.length - 1] * 1.05, X0, X1);
  const y = logScale(Math.min(...values) * 0.5, Math.max(...values) * 2.0, Y0, Y1);
  fig.axes(x, y, 'sigma', 'sup norm');

  const groups: Array<[keyof ErrorSeries, string, number]> = [
    ['boundary', 'boundary errors', -(reduction + 2)],
    ['history', 'history errors', -reduction],
    ['quad', 'quadratic errors', -reduction],
  ];
  groups.forEach(([key, name, slope], gi) => {
    const pts = series
      .filter(s => (s[key] as number) > 0)
      .map(s => [x(s.sigma), y(s[key] as number)] as [number, number]);
    if (pts.length < 2) return;
    const color = PALETTE[gi];
    fig.polyline(pts, color);
    fig.markers(pts, color);
    fig.label(pts[pts.length - 1][0] - 150, pts[pts.length - 1][1] - 8,
              `${name} (ref slope ${slope})`, color, 11);
    const anchor = series.find(s => (s[key] as number) > 0)!;
    const refPts = sigmas.map(s0 => [
      x(s0),
      y((anchor[key] as number) * (s0 / anchor.sigma) ** slope),
    ] as [number, number]);
    fig.polyline(refPts, color, true);
  });
  return fig.render();
}

/** Hoelder quotient against alpha, one polyline per recorded stage. */
export function holderFigure(csvPath: string): string {
  const table = loadCsv(csvPath, ['stage', 'alpha', 'quotient']);
  const byStage = new Map<string, Array<[number, number]>>();
  for (const [stage, alpha, quotient] of table.rows) {
    const list = byStage.get(stage) ?? [];
    list.push([Number(alpha), Number(quotient)]);
    byStage.set(stage, list);
  }
  if (byStage.size === 0) {
    throw new MissingSeriesError(`${csvPath}: no quotient rows`);
  }
  const all = [...byStage.values()].flat();
  const alphas = all.map(p => p[0]);
  const quotients = all.map(p => p[1]).filter(q => q > 0);
  if (quotients.length === 0) {
    throw new MissingSeriesError(`${csvPath}: all quotients vanish`);
  }
  const fig = new Figure('gradient Hoelder quotients');
  const x = linScale(0, Math.max(...alphas) * 1.1, X0, X1);
  const y = logScale(Math.min(...quotients) * 0.5, Math.max(...quotients) * 2, Y0, Y1);
  fig.axes(x, y, 'alpha', 'measured quotient');
  let gi = 0;
  for (const [stage, pts] of [...byStage.entries()].sort()) {
    const drawable = pts.filter(p => p[1] > 0)
      .sort((a, b) => a[0] - b[0])
      .map(p => [x(p[0]), y(p[1])] as [number, number]);
    if (drawable.length === 0) {
      gi++;
      continue;
    }
    const color = PALETTE[gi % PALETTE.length];
    fig.polyline(drawable, color);
    fig.markers(drawable, color);
    fig.label(drawable[drawable.length - 1][0] - 64,
              drawable[drawable.length - 1][1] - 8, `stage ${stage}`, color, 11);
    gi++;
  }
  return fig.render();
}

const SLICE_CELLS = 64;

/** Heat map of one component of a d=2 field dump. */
export function sliceFigure(fieldPath: string, comp = 0): string {
  const field = readMaField(fieldPath);
  if (field.dim !== 2) {
    throw new MissingSeriesError(`${fieldPath}: slice rendering needs d=2, got d=${field.dim}`);
  }
  const values = component(field, comp);
  const n = field.points;
  const stride = Math.max(1, Math.floor(n / SLICE_CELLS));
  const cells = Math.floor((n - 1) / stride) + 1;
  let lo = Infinity, hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  const span = hi - lo || 1;
  const fig = new Figure(
    `field slice (component ${comp}, ${n}x${n} grid, range ${lo.toPrecision(3)} .. ${hi.toPrecision(3)})`);
  const plotW = X1 - X0;
  const plotH = Y0 - Y1;
  const cw = plotW / cells;
  const ch = plotH / cells;
  for (let i = 0; i < cells; i++) {
    for (let j = 0; j < cells; j++) {
      const v = values[(i * stride) * n + j * stride];
      fig.rect(X0 + j * cw, Y0 - (i + 1) * ch, cw + 0.5, ch + 0.5,
               heatColor((v - lo) / span));
    }
  }
  // color bar
  const barX = WIDTH - MARGIN.right + 6;
  for (let s = 0; s < 40; s++) {
    fig.rect(barX - 2, Y0 - ((s + 1) * plotH) / 40, 8, plotH / 40 + 0.5,
             heatColor(s / 39));
  }
  fig.label(X0, HEIGHT - 14, `x1 in [${fmt(field.boxLo[0])}, ${fmt(field.boxHi[0])}]`,
            '#555555', 11);
  return fig.render();
}

export function renderFigure(kind: string, inputs: string[]): string {
  switch (kind) {
    case 'decay':
      if (inputs.length !== 1) throw new MissingSeriesError('decay takes one solve report');
      return decayFigure(inputs[0]);
    case 'errors':
      return errorsFigure(inputs);
    case 'holder':
      if (inputs.length !== 1) throw new MissingSeriesError('holder takes one quotient CSV');
      return holderFigure(inputs[0]);
    case 'slice':
      if (inputs.length !== 1) throw new MissingSeriesError('slice takes one MAFIELD1 dump');
      return sliceFigure(inputs[0]);
    default:
      throw new RangeError(`unknown figure kind '${kind}'; choose from ${KINDS.join(', ')}`);
  }
}
