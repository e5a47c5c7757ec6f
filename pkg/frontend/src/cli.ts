#!/usr/bin/env node
import fs from 'fs';
import path from 'path';

import { KINDS, renderFigure } from './figures';
import { MissingSeriesError, SchemaMismatchError } from './types';

function usage(): never {
  console.error('usage: vkcorr-plot <kind> <inputs...> -o <file.svg>');
  console.error(`  kinds: ${KINDS.join(', ')}`);
  console.error('  decay   <solve_report.json>');
  console.error('  errors  <stage_report_sigmaA.json> <stage_report_sigmaB.json> ...');
  console.error('  holder  <holder_quotients.csv>');
  console.error('  slice   <field.mafield>');
  process.exit(2);
}

function main(argv: string[]): number {
  const args = [...argv];
  let out: string | undefined;
  const oIdx = args.indexOf('-o');
  if (oIdx >= 0) {
    out = args[oIdx + 1];
    args.splice(oIdx, 2);
  }
  const [kind, ...inputs] = args;
  if (!kind || !out || inputs.length === 0) usage();

  let svg: string;
  try {
    svg = renderFigure(kind, inputs);
  } catch (err) {
    if (err instanceof RangeError) {
      console.error(`error: ${err.message}`);
      return 2;
    }
    if (err instanceof SchemaMismatchError || err instanceof MissingSeriesError) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    if ((err as NodeJS.ErrnoException).code === 'ENOENT') {
      console.error(`error: input not found: ${(err as NodeJS.ErrnoException).path}`);
      return 1;
    }
    throw err;
  }
  fs.mkdirSync(path.dirname(path.resolve(out)), { recursive: true });
  fs.writeFileSync(out, svg);
  console.log(`wrote ${out}`);
  return 0;
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}

export { main };
