import fs from 'fs';

import { SchemaMismatchError } from './types';

const MAGIC = 'MAFIELD1';

export interface MaField {
  dim: number;
  rank: number;
  ncomp: number;
  points: number;
  boxLo: number[];
  boxHi: number[];
  margin: number;
  validMargin: number;
  data: Float64Array; // ncomp * points^dim samples, component-major, C order
}

export function readMaField(path: string): MaField {
  const buf = fs.readFileSync(path);
  if (buf.length < 8 || buf.toString('latin1', 0, 8) !== MAGIC) {
    throw new SchemaMismatchError(`${path}: not a MAFIELD1 dump`);
  }
  let off = 8;
  const readI64 = () => {
    const v = Number(buf.readBigInt64LE(off));
    off += 8;
    return v;
  };
  const readF64 = () => {
    const v = buf.readDoubleLE(off);
    off += 8;
    return v;
  };
  const dim = readI64();
  const rank = readI64();
  const ncomp = readI64();
  const points = readI64();
  const boxLo = Array.from({ length: dim }, readF64);
  const boxHi = Array.from({ length: dim }, readF64);
  const margin = readF64();
  const validMargin = readF64();
  const expected = ncomp * points ** dim;
  const bytes = buf.length - off;
  if (bytes !== expected * 8) {
    throw new SchemaMismatchError(
      `${path}: expected ${expected} samples, found ${bytes / 8}`);
  }
  const data = new Float64Array(expected);
  for (let i = 0; i < expected; i++) {
    data[i] = buf.readDoubleLE(off + 8 * i);
  }
  return { dim, rank, ncomp, points, boxLo, boxHi, margin, validMargin, data };
}

export function component(field: MaField, c: number): Float64Array {
  const n = field.points ** field.dim;
  if (c < 0 || c >= field.ncomp) {
    throw new SchemaMismatchError(`component ${c} out of range (${field.ncomp})`);
  }
  return field.data.subarray(c * n, (c + 1) * n);
}
