/** AVOMASK1 interchange files: binary RLE instance masks.
 *
 * Layout (little-endian): magic "AVOMASK1", u32 width, u32 height, u32 count,
 * then per mask a u32 run count followed by that many u32 run lengths. Runs
 * are row-major and alternate zero-run/one-run starting with a zero-run (a
 * leading set pixel is encoded as an explicit zero-length zero-run); run
 * lengths sum to width*height.
 */

import { readFileSync, writeFileSync } from "node:fs";

export const MASK_MAGIC = "AVOMASK1";

export interface MaskFile {
  width: number;
  height: number;
  masks: Uint8Array[]; // one byte per pixel, 0/1, row-major
}

export class MaskFormatError extends Error {}

export function encodeRuns(mask: Uint8Array): number[] {
  const runs: number[] = [];
  if (mask.length === 0) return runs;
  if (mask[0]) runs.push(0);
  let current = mask[0] ? 1 : 0;
  let length = 0;
  for (const v of mask) {
    const bit = v ? 1 : 0;
    if (bit === current) {
      length++;
    } else {
      runs.push(length);
      current = bit;
      length = 1;
    }
  }
  runs.push(length);
  return runs;
}

export function decodeRuns(runs: Uint32Array | number[], total: number): Uint8Array {
  let sum = 0;
  for (const r of runs) sum += r;
  if (sum !== total) {
    throw new MaskFormatError(`mask runs sum to ${sum}, expected ${total}`);
  }
  const out = new Uint8Array(total);
  let pos = 0;
  let value = 0;
  for (const r of runs) {
    if (value) out.fill(1, pos, pos + r);
    pos += r;
    value ^= 1;
  }
  return out;
}

export function writeMaskFile(path: string, file: MaskFile): void {
  const chunks: Buffer[] = [];
  const header = Buffer.alloc(20);
  header.write(MASK_MAGIC, 0, "ascii");
  header.writeUInt32LE(file.width, 8);
  header.writeUInt32LE(file.height, 12);
  header.writeUInt32LE(file.masks.length, 16);
  chunks.push(header);
  for (const mask of file.masks) {
    if (mask.length !== file.width * file.height) {
      throw new MaskFormatError("mask size does not match image dimensions");
    }
    const runs = encodeRuns(mask);
    const buf = Buffer.alloc(4 + 4 * runs.length);
    buf.writeUInt32LE(runs.length, 0);
    runs.forEach((r, i) => buf.writeUInt32LE(r, 4 + 4 * i));
    chunks.push(buf);
  }
  writeFileSync(path, Buffer.concat(chunks));
}

export function readMaskFile(path: string): MaskFile {
  const buf = readFileSync(path);
  if (buf.length < 20) {
    throw new MaskFormatError(`mask file truncated at byte ${buf.length}`);
  }
  if (buf.toString("ascii", 0, 8) !== MASK_MAGIC) {
    throw new MaskFormatError(`bad magic at byte 0`);
  }
  const width = buf.readUInt32LE(8);
  const height = buf.readUInt32LE(12);
  const count = buf.readUInt32LE(16);
  let offset = 20;
  const masks: Uint8Array[] = [];
  for (let i = 0; i < count; i++) {
    if (offset + 4 > buf.length) {
      throw new MaskFormatError(`mask ${i}: truncated run count at byte ${offset}`);
    }
    const nRuns = buf.readUInt32LE(offset);
    offset += 4;
    if (offset + 4 * nRuns > buf.length) {
      throw new MaskFormatError(`mask ${i}: truncated runs at byte ${offset}`);
    }
    const runs = new Uint32Array(nRuns);
    for (let j = 0; j < nRuns; j++) {
      runs[j] = buf.readUInt32LE(offset + 4 * j);
    }
    offset += 4 * nRuns;
    masks.push(decodeRuns(runs, width * height));
  }
  if (offset !== buf.length) {
    throw new MaskFormatError(`${buf.length - offset} trailing bytes at ${offset}`);
  }
  return { width, height, masks };
}
