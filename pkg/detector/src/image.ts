/** RGB image loading: PNG (via pngjs) and binary/ASCII PPM. */

import { readFileSync, writeFileSync } from "node:fs";
import { PNG } from "pngjs";

export interface RgbImage {
  width: number;
  height: number;
  /** Row-major RGB triplets, 3 bytes per pixel. */
  data: Uint8Array;
}

export class ImageFormatError extends Error {}

function decodePng(buf: Buffer): RgbImage {
  let png: PNG;
  try {
    png = PNG.sync.read(buf);
  } catch (err) {
    throw new ImageFormatError(`corrupt PNG: ${(err as Error).message}`);
  }
  const data = new Uint8Array(png.width * png.height * 3);
  for (let i = 0; i < png.width * png.height; i++) {
    data[i * 3] = png.data[i * 4];
    data[i * 3 + 1] = png.data[i * 4 + 1];
    data[i * 3 + 2] = png.data[i * 4 + 2];
  }
  return { width: png.width, height: png.height, data };
}

function decodePpm(buf: Buffer): RgbImage {
  // P6 (binary) and P3 (ASCII), maxval 255; '#' comments allowed in the header
  let pos = 0;
  const token = (): string => {
    let out = "";
    while (pos < buf.length) {
      const ch = String.fromCharCode(buf[pos]);
      if (ch === "#") {
        while (pos < buf.length && buf[pos] !== 0x0a) pos++;
        continue;
      }
      if (/\s/.test(ch)) {
        pos++;
        if (out) return out;
        continue;
      }
      out += ch;
      pos++;
    }
    if (!out) throw new ImageFormatError("truncated PPM header");
    return out;
  };
  const magic = token();
  if (magic !== "P6" && magic !== "P3") {
    throw new ImageFormatError(`not a PPM image (magic ${magic})`);
  }
  const width = parseInt(token(), 10);
  const height = parseInt(token(), 10);
  const maxval = parseInt(token(), 10);
  if (!(width > 0) || !(height > 0)) {
    throw new ImageFormatError("bad PPM dimensions");
  }
  if (maxval !== 255) {
    throw new ImageFormatError(`unsupported PPM maxval ${maxval}`);
  }
  const n = width * height * 3;
  const data = new Uint8Array(n);
  if (magic === "P6") {
    if (buf.length - pos < n) {
      throw new ImageFormatError(
        `PPM payload truncated: ${buf.length - pos} of ${n} bytes`,
      );
    }
    data.set(buf.subarray(pos, pos + n));
  } else {
    for (let i = 0; i < n; i++) {
      data[i] = parseInt(token(), 10);
    }
  }
  return { width, height, data };
}

export function loadImage(path: string): RgbImage {
  const buf = readFileSync(path);
  if (buf.length >= 8 && buf[0] === 0x89 && buf[1] === 0x50) {
    return decodePng(buf);
  }
  if (buf.length >= 2 && buf[0] === 0x50 && (buf[1] === 0x33 || buf[1] === 0x36)) {
    return decodePpm(buf);
  }
  throw new ImageFormatError(`unrecognized image format in ${path}`);
}

export function writePpm(path: string, image: RgbImage): void {
  const header = Buffer.from(`P6\n${image.width} ${image.height}\n255\n`, "ascii");
  writeFileSync(path, Buffer.concat([header, Buffer.from(image.data)]));
}

export function writePng(path: string, image: RgbImage): void {
  const png = new PNG({ width: image.width, height: image.height });
  for (let i = 0; i < image.width * image.height; i++) {
    png.data[i * 4] = image.data[i * 3];
    png.data[i * 4 + 1] = image.data[i * 3 + 1];
    png.data[i * 4 + 2] = image.data[i * 3 + 2];
    png.data[i * 4 + 3] = 255;
  }
  writeFileSync(path, PNG.sync.write(png));
}
