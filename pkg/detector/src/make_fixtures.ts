/** Labeled fixture scenes for the detector test suite.
 *
 * Each scene is a PNG of dark-green avocado ellipses hanging over brighter
 * foliage, branches and sky, plus a ground-truth `.labels.avomask` file with
 * one exact mask per fruit (the label format is the interchange format
 * itself).  Generation is fully seeded, so fixtures are reproducible.
 */

import { mkdirSync } from "node:fs";
import { join } from "node:path";

import { writeMaskFile } from "./avomask.js";
import { writePng, RgbImage } from "./image.js";

const WIDTH = 320;
const HEIGHT = 240;

/** mulberry32: tiny deterministic PRNG. */
function rng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

interface Ellipse {
  cx: number;
  cy: number;
  rx: number;
  ry: number;
  angle: number;
}

function insideEllipse(e: Ellipse, x: number, y: number): boolean {
  const dx = x - e.cx;
  const dy = y - e.cy;
  const c = Math.cos(e.angle);
  const s = Math.sin(e.angle);
  const u = (dx * c + dy * s) / e.rx;
  const v = (-dx * s + dy * c) / e.ry;
  return u * u + v * v <= 1;
}

export interface Scene {
  image: RgbImage;
  labels: Uint8Array[];
}

export function makeScene(seed: number): Scene {
  const rand = rng(seed);
  const data = new Uint8Array(WIDTH * HEIGHT * 3);

  // sky gradient
  for (let y = 0; y < HEIGHT; y++) {
    for (let x = 0; x < WIDTH; x++) {
      const i = (y * WIDTH + x) * 3;
      data[i] = 170 + y * 0.1;
      data[i + 1] = 200 + y * 0.1;
      data[i + 2] = 235;
    }
  }

  const paint = (e: Ellipse, color: (t: number) => [number, number, number]) => {
    const x0 = Math.max(0, Math.floor(e.cx - e.rx - e.ry));
    const x1 = Math.min(WIDTH - 1, Math.ceil(e.cx + e.rx + e.ry));
    const y0 = Math.max(0, Math.floor(e.cy - e.rx - e.ry));
    const y1 = Math.min(HEIGHT - 1, Math.ceil(e.cy + e.rx + e.ry));
    for (let y = y0; y <= y1; y++) {
      for (let x = x0; x <= x1; x++) {
        if (!insideEllipse(e, x, y)) continue;
        const t = Math.hypot(x - e.cx, y - e.cy) / Math.max(e.rx, e.ry);
        const [r, g, b] = color(t);
        const i = (y * WIDTH + x) * 3;
        data[i] = r;
        data[i + 1] = g;
        data[i + 2] = b;
      }
    }
  };

  // bright foliage clumps (green but light: must not be detected)
  for (let k = 0; k < 6; k++) {
    const e = {
      cx: rand() * WIDTH,
      cy: rand() * HEIGHT * 0.7,
      rx: 25 + rand() * 40,
      ry: 20 + rand() * 30,
      angle: rand() * Math.PI,
    };
    paint(e, (t) => [
      150 + rand() * 30,
      215 + rand() * 25,
      120 + rand() * 30,
    ]);
  }
  // brown branches
  for (let k = 0; k < 3; k++) {
    const e = {
      cx: rand() * WIDTH,
      cy: rand() * HEIGHT * 0.5,
      rx: 60 + rand() * 60,
      ry: 3 + rand() * 4,
      angle: (rand() - 0.5) * 0.8,
    };
    paint(e, () => [96 + rand() * 20, 70 + rand() * 15, 40 + rand() * 10]);
  }

  // avocados: dark green, non-overlapping, hanging in the lower two thirds
  const nFruits = 1 + Math.floor(rand() * 3);
  const fruits: Ellipse[] = [];
  while (fruits.length < nFruits) {
    const e = {
      cx: 30 + rand() * (WIDTH - 60),
      cy: HEIGHT * 0.3 + rand() * (HEIGHT * 0.6),
      rx: 14 + rand() * 10,
      ry: 18 + rand() * 14,
      angle: (rand() - 0.5) * 0.6,
    };
    const clear = fruits.every(
      (f) => Math.hypot(f.cx - e.cx, f.cy - e.cy) > f.ry + e.ry + 12,
    );
    if (clear) fruits.push(e);
  }
  const labels: Uint8Array[] = [];
  for (const e of fruits) {
    paint(e, (t) => {
      const shade = 1 - 0.35 * t; // darker toward the rim
      return [
        (55 + rand() * 14) * shade,
        (108 + rand() * 18) * shade,
        (48 + rand() * 12) * shade,
      ];
    });
    const label = new Uint8Array(WIDTH * HEIGHT);
    for (let y = 0; y < HEIGHT; y++) {
      for (let x = 0; x < WIDTH; x++) {
        if (insideEllipse(e, x, y)) label[y * WIDTH + x] = 1;
      }
    }
    labels.push(label);
  }

  // sensor noise
  for (let i = 0; i < data.length; i++) {
    const v = data[i] + (rand() - 0.5) * 12;
    data[i] = v < 0 ? 0 : v > 255 ? 255 : v;
  }

  return { image: { width: WIDTH, height: HEIGHT, data }, labels };
}

export function writeFixtures(dir: string, count = 12): string[] {
  mkdirSync(dir, { recursive: true });
  const names: string[] = [];
  for (let i = 0; i < count; i++) {
    const scene = makeScene(1000 + i);
    const name = `scene_${String(i).padStart(2, "0")}`;
    writePng(join(dir, `${name}.png`), scene.image);
    writeMaskFile(join(dir, `${name}.labels.avomask`), {
      width: scene.image.width,
      height: scene.image.height,
      masks: scene.labels,
    });
    names.push(name);
  }
  return names;
}

const invokedDirectly =
  process.argv[1] && process.argv[1].endsWith("make_fixtures.js");
if (invokedDirectly) {
  const dir = process.argv[2] ?? "fixtures";
  const names = writeFixtures(dir);
  console.log(`wrote ${names.length} scenes to ${dir}/`);
}
