/** Avocado instance segmentation on color images.
 *
 * The backbone is a classical pipeline: a per-pixel green-dominance score,
 * thresholding, 8-connected component labeling and an area/confidence filter.
 * It stands in for a learned instance-segmentation model behind the same
 * configuration surface, so swapping in a model later only changes score().
 */

import type { RgbImage } from "./image.js";

export interface AdapterConfig {
  /** Backbone identifier; only the built-in classical one is shipped. */
  model: string;
  /** Minimum mean per-pixel score for a component to count, in (0, 1). */
  confidenceThreshold: number;
  /** Detection classes to keep; the backbone only knows "avocado". */
  classFilter: string[];
  /** Components smaller than this many pixels are discarded as speckle. */
  minArea: number;
}

export const DEFAULT_CONFIG: AdapterConfig = {
  model: "green-dominance-v1",
  confidenceThreshold: 0.5,
  classFilter: ["avocado"],
  minArea: 60,
};

export interface Detection {
  mask: Uint8Array; // 0/1 per pixel, row-major
  confidence: number;
  area: number;
  className: string;
}

export function validateConfig(config: AdapterConfig): void {
  if (!(config.confidenceThreshold > 0 && config.confidenceThreshold < 1)) {
    throw new Error(
      `confidence threshold must be in (0, 1), got ${config.confidenceThreshold}`,
    );
  }
  if (config.minArea < 1) {
    throw new Error(`minArea must be >= 1, got ${config.minArea}`);
  }
}

/** Per-pixel avocado likelihood: dark-to-mid green dominance. */
function score(r: number, g: number, b: number): number {
  const dominance = (2 * g - r - b) / 255; // green above the other channels
  const brightness = (r + g + b) / (3 * 255);
  if (dominance <= 0.05) return 0;
  // ripe fruit is dark; sunlit foliage is green but bright and scores low
  const tone = brightness < 0.5 ? 1 : Math.max(0, 1 - (brightness - 0.5) * 4);
  return Math.min(1, dominance * 2.5) * tone;
}

function connectedComponents(
  fg: Uint8Array,
  width: number,
  height: number,
): Int32Array {
  const labels = new Int32Array(fg.length).fill(-1);
  const stack: number[] = [];
  let next = 0;
  for (let start = 0; start < fg.length; start++) {
    if (!fg[start] || labels[start] >= 0) continue;
    labels[start] = next;
    stack.push(start);
    while (stack.length) {
      const p = stack.pop()!;
      const x = p % width;
      const y = (p - x) / width;
      for (let dy = -1; dy <= 1; dy++) {
        for (let dx = -1; dx <= 1; dx++) {
          if (!dx && !dy) continue;
          const nx = x + dx;
          const ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
          const q = ny * width + nx;
          if (fg[q] && labels[q] < 0) {
            labels[q] = next;
            stack.push(q);
          }
        }
      }
    }
    next++;
  }
  return labels;
}

export function segment(
  image: RgbImage,
  config: AdapterConfig = DEFAULT_CONFIG,
): Detection[] {
  validateConfig(config);
  const { width, height, data } = image;
  const n = width * height;
  const scores = new Float32Array(n);
  const fg = new Uint8Array(n);
  // the foreground cut sits above shaded-foliage scores (~0.3) and below the
  // darkest fruit tones (~0.6), keeping components from bleeding together
  const cut = 0.45;
  for (let i = 0; i < n; i++) {
    const s = score(data[i * 3], data[i * 3 + 1], data[i * 3 + 2]);
    scores[i] = s;
    fg[i] = s > cut ? 1 : 0;
  }
  const labels = connectedComponents(fg, width, height);
  let nLabels = 0;
  for (const l of labels) if (l >= nLabels) nLabels = l + 1;

  const detections: Detection[] = [];
  for (let label = 0; label < nLabels; label++) {
    const mask = new Uint8Array(n);
    let area = 0;
    let total = 0;
    for (let i = 0; i < n; i++) {
      if (labels[i] === label) {
        mask[i] = 1;
        area++;
        total += scores[i];
      }
    }
    const confidence = area ? total / area : 0;
    if (area < config.minArea) continue;
    if (confidence < config.confidenceThreshold) continue;
    if (!config.classFilter.includes("avocado")) continue;
    detections.push({ mask, confidence, area, className: "avocado" });
  }
  // deterministic order: biggest first, ties by first pixel
  detections.sort((a, b) => b.area - a.area);
  return detections;
}
