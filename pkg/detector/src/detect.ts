/** detect/batch entry points shared by the CLI and the tests. */

import { readdirSync, mkdirSync } from "node:fs";
import { basename, extname, join } from "node:path";

import { loadImage } from "./image.js";
import { writeMaskFile } from "./avomask.js";
import { AdapterConfig, DEFAULT_CONFIG, segment } from "./segment.js";

export interface DetectResult {
  image: string;
  output: string;
  count: number;
  confidences: number[];
}

export function detect(
  imagePath: string,
  outputPath: string,
  config: AdapterConfig = DEFAULT_CONFIG,
): DetectResult {
  const image = loadImage(imagePath);
  const detections = segment(image, config);
  writeMaskFile(outputPath, {
    width: image.width,
    height: image.height,
    masks: detections.map((d) => d.mask),
  });
  return {
    image: imagePath,
    output: outputPath,
    count: detections.length,
    confidences: detections.map((d) => d.confidence),
  };
}

export interface BatchResult {
  results: DetectResult[];
  failures: { image: string; error: string }[];
}

const IMAGE_EXTENSIONS = new Set([".png", ".ppm"]);

export function batch(
  dir: string,
  outDir: string,
  config: AdapterConfig = DEFAULT_CONFIG,
): BatchResult {
  mkdirSync(outDir, { recursive: true });
  const results: DetectResult[] = [];
  const failures: { image: string; error: string }[] = [];
  const entries = readdirSync(dir)
    .filter((f) => IMAGE_EXTENSIONS.has(extname(f).toLowerCase()))
    .sort();
  for (const entry of entries) {
    const imagePath = join(dir, entry);
    const outputPath = join(
      outDir,
      basename(entry, extname(entry)) + ".avomask",
    );
    try {
      results.push(detect(imagePath, outputPath, config));
    } catch (err) {
      failures.push({ image: imagePath, error: (err as Error).message });
    }
  }
  return { results, failures };
}
