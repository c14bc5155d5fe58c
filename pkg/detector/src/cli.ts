#!/usr/bin/env node
/** avomask-detect: segment avocados in color images into AVOMASK1 files.
 *
 *   avomask-detect detect <image> [-o out.avomask] [--threshold 0.5]
 *   avomask-detect batch <dir> [-o outdir] [--threshold 0.5]
 *
 * Exit codes: 0 ok, 1 inference/arg failure, 2 unreadable input. A batch
 * run exits 0 when at least one file succeeded; per-file failures are
 * listed on stderr.
 */

import { basename, extname } from "node:path";

import { batch, detect } from "./detect.js";
import { DEFAULT_CONFIG } from "./segment.js";
import { ImageFormatError } from "./image.js";

function parseArgs(argv: string[]) {
  const [command, target, ...rest] = argv;
  let out: string | undefined;
  let threshold = DEFAULT_CONFIG.confidenceThreshold;
  for (let i = 0; i < rest.length; i++) {
    if (rest[i] === "-o" || rest[i] === "--out") {
      out = rest[++i];
    } else if (rest[i] === "--threshold") {
      threshold = parseFloat(rest[++i]);
    } else {
      throw new Error(`unknown argument ${rest[i]}`);
    }
  }
  return { command, target, out, threshold };
}

export function main(argv: string[]): number {
  let args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
  const { command, target, out, threshold } = args;
  if (!command || !target) {
    console.error("usage: avomask-detect <detect|batch> <path> [-o out] [--threshold t]");
    return 1;
  }
  const config = { ...DEFAULT_CONFIG, confidenceThreshold: threshold };
  try {
    if (command === "detect") {
      const output =
        out ?? basename(target, extname(target)) + ".avomask";
      const result = detect(target, output, config);
      console.log(
        `${result.image}: ${result.count} detection(s) -> ${result.output}`,
      );
      return 0;
    }
    if (command === "batch") {
      const { results, failures } = batch(target, out ?? "masks", config);
      for (const r of results) {
        console.log(`${r.image}: ${r.count} detection(s) -> ${r.output}`);
      }
      for (const f of failures) {
        console.error(`failed ${f.image}: ${f.error}`);
      }
      console.log(
        `batch: ${results.length} processed, ${failures.length} failed`,
      );
      return failures.length > 0 && results.length === 0 ? 2 : 0;
    }
    console.error(`error: unknown command ${command}`);
    return 1;
  } catch (err) {
    if (err instanceof ImageFormatError || (err as NodeJS.ErrnoException).code === "ENOENT") {
      console.error(`error: ${(err as Error).message}`);
      return 2;
    }
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}
