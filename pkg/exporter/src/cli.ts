#!/usr/bin/env node
/**
 * vagnet-export: dash-cam video to VAGF feature files.
 *
 *   vagnet-export video --input clip.y4m --out clip.vagf --label 1 --onset 4.2
 *   vagnet-export manifest --input-dir videos/ --out-dir features/
 *
 * Shared flags: --fps (default 10), --window (default 16),
 * --backbone projection[:seed]|cmd:<path>, --device, --dim (default 768).
 * Exit codes: 0 success, 2 bad input or configuration.
 */

import { ConfigError } from "./backbone.js";
import { exportManifest, exportVideo } from "./export.js";
import { JobError } from "./video.js";
import { FormatError } from "./vagf.js";

type Flags = Record<string, string | boolean>;

function parseFlags(argv: string[]): Flags {
  const flags: Flags = {};
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith("--")) throw new JobError(`unexpected argument ${arg}`);
    const key = arg.slice(2);
    if (i + 1 < argv.length && !argv[i + 1].startsWith("--")) {
      flags[key] = argv[++i];
    } else {
      flags[key] = true;
    }
  }
  return flags;
}

function req(flags: Flags, name: string): string {
  const value = flags[name];
  if (typeof value !== "string") throw new JobError(`--${name} is required`);
  delete flags[name];
  return value;
}

function opt(flags: Flags, name: string): string | undefined {
  const value = flags[name];
  if (value === undefined) return undefined;
  if (typeof value !== "string") throw new JobError(`--${name} needs a value`);
  delete flags[name];
  return value;
}

function num(raw: string | undefined, name: string): number | undefined {
  if (raw === undefined) return undefined;
  const value = Number(raw);
  if (!Number.isFinite(value)) throw new JobError(`--${name} must be a number, got ${raw}`);
  return value;
}

function rejectUnknown(flags: Flags): void {
  const leftover = Object.keys(flags);
  if (leftover.length > 0) {
    throw new JobError(`unknown flags: ${leftover.map((f) => `--${f}`).join(", ")}`);
  }
}

function cmdVideo(flags: Flags): number {
  const input = req(flags, "input");
  const out = req(flags, "out");
  const label = Number(req(flags, "label"));
  const onset = num(opt(flags, "onset"), "onset");
  const job = {
    videoPath: input,
    outPath: out,
    label: label as 0 | 1,
    onsetSeconds: onset,
    targetFps: num(opt(flags, "fps"), "fps"),
    window: num(opt(flags, "window"), "window"),
    backbone: opt(flags, "backbone"),
    device: opt(flags, "device"),
    groupId: opt(flags, "group-id"),
    expectedDim: num(opt(flags, "dim"), "dim"),
  };
  rejectUnknown(flags);
  console.error(`resolved config: ${JSON.stringify(job)}`);
  const result = exportVideo(job);
  console.log(
    `wrote ${result.outPath}: T=${result.frames} D=${result.dim} fps=${result.fps}` +
      (result.tau === null ? "" : ` tau=${result.tau}`),
  );
  return 0;
}

function cmdManifest(flags: Flags): number {
  const inputDir = req(flags, "input-dir");
  const outDir = req(flags, "out-dir");
  const options = {
    targetFps: num(opt(flags, "fps"), "fps"),
    window: num(opt(flags, "window"), "window"),
    backbone: opt(flags, "backbone"),
    device: opt(flags, "device"),
    expectedDim: num(opt(flags, "dim"), "dim"),
  };
  rejectUnknown(flags);
  console.error(`resolved config: ${JSON.stringify({ inputDir, outDir, ...options })}`);
  const summary = exportManifest(inputDir, outDir, options);
  for (const warning of summary.warnings) console.error(`warning: ${warning}`);
  console.log(
    `exported ${summary.exported.length} videos, skipped ${summary.skipped.length}; ` +
      `manifest: ${summary.manifestPath}`,
  );
  return 0;
}

export function main(argv: string[]): number {
  try {
    const [command, ...rest] = argv;
    if (command === "video") return cmdVideo(parseFlags(rest));
    if (command === "manifest") return cmdManifest(parseFlags(rest));
    console.error("usage: vagnet-export video|manifest [flags]");
    return 2;
  } catch (err) {
    if (err instanceof JobError || err instanceof ConfigError || err instanceof FormatError) {
      console.error(`error: ${err.message}`);
      return 2;
    }
    throw err;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
