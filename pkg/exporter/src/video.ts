/**
 * Video loading: .y4m files decode natively; any other container goes
 * through an ffmpeg yuv4mpegpipe when ffmpeg is on PATH.
 */

import { spawnSync } from "node:child_process";
import { readFileSync } from "node:fs";
import { extname } from "node:path";

import { parseY4m, VideoFormatError, type Y4mVideo } from "./y4m.js";

export class JobError extends Error {}

export function loadVideo(path: string): Y4mVideo {
  let raw: Uint8Array;
  if (extname(path).toLowerCase() === ".y4m") {
    try {
      raw = readFileSync(path);
    } catch (err) {
      throw new JobError(`cannot read ${path}: ${(err as Error).message}`);
    }
  } else {
    raw = decodeWithFfmpeg(path);
  }
  try {
    return parseY4m(raw);
  } catch (err) {
    if (err instanceof VideoFormatError) {
      throw new JobError(`${path}: ${err.message}`);
    }
    throw err;
  }
}

function decodeWithFfmpeg(path: string): Uint8Array {
  const probe = spawnSync("ffmpeg", ["-version"], { stdio: "ignore" });
  if (probe.error) {
    throw new JobError(
      `${path}: only .y4m decodes natively and ffmpeg is not on PATH ` +
        `(convert with: ffmpeg -i INPUT -f yuv4mpegpipe OUTPUT.y4m)`,
    );
  }
  const run = spawnSync(
    "ffmpeg",
    ["-v", "error", "-i", path, "-f", "yuv4mpegpipe", "-pix_fmt", "yuv420p", "-"],
    { maxBuffer: 1 << 30 },
  );
  if (run.status !== 0) {
    throw new JobError(`${path}: ffmpeg failed: ${run.stderr?.toString() ?? "unknown"}`);
  }
  return run.stdout;
}

/** Nearest-timestamp frame selection down to targetFps; no interpolation. */
export function resample(video: Y4mVideo, targetFps: number): Y4mVideo {
  if (targetFps <= 0) throw new JobError(`target fps must be > 0, got ${targetFps}`);
  if (targetFps > video.fps + 1e-9) {
    throw new JobError(
      `target fps ${targetFps} exceeds source fps ${video.fps}; upsampling is not supported`,
    );
  }
  const count = Math.floor((video.frames.length * targetFps) / video.fps + 1e-9);
  if (count < 1) {
    throw new JobError("video shorter than one output frame at the target fps");
  }
  const frames = [];
  for (let j = 0; j < count; j++) {
    const src = Math.min(
      Math.round((j * video.fps) / targetFps),
      video.frames.length - 1,
    );
    frames.push(video.frames[src]);
  }
  return { ...video, fps: targetFps, frames };
}
