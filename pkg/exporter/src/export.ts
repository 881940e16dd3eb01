/**
 * Export jobs: one video to one VAGF file, or an annotated directory to a
 * feature set plus manifest that the scoring pipeline consumes directly.
 */

import { readdirSync, readFileSync, writeFileSync, mkdirSync, existsSync } from "node:fs";
import { basename, extname, join, relative } from "node:path";

import { ConfigError, createBackbone, DEFAULT_DIM, type Backbone } from "./backbone.js";
import { JobError, loadVideo, resample } from "./video.js";
import { encodeVagf } from "./vagf.js";
import type { LumaFrame } from "./y4m.js";

export interface ExportJob {
  videoPath: string;
  outPath: string;
  label: 0 | 1;
  /** Accident onset in seconds from clip start; required when label=1. */
  onsetSeconds?: number;
  targetFps?: number;       // default 10
  window?: number;          // frames per backbone window, default 16
  backbone?: string;        // selector, default "projection:0"
  device?: string;          // recorded for real backbones; unused by projection
  groupId?: string;         // default: video filename stem
  expectedDim?: number;     // default 768; backbone width must match
}

export interface ExportResult {
  outPath: string;
  frames: number;
  dim: number;
  fps: number;
  tau: number | null;
}

export function exportVideo(job: ExportJob, backbone?: Backbone): ExportResult {
  const fps = job.targetFps ?? 10;
  const window = job.window ?? 16;
  if (window < 1) throw new ConfigError(`window must be >= 1, got ${window}`);
  const expectedDim = job.expectedDim ?? DEFAULT_DIM;
  const net = backbone ?? createBackbone(job.backbone ?? "projection:0", expectedDim);
  if (net.dim !== expectedDim) {
    throw new ConfigError(
      `backbone ${net.name} emits ${net.dim}-dim embeddings; job expects ${expectedDim}`,
    );
  }
  if (job.label !== 0 && job.label !== 1) {
    throw new JobError(`label must be 0 or 1, got ${job.label}`);
  }
  if (job.label === 1 && job.onsetSeconds === undefined) {
    throw new JobError("positive video needs an onset timestamp");
  }

  const video = resample(loadVideo(job.videoPath), fps);
  const frames = video.frames.length;
  let tau: number | null = null;
  if (job.label === 1) {
    tau = Math.floor(job.onsetSeconds! * fps + 1e-9);
    if (tau < 0 || tau >= frames) {
      throw new JobError(
        `onset ${job.onsetSeconds}s maps to frame ${tau}, outside [0, ${frames})`,
      );
    }
  }

  const data = new Float32Array(frames * net.dim);
  for (let t = 0; t < frames; t++) {
    const slice: LumaFrame[] = [];
    for (let p = t - window + 1; p <= t; p++) {
      slice.push(video.frames[Math.max(p, 0)]); // left-pad with the first frame
    }
    data.set(net.embed(slice), t * net.dim);
  }

  const bytes = encodeVagf({
    frames,
    dim: net.dim,
    fps,
    label: job.label,
    tau,
    groupId: job.groupId ?? stem(job.videoPath),
    data,
  });
  writeFileSync(job.outPath, bytes);
  return { outPath: job.outPath, frames, dim: net.dim, fps, tau };
}

function stem(path: string): string {
  const name = basename(path);
  return name.slice(0, name.length - extname(name).length);
}

/** Never overwrite: a taken stem gets a -2, -3, ... suffix. */
export function disambiguate(base: string, used: Set<string>): string {
  let name = `${base}.vagf`;
  for (let k = 2; used.has(name); k++) {
    name = `${base}-${k}.vagf`;
  }
  used.add(name);
  return name;
}

// --- directory export -------------------------------------------------------

export interface Annotation {
  label: 0 | 1;
  onset_seconds?: number;
  split?: string;
}

export interface ManifestSummary {
  manifestPath: string;
  exported: string[];
  skipped: string[];   // videos without a usable annotation sidecar
  warnings: string[];
}

const VIDEO_EXTENSIONS = new Set([".y4m", ".mp4", ".mkv", ".avi", ".mov", ".webm"]);

/**
 * Export every annotated video in a directory. Each video needs a JSON
 * sidecar `<stem>.json` carrying {label, onset_seconds?, split?}; videos
 * without one are skipped with a warning and counted in the summary.
 */
export function exportManifest(
  inputDir: string,
  outDir: string,
  options: Partial<Pick<ExportJob, "targetFps" | "window" | "backbone" | "device" | "expectedDim">> = {},
): ManifestSummary {
  mkdirSync(outDir, { recursive: true });
  const videos = readdirSync(inputDir)
    .filter((name) => VIDEO_EXTENSIONS.has(extname(name).toLowerCase()))
    .sort();
  if (videos.length === 0) {
    throw new JobError(`no video files in ${inputDir}`);
  }
  const backbone = createBackbone(
    options.backbone ?? "projection:0",
    options.expectedDim ?? DEFAULT_DIM,
  );

  const summary: ManifestSummary = {
    manifestPath: join(outDir, "manifest.jsonl"),
    exported: [],
    skipped: [],
    warnings: [],
  };
  const records: string[] = [
    JSON.stringify({ format: "vagnet-manifest", version: 1 }),
  ];
  const usedNames = new Set<string>();

  for (const video of videos) {
    const videoPath = join(inputDir, video);
    const sidecar = join(inputDir, stem(video) + ".json");
    if (!existsSync(sidecar)) {
      summary.skipped.push(videoPath);
      summary.warnings.push(`${videoPath}: missing annotation sidecar, skipped`);
      continue;
    }
    let annotation: Annotation;
    try {
      annotation = JSON.parse(readFileSync(sidecar, "utf-8"));
    } catch (err) {
      summary.skipped.push(videoPath);
      summary.warnings.push(`${videoPath}: unreadable annotation (${(err as Error).message}), skipped`);
      continue;
    }
    if (annotation.label !== 0 && annotation.label !== 1) {
      summary.skipped.push(videoPath);
      summary.warnings.push(`${videoPath}: annotation label must be 0 or 1, skipped`);
      continue;
    }
    if (annotation.label === 1 && typeof annotation.onset_seconds !== "number") {
      summary.skipped.push(videoPath);
      summary.warnings.push(`${videoPath}: positive annotation lacks onset_seconds, skipped`);
      continue;
    }

    const outName = disambiguate(stem(video), usedNames);
    const outPath = join(outDir, outName);
    let result;
    try {
      result = exportVideo(
        {
          videoPath,
          outPath,
          label: annotation.label,
          onsetSeconds: annotation.onset_seconds,
          targetFps: options.targetFps,
          window: options.window,
          device: options.device,
          expectedDim: options.expectedDim,
          groupId: stem(video),
        },
        backbone,
      );
    } catch (err) {
      if (err instanceof JobError) {
        usedNames.delete(outName);
        summary.skipped.push(videoPath);
        summary.warnings.push(`${videoPath}: ${err.message}, skipped`);
        continue;
      }
      throw err;
    }
    summary.exported.push(outPath);
    records.push(
      JSON.stringify({
        path: relative(outDir, outPath),
        label: annotation.label,
        tau: result.tau,
        group_id: stem(video),
        split: annotation.split ?? "train",
      }),
    );
  }

  if (summary.exported.length === 0) {
    throw new JobError(`no exportable videos in ${inputDir}: ${summary.warnings.join("; ")}`);
  }
  writeFileSync(summary.manifestPath, records.join("\n") + "\n");
  return summary;
}
