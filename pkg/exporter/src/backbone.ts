/**
 * Backbones turn a window of frames into one fixed-width embedding.
 *
 * Selector strings pick the implementation:
 *
 *   projection[:seed]  seeded random-projection over pooled luma cells;
 *                      deterministic, dependency-free, the test default
 *   cmd:<executable>   stream windows to an external process (one request
 *                      per window: a JSON header line + raw luma bytes,
 *                      answered by dim float32 little-endian bytes); this is
 *                      the hook for a real pretrained video model
 *
 * Every backbone declares its output width; the exporter refuses to write
 * files whose width disagrees with the job's expected dimension.
 */

import { spawnSync } from "node:child_process";

import type { LumaFrame } from "./y4m.js";

export const DEFAULT_DIM = 768;

export class ConfigError extends Error {}

export interface Backbone {
  readonly name: string;
  readonly dim: number;
  embed(window: LumaFrame[]): Float32Array;
}

export function createBackbone(selector: string, dim: number = DEFAULT_DIM): Backbone {
  if (selector === "projection" || selector.startsWith("projection:")) {
    const seed = selector.includes(":") ? Number(selector.split(":")[1]) : 0;
    if (!Number.isFinite(seed)) {
      throw new ConfigError(`bad projection seed in ${JSON.stringify(selector)}`);
    }
    return new ProjectionBackbone(dim, seed);
  }
  if (selector.startsWith("cmd:")) {
    const executable = selector.slice(4);
    if (!executable) throw new ConfigError("cmd: selector needs an executable path");
    return new CommandBackbone(executable, dim);
  }
  throw new ConfigError(
    `unknown backbone ${JSON.stringify(selector)}; expected projection[:seed] or cmd:<path>`,
  );
}

/** Deterministic PRNG (mulberry32); embeddings must not vary across runs. */
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

const GRID = 16; // luma pooled to GRID x GRID cell means per frame

export class ProjectionBackbone implements Backbone {
  readonly name: string;
  readonly dim: number;
  private readonly weights: Float32Array; // dim x GRID^2

  constructor(dim: number, seed: number) {
    this.dim = dim;
    this.name = `projection:${seed}`;
    const rand = mulberry32(seed);
    this.weights = new Float32Array(dim * GRID * GRID);
    for (let i = 0; i < this.weights.length; i++) {
      this.weights[i] = (rand() * 2 - 1) / GRID;
    }
  }

  embed(window: LumaFrame[]): Float32Array {
    if (window.length === 0) throw new ConfigError("empty frame window");
    const cells = new Float64Array(GRID * GRID);
    for (const frame of window) {
      poolCells(frame, cells);
    }
    const out = new Float32Array(this.dim);
    const n = window.length;
    for (let k = 0; k < this.dim; k++) {
      let acc = 0;
      const row = k * GRID * GRID;
      for (let i = 0; i < GRID * GRID; i++) {
        acc += this.weights[row + i] * cells[i];
      }
      out[k] = Math.tanh(acc / n);
    }
    return out;
  }
}

function poolCells(frame: LumaFrame, into: Float64Array): void {
  const { width, height, y } = frame;
  for (let gy = 0; gy < GRID; gy++) {
    const y0 = Math.floor((gy * height) / GRID);
    const y1 = Math.max(Math.floor(((gy + 1) * height) / GRID), y0 + 1);
    for (let gx = 0; gx < GRID; gx++) {
      const x0 = Math.floor((gx * width) / GRID);
      const x1 = Math.max(Math.floor(((gx + 1) * width) / GRID), x0 + 1);
      let acc = 0;
      for (let yy = y0; yy < y1; yy++) {
        const base = yy * width;
        for (let xx = x0; xx < x1; xx++) acc += y[base + xx];
      }
      into[gy * GRID + gx] += acc / ((y1 - y0) * (x1 - x0) * 255);
    }
  }
}

/**
 * Bridge to an external embedding process. Each window becomes one
 * invocation: stdin gets `{"frames":N,"width":W,"height":H,"dim":D}\n`
 * followed by N luma planes, stdout must answer with exactly dim little-
 * endian float32 values.
 */
export class CommandBackbone implements Backbone {
  readonly name: string;
  readonly dim: number;
  private readonly executable: string;

  constructor(executable: string, dim: number) {
    this.executable = executable;
    this.dim = dim;
    this.name = `cmd:${executable}`;
  }

  embed(window: LumaFrame[]): Float32Array {
    if (window.length === 0) throw new ConfigError("empty frame window");
    const { width, height } = window[0];
    const header = Buffer.from(
      JSON.stringify({ frames: window.length, width, height, dim: this.dim }) + "\n",
      "utf-8",
    );
    const input = Buffer.concat([header, ...window.map((f) => f.y)]);
    const run = spawnSync(this.executable, [], { input, maxBuffer: 1 << 26 });
    if (run.error || run.status !== 0) {
      throw new ConfigError(
        `backbone command failed: ${run.error?.message ?? run.stderr?.toString()}`,
      );
    }
    if (run.stdout.length !== this.dim * 4) {
      throw new ConfigError(
        `backbone command returned ${run.stdout.length} bytes; expected ${this.dim * 4}`,
      );
    }
    const out = new Float32Array(this.dim);
    const view = new DataView(run.stdout.buffer, run.stdout.byteOffset, run.stdout.length);
    for (let i = 0; i < this.dim; i++) out[i] = view.getFloat32(i * 4, true);
    return out;
  }
}
