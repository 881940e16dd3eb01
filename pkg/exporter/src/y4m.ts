/**
 * Minimal YUV4MPEG2 (.y4m) decoder.
 *
 * Only the luma plane is kept; chroma is skipped according to the declared
 * colorspace. This is the exporter's native video path, so test videos and
 * ffmpeg pipes (`ffmpeg -i clip.mp4 -f yuv4mpegpipe -`) both decode without
 * external dependencies.
 */

export interface LumaFrame {
  width: number;
  height: number;
  /** Row-major luma bytes, length width * height. */
  y: Uint8Array;
}

export interface Y4mVideo {
  width: number;
  height: number;
  fps: number;
  frames: LumaFrame[];
}

export class VideoFormatError extends Error {}

const FRAME_MARKER = "FRAME";

function chromaBytes(colorspace: string, w: number, h: number): number {
  if (colorspace.startsWith("C420")) return 2 * Math.ceil(w / 2) * Math.ceil(h / 2);
  if (colorspace.startsWith("C422")) return 2 * Math.ceil(w / 2) * h;
  if (colorspace.startsWith("C444")) return 2 * w * h;
  if (colorspace.startsWith("Cmono")) return 0;
  throw new VideoFormatError(`unsupported colorspace ${colorspace}`);
}

export function parseY4m(data: Uint8Array): Y4mVideo {
  const newline = data.indexOf(0x0a);
  if (newline < 0) throw new VideoFormatError("missing stream header");
  const header = Buffer.from(data.subarray(0, newline)).toString("ascii");
  const tokens = header.split(" ");
  if (tokens[0] !== "YUV4MPEG2") {
    throw new VideoFormatError(`bad magic ${JSON.stringify(tokens[0])}`);
  }
  let width = 0;
  let height = 0;
  let fps = 0;
  let colorspace = "C420jpeg";
  for (const token of tokens.slice(1)) {
    if (token.startsWith("W")) width = Number(token.slice(1));
    else if (token.startsWith("H")) height = Number(token.slice(1));
    else if (token.startsWith("F")) {
      const [num, den] = token.slice(1).split(":").map(Number);
      if (!num || !den) throw new VideoFormatError(`bad frame rate ${token}`);
      fps = num / den;
    } else if (token.startsWith("C")) colorspace = token;
  }
  if (!width || !height || !fps) {
    throw new VideoFormatError(`incomplete stream header: ${header}`);
  }

  const lumaLen = width * height;
  const skip = chromaBytes(colorspace, width, height);
  const frames: LumaFrame[] = [];
  let pos = newline + 1;
  while (pos < data.length) {
    const lineEnd = data.indexOf(0x0a, pos);
    if (lineEnd < 0) throw new VideoFormatError(`truncated frame header at byte ${pos}`);
    const marker = Buffer.from(data.subarray(pos, lineEnd)).toString("ascii");
    if (!marker.startsWith(FRAME_MARKER)) {
      throw new VideoFormatError(`expected FRAME at byte ${pos}, got ${JSON.stringify(marker)}`);
    }
    pos = lineEnd + 1;
    if (pos + lumaLen + skip > data.length) {
      throw new VideoFormatError(`truncated frame payload at byte ${pos}`);
    }
    frames.push({ width, height, y: data.slice(pos, pos + lumaLen) });
    pos += lumaLen + skip;
  }
  if (frames.length === 0) throw new VideoFormatError("no frames");
  return { width, height, fps, frames };
}

/** Assemble a C420jpeg y4m byte stream; used by tests and fixtures. */
export function buildY4m(frames: LumaFrame[], fps: number): Uint8Array {
  if (frames.length === 0) throw new VideoFormatError("no frames to build");
  const { width, height } = frames[0];
  const den = Number.isInteger(fps) ? 1 : 1000;
  const header = `YUV4MPEG2 W${width} H${height} F${Math.round(fps * den)}:${den} Ip A1:1 C420jpeg\n`;
  const chroma = Math.ceil(width / 2) * Math.ceil(height / 2);
  const parts: Uint8Array[] = [Buffer.from(header, "ascii")];
  const neutral = new Uint8Array(chroma).fill(128);
  for (const frame of frames) {
    if (frame.width !== width || frame.height !== height) {
      throw new VideoFormatError("frame size changed mid-stream");
    }
    parts.push(Buffer.from("FRAME\n", "ascii"), frame.y, neutral, neutral);
  }
  return Buffer.concat(parts);
}
