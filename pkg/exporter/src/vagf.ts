/**
 * VAGF container writer (and a reader for round-trip tests).
 *
 * Byte layout, little-endian: magic "VAGF", u16 version=1, u32 T, u32 D,
 * f32 fps, u8 label, i32 tau (-1 = absent), u32 group-id length, group-id
 * utf-8, then T*D float32 row-major. 27 header bytes + group id + payload.
 */

export class FormatError extends Error {}

const MAGIC = "VAGF";
const VERSION = 1;
const HEADER_BYTES = 27;

export interface FeatureFile {
  frames: number;
  dim: number;
  fps: number;
  label: 0 | 1;
  tau: number | null;
  groupId: string;
  /** frames * dim values, row-major. */
  data: Float32Array;
}

export function encodeVagf(file: FeatureFile): Buffer {
  const { frames, dim, data } = file;
  if (data.length !== frames * dim) {
    throw new FormatError(`data length ${data.length} != ${frames}*${dim}`);
  }
  if (file.label === 1 && (file.tau === null || file.tau < 0 || file.tau >= frames)) {
    throw new FormatError(`positive file needs tau in [0, ${frames}); got ${file.tau}`);
  }
  if (file.label === 0 && file.tau !== null) {
    throw new FormatError("negative file must not carry tau");
  }
  const gid = Buffer.from(file.groupId, "utf-8");
  const out = Buffer.alloc(HEADER_BYTES + gid.length + 4 * frames * dim);
  out.write(MAGIC, 0, "ascii");
  out.writeUInt16LE(VERSION, 4);
  out.writeUInt32LE(frames, 6);
  out.writeUInt32LE(dim, 10);
  out.writeFloatLE(file.fps, 14);
  out.writeUInt8(file.label, 18);
  out.writeInt32LE(file.tau === null ? -1 : file.tau, 19);
  out.writeUInt32LE(gid.length, 23);
  gid.copy(out, HEADER_BYTES);
  let pos = HEADER_BYTES + gid.length;
  for (let i = 0; i < data.length; i++, pos += 4) {
    if (!Number.isFinite(data[i])) {
      throw new FormatError(`non-finite feature value at index ${i}`);
    }
    out.writeFloatLE(data[i], pos);
  }
  return out;
}

export function decodeVagf(raw: Buffer): FeatureFile {
  if (raw.length < HEADER_BYTES) {
    throw new FormatError(`truncated header: ${raw.length} of ${HEADER_BYTES} bytes`);
  }
  if (raw.toString("ascii", 0, 4) !== MAGIC) {
    throw new FormatError("bad magic at byte 0");
  }
  const version = raw.readUInt16LE(4);
  if (version !== VERSION) throw new FormatError(`unsupported version ${version}`);
  const frames = raw.readUInt32LE(6);
  const dim = raw.readUInt32LE(10);
  const fps = raw.readFloatLE(14);
  const label = raw.readUInt8(18) as 0 | 1;
  const tauRaw = raw.readInt32LE(19);
  const gidLen = raw.readUInt32LE(23);
  const expected = HEADER_BYTES + gidLen + 4 * frames * dim;
  if (raw.length !== expected) {
    throw new FormatError(`file is ${raw.length} bytes; expected ${expected}`);
  }
  const groupId = raw.toString("utf-8", HEADER_BYTES, HEADER_BYTES + gidLen);
  const data = new Float32Array(frames * dim);
  let pos = HEADER_BYTES + gidLen;
  for (let i = 0; i < data.length; i++, pos += 4) data[i] = raw.readFloatLE(pos);
  return { frames, dim, fps, label, tau: tauRaw < 0 ? null : tauRaw, groupId, data };
}
