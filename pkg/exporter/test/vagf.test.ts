import { describe, expect, it } from "vitest";

import { decodeVagf, encodeVagf, FormatError, type FeatureFile } from "../src/vagf.js";

function sample(overrides: Partial<FeatureFile> = {}): FeatureFile {
  const frames = 3;
  const dim = 4;
  const data = new Float32Array(frames * dim).map((_, i) => i / 7);
  return { frames, dim, fps: 10, label: 1, tau: 2, groupId: "vid-01", data, ...overrides };
}

describe("vagf encode/decode", () => {
  it("round trips every field", () => {
    const file = sample();
    const back = decodeVagf(encodeVagf(file));
    expect(back.frames).toBe(3);
    expect(back.dim).toBe(4);
    expect(back.fps).toBeCloseTo(10, 6);
    expect(back.label).toBe(1);
    expect(back.tau).toBe(2);
    expect(back.groupId).toBe("vid-01");
    expect(Array.from(back.data)).toEqual(Array.from(file.data));
  });

  it("encodes absent tau as -1", () => {
    const raw = encodeVagf(sample({ label: 0, tau: null }));
    expect(raw.readInt32LE(19)).toBe(-1);
    expect(decodeVagf(raw).tau).toBeNull();
  });

  it("writes the documented header layout", () => {
    const raw = encodeVagf(sample());
    expect(raw.toString("ascii", 0, 4)).toBe("VAGF");
    expect(raw.readUInt16LE(4)).toBe(1);       // version
    expect(raw.readUInt32LE(6)).toBe(3);       // frames
    expect(raw.readUInt32LE(10)).toBe(4);      // dim
    expect(raw.readUInt8(18)).toBe(1);         // label
    expect(raw.readUInt32LE(23)).toBe(6);      // group id bytes
    expect(raw.length).toBe(27 + 6 + 4 * 3 * 4);
  });

  it("handles multibyte group ids", () => {
    const back = decodeVagf(encodeVagf(sample({ groupId: "WET-12é" })));
    expect(back.groupId).toBe("WET-12é");
  });

  it("rejects tau outside a positive file", () => {
    expect(() => encodeVagf(sample({ tau: 3 }))).toThrow(FormatError);
  });

  it("rejects tau on a negative file", () => {
    expect(() => encodeVagf(sample({ label: 0, tau: 1 }))).toThrow(FormatError);
  });

  it("rejects non-finite features", () => {
    const data = sample().data;
    data[5] = Number.POSITIVE_INFINITY;
    expect(() => encodeVagf(sample({ data }))).toThrow(/non-finite/);
  });

  it("rejects truncated buffers", () => {
    const raw = encodeVagf(sample());
    expect(() => decodeVagf(raw.slice(0, raw.length - 1))).toThrow(FormatError);
  });
});
