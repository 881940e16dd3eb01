"""Feature files, manifests, clip construction, and synthetic data.

The VAGF container holds one per-frame feature sequence with its label and
onset metadata. Byte layout, little-endian throughout:

    magic "VAGF" | u16 version=1 | u32 T | u32 D | f32 fps | u8 label |
    i32 tau (-1 = absent) | u32 len(group_id) | group_id utf-8 |
    T*D float32, row-major

A header is therefore 27 bytes plus the group id, and a whole file is
``27 + len(group_id) + 4*T*D`` bytes. Checkpoints reuse the same style of
container (magic "VAGW") holding the model config plus named parameter
tensors with shape headers.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import FormatError, InputError, NumericError
from .model import ModelConfig, ModelParams

_MAGIC = b"VAGF"
_VERSION = 1
_HEADER = struct.Struct("<4sHIIfBiI")  # magic, version, T, D, fps, label, tau, gid len

_CKPT_MAGIC = b"VAGW"
_CKPT_VERSION = 1


@dataclass
class FeatureSequence:
    """One per-frame feature stream or clip: (T, D) float32 plus metadata.

    ``tau`` is the accident-onset frame index and must be present exactly on
    positive (label=1) sequences. ``group_id`` names the source video so
    grouped cross-validation can keep sibling clips together.
    """

    data: np.ndarray
    fps: float
    label: int
    tau: int | None = None
    group_id: str = ""

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.data), dtype=np.float32)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InputError(f"feature data must be a nonempty (T, D) matrix; got {arr.shape}")
        if not np.isfinite(arr).all():
            raise NumericError("non-finite value in feature data")
        self.data = arr
        if not self.fps > 0:
            raise InputError(f"fps must be > 0; got {self.fps}")
        if self.label not in (0, 1):
            raise InputError(f"label must be 0 or 1; got {self.label}")
        if self.label == 1:
            if self.tau is None or not 0 <= int(self.tau) < arr.shape[0]:
                raise InputError(
                    f"positive sequence needs onset tau in [0, {arr.shape[0]}); got {self.tau}")
            self.tau = int(self.tau)
        elif self.tau is not None:
            raise InputError("negative sequence must not carry an onset tau")

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def D(self) -> int:
        return self.data.shape[1]


# --- VAGF read/write -------------------------------------------------------

def write_features(seq: FeatureSequence, path) -> None:
    """Serialize one FeatureSequence; read_features(write_features(x)) == x."""
    gid = seq.group_id.encode("utf-8")
    tau = -1 if seq.tau is None else int(seq.tau)
    header = _HEADER.pack(_MAGIC, _VERSION, seq.T, seq.D, float(seq.fps),
                          seq.label, tau, len(gid))
    payload = np.ascontiguousarray(seq.data, dtype="<f4").tobytes()
    Path(path).write_bytes(header + gid + payload)


def read_features(path) -> FeatureSequence:
    """Parse a VAGF file; malformed input raises FormatError with the byte offset."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(
            f"{path}: truncated header, file ends at byte {len(raw)} of {_HEADER.size}")
    magic, version, frames, dim, fps, label, tau, gid_len = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at byte 0")
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported version {version} at byte 4")
    offset = _HEADER.size
    if len(raw) < offset + gid_len:
        raise FormatError(
            f"{path}: truncated group id, file ends at byte {len(raw)} of {offset + gid_len}")
    gid = raw[offset:offset + gid_len].decode("utf-8")
    offset += gid_len
    expected = offset + 4 * frames * dim
    if len(raw) < expected:
        raise FormatError(
            f"{path}: truncated payload, file ends at byte {len(raw)} of {expected}")
    if len(raw) > expected:
        raise FormatError(f"{path}: {len(raw) - expected} trailing bytes at byte {expected}")
    data = np.frombuffer(raw, dtype="<f4", count=frames * dim, offset=offset)
    data = data.reshape(frames, dim).astype(np.float32)
    return FeatureSequence(data=data, fps=float(fps), label=int(label),
                           tau=None if tau < 0 else int(tau), group_id=gid)


# --- checkpoint container ----------------------------------------------------

def write_checkpoint(path, config: ModelConfig, params: ModelParams) -> None:
    """Write the model config and named parameter tensors, deterministically."""
    blob = json.dumps(config.to_dict(), sort_keys=True).encode("utf-8")
    named = params.named_tensors()
    parts = [_CKPT_MAGIC, struct.pack("<H", _CKPT_VERSION),
             struct.pack("<I", len(blob)), blob, struct.pack("<I", len(named))]
    for name, t in named:
        nb = name.encode("utf-8")
        arr = np.ascontiguousarray(t.data, dtype="<f4")
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_checkpoint(path, dtype=np.float32,
                    requires_grad: bool = False) -> tuple[ModelConfig, ModelParams]:
    raw = Path(path).read_bytes()
    view = memoryview(raw)
    pos = 0

    def take(n: int, what: str) -> memoryview:
        nonlocal pos
        if len(raw) < pos + n:
            raise FormatError(f"{path}: truncated {what} at byte {pos}")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4, "magic")) != _CKPT_MAGIC:
        raise FormatError(f"{path}: bad checkpoint magic at byte 0")
    (version,) = struct.unpack("<H", take(2, "version"))
    if version != _CKPT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    (blob_len,) = struct.unpack("<I", take(4, "config length"))
    config = ModelConfig.from_dict(json.loads(bytes(take(blob_len, "config"))))
    (count,) = struct.unpack("<I", take(4, "parameter count"))
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "name length"))
        name = bytes(take(name_len, "name")).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1, "rank"))
        shape = struct.unpack(f"<{rank}I", take(4 * rank, "shape"))
        n = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(take(4 * n, f"tensor {name}"), dtype="<f4")
        arrays[name] = arr.reshape(shape).astype(dtype)
    if pos != len(raw):
        raise FormatError(f"{path}: {len(raw) - pos} trailing bytes at byte {pos}")
    return config, ModelParams.from_arrays(config, arrays, requires_grad=requires_grad)


# --- manifests -----------------------------------------------------------------

_MANIFEST_FORMAT = "vagnet-manifest"
_MANIFEST_VERSION = 1


@dataclass
class ManifestEntry:
    path: Path
    label: int
    tau: int | None
    group_id: str
    split: str

    def load(self) -> FeatureSequence:
        seq = read_features(self.path)
        if (seq.label, seq.tau, seq.group_id) != (self.label, self.tau, self.group_id):
            raise InputError(
                f"{self.path}: file metadata (label={seq.label}, tau={seq.tau}, "
                f"group={seq.group_id!r}) disagrees with manifest entry "
                f"(label={self.label}, tau={self.tau}, group={self.group_id!r})")
        return seq


@dataclass
class DatasetManifest:
    version: int
    entries: list[ManifestEntry]

    def split(self, tag: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == tag]

    def load_split(self, tag: str | None = None) -> list[FeatureSequence]:
        chosen = self.entries if tag is None else self.split(tag)
        return [e.load() for e in chosen]


def write_manifest(path, entries: Iterable[dict]) -> None:
    """Write the line-delimited manifest; paths are stored relative when possible."""
    path = Path(path)
    lines = [json.dumps({"format": _MANIFEST_FORMAT, "version": _MANIFEST_VERSION})]
    for e in entries:
        rec = dict(e)
        p = Path(rec["path"])
        try:
            rec["path"] = str(p.relative_to(path.parent))
        except ValueError:
            rec["path"] = str(p)
        lines.append(json.dumps(rec, sort_keys=True))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(path) -> DatasetManifest:
    """Parse and validate a manifest; faults are reported all at once."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"manifest not found: {path}")
    lines = [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: empty manifest")
    try:
        head = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}:1: not JSON: {exc}") from exc
    if head.get("format") != _MANIFEST_FORMAT:
        raise FormatError(f"{path}:1: missing {_MANIFEST_FORMAT} header")
    if head.get("version") != _MANIFEST_VERSION:
        raise FormatError(f"{path}:1: unsupported manifest version {head.get('version')}")

    entries: list[ManifestEntry] = []
    problems: list[str] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            problems.append(f"line {lineno}: not JSON: {exc}")
            continue
        missing = [k for k in ("path", "label", "group_id") if k not in rec]
        if missing:
            problems.append(f"line {lineno}: missing keys {missing}")
            continue
        label = rec["label"]
        tau = rec.get("tau")
        if label not in (0, 1):
            problems.append(f"line {lineno}: label must be 0 or 1, got {label!r}")
            continue
        if label == 0 and tau is not None:
            problems.append(f"line {lineno}: label=0 entry must not set tau")
            continue
        if label == 1 and tau is None:
            problems.append(f"line {lineno}: label=1 entry must set tau")
            continue
        p = Path(rec["path"])
        if not p.is_absolute():
            p = path.parent / p
        if str(p) in seen:
            problems.append(f"line {lineno}: duplicate path {p}")
            continue
        seen.add(str(p))
        if not p.exists():
            problems.append(f"line {lineno}: missing file {p}")
            continue
        header = p.read_bytes()[:6]
        if header[:4] != _MAGIC:
            problems.append(f"line {lineno}: {p} is not a VAGF file")
            continue
        entries.append(ManifestEntry(path=p, label=int(label),
                                     tau=None if tau is None else int(tau),
                                     group_id=str(rec["group_id"]),
                                     split=str(rec.get("split", ""))))
    if problems:
        raise InputError(f"{path}: invalid manifest:\n  " + "\n  ".join(problems))
    return DatasetManifest(version=_MANIFEST_VERSION, entries=entries)


# --- clip construction -----------------------------------------------------------

def make_clips(stream: FeatureSequence, onset: int,
               seed: int | np.random.Generator) -> tuple[FeatureSequence, FeatureSequence | None]:
    """Cut one positive clip (onset inside its final 2 s, position seeded
    uniform) and, when enough pre-accident footage exists, one negative clip.

    The negative clip uses only frames strictly before onset minus one clip
    length, taking the latest admissible window. Both clips inherit the
    stream's group id.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(
        np.random.PCG64(seed))
    clip_len = int(round(5 * stream.fps))
    tail = int(round(2 * stream.fps))
    if stream.T < clip_len:
        raise InputError(f"stream of {stream.T} frames is shorter than one "
                         f"{clip_len}-frame clip")
    if not 0 <= onset < stream.T:
        raise InputError(f"onset {onset} outside stream of {stream.T} frames")
    lo = max(onset - (clip_len - 1), 0)
    hi = min(onset - (clip_len - tail), stream.T - clip_len)
    if lo > hi:
        raise InputError(
            f"onset {onset} cannot fall inside the final {tail} frames of any "
            f"in-bounds {clip_len}-frame clip")
    start = int(rng.integers(lo, hi + 1))
    positive = FeatureSequence(data=stream.data[start:start + clip_len].copy(),
                               fps=stream.fps, label=1, tau=onset - start,
                               group_id=stream.group_id)
    negative = None
    neg_start = onset - 2 * clip_len
    if neg_start >= 0:
        negative = FeatureSequence(data=stream.data[neg_start:neg_start + clip_len].copy(),
                                   fps=stream.fps, label=0, tau=None,
                                   group_id=stream.group_id)
    return positive, negative


# --- synthetic data ----------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    """Desk-scale scenario generator settings; output is class balanced."""

    n_clips: int = 200
    dim: int = 32
    frames: int = 50
    fps: float = 10.0
    seed: int = 0
    drift: float = 1.0   # magnitude of the pre-accident risk drift
    noise: float = 0.1

    def __post_init__(self):
        if self.n_clips < 2 or self.n_clips % 2 != 0:
            raise InputError("n_clips must be even and >= 2 to stay balanced")
        if self.dim < 1:
            raise InputError("dim must be >= 1")
        tail = int(round(2 * self.fps))
        if self.frames < tail + 2:
            raise InputError(f"frames must be >= {tail + 2} for a final-2s onset")
        if self.fps <= 0 or self.noise < 0 or self.drift < 0:
            raise InputError("fps must be > 0; drift and noise must be >= 0")


def synth_generate(spec: SyntheticSpec) -> list[FeatureSequence]:
    """Generate ``n_clips`` clips, alternating positive/negative pairs.

    Negatives are stationary Gaussian noise around a base vector. Positives
    add a drift along a fixed direction that ramps linearly from a seeded
    start frame to full magnitude at the onset ``tau`` (drawn uniform in the
    final 2 s) and stays there. Pair members share a group id. Deterministic
    in ``spec.seed``.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    base = rng.normal(size=spec.dim) / math.sqrt(spec.dim)
    direction = rng.normal(size=spec.dim)
    direction /= np.linalg.norm(direction)
    tail = int(round(2 * spec.fps))
    # drift onset lands early (0.1 s .. 0.6 s in) so almost every frame of a
    # positive clip carries signal; frame-pooled AP can then approach 1
    ramp_lo = max(int(round(0.1 * spec.fps)), 1)
    ramp_hi = max(int(round(0.6 * spec.fps)), ramp_lo)

    clips: list[FeatureSequence] = []
    for pair in range(spec.n_clips // 2):
        group = f"synthetic-{pair:04d}"
        tau = int(rng.integers(spec.frames - tail, spec.frames))
        start = int(rng.integers(ramp_lo, min(ramp_hi, tau - 1) + 1))
        t = np.arange(spec.frames)
        ramp = np.clip((t - start) / max(tau - start, 1), 0.0, 1.0)
        pos = (base[None, :] + spec.noise * rng.normal(size=(spec.frames, spec.dim))
               + spec.drift * ramp[:, None] * direction[None, :])
        neg = base[None, :] + spec.noise * rng.normal(size=(spec.frames, spec.dim))
        clips.append(FeatureSequence(data=pos, fps=spec.fps, label=1, tau=tau,
                                     group_id=group))
        clips.append(FeatureSequence(data=neg, fps=spec.fps, label=0, tau=None,
                                     group_id=group))
    return clips


def synth_to_dir(spec: SyntheticSpec, out_dir, test_fraction: float = 0.2,
                 split_seed: int | None = None) -> Path:
    """Write a synthetic dataset as VAGF files plus a manifest.

    Groups (not clips) are split into train/test so siblings never straddle
    the boundary. Returns the manifest path.
    """
    if not 0 <= test_fraction < 1:
        raise InputError("test_fraction must be in [0, 1)")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    clips = synth_generate(spec)
    groups = sorted({c.group_id for c in clips})
    rng = np.random.Generator(np.random.PCG64(
        spec.seed if split_seed is None else split_seed))
    order = [groups[i] for i in rng.permutation(len(groups))]
    n_test = int(round(test_fraction * len(order)))
    test_groups = set(order[:n_test])
    entries = []
    for i, clip in enumerate(clips):
        name = f"clip-{i:04d}.vagf"
        write_features(clip, out / name)
        entries.append({
            "path": str(out / name), "label": clip.label, "tau": clip.tau,
            "group_id": clip.group_id,
            "split": "test" if clip.group_id in test_groups else "train",
        })
    manifest_path = out / "manifest.jsonl"
    write_manifest(manifest_path, entries)
    return manifest_path
