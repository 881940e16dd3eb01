"""Accident-anticipation head over per-frame backbone features.

Per frame, the most recent ``lookback + 1`` feature rows are projected to
``d_model``, run through a stack of post-norm transformer encoder layers, and
pooled into one vector. A causal frame graph (each frame connected to itself
and up to ``neighbors`` predecessors) is then fused with one multi-head
attention layer restricted to graph edges, the window and graph vectors are
concatenated, and a two-layer classifier emits per-frame accident logits.

Everything here is causal by construction: frame ``t`` never reads features
from frames after ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from . import _kernels as K
from . import numerics as nm
from .errors import ConfigError, DimensionError, InputError, NumericError
from .numerics import Tensor

if TYPE_CHECKING:
    from .dataio import FeatureSequence


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters of the head; every weight shape follows from these."""

    d_in: int = 768          # backbone feature width
    d_model: int = 256       # projected width inside the head
    layers: int = 2          # stacked encoder layers
    heads: int = 4           # attention heads (shared by encoder and graph)
    lookback: int = 15       # window = current frame + this many predecessors
    neighbors: int = 20      # how far back the frame graph connects
    d_hidden: int = 128      # classifier hidden width
    classes: int = 2
    positional_encoding: bool = True
    pool: str = "last"       # window pooling: "last" position or "mean"

    def __post_init__(self):
        if min(self.d_in, self.d_model, self.layers, self.heads, self.d_hidden) < 1:
            raise ConfigError("d_in, d_model, layers, heads, d_hidden must be >= 1")
        if self.d_model % self.heads != 0:
            raise ConfigError(
                f"d_model={self.d_model} not divisible by heads={self.heads}")
        if self.lookback < 0:
            raise ConfigError("lookback must be >= 0")
        if self.neighbors < 1:
            raise ConfigError("neighbors must be >= 1")
        if self.classes != 2:
            raise ConfigError("the head is a two-class classifier")
        if self.pool not in ("last", "mean"):
            raise ConfigError(f"unknown pool mode {self.pool!r}")

    @property
    def window(self) -> int:
        return self.lookback + 1

    @property
    def d_head(self) -> int:
        return self.d_model // self.heads

    def to_dict(self) -> dict:
        return {
            "d_in": self.d_in, "d_model": self.d_model, "layers": self.layers,
            "heads": self.heads, "lookback": self.lookback,
            "neighbors": self.neighbors, "d_hidden": self.d_hidden,
            "classes": self.classes,
            "positional_encoding": self.positional_encoding, "pool": self.pool,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class AttentionParams:
    """Per-head Q/K/V projections plus the shared output projection."""

    wq: list[Tensor]
    wk: list[Tensor]
    wv: list[Tensor]
    wo: Tensor


@dataclass
class EncoderLayerParams:
    attn: AttentionParams
    fc1_w: Tensor
    fc1_b: Tensor
    fc2_w: Tensor
    fc2_b: Tensor
    norm1_gain: Tensor
    norm1_bias: Tensor
    norm2_gain: Tensor
    norm2_bias: Tensor


@dataclass
class ModelParams:
    """All learnable weights; shapes are a pure function of ModelConfig."""

    proj_w: Tensor
    proj_b: Tensor
    encoder: list[EncoderLayerParams]
    graph_attn: AttentionParams
    cls1_w: Tensor
    cls1_b: Tensor
    cls2_w: Tensor
    cls2_b: Tensor

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        """Deterministically ordered (name, tensor) pairs; the checkpoint order."""
        out = [("proj.weight", self.proj_w), ("proj.bias", self.proj_b)]
        for i, layer in enumerate(self.encoder):
            out.extend(_named_attention(f"encoder.{i}.attn", layer.attn))
            out.extend([
                (f"encoder.{i}.fc1.weight", layer.fc1_w),
                (f"encoder.{i}.fc1.bias", layer.fc1_b),
                (f"encoder.{i}.fc2.weight", layer.fc2_w),
                (f"encoder.{i}.fc2.bias", layer.fc2_b),
                (f"encoder.{i}.norm1.gain", layer.norm1_gain),
                (f"encoder.{i}.norm1.bias", layer.norm1_bias),
                (f"encoder.{i}.norm2.gain", layer.norm2_gain),
                (f"encoder.{i}.norm2.bias", layer.norm2_bias),
            ])
        out.extend(_named_attention("graph", self.graph_attn))
        out.extend([
            ("classifier.fc1.weight", self.cls1_w),
            ("classifier.fc1.bias", self.cls1_b),
            ("classifier.fc2.weight", self.cls2_w),
            ("classifier.fc2.bias", self.cls2_b),
        ])
        return out

    def tensors(self) -> list[Tensor]:
        return [t for _, t in self.named_tensors()]

    @property
    def dtype(self):
        return self.proj_w.data.dtype

    @classmethod
    def from_arrays(cls, config: ModelConfig, arrays: dict[str, np.ndarray],
                    requires_grad: bool = False) -> "ModelParams":
        """Rebuild the parameter tree from named arrays (checkpoint loading)."""
        template = init_params(config, seed=0)
        expected = dict(template.named_tensors())
        missing = sorted(set(expected) - set(arrays))
        extra = sorted(set(arrays) - set(expected))
        if missing or extra:
            raise InputError(
                f"parameter names do not match config: missing={missing}, extra={extra}")
        for name, t in template.named_tensors():
            arr = np.ascontiguousarray(arrays[name])
            if arr.shape != t.data.shape:
                raise DimensionError(
                    f"parameter {name}: shape {arr.shape} != expected {t.data.shape}")
            t.data = arr
            t.requires_grad = requires_grad
            t.tracked = requires_grad
        return template


def _named_attention(prefix: str, attn: AttentionParams) -> list[tuple[str, Tensor]]:
    out = []
    for j, (q, k, v) in enumerate(zip(attn.wq, attn.wk, attn.wv)):
        out.extend([(f"{prefix}.q{j}", q), (f"{prefix}.k{j}", k), (f"{prefix}.v{j}", v)])
    out.append((f"{prefix}.out", attn.wo))
    return out


def parameter_count(config: ModelConfig) -> int:
    """Closed-form number of scalars in ModelParams for this config."""
    d, dh, m = config.d_model, config.d_hidden, config.classes
    per_layer = 3 * d * d + d * d + (d * 4 * d + 4 * d) + (4 * d * d + d) + 4 * d
    return (config.d_in * d + d
            + config.layers * per_layer
            + 4 * d * d
            + 2 * d * dh + dh + dh * m + m)


def init_params(config: ModelConfig, seed: int,
                dtype=np.float32) -> ModelParams:
    """Glorot-uniform weights, zero biases, unit layer-norm gains.

    Deterministic in ``seed``: draws happen in named_tensors() order.
    """
    rng = np.random.Generator(np.random.PCG64(seed))

    def glorot(fan_in: int, fan_out: int) -> Tensor:
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        data = rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)
        return Tensor(data, requires_grad=True)

    def zeros(n: int) -> Tensor:
        return Tensor(np.zeros(n, dtype=dtype), requires_grad=True)

    def ones(n: int) -> Tensor:
        return Tensor(np.ones(n, dtype=dtype), requires_grad=True)

    def attention() -> AttentionParams:
        wq, wk, wv = [], [], []
        for _ in range(config.heads):
            wq.append(glorot(config.d_model, config.d_head))
            wk.append(glorot(config.d_model, config.d_head))
            wv.append(glorot(config.d_model, config.d_head))
        return AttentionParams(wq, wk, wv, glorot(config.d_model, config.d_model))

    d = config.d_model
    proj_w, proj_b = glorot(config.d_in, d), zeros(d)
    encoder = []
    for _ in range(config.layers):
        encoder.append(EncoderLayerParams(
            attn=attention(),
            fc1_w=glorot(d, 4 * d), fc1_b=zeros(4 * d),
            fc2_w=glorot(4 * d, d), fc2_b=zeros(d),
            norm1_gain=ones(d), norm1_bias=zeros(d),
            norm2_gain=ones(d), norm2_bias=zeros(d),
        ))
    graph_attn = attention()
    cls1_w, cls1_b = glorot(2 * d, config.d_hidden), zeros(config.d_hidden)
    cls2_w, cls2_b = glorot(config.d_hidden, config.classes), zeros(config.classes)
    return ModelParams(proj_w, proj_b, encoder, graph_attn,
                       cls1_w, cls1_b, cls2_w, cls2_b)


# --- attention and encoder -----------------------------------------------------

def multi_head_attention(h: Tensor, params: AttentionParams,
                         mask: np.ndarray | None = None) -> Tensor:
    """Scaled dot-product attention per head, concatenated, then projected.

    ``h`` is (n, d_model) or (batch, n, d_model). ``mask`` is a boolean
    (n, n) matrix, True where position i may attend to position j; excluded
    entries get -inf before the softmax. A row with no allowed entries
    produces a zero output row.
    """
    n = h.data.shape[-2]
    bias = None
    if mask is not None:
        if mask.shape != (n, n):
            raise DimensionError(f"mask shape {mask.shape} != ({n}, {n})")
        bias = np.where(mask, 0.0, -np.inf).astype(h.data.dtype)
    inv_scale = 1.0 / math.sqrt(params.wq[0].data.shape[1])
    outs = []
    for wq, wk, wv in zip(params.wq, params.wk, params.wv):
        q = nm.matmul(h, wq)
        k = nm.matmul(h, wk)
        v = nm.matmul(h, wv)
        scores = nm.scale(nm.matmul(q, nm.transpose_last2(k)), inv_scale)
        if bias is not None:
            scores = nm.add_const(scores, bias)
        outs.append(nm.matmul(nm.softmax_rows(scores), v))
    return nm.matmul(nm.concat_last(outs), params.wo)


def encoder_layer(h: Tensor, layer: EncoderLayerParams) -> Tensor:
    """Post-norm encoder layer: LN(h + MHA(h)), then LN(x + FC(x))."""
    x = nm.layer_norm(nm.add(h, multi_head_attention(h, layer.attn)),
                      layer.norm1_gain, layer.norm1_bias)
    ff = nm.add(nm.matmul(nm.relu(nm.add(nm.matmul(x, layer.fc1_w), layer.fc1_b)),
                          layer.fc2_w), layer.fc2_b)
    return nm.layer_norm(nm.add(x, ff), layer.norm2_gain, layer.norm2_bias)


def sinusoidal_positions(n: int, d: int, dtype=np.float32) -> np.ndarray:
    """Standard fixed sin/cos position table, shape (n, d)."""
    pos = np.arange(n, dtype=np.float64)[:, None]
    idx = np.arange(0, d, 2, dtype=np.float64)
    angle = pos / np.power(10000.0, idx / d)
    table = np.zeros((n, d))
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle[:, : d // 2])
    return table.astype(dtype)


def encode_windows(windows: Tensor, params: ModelParams,
                   config: ModelConfig) -> Tensor:
    """Encode a batch of frame windows (B, window, d_in) into (B, d_model)."""
    if windows.data.ndim != 3 or windows.data.shape[1] != config.window:
        raise InputError(
            f"windows must be (B, {config.window}, d_in); got {windows.data.shape}")
    if windows.data.shape[2] != config.d_in:
        raise DimensionError(
            f"feature dim {windows.data.shape[2]} != model d_in {config.d_in}")
    h = nm.add(nm.matmul(windows, params.proj_w), params.proj_b)
    if config.positional_encoding:
        h = nm.add_const(h, sinusoidal_positions(config.window, config.d_model,
                                                 windows.data.dtype))
    for layer in params.encoder:
        h = encoder_layer(h, layer)
    if config.pool == "mean":
        return nm.mean_tokens(h)
    return nm.select_token(h, config.window - 1)


def encode_window(window_feats: Tensor, params: ModelParams,
                  config: ModelConfig) -> Tensor:
    """Encode one (window, d_in) frame window into its (d_model,) vector."""
    if window_feats.data.ndim != 2:
        raise InputError("encode_window expects a rank-2 window")
    if window_feats.data.shape[0] != config.window:
        raise InputError(
            f"window has {window_feats.data.shape[0]} rows; expected {config.window}")
    out = encode_windows(_unsqueeze_row(window_feats), params, config)
    return _squeeze_row(out)


def _unsqueeze_row(t: Tensor) -> Tensor:
    out = t.data[None]

    def backward(g: np.ndarray):
        return (g[0],)

    return nm._record("unsqueeze_row", (t,), out, backward)


def _squeeze_row(t: Tensor) -> Tensor:
    out = np.ascontiguousarray(t.data[0])

    def backward(g: np.ndarray):
        return (g[None, :],)

    return nm._record("squeeze_row", (t,), out, backward)


# --- frame graph ----------------------------------------------------------------

@dataclass(frozen=True)
class FrameGraph:
    """Causal adjacency over clip frames.

    Edge (i, j) means frame i attends to frame j; every frame keeps a
    self-loop and reaches at most ``neighbors`` predecessors, never a
    successor.
    """

    frames: int
    neighbors: int
    edges: tuple[tuple[int, int], ...] = field(repr=False)

    def allowed_matrix(self) -> np.ndarray:
        """Boolean (frames, frames) matrix: True where attention is allowed."""
        m = np.zeros((self.frames, self.frames), dtype=bool)
        rows, cols = zip(*self.edges)
        m[list(rows), list(cols)] = True
        return m


def build_causal_adjacency(frames: int, neighbors: int) -> FrameGraph:
    """Edges {(i, j) : 0 <= i - j <= neighbors}; strictly no future frames."""
    if frames < 1:
        raise InputError("a frame graph needs at least one frame")
    if neighbors < 1:
        raise InputError("neighbors must be >= 1")
    edges = tuple((i, j) for i in range(frames)
                  for j in range(max(0, i - neighbors), i + 1))
    return FrameGraph(frames=frames, neighbors=neighbors, edges=edges)


def graph_transformer_layer(x: Tensor, graph: FrameGraph,
                            params: AttentionParams) -> Tensor:
    """Multi-head attention over graph neighbors only."""
    if x.data.ndim != 2:
        raise DimensionError("graph_transformer_layer expects (frames, d_model)")
    if x.data.shape[0] != graph.frames:
        raise DimensionError(
            f"{x.data.shape[0]} rows for a {graph.frames}-frame graph")
    return multi_head_attention(x, params, mask=graph.allowed_matrix())


# --- full head -------------------------------------------------------------------

@dataclass
class RiskTrace:
    """Per-frame accident probabilities and the raw two-class scores."""

    probs: np.ndarray   # (T,), class-1 softmax of each logit row
    logits: Tensor      # (T, classes); tape-connected when run under a Tape


def forward(clip: "FeatureSequence", params: ModelParams,
            config: ModelConfig) -> RiskTrace:
    """Score every frame of a clip.

    Windows shorter than ``lookback + 1`` at the clip start are left-padded
    by repeating the first frame. The returned probabilities are finite and
    in [0, 1]; any NaN/Inf raises NumericError.
    """
    data = clip.data
    if data.ndim != 2:
        raise InputError("clip data must be a (T, D) matrix")
    frames = data.shape[0]
    if data.shape[1] != config.d_in:
        raise DimensionError(
            f"feature dim {data.shape[1]} != model d_in {config.d_in}")
    dtype = params.dtype
    idx = np.maximum(
        np.arange(frames)[:, None] + np.arange(-config.lookback, 1)[None, :], 0)
    windows = Tensor._wrap(np.ascontiguousarray(data[idx], dtype=dtype), False)

    per_frame = encode_windows(windows, params, config)
    graph = build_causal_adjacency(frames, config.neighbors)
    fused = graph_transformer_layer(per_frame, graph, params.graph_attn)
    both = nm.concat_last([per_frame, fused])
    hidden = nm.relu(nm.add(nm.matmul(both, params.cls1_w), params.cls1_b))
    logits = nm.add(nm.matmul(hidden, params.cls2_w), params.cls2_b)
    if not np.isfinite(logits.data).all():
        raise NumericError("non-finite logits in forward pass")
    probs = K.softmax_rows_fwd(np.ascontiguousarray(logits.data))
    return RiskTrace(probs=probs[:, 1].copy(), logits=logits)


# --- analytic cost --------------------------------------------------------------

@dataclass(frozen=True)
class FlopBreakdown:
    """Per-stage FLOPs for scoring one new frame (matmul convention 2*m*k*n)."""

    projection: float
    encoder: float
    graph: float
    classifier: float

    @property
    def total(self) -> float:
        return self.projection + self.encoder + self.graph + self.classifier

    def stages(self) -> list[tuple[str, float]]:
        return [("projection", self.projection), ("encoder", self.encoder),
                ("graph", self.graph), ("classifier", self.classifier)]


def flop_breakdown(config: ModelConfig, frames: int) -> FlopBreakdown:
    """Analytic matmul FLOPs to score one new frame of a ``frames``-long clip.

    Counts every matrix product at 2*m*k*n (multiply + add); elementwise work
    (softmax, norms, bias adds) is not counted. Each new frame re-encodes its
    own window; the graph stage assumes cached neighbor keys/values, so it
    pays projections once per frame plus scores over min(neighbors, t) + 1
    predecessors, averaged over the clip.
    """
    if frames < 1:
        raise InputError("flop estimate needs frames >= 1")
    n = config.window
    d = config.d_model
    projection = n * 2 * config.d_in * d
    per_layer = 24 * n * d * d + 4 * n * n * d
    encoder = config.layers * per_layer
    avg_nb = sum(min(config.neighbors, t) + 1 for t in range(frames)) / frames
    graph = 8 * d * d + 4 * avg_nb * d
    classifier = 2 * (2 * d) * config.d_hidden + 2 * config.d_hidden * config.classes
    return FlopBreakdown(float(projection), float(encoder), float(graph),
                         float(classifier))


def flop_estimate(config: ModelConfig, frames: int) -> float:
    """Total analytic FLOPs to score one new frame; see flop_breakdown."""
    return flop_breakdown(config, frames).total
