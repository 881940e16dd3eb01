"""VAGNet: per-frame accident anticipation over dash-cam feature streams.

Windowed transformer encoding of backbone features, causal frame-graph
attention, and a two-class per-frame classifier, with its own training loop,
AP/TTA/mTTA evaluation harness, VAGF feature-file format, synthetic data
generator, and FLOP/latency profiler.
"""

from ._kernels import backend as kernel_backend
from .dataio import (
    DatasetManifest,
    FeatureSequence,
    SyntheticSpec,
    load_manifest,
    make_clips,
    read_checkpoint,
    read_features,
    synth_generate,
    write_checkpoint,
    write_features,
)
from .errors import (
    ConfigError,
    DimensionError,
    FormatError,
    InputError,
    MetricUndefinedError,
    NumericError,
    VagnetError,
)
from .metrics import (
    EvalReport,
    ScoredVideo,
    average_precision,
    evaluate,
    mtta,
    precision_recall,
    tta,
)
from .model import (
    FrameGraph,
    ModelConfig,
    ModelParams,
    RiskTrace,
    build_causal_adjacency,
    flop_breakdown,
    flop_estimate,
    forward,
    init_params,
)
from .training import TrainConfig, TrainLog, run_cross_validation, train

__version__ = "0.1.0"
