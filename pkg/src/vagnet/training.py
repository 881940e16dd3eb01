"""End-to-end training of the head and grouped cross-validation.

One optimizer step per clip per epoch (batch size is fixed at 1): forward,
frame-level cross-entropy, backward, Adam. Clip order is reshuffled every
epoch from the seeded generator, so a (dataset, configs, seed) triple fully
determines the loss trace and the final weights.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import dataio, metrics, model, numerics as nm
from .errors import ConfigError, InputError, NumericError
from .numerics import Tensor


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    lr: float = 1e-4
    batch_size: int = 1
    seed: int = 0
    eval_every: int = 0              # epochs between validation passes; 0 = off
    checkpoint_dir: str | Path | None = None
    keep_best: bool = False          # additionally track the best-AP checkpoint

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if not self.lr >= 0:
            raise ConfigError("lr must be >= 0")
        if self.batch_size != 1:
            raise ConfigError("training runs one clip per step; batch_size is fixed at 1")


@dataclass
class TrainLog:
    epoch_losses: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    evals: list[dict] = field(default_factory=list)
    steps: int = 0               # optimizer steps taken = epochs * clips

    def records(self) -> list[dict]:
        recs = [{"kind": "epoch", "epoch": i, "mean_loss": loss, "seconds": secs}
                for i, (loss, secs) in enumerate(zip(self.epoch_losses,
                                                     self.epoch_seconds))]
        recs.extend({"kind": "eval", **e} for e in self.evals)
        return recs

    def write(self, path) -> None:
        import json
        lines = [json.dumps(r, sort_keys=True) for r in self.records()]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def frame_labels(clip: dataio.FeatureSequence, dtype=np.float32) -> Tensor:
    """One-hot (T, 2) labels: every frame carries the clip-level class."""
    onehot = np.zeros((clip.T, 2), dtype=dtype)
    onehot[:, clip.label] = 1.0
    return Tensor(onehot)


def score_clips(params: model.ModelParams, config: model.ModelConfig,
                clips: Sequence[dataio.FeatureSequence],
                max_workers: int = 1) -> list[metrics.ScoredVideo]:
    """Run inference over clips and package the traces for evaluation.

    The weights are read-only here, so clips may fan out over worker threads;
    output order always matches input order.
    """
    def one(c: dataio.FeatureSequence) -> metrics.ScoredVideo:
        return metrics.ScoredVideo(probs=model.forward(c, params, config).probs,
                                   label=c.label, tau=c.tau, fps=c.fps)

    if max_workers > 1 and len(clips) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(one, clips))
    return [one(c) for c in clips]


def train(dataset: Sequence[dataio.FeatureSequence], model_config: model.ModelConfig,
          train_config: TrainConfig,
          val_dataset: Sequence[dataio.FeatureSequence] | None = None,
          ) -> tuple[model.ModelParams, TrainLog]:
    """Train from a fresh seeded init; returns final weights and the log."""
    if len(dataset) == 0:
        raise InputError("training dataset is empty")
    dims = {c.D for c in dataset}
    if len(dims) != 1:
        raise InputError(f"clips disagree on feature dim: {sorted(dims)}")
    if dims != {model_config.d_in}:
        raise InputError(f"clips have D={dims.pop()} but the model wants "
                         f"d_in={model_config.d_in}")

    params = model.init_params(model_config, seed=train_config.seed)
    tensors = params.tensors()
    state = nm.AdamState.init(tensors, lr=train_config.lr)
    rng = np.random.Generator(np.random.PCG64(train_config.seed))
    log = TrainLog()
    labels = [frame_labels(c) for c in dataset]

    ckpt_dir = Path(train_config.checkpoint_dir) if train_config.checkpoint_dir else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
    best_ap = -1.0

    for epoch in range(train_config.epochs):
        t0 = time.perf_counter()
        total = 0.0
        for idx in rng.permutation(len(dataset)):
            clip = dataset[idx]
            try:
                with nm.Tape() as tape:
                    trace = model.forward(clip, params, model_config)
                    loss = nm.cross_entropy(trace.logits, labels[idx])
            except NumericError as exc:
                raise NumericError(f"clip {idx} (group {clip.group_id!r}) in "
                                   f"epoch {epoch}: {exc}") from exc
            value = loss.item()
            if not np.isfinite(value):
                raise NumericError(f"non-finite loss on clip {idx} "
                                   f"(group {clip.group_id!r}) in epoch {epoch}")
            tape.backward(loss)
            nm.adam_step(tensors, [p.grad for p in tensors], state)
            nm.zero_grads(tensors)
            total += value
        log.epoch_losses.append(total / len(dataset))
        log.epoch_seconds.append(time.perf_counter() - t0)

        due = (train_config.eval_every > 0
               and (epoch + 1) % train_config.eval_every == 0)
        if due and val_dataset:
            report = metrics.evaluate(score_clips(params, model_config, val_dataset))
            log.evals.append({"epoch": epoch, "ap": report.ap, "mtta": report.mtta})
            if train_config.keep_best and report.ap > best_ap and ckpt_dir is not None:
                best_ap = report.ap
                dataio.write_checkpoint(ckpt_dir / "best.vagw", model_config, params)

    log.steps = state.t
    if ckpt_dir is not None:
        dataio.write_checkpoint(ckpt_dir / "checkpoint.vagw", model_config, params)
        log.write(ckpt_dir / "train_log.jsonl")
    return params, log


# --- grouped cross-validation ---------------------------------------------------

@dataclass
class CrossValidationResult:
    fold_reports: list[metrics.EvalReport]
    fold_groups: list[list[str]]
    mean_ap: float
    mean_mtta: float


def partition_groups(group_ids: Sequence[str], k: int, seed: int) -> list[list[str]]:
    """Split distinct groups into k near-equal parts (sizes differ by <= 1)."""
    groups = sorted(set(group_ids))
    if k < 2:
        raise InputError("cross-validation needs k >= 2")
    if len(groups) < k:
        raise InputError(f"{len(groups)} groups cannot fill {k} folds")
    rng = np.random.Generator(np.random.PCG64(seed))
    shuffled = [groups[i] for i in rng.permutation(len(groups))]
    return [sorted(part) for part in np.array_split(np.array(shuffled, dtype=object), k)]


def run_cross_validation(dataset: Sequence[dataio.FeatureSequence], k: int,
                         model_config: model.ModelConfig,
                         train_config: TrainConfig) -> CrossValidationResult:
    """Grouped k-fold: train on k-1 group parts, evaluate on the held-out one.

    Clips of one source video share a group id and therefore a fold, so no
    video leaks across the train/test boundary.
    """
    folds = partition_groups([c.group_id for c in dataset], k, train_config.seed)
    reports = []
    for held_out in folds:
        held = set(held_out)
        train_clips = [c for c in dataset if c.group_id not in held]
        test_clips = [c for c in dataset if c.group_id in held]
        params, _ = train(train_clips, model_config, train_config)
        reports.append(metrics.evaluate(score_clips(params, model_config, test_clips)))
    return CrossValidationResult(
        fold_reports=reports,
        fold_groups=folds,
        mean_ap=sum(r.ap for r in reports) / len(reports),
        mean_mtta=sum(r.mtta for r in reports) / len(reports),
    )
