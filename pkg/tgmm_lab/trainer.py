# tgmm_lab/trainer.py
"""
Training and evaluation harness.

A run directory holds:
    config.json      effective config (all sections, model dims resolved)
    partition.json   patch partition (tgmm only)
    history.csv      epoch,train_loss,val_loss,lr,seconds
    metrics.json     final per-split metrics, persistence baseline, missing profile
    timing.json      wall-clock seconds (kept out of the reproducible files)
    best/            manifest.json + params.bin of the best-validation epoch
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import ContractViolation, DataError, NumericFailure
from .models.baselines import PersistencePredictor
from .models.fclstm import FCLSTM, LSTMConfig
from .models.losses import finalize, masked_mae_loss, merge_sums, metric_sums
from .models.tgmm import TGMMConfig, TemporalGraphMixer
from .numcore import (OptimizerState, PlateauScheduler, adamw_step, backward, load_into, lr_plateau_update,
                      no_record, recording, save_checkpoint)
from .tools.dataset import DataConfig, SpatioTemporalDataset, missing_profile
from .tools.graphpart import PatchPartition, build_partition, default_num_patches
from .tools.windows import (PreparedSeries, WindowBatch, WindowSample, make_windows, prepare,
                            stack_windows)
from .utils.config import (CONFIG_SECTIONS, build_dataclass, default_seed, default_threads, load_config_file,
                           merge_layers, runs_dir, to_dict)
from .utils.io import PathLike, ensure_dir, load_json, require_dir, save_json, utc_stamp
from .utils.log import get_logger

logger = get_logger("trainer")

MODEL_KINDS = ("tgmm", "fclstm")
POLICIES = ("train-mask", "eval-mask")
HISTORY_COLUMNS = ["epoch", "train_loss", "val_loss", "lr", "seconds"]

Model = Union[TemporalGraphMixer, FCLSTM]


# ----------------------------------------------------------
# Config
# ----------------------------------------------------------
@dataclass
class TrainConfig:
    model: str = "tgmm"
    max_epochs: int = 100
    batch_size: int = 4
    accum_steps: int = 1
    lr: float = 1e-3
    lr_factor: float = 0.5
    min_lr: float = 1e-5
    lr_patience: int = 2
    min_delta: float = 1e-4
    patience: int = 5
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = field(default_factory=default_seed)
    threads: int = field(default_factory=default_threads)
    eval_policy: str = "eval-mask"
    eval_batch_size: int = 16
    record_wall_time: bool = False

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ContractViolation(f"train.model must be one of {list(MODEL_KINDS)}, got {self.model!r}")
        for name in ("max_epochs", "batch_size", "accum_steps", "patience", "lr_patience", "threads",
                     "eval_batch_size"):
            if getattr(self, name) < 1:
                raise ContractViolation(f"train.{name} must be >= 1, got {getattr(self, name)}")
        if self.lr < 0 or self.min_lr < 0:
            raise ContractViolation(f"train.lr and train.min_lr must be >= 0, got {self.lr}, {self.min_lr}")
        if self.eval_policy not in POLICIES:
            raise ContractViolation(f"train.eval_policy must be one of {list(POLICIES)}, got {self.eval_policy!r}")
        if self.seed < 0:
            raise ContractViolation(f"train.seed must be >= 0, got {self.seed}")


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: TGMMConfig = field(default_factory=TGMMConfig)
    lstm: LSTMConfig = field(default_factory=LSTMConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    @classmethod
    def from_layers(cls, file_sections: Optional[Dict[str, Dict[str, Any]]] = None,
                    overrides: Optional[Dict[str, Dict[str, Any]]] = None) -> "RunConfig":
        """Config file sections, then CLI overrides on top (None values never override)."""
        file_sections = file_sections or {}
        overrides = overrides or {}
        kinds = {"data": DataConfig, "model": TGMMConfig, "lstm": LSTMConfig, "train": TrainConfig}
        built = {}
        for section in CONFIG_SECTIONS:
            values = merge_layers(file_sections.get(section), overrides.get(section))
            built[section] = build_dataclass(kinds[section], values, section)
        return cls(**built)

    @classmethod
    def from_file(cls, path: Optional[PathLike], overrides: Optional[Dict[str, Dict[str, Any]]] = None) -> "RunConfig":
        return cls.from_layers(load_config_file(path), overrides)

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return {s: to_dict(getattr(self, s)) for s in CONFIG_SECTIONS}


def resolve_config(cfg: RunConfig, ds: SpatioTemporalDataset, num_patches: Optional[int] = None) -> RunConfig:
    """Fill model dimensions from the dataset and data section (window, horizon, channels, N, P)."""
    d = cfg.data
    C = ds.num_channels
    P = num_patches if num_patches is not None else (
        cfg.model.num_patches if cfg.model.num_patches is not None else default_num_patches(ds.num_nodes))
    model = replace(cfg.model, window=d.window, horizon=d.horizon, in_channels=C, out_channels=C, num_patches=P)
    lstm = replace(cfg.lstm, window=d.window, horizon=d.horizon, in_channels=C, out_channels=C,
                   num_nodes=ds.num_nodes)
    return replace(cfg, model=model, lstm=lstm)


def build_model(cfg: RunConfig, part: Optional[PatchPartition]) -> Model:
    if cfg.train.model == "tgmm":
        if part is None:
            raise ContractViolation("the tgmm model needs a patch partition")
        return TemporalGraphMixer(cfg.model, part, seed=cfg.train.seed)
    return FCLSTM(cfg.lstm, seed=cfg.train.seed)


# ----------------------------------------------------------
# Early stopping
# ----------------------------------------------------------
@dataclass
class EarlyStopping:
    patience: int = 5
    min_delta: float = 1e-4
    best: float = math.inf
    best_epoch: int = -1
    bad_epochs: int = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        """Returns True when val_loss improves on the best by more than min_delta."""
        if val_loss < self.best - self.min_delta:
            self.best = val_loss
            self.best_epoch = epoch
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


# ----------------------------------------------------------
# Batched inference with ordered reduction
# ----------------------------------------------------------
def _batches(windows: Sequence[WindowSample], size: int) -> List[WindowBatch]:
    return [stack_windows(windows[i:i + size]) for i in range(0, len(windows), size)]


def _forward_eval(model: Model, batch: WindowBatch) -> np.ndarray:
    with no_record():
        return model.forward(batch, training=False).data


def predict_windows(model: Model, windows: Sequence[WindowSample], batch_size: int = 16,
                    threads: int = 1) -> List[Tuple[WindowBatch, np.ndarray]]:
    """Evaluation-mode predictions (normalised units), in window order."""
    batches = _batches(windows, batch_size)
    if threads <= 1 or len(batches) <= 1:
        preds = [_forward_eval(model, b) for b in batches]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            preds = list(ex.map(lambda b: _forward_eval(model, b), batches))
    return list(zip(batches, preds))


def _mask_for(batch: WindowBatch, policy: str) -> np.ndarray:
    if policy == "train-mask":
        return batch.train_mask
    if policy == "eval-mask":
        return batch.eval_mask
    raise ContractViolation(f"unknown evaluation policy {policy!r}; expected one of {list(POLICIES)}")


def normalized_loss(pairs: Sequence[Tuple[WindowBatch, np.ndarray]], policy: str = "train-mask") -> float:
    """Masked MAE in normalised units; the validation / early-stopping criterion."""
    sums: Dict[str, float] = {}
    for batch, pred in pairs:
        sums = merge_sums(sums, metric_sums(pred, batch.targets, _mask_for(batch, policy)))
    return finalize(sums)["mae"]


def original_unit_metrics(pairs: Sequence[Tuple[WindowBatch, np.ndarray]], prep: PreparedSeries,
                          policy: str, horizon_mae: bool = False) -> Dict[str, Any]:
    sums: Dict[str, float] = {}
    per_h: List[Dict[str, float]] = []
    for batch, pred in pairs:
        raw = prep.normalizer.invert(pred)
        mask = _mask_for(batch, policy)
        sums = merge_sums(sums, metric_sums(raw, batch.targets_raw, mask))
        if horizon_mae:
            H = pred.shape[2]
            if not per_h:
                per_h = [{} for _ in range(H)]
            for h in range(H):
                per_h[h] = merge_sums(per_h[h], metric_sums(raw[:, :, h], batch.targets_raw[:, :, h], mask[:, :, h]))
    out = finalize(sums)
    if horizon_mae:
        out["horizon_mae"] = [s["abs"] / s["count"] if s["count"] > 0 else None for s in per_h]
    return out


def _safe_metrics(fn: Callable[[], Dict[str, Any]]) -> Optional[Dict[str, Any]]:
    try:
        return fn()
    except ContractViolation as e:
        logger.warning("metrics skipped: %s", e)
        return None


# ----------------------------------------------------------
# Trainer
# ----------------------------------------------------------
@dataclass
class TrainResult:
    run_dir: Path
    best_epoch: int
    epochs_run: int
    best_val_loss: float
    metrics: Dict[str, Any]


class Trainer:
    def __init__(self, cfg: RunConfig, dataset: SpatioTemporalDataset, out_dir: Optional[PathLike] = None,
                 partition: Optional[PatchPartition] = None):
        self.dataset = dataset
        self.prep = prepare(dataset)
        if cfg.train.model == "tgmm":
            if partition is None:
                partition = build_partition(dataset.graph, cfg.model.num_patches, cfg.model.imbalance,
                                            cfg.train.seed)
            partition.check_invariants(dataset.graph)
        self.partition = partition
        self.cfg = resolve_config(cfg, dataset, partition.num_patches if partition is not None else None)
        self.model = build_model(self.cfg, partition)
        self.run_dir = ensure_dir(out_dir or Path(runs_dir()) / f"run_{utc_stamp()}")
        d = self.cfg.data
        self.windows = {name: make_windows(self.prep, rng_, d.window, d.horizon, d.stride)
                        for name, rng_ in self.prep.splits.items()}
        if not self.windows["train"]:
            raise ContractViolation(f"training split {tuple(self.prep.splits['train'])} is shorter than W+H={d.window + d.horizon}")
        if not self.windows["val"]:
            raise ContractViolation(f"validation split {tuple(self.prep.splits['val'])} is shorter than W+H={d.window + d.horizon}")

    # ------------------------------------------------------
    def _write_history(self, history: List[Dict[str, Any]]) -> None:
        df = pd.DataFrame(history, columns=HISTORY_COLUMNS)
        df.to_csv(self.run_dir / "history.csv", index=False, float_format="%.17g")

    def _groups(self, epoch: int) -> List[List[List[WindowSample]]]:
        t = self.cfg.train
        train = self.windows["train"]
        order = np.random.default_rng([t.seed, epoch]).permutation(len(train))
        micro = [[train[i] for i in order[j:j + t.batch_size]] for j in range(0, len(order), t.batch_size)]
        return [micro[k:k + t.accum_steps] for k in range(0, len(micro), t.accum_steps)]

    def train_epoch(self, epoch: int, state: OptimizerState) -> float:
        params = self.model.params.tensors()
        drop_rng = np.random.default_rng([self.cfg.train.seed, epoch, 1])
        total_abs, total_count = 0.0, 0.0
        for group in self._groups(epoch):
            batches = [stack_windows(mb) for mb in group]
            denom = float(sum(b.train_mask.sum() for b in batches))
            if denom == 0.0:
                logger.debug("epoch %d: skipping a group with no observed targets", epoch)
                continue
            acc = [np.zeros_like(p.data) for p in params]
            for b in batches:
                if b.train_mask.sum() == 0:
                    continue
                with recording() as rec:
                    pred = self.model.forward(b, training=True, rng=drop_rng)
                    loss = masked_mae_loss(pred, b.targets, b.train_mask, denom)
                grads = backward(rec, loss, params)
                acc = [a + g for a, g in zip(acc, grads)]
                total_abs += loss.item() * denom
            total_count += denom
            adamw_step(params, acc, state)
        if total_count == 0.0:
            raise ContractViolation("training split has no observed targets")
        return total_abs / total_count

    def validate(self) -> float:
        t = self.cfg.train
        pairs = predict_windows(self.model, self.windows["val"], t.eval_batch_size, t.threads)
        return normalized_loss(pairs, "train-mask")

    def run(self) -> TrainResult:
        t = self.cfg.train
        save_json(self.cfg.to_dict(), self.run_dir / "config.json")
        if self.partition is not None:
            save_json(self.partition.to_json(), self.run_dir / "partition.json")

        params = self.model.params.tensors()
        state = OptimizerState.for_params(params, lr=t.lr, beta1=t.beta1, beta2=t.beta2, eps=t.adam_eps,
                                          weight_decay=t.weight_decay)
        sched = PlateauScheduler(factor=t.lr_factor, min_lr=t.min_lr, patience=t.lr_patience, min_delta=t.min_delta)
        stopper = EarlyStopping(t.patience, t.min_delta)
        history: List[Dict[str, Any]] = []
        epoch_seconds: List[float] = []
        logger.info("training %s (%d parameters) on %d train / %d val windows -> %s", self.model.kind,
                    self.model.params.num_scalars(), len(self.windows["train"]), len(self.windows["val"]),
                    self.run_dir)

        started = time.perf_counter()
        epoch = -1
        for epoch in range(t.max_epochs):
            tic = time.perf_counter()
            lr_used = state.lr
            try:
                train_loss = self.train_epoch(epoch, state)
                val_loss = self.validate()
            except NumericFailure:
                logger.error("numeric failure in epoch %d; history up to epoch %d kept", epoch, epoch - 1)
                self._write_history(history)
                raise
            if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
                self._write_history(history)
                raise NumericFailure(f"non-finite loss in epoch {epoch}: train={train_loss} val={val_loss}")
            seconds = time.perf_counter() - tic
            epoch_seconds.append(seconds)
            state.lr = lr_plateau_update(sched, val_loss, state.lr)
            if stopper.update(epoch, val_loss):
                save_checkpoint(self.model.params, self.run_dir / "best")
            history.append({
                "epoch": epoch,
                "train_loss": train_loss,
                "val_loss": val_loss,
                "lr": lr_used,
                "seconds": seconds if t.record_wall_time else 0.0,
            })
            self._write_history(history)
            logger.info("epoch %d train_loss=%.6f val_loss=%.6f lr=%.2e seconds=%.2f", epoch, train_loss,
                        val_loss, lr_used, seconds)
            if stopper.should_stop:
                logger.info("early stop after epoch %d (best epoch %d)", epoch, stopper.best_epoch)
                break

        load_into(self.model.params, self.run_dir / "best")
        metrics = self.final_metrics()
        metrics.update({
            "model": self.model.kind,
            "best_epoch": stopper.best_epoch,
            "epochs_run": epoch + 1,
            "best_val_loss": stopper.best,
            "num_parameters": self.model.params.num_scalars(),
        })
        save_json(metrics, self.run_dir / "metrics.json")
        try:
            save_json({"total_seconds": time.perf_counter() - started, "epoch_seconds": epoch_seconds},
                      self.run_dir / "timing.json")
        except OSError as e:
            logger.warning("could not write timing.json: %s", e)
        return TrainResult(self.run_dir, stopper.best_epoch, epoch + 1, stopper.best, metrics)

    def final_metrics(self) -> Dict[str, Any]:
        return split_report(self.model, self.prep, self.windows, self.dataset, self.cfg.train, self.cfg.data.horizon)


def split_report(model: Model, prep: PreparedSeries, windows: Dict[str, List[WindowSample]],
                 dataset: SpatioTemporalDataset, t: TrainConfig, horizon: int) -> Dict[str, Any]:
    """Model and persistence metrics for every split, in original units."""
    persistence = PersistencePredictor(horizon)
    out: Dict[str, Any] = {"persistence": {}}
    for name in ("train", "val", "test"):
        ws = windows[name]
        if not ws:
            out[name] = None
            out["persistence"][name] = None
            continue
        pairs = predict_windows(model, ws, t.eval_batch_size, t.threads)
        base = [(b, persistence.predict(b)) for b, _ in pairs]
        policy = t.eval_policy if name == "test" else "train-mask"
        out[name] = _safe_metrics(lambda: original_unit_metrics(pairs, prep, policy))
        out["persistence"][name] = _safe_metrics(lambda: original_unit_metrics(base, prep, policy))
        if name == "test":
            out["test_observed"] = _safe_metrics(lambda: original_unit_metrics(pairs, prep, "train-mask"))
            out["persistence"]["test_observed"] = _safe_metrics(
                lambda: original_unit_metrics(base, prep, "train-mask"))
            horizon = _safe_metrics(lambda: original_unit_metrics(pairs, prep, policy, horizon_mae=True))
            out["test_horizon_mae"] = horizon["horizon_mae"] if horizon else None
    out["missing_fraction"] = missing_profile(dataset, {k: tuple(v) for k, v in prep.splits.items()})
    return out


def train(dataset: SpatioTemporalDataset, partition: Optional[PatchPartition], config: RunConfig,
          out_dir: Optional[PathLike] = None) -> TrainResult:
    return Trainer(config, dataset, out_dir, partition).run()


# ----------------------------------------------------------
# Reloading a run
# ----------------------------------------------------------
@dataclass
class LoadedRun:
    cfg: RunConfig
    model: Model
    prep: PreparedSeries
    windows: Dict[str, List[WindowSample]]


def load_run(run_dir: PathLike, dataset: SpatioTemporalDataset) -> LoadedRun:
    d = require_dir(run_dir, "run directory")
    raw = load_json(d / "config.json")
    if not isinstance(raw, dict):
        raise DataError(f"corrupt run config: {d / 'config.json'}")
    cfg = RunConfig.from_layers(raw)
    part = None
    if cfg.train.model == "tgmm":
        part = PatchPartition.from_json(load_json(d / "partition.json"), dataset.graph)
        if part.num_patches != cfg.model.num_patches:
            raise DataError(f"{d / 'partition.json'} has {part.num_patches} patches, config says {cfg.model.num_patches}")
    if cfg.train.model == "fclstm" and cfg.lstm.num_nodes != dataset.num_nodes:
        raise ContractViolation(f"run was trained on {cfg.lstm.num_nodes} nodes, dataset has {dataset.num_nodes}")
    if cfg.model.in_channels != dataset.num_channels:
        raise ContractViolation(f"run was trained on {cfg.model.in_channels} channels, dataset has {dataset.num_channels}")
    model = build_model(cfg, part)
    load_into(model.params, d / "best")
    prep = prepare(dataset)
    dc = cfg.data
    windows = {name: make_windows(prep, r, dc.window, dc.horizon, dc.stride) for name, r in prep.splits.items()}
    return LoadedRun(cfg, model, prep, windows)


def evaluate(run_dir: PathLike, dataset: SpatioTemporalDataset, split: str = "test", policy: str = "eval-mask",
             threads: Optional[int] = None) -> Dict[str, Any]:
    """Metrics of the run's best checkpoint on one split, in original units, plus the persistence baseline."""
    if policy not in POLICIES:
        raise ContractViolation(f"unknown evaluation policy {policy!r}; expected one of {list(POLICIES)}")
    run = load_run(run_dir, dataset)
    if split not in run.windows:
        raise ContractViolation(f"unknown split {split!r}; expected one of {list(run.windows)}")
    ws = run.windows[split]
    if not ws:
        raise ContractViolation(f"split {split!r} has no complete windows")
    t = run.cfg.train
    pairs = predict_windows(run.model, ws, t.eval_batch_size, threads or t.threads)
    out = original_unit_metrics(pairs, run.prep, policy, horizon_mae=True)
    persistence = PersistencePredictor(run.cfg.data.horizon)
    out["persistence"] = original_unit_metrics([(b, persistence.predict(b)) for b, _ in pairs], run.prep, policy)
    out.update({"split": split, "policy": policy, "model": run.model.kind, "windows": len(ws)})
    return out


def predict_export(run_dir: PathLike, dataset: SpatioTemporalDataset, out_path: PathLike, split: str = "test",
                   threads: Optional[int] = None) -> Path:
    """CSV of node,timestep,horizon_step,channel,y_true,y_pred,observed for every window of a split."""
    run = load_run(run_dir, dataset)
    if split not in run.windows:
        raise ContractViolation(f"unknown split {split!r}; expected one of {list(run.windows)}")
    t = run.cfg.train
    W = run.cfg.data.window
    frames = []
    for batch, pred in predict_windows(run.model, run.windows[split], t.eval_batch_size, threads or t.threads):
        raw = run.prep.normalizer.invert(pred)
        b, n, h, c = np.indices(raw.shape).reshape(4, -1)
        frames.append(pd.DataFrame({
            "node": n,
            "timestep": batch.t0[b] + W + h,
            "horizon_step": h,
            "channel": c,
            "y_true": np.where(batch.eval_mask > 0, batch.targets_raw, np.nan).reshape(-1),
            "y_pred": raw.reshape(-1),
            "observed": batch.train_mask.reshape(-1).astype(np.int64),
        }))
    columns = ["node", "timestep", "horizon_step", "channel", "y_true", "y_pred", "observed"]
    df = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=columns)
    out = Path(out_path)
    ensure_dir(out.parent)
    df.to_csv(out, index=False, float_format="%.17g", na_rep="")
    return out
