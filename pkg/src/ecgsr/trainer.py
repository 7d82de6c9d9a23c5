"""Joint reconstruction/classification loss, training loops, and k-fold CV.

Run directory layout written by :func:`run_cv`::

    <run_dir>/fold_<k>/model.ckpt     best checkpoint of the fold
    <run_dir>/fold_<k>/epochs.csv     epoch,train_loss,val_metric
    <run_dir>/fold_<k>/report.json    test-fold F1 report and predictions
"""

from __future__ import annotations

import csv
import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .esrnet import EsrNetConfig, build_esrnet, sr_forward
from .judge import JudgeConfig, build_judge, classify, predict_batch
from .metrics import F1Report, evaluate_predictions, median
from .models import params_digest, restore, snapshot
from .signal_data import N_CLASSES, CaLabel, window_signal

log = logging.getLogger(__name__)

GAMMA_PRESETS = {"LC": 0.0, "LR": 1.0, "LJ": 0.5}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LossWeights:
    gamma: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma}")

    @classmethod
    def preset(cls, name):
        try:
            return cls(GAMMA_PRESETS[name])
        except KeyError:
            raise ConfigError(f"unknown loss preset {name!r}; choose from {sorted(GAMMA_PRESETS)}") from None


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 16
    lr: float = 1e-3
    seed: int = 0
    selection: str | None = None  # val_overall_f1 | val_joint_loss; None = trainer default

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch size must be at least 1")
        if self.selection not in (None, "val_overall_f1", "val_joint_loss"):
            raise ConfigError(f"unknown selection metric {self.selection!r}")


@dataclass
class SignalSet:
    """Equal-length signals of one lead at one sampling rate."""

    ids: tuple
    x: np.ndarray
    labels: np.ndarray
    fs: float
    lead: object = None

    def __post_init__(self):
        self.ids = tuple(self.ids)
        self.x = np.asarray(self.x, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.x.ndim != 2 or len(self.ids) != len(self.x) or len(self.labels) != len(self.x):
            raise ValueError("ids, signals and labels must align and signals must be (n, L)")
        self._index = {rid: i for i, rid in enumerate(self.ids)}

    def __len__(self):
        return len(self.ids)

    @property
    def length(self):
        return self.x.shape[1]

    def subset(self, ids):
        missing = [i for i in ids if i not in self._index]
        if missing:
            raise KeyError(f"ids not in this set: {missing[:3]}")
        idx = [self._index[i] for i in ids]
        return SignalSet(tuple(ids), self.x[idx], self.labels[idx], self.fs, self.lead)

    @classmethod
    def from_recordings(cls, recs, window_seconds=10.0, policy="pad_zero_tail"):
        if not recs:
            raise ValueError("no recordings")
        fs = {r.fs for r in recs}
        leads = {r.lead for r in recs}
        if len(fs) != 1 or len(leads) != 1:
            raise ValueError("a signal set holds one sampling rate and one lead")
        wins = [window_signal(r, window_seconds, policy) for r in recs]
        return cls(
            tuple(r.id for r in recs),
            np.stack([w.samples for w in wins]),
            np.array([int(r.label) for r in recs]),
            recs[0].fs,
            recs[0].lead,
        )


# ----------------------------------------------------------------- loss

def _as_batch(t):
    t = ad.as_tensor(t)
    return t if t.ndim == 3 else ad.reshape(t, (1,) + t.shape)


def joint_loss(y_hat, y, judge, weights):
    """``gamma * MSE(y_hat, y) + (1 - gamma) * CCE(judge(y_hat), judge(y))``.

    Inputs are (1, L) or (N, 1, L); both terms are averaged over the batch.
    """
    if not getattr(judge, "frozen", False):
        raise ConfigError("the judge must be frozen before it can score reconstructions")
    y_hat, y = ad.as_tensor(y_hat), ad.as_tensor(y)
    if y_hat.shape != y.shape:
        raise ValueError(f"reconstruction shape {y_hat.shape} differs from target {y.shape}")
    g = weights.gamma
    mse = ad.mse_loss(y_hat, y)
    if g == 1.0:
        return mse
    z = classify(judge, _as_batch(y))
    z_hat = classify(judge, _as_batch(y_hat))
    cce = ad.cce_loss(z_hat, z)
    if g == 0.0:
        return cce
    return mse * g + cce * (1.0 - g)


def _one_hot(labels):
    out = np.zeros((len(labels), N_CLASSES))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def _batches(n, batch_size, seed, epoch):
    order = np.random.default_rng([seed, epoch]).permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


# ------------------------------------------------------------- fit loops

@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_metric: float


@dataclass
class FitResult:
    model: object
    best_epoch: int
    best_metric: float
    history: list = field(default_factory=list)


def _better(metric, best, maximize):
    if best is None:
        return True
    return metric > best if maximize else metric < best


def train_judge(train, val, config, judge_config=None, seed=None):
    """Adam on one-hot cross entropy; keeps the epoch with the best validation score."""
    if len(train) == 0 or len(val) == 0:
        raise ConfigError("judge training needs non-empty train and validation sets")
    if len(set(train.labels.tolist())) < 2:
        warnings.warn("training set holds a single class", RuntimeWarning, stacklevel=2)
    judge_config = judge_config or JudgeConfig()
    seed = config.seed if seed is None else seed
    selection = config.selection or "val_overall_f1"
    maximize = selection == "val_overall_f1"
    model = build_judge(judge_config, seed)
    opt = ad.Adam(model.params, lr=config.lr)
    targets = _one_hot(train.labels)
    x_val = val.x[:, None, :]
    best, best_epoch, best_params, history = None, 0, None, []
    for epoch in range(1, config.epochs + 1):
        losses = []
        for idx in _batches(len(train), config.batch_size, seed, epoch):
            opt.zero_grad()
            probs = classify(model, train.x[idx][:, None, :])
            loss = ad.cce_loss(probs, targets[idx])
            ad.backward(loss)
            opt.step()
            losses.append(loss.item() * len(idx))
        if maximize:
            metric = evaluate_predictions(predict_batch(model, val.x), val.labels).overall
        else:
            metric = ad.cce_loss(classify(model, x_val), _one_hot(val.labels)).item()
        history.append(EpochRecord(epoch, sum(losses) / len(train), metric))
        if _better(metric, best, maximize):
            best, best_epoch, best_params = metric, epoch, snapshot(model.params)
    restore(model.params, best_params)
    model.freeze()
    return FitResult(model, best_epoch, best, history)


def _check_pairs(low, high, esr_config):
    if low.ids != high.ids:
        raise ConfigError("low-rate and high-rate sets are not paired record by record")
    esr_config.check_rates(low.fs, high.fs)
    if high.length != low.length * esr_config.scale:
        raise ConfigError(
            f"high-rate length {high.length} is not {esr_config.scale} x low-rate length {low.length}"
        )


def _sr_loss_on(model, judge, weights, low_x, high_x, batch_size=16):
    total = 0.0
    for start in range(0, len(low_x), batch_size):
        sl = slice(start, start + batch_size)
        y_hat = sr_forward(model, low_x[sl][:, None, :])
        total += joint_loss(y_hat, high_x[sl][:, None, :], judge, weights).item() * len(low_x[sl])
    return total / len(low_x)


def train_esrnet(train_low, train_high, val_low, val_high, judge, weights, config, esr_config=None, seed=None):
    """Minimize the joint loss against a frozen judge; keep the epoch with the lowest
    validation joint loss (or best validation F1 when so configured)."""
    esr_config = esr_config or EsrNetConfig()
    _check_pairs(train_low, train_high, esr_config)
    _check_pairs(val_low, val_high, esr_config)
    if len(train_low) == 0 or len(val_low) == 0:
        raise ConfigError("SR training needs non-empty train and validation sets")
    if not getattr(judge, "frozen", False):
        raise ConfigError("the judge must be frozen")
    seed = config.seed if seed is None else seed
    selection = config.selection or "val_joint_loss"
    maximize = selection == "val_overall_f1"
    judge_before = params_digest(judge.params)

    model = build_esrnet(esr_config, seed)
    opt = ad.Adam(model.params, lr=config.lr)
    best, best_epoch, best_params, history = None, 0, None, []
    for epoch in range(1, config.epochs + 1):
        losses = []
        for idx in _batches(len(train_low), config.batch_size, seed, epoch):
            opt.zero_grad()
            y_hat = sr_forward(model, train_low.x[idx][:, None, :])
            loss = joint_loss(y_hat, train_high.x[idx][:, None, :], judge, weights)
            ad.backward(loss)
            opt.step()
            losses.append(loss.item() * len(idx))
        if maximize:
            recon = _reconstruct(model, val_low.x)
            metric = evaluate_predictions(predict_batch(judge, recon), val_high.labels).overall
        else:
            metric = _sr_loss_on(model, judge, weights, val_low.x, val_high.x)
        history.append(EpochRecord(epoch, sum(losses) / len(train_low), metric))
        if _better(metric, best, maximize):
            best, best_epoch, best_params = metric, epoch, snapshot(model.params)
    restore(model.params, best_params)
    if params_digest(judge.params) != judge_before:
        raise RuntimeError("judge parameters changed during SR training")
    return FitResult(model, best_epoch, best, history)


def _reconstruct(model, x_low, batch_size=16):
    out = []
    for start in range(0, len(x_low), batch_size):
        out.append(sr_forward(model, x_low[start:start + batch_size, None, :]).data[:, 0, :])
    return np.concatenate(out)


reconstruct = _reconstruct


# -------------------------------------------------------------- recipes

@dataclass
class JudgeRecipe:
    """Train a judge on one signal set."""

    data: SignalSet
    train_config: TrainConfig
    judge_config: JudgeConfig = field(default_factory=JudgeConfig)

    def ids(self):
        return self.data.ids

    def fit(self, train_ids, val_ids, seed):
        return train_judge(
            self.data.subset(train_ids), self.data.subset(val_ids),
            self.train_config, self.judge_config, seed,
        )

    def predict(self, fit, test_ids):
        test = self.data.subset(test_ids)
        return predict_batch(fit.model, test.x), test.labels


@dataclass
class SrRecipe:
    """Train a generator per fold against that fold's frozen judge."""

    low: SignalSet
    high: SignalSet
    judges: dict  # fold index -> frozen JudgeModel
    weights: LossWeights
    train_config: TrainConfig
    esr_config: EsrNetConfig = field(default_factory=EsrNetConfig)
    fold: int = 0

    def ids(self):
        return self.low.ids

    def fit(self, train_ids, val_ids, seed):
        return train_esrnet(
            self.low.subset(train_ids), self.high.subset(train_ids),
            self.low.subset(val_ids), self.high.subset(val_ids),
            self.judges[self.fold], self.weights, self.train_config, self.esr_config, seed,
        )

    def predict(self, fit, test_ids):
        low = self.low.subset(test_ids)
        recon = _reconstruct(fit.model, low.x)
        return predict_batch(self.judges[self.fold], recon), low.labels


# ------------------------------------------------------------------- CV

@dataclass
class FoldResult:
    fold: int
    best_epoch: int
    best_metric: float
    history: list
    report: F1Report
    model: object
    test_ids: list
    predictions: list
    truths: list = field(default_factory=list)


@dataclass
class CvResult:
    folds: list

    @property
    def overall_scores(self):
        return [f.report.overall for f in self.folds]

    @property
    def median_overall(self):
        return median(self.overall_scores)

    @property
    def median_per_class(self):
        return [median([f.report.f1[j] for f in self.folds]) for j in range(N_CLASSES)]


def fold_seed(seed, k):
    return int(np.random.SeedSequence([int(seed), int(k)]).generate_state(1)[0])


def _write_fold(fold_dir, res):
    fold_dir.mkdir(parents=True, exist_ok=True)
    res.model.save(fold_dir / "model.ckpt")
    with (fold_dir / "epochs.csv").open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_metric"])
        for r in res.history:
            w.writerow([r.epoch, repr(r.train_loss), repr(r.val_metric)])
    report = {
        "fold": res.fold,
        "best_epoch": res.best_epoch,
        "best_val_metric": res.best_metric,
        "test": res.report.to_dict(),
        "predictions": {
            rid: CaLabel(int(p)).token for rid, p in zip(res.test_ids, res.predictions)
        },
        "labels": {
            rid: CaLabel(int(t)).token for rid, t in zip(res.test_ids, res.truths)
        },
    }
    (fold_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def run_cv(plan, recipe, jobs=1, run_dir=None, seed=None):
    """Train, select and test one model per fold of ``plan``.

    For test fold k the validation fold is (k+1) mod n and the remaining folds
    train. SR recipes need ``recipe.judges`` to hold a judge for every fold.
    """
    if set(plan.assignment) != set(recipe.ids()):
        raise ConfigError("fold plan and dataset cover different record ids")
    seed = plan.seed if seed is None else seed

    def one(k):
        train_ids, val_ids, test_ids = plan.split(k)
        rec = recipe
        if isinstance(recipe, SrRecipe):
            if k not in recipe.judges:
                raise ConfigError(f"no judge available for fold {k}")
            rec = SrRecipe(**{**recipe.__dict__, "fold": k})
        fit = rec.fit(train_ids, val_ids, fold_seed(seed, k))
        preds, truths = rec.predict(fit, test_ids)
        res = FoldResult(
            k, fit.best_epoch, fit.best_metric, fit.history,
            evaluate_predictions(preds, truths), fit.model, list(test_ids), [int(p) for p in preds], [int(t) for t in truths],
        )
        if run_dir is not None:
            _write_fold(Path(run_dir) / f"fold_{k}", res)
        log.info("fold %d: best epoch %d, test overall F1 %.4f", k, res.best_epoch, res.report.overall)
        return res

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            folds = list(pool.map(one, range(plan.n_folds)))
    else:
        folds = [one(k) for k in range(plan.n_folds)]
    return CvResult(folds)
