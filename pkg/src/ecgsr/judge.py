"""Arrhythmia classifier used as the frozen judge.

Five blocks of [conv, act, conv, act, maxpool], a bidirectional GRU over the
pooled feature sequence, attention pooling over steps, and a dense layer to
nine class logits.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

from . import autodiff as ad
from .models import Model, ParamBuilder
from .signal_data import N_CLASSES, CaLabel


@dataclass(frozen=True)
class BlockSpec:
    channels1: int
    kernel1: int
    channels2: int
    kernel2: int
    pool: int = 2

    def __post_init__(self):
        if min(self.channels1, self.channels2, self.pool) < 1:
            raise ValueError("channel counts and pool size must be positive")
        if self.kernel1 % 2 == 0 or self.kernel2 % 2 == 0:
            raise ValueError("judge kernels must be odd")


def _desk_blocks():
    return tuple(BlockSpec(a, 3, b, 3, 2) for a, b in ((8, 8), (16, 16), (16, 16), (32, 32), (32, 32)))


@dataclass(frozen=True)
class JudgeConfig:
    blocks: tuple = _desk_blocks()
    gru_hidden: int = 16
    attention_dim: int = 16
    n_classes: int = N_CLASSES
    activation: str = "relu"
    init_gain: float = 6 ** 0.5

    def __post_init__(self):
        blocks = tuple(b if isinstance(b, BlockSpec) else BlockSpec(*b) for b in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if len(blocks) != 5:
            raise ValueError(f"the judge has exactly 5 blocks, got {len(blocks)}")
        if self.n_classes != N_CLASSES:
            raise ValueError(f"the judge classifies {N_CLASSES} classes")
        if self.gru_hidden < 1 or self.attention_dim < 1:
            raise ValueError("GRU and attention sizes must be positive")
        if self.activation not in ("relu", "prelu"):
            raise ValueError("activation must be relu or prelu")

    @classmethod
    def uniform(cls, channels, kernel=3, pool=2, **kw):
        """Config from ten channel counts (two per block) and shared kernel/pool."""
        if len(channels) != 10:
            raise ValueError("need two channel counts for each of the 5 blocks")
        blocks = tuple(
            BlockSpec(channels[2 * i], kernel, channels[2 * i + 1], kernel, pool) for i in range(5)
        )
        return cls(blocks=blocks, **kw)

    def steps_after_pooling(self, length):
        for blk in self.blocks:
            length //= blk.pool
        return length

    def check_length(self, length):
        if self.steps_after_pooling(length) < 1:
            raise ValueError(
                f"a {length}-sample input is too short for pools "
                f"{[b.pool for b in self.blocks]}"
            )

    def fit_to_length(self, length):
        """Copy of this config with trailing pools set to 1 until ``length`` survives."""
        pools = [b.pool for b in self.blocks]
        n, out = length, []
        for p in pools:
            keep = p if n // p >= 1 else 1
            out.append(keep)
            n //= keep
        return replace(self, blocks=tuple(replace(b, pool=p) for b, p in zip(self.blocks, out)))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["blocks"] = tuple(BlockSpec(**b) for b in d["blocks"])
        return cls(**d)


class JudgeModel(Model):
    kind = "judge"
    config_type = JudgeConfig

    def __init__(self, config, params):
        super().__init__(config, params)
        self.frozen = False

    @classmethod
    def build(cls, config, seed=0):
        return build_judge(config, seed)

    def freeze(self):
        for p in self.params.values():
            p.requires_grad = False
            p.grad = None
            p.data.flags.writeable = False
        self.frozen = True
        return self

    def gru(self, direction):
        p = self.params
        return ad.GruParams(p[f"gru.{direction}.W"], p[f"gru.{direction}.U"], p[f"gru.{direction}.b"])


def build_judge(config, seed=0):
    pb = ParamBuilder(seed, config.init_gain)
    cin = 1
    for i, blk in enumerate(config.blocks):
        pb.conv(f"block{i}.conv1", cin, blk.channels1, blk.kernel1)
        pb.conv(f"block{i}.conv2", blk.channels1, blk.channels2, blk.kernel2)
        if config.activation == "prelu":
            pb.constant(f"block{i}.act1", (1,), 0.25)
            pb.constant(f"block{i}.act2", (1,), 0.25)
        cin = blk.channels2
    h = config.gru_hidden
    for d in ("fwd", "bwd"):
        pb.weight(f"gru.{d}.W", (3 * h, cin), cin)
        pb.weight(f"gru.{d}.U", (3 * h, h), h)
        pb.zeros(f"gru.{d}.b", (3 * h,))
    pb.linear("attn", 2 * h, config.attention_dim)
    pb.weight("attn.u", (config.attention_dim,), config.attention_dim)
    pb.linear("fc", 2 * h, config.n_classes)
    return JudgeModel(config, pb.params)


def _act(model, name, x):
    if model.config.activation == "prelu":
        return ad.prelu(x, model.params[name])
    return ad.relu(x)


def judge_logits(model, y):
    """Class logits for (1, L) -> (9,) or (N, 1, L) -> (N, 9)."""
    y = ad.as_tensor(y)
    if y.ndim not in (2, 3) or y.shape[-2] != 1:
        raise ValueError(f"judge input must be (1, L) or (N, 1, L), got {y.shape}")
    model.config.check_length(y.shape[-1])
    p = model.params
    t = y
    for i, blk in enumerate(model.config.blocks):
        t = _act(model, f"block{i}.act1", ad.conv1d(t, p[f"block{i}.conv1.w"], p[f"block{i}.conv1.b"]))
        t = _act(model, f"block{i}.act2", ad.conv1d(t, p[f"block{i}.conv2.w"], p[f"block{i}.conv2.b"]))
        if blk.pool > 1:
            t = ad.maxpool1d(t, blk.pool, blk.pool)
    seq = ad.bidirectional_gru(t, model.gru("fwd"), model.gru("bwd"))
    pooled = ad.attention_pool(seq, p["attn.w"], p["attn.b"], p["attn.u"])
    return ad.dense(pooled, p["fc.w"], p["fc.b"])


def classify(model, y):
    """Class probabilities, as a tensor so gradients can reach ``y``."""
    return ad.softmax(judge_logits(model, y), axis=-1)


def predict_from_probs(probs):
    """Argmax per row; ``np.argmax`` already breaks ties toward the lower index."""
    return np.argmax(np.asarray(probs), axis=-1)


def predict_label(model, y):
    return CaLabel(int(predict_from_probs(classify(model, y).data)))


def predict_batch(model, x, batch_size=32):
    """Integer class predictions for signals ``x`` of shape (N, L)."""
    x = np.asarray(x, dtype=np.float64)
    out = []
    for start in range(0, len(x), batch_size):
        probs = classify(model, x[start:start + batch_size, None, :]).data
        out.append(predict_from_probs(probs))
    return np.concatenate(out) if out else np.zeros(0, dtype=int)
