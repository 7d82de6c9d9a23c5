"""Residual 1-D super-resolution generator.

Layout for config ``(C, B, factors)``::

    head   conv 1 -> C (head_kernel)
    trunk  B x [conv C->C, act, conv C->C] + identity
    fuse   conv C->C, then + head output (global skip)
    up_j   conv C -> C*r_j, subpixel shuffle by r_j, act     (one per factor)
    tail   conv C -> 1 (head_kernel)

With two upsampling factors there are four convolutions after the trunk:
fuse, two upsampling convolutions and the tail.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .models import Model, ParamBuilder, param_count

ACTIVATIONS = ("prelu", "relu")


@dataclass(frozen=True)
class EsrNetConfig:
    base_channels: int = 32
    n_res_blocks: int = 16
    head_kernel: int = 9
    block_kernel: int = 3
    upsample_factors: tuple = (5, 2)
    activation: str = "prelu"
    global_skip: bool = True

    def __post_init__(self):
        object.__setattr__(self, "upsample_factors", tuple(int(f) for f in self.upsample_factors))
        if self.base_channels < 1:
            raise ValueError("base_channels must be positive")
        if self.n_res_blocks < 1:
            raise ValueError("need at least one residual block")
        if self.head_kernel % 2 == 0 or self.block_kernel % 2 == 0:
            raise ValueError("kernel sizes must be odd")
        if not self.upsample_factors or any(f < 1 for f in self.upsample_factors):
            raise ValueError("upsample factors must be positive integers")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")

    @property
    def scale(self):
        return math.prod(self.upsample_factors)

    def check_rates(self, source_fs, target_fs):
        if abs(target_fs / source_fs - self.scale) > 1e-9 * self.scale:
            raise ValueError(
                f"upsample factors {list(self.upsample_factors)} give x{self.scale}, "
                f"but {source_fs} Hz -> {target_fs} Hz needs x{target_fs / source_fs:g}"
            )

    def to_dict(self):
        d = asdict(self)
        d["upsample_factors"] = list(self.upsample_factors)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class EsrNetModel(Model):
    kind = "esrnet"
    config_type = EsrNetConfig

    @classmethod
    def build(cls, config, seed=0):
        return build_esrnet(config, seed)

    def forward(self, x_low):
        return sr_forward(self, x_low)


def build_esrnet(config, seed=0):
    c, kb = config.base_channels, config.block_kernel
    pb = ParamBuilder(seed)
    prelu = config.activation == "prelu"
    pb.conv("head", 1, c, config.head_kernel)
    for i in range(config.n_res_blocks):
        pb.conv(f"block{i}.conv1", c, c, kb)
        if prelu:
            pb.constant(f"block{i}.act", (1,), 0.25)
        pb.conv(f"block{i}.conv2", c, c, kb)
    pb.conv("fuse", c, c, kb)
    for j, r in enumerate(config.upsample_factors):
        pb.conv(f"up{j}", c, c * r, kb)
        if prelu:
            pb.constant(f"up{j}.act", (1,), 0.25)
    pb.conv("tail", c, 1, config.head_kernel)
    return EsrNetModel(config, pb.params)


def _act(model, name, x):
    if model.config.activation == "prelu":
        return ad.prelu(x, model.params[name])
    return ad.relu(x)


def sr_forward(model, x_low):
    """Map (1, L) or (N, 1, L) low-rate input to length ``L * prod(factors)``."""
    x = ad.as_tensor(x_low)
    cfg, p = model.config, model.params
    if x.ndim not in (2, 3) or x.shape[-2] != 1:
        raise ValueError(f"expected input of shape (1, L) or (N, 1, L), got {x.shape}")
    if x.shape[-1] < cfg.block_kernel:
        raise ValueError(f"input length {x.shape[-1]} is shorter than the block kernel {cfg.block_kernel}")

    def conv(name, t):
        return ad.conv1d(t, p[f"{name}.w"], p[f"{name}.b"])

    head = conv("head", x)
    t = head
    for i in range(cfg.n_res_blocks):
        t = t + conv(f"block{i}.conv2", _act(model, f"block{i}.act", conv(f"block{i}.conv1", t)))
    t = conv("fuse", t)
    if cfg.global_skip:
        t = t + head
    for j, r in enumerate(cfg.upsample_factors):
        t = _act(model, f"up{j}.act", ad.subpixel_shuffle(conv(f"up{j}", t), r))
    return conv("tail", t)


def super_resolve(model, x_low):
    """Plain-array convenience wrapper: (N, L) or (L,) in, same rank out."""
    x = np.asarray(x_low, dtype=np.float64)
    squeeze = x.ndim == 1
    x = x[None, None, :] if squeeze else x[:, None, :]
    y = sr_forward(model, x).data[:, 0, :]
    return y[0] if squeeze else y


__all__ = ["EsrNetConfig", "EsrNetModel", "build_esrnet", "param_count", "sr_forward", "super_resolve"]
