"""Parameter containers shared by the generator and the judge."""

from __future__ import annotations

import hashlib
from collections import OrderedDict

import numpy as np

from .autodiff import Tensor
from .autodiff import checkpoint as ckpt


class ParamBuilder:
    """Creates named parameters in a fixed order from one seeded generator.

    Weights are uniform in [-gain/sqrt(fan_in), gain/sqrt(fan_in)]; biases
    start at zero. ``gain=1`` is the plain fan-in rule, ``gain=sqrt(6)`` the
    He-uniform rule that keeps activation variance steady through ReLU stacks.
    """

    def __init__(self, seed, gain=1.0):
        self.rng = np.random.default_rng(seed)
        self.gain = float(gain)
        self.params = OrderedDict()

    def weight(self, name, shape, fan_in):
        bound = self.gain / np.sqrt(fan_in)
        self.params[name] = Tensor(self.rng.uniform(-bound, bound, shape), True, name)

    def zeros(self, name, shape):
        self.params[name] = Tensor(np.zeros(shape), True, name)

    def constant(self, name, shape, value):
        self.params[name] = Tensor(np.full(shape, float(value)), True, name)

    def conv(self, name, cin, cout, k):
        self.weight(f"{name}.w", (cout, cin, k), cin * k)
        self.zeros(f"{name}.b", (cout,))

    def linear(self, name, fin, fout):
        self.weight(f"{name}.w", (fout, fin), fin)
        self.zeros(f"{name}.b", (fout,))


def param_count(model_or_params):
    params = getattr(model_or_params, "params", model_or_params)
    return int(sum(np.asarray(getattr(p, "data", p)).size for p in params.values()))


def snapshot(params):
    return OrderedDict((k, p.data.copy()) for k, p in params.items())


def restore(params, arrays):
    for k, p in params.items():
        p.data = np.array(arrays[k], dtype=np.float64)


def params_digest(params):
    h = hashlib.sha256()
    for k, p in params.items():
        h.update(k.encode())
        h.update(np.ascontiguousarray(getattr(p, "data", p)).tobytes())
    return h.hexdigest()


class Model:
    kind = "model"

    def __init__(self, config, params):
        self.config = config
        self.params = params

    def checkpoint_text(self):
        return ckpt.dumps(snapshot(self.params), self.kind, self.config.to_dict(), getattr(self, "frozen", False))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.checkpoint_text())

    @classmethod
    def from_checkpoint(cls, path):
        data = ckpt.load(path)
        if data["kind"] != cls.kind:
            raise ValueError(f"{path}: checkpoint holds a {data['kind']!r}, expected {cls.kind!r}")
        config = cls.config_type.from_dict(data["config"])
        model = cls.build(config, seed=0)
        if set(data["params"]) != set(model.params):
            raise ValueError(f"{path}: parameter names do not match the stored config")
        restore(model.params, data["params"])
        if data["frozen"]:
            model.freeze()
        return model
