"""Plain-text parameter checkpoints.

Layout (UTF-8, one item per line)::

    esr-checkpoint 1
    kind=<model kind>
    frozen=<0|1>
    config=<JSON object, sorted keys>
    params=<count>
    <name> <d0>x<d1>x...
    <space-separated float.hex values, row-major>
    ...

Values are written with ``float.hex`` so a write/read cycle is bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = "esr-checkpoint 1"


def dumps(params, kind, config, frozen=False):
    lines = [
        MAGIC,
        f"kind={kind}",
        f"frozen={int(bool(frozen))}",
        "config=" + json.dumps(config, sort_keys=True, separators=(",", ":")),
        f"params={len(params)}",
    ]
    for name, arr in params.items():
        arr = np.asarray(arr, dtype=np.float64)
        shape = "x".join(str(d) for d in arr.shape) or "scalar"
        lines.append(f"{name} {shape}")
        lines.append(" ".join(float(v).hex() for v in arr.reshape(-1)))
    return "\n".join(lines) + "\n"


def loads(text):
    lines = text.split("\n")
    if not lines or lines[0] != MAGIC:
        raise ValueError("not an esr checkpoint (bad magic line)")
    header = {}
    for line in lines[1:5]:
        key, _, value = line.partition("=")
        header[key] = value
    missing = {"kind", "frozen", "config", "params"} - header.keys()
    if missing:
        raise ValueError(f"checkpoint header lacks {sorted(missing)}")
    count = int(header["params"])
    params = {}
    pos = 5
    for _ in range(count):
        name, shape_txt = lines[pos].rsplit(" ", 1)
        shape = () if shape_txt == "scalar" else tuple(int(d) for d in shape_txt.split("x"))
        values = lines[pos + 1].split()
        arr = np.array([float.fromhex(v) for v in values], dtype=np.float64)
        if arr.size != int(np.prod(shape, dtype=int)):
            raise ValueError(f"parameter {name}: {arr.size} values for shape {shape}")
        params[name] = arr.reshape(shape)
        pos += 2
    return {
        "kind": header["kind"],
        "frozen": header["frozen"] == "1",
        "config": json.loads(header["config"]),
        "params": params,
    }


def save(path, params, kind, config, frozen=False):
    Path(path).write_text(dumps(params, kind, config, frozen), encoding="utf-8")


def load(path):
    return loads(Path(path).read_text(encoding="utf-8"))
