"""ECG recordings, dataset manifests, synthetic beats and fold planning.

File formats
------------
Manifest (UTF-8 CSV)::

    id,path,lead,fs,label
    rec001,rec001.txt,II,500,AF

``path`` is relative to the manifest's directory. A label cell holding more
than one class (separated by ``;``, ``|`` or ``+``) is a multi-label record
and is rejected.

Recording (UTF-8 text)::

    fs=500 lead=II n=5000
    0.0123
    ...
"""

from __future__ import annotations

import csv
import enum
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np


class DataError(ValueError):
    pass


class LeadId(enum.Enum):
    I = "I"
    II = "II"
    III = "III"
    aVR = "aVR"
    aVL = "aVL"
    aVF = "aVF"
    V1 = "V1"
    V2 = "V2"
    V3 = "V3"
    V4 = "V4"
    V5 = "V5"
    V6 = "V6"

    @classmethod
    def parse(cls, token):
        try:
            return cls(token.strip())
        except ValueError:
            raise DataError(f"unknown lead {token!r}") from None

    def __str__(self):
        return self.value


class CaLabel(enum.IntEnum):
    Normal = 0
    AF = 1
    I_AVB = 2
    LBBB = 3
    RBBB = 4
    PAC = 5
    PVC = 6
    STD = 7
    STE = 8

    @property
    def token(self):
        return self.name.replace("_", "-")

    @classmethod
    def parse(cls, token):
        token = token.strip()
        if re.search(r"[;|+]", token):
            raise DataError(f"multi-label record {token!r}: only single-label recordings are supported")
        try:
            return cls[token.replace("-", "_")]
        except KeyError:
            raise DataError(f"unknown label {token!r}") from None

    def __str__(self):
        return self.token


N_CLASSES = len(CaLabel)


def _fmt_number(x):
    return str(int(x)) if float(x).is_integer() else repr(float(x))


@dataclass(frozen=True)
class EcgRecording:
    id: str
    lead: LeadId
    fs: float
    samples: np.ndarray = field(repr=False)
    label: CaLabel

    def __post_init__(self):
        arr = np.array(self.samples, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise DataError(f"{self.id}: samples must be a non-empty 1-D sequence")
        if not self.fs > 0:
            raise DataError(f"{self.id}: sampling rate must be positive, got {self.fs}")
        if not np.all(np.isfinite(arr)):
            raise DataError(f"{self.id}: non-finite amplitude")
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)

    @property
    def duration(self):
        return self.samples.size / self.fs

    def with_samples(self, samples, fs=None):
        return replace(self, samples=samples, fs=self.fs if fs is None else fs)


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    path: Path
    lead: LeadId
    fs: float
    label: CaLabel


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple
    note: str = ""

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.id in seen:
                raise DataError(f"duplicate id {e.id!r}")
            seen.add(e.id)

    def __len__(self):
        return len(self.entries)

    @property
    def ids(self):
        return [e.id for e in self.entries]

    def leads(self):
        return sorted({e.lead for e in self.entries}, key=lambda l: list(LeadId).index(l))

    def for_lead(self, lead):
        return DatasetManifest(tuple(e for e in self.entries if e.lead == lead), self.note)


MANIFEST_HEADER = ["id", "path", "lead", "fs", "label"]


def load_manifest(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    base = path.parent
    entries = []
    seen = set()
    note = ""
    with path.open(encoding="utf-8", newline="") as fh:
        lines = list(fh)
    body_start = 0
    while body_start < len(lines) and lines[body_start].startswith("#"):
        note += lines[body_start][1:].strip() + "\n"
        body_start += 1
    reader = csv.reader(lines[body_start:])
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != MANIFEST_HEADER:
        raise DataError(f"{path}:{body_start + 1}: header must be {','.join(MANIFEST_HEADER)}")
    for offset, row in enumerate(reader):
        lineno = body_start + 2 + offset
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 5:
            raise DataError(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
        rid, rpath, lead, fs, label = (c.strip() for c in row)
        if rid in seen:
            raise DataError(f"{path}:{lineno}: duplicate id {rid!r}")
        seen.add(rid)
        try:
            fs_val = float(fs)
        except ValueError:
            raise DataError(f"{path}:{lineno}: bad sampling rate {fs!r}") from None
        if not fs_val > 0:
            raise DataError(f"{path}:{lineno}: sampling rate must be positive")
        try:
            entry = ManifestEntry(rid, base / rpath, LeadId.parse(lead), fs_val, CaLabel.parse(label))
        except DataError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        entries.append(entry)
    return DatasetManifest(tuple(entries), note.strip())


def write_manifest(path, entries, note=""):
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        for line in note.splitlines():
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for e in entries:
            rel = Path(e.path)
            try:
                rel = rel.relative_to(path.parent)
            except ValueError:
                pass
            w.writerow([e.id, rel.as_posix(), str(e.lead), _fmt_number(e.fs), e.label.token])


_HEADER_RE = re.compile(r"^fs=(\S+)\s+lead=(\S+)\s+n=(\d+)\s*$")


def load_recording(path, meta):
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        header = fh.readline()
        m = _HEADER_RE.match(header)
        if not m:
            raise DataError(f"{path}:1: header must read 'fs=<Hz> lead=<lead> n=<count>'")
        fs, lead, n = float(m.group(1)), LeadId.parse(m.group(2)), int(m.group(3))
        values = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                v = float(line)
            except ValueError:
                raise DataError(f"{path}:{lineno}: not a number: {line!r}") from None
            if not math.isfinite(v):
                raise DataError(f"{path}:{lineno}: non-finite value {line!r}")
            values.append(v)
    if len(values) != n:
        raise DataError(f"{path}: header declares {n} samples but file holds {len(values)}")
    if meta is not None:
        if abs(meta.fs - fs) > 1e-9 * fs or meta.lead != lead:
            raise DataError(f"{path}: header (fs={fs}, lead={lead}) disagrees with manifest entry {meta.id!r}")
        return EcgRecording(meta.id, lead, fs, np.array(values), meta.label)
    return EcgRecording(path.stem, lead, fs, np.array(values), CaLabel.Normal)


def write_recording(path, rec):
    lines = [f"fs={_fmt_number(rec.fs)} lead={rec.lead} n={rec.samples.size}"]
    lines.extend(repr(float(v)) for v in rec.samples)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_dataset(manifest):
    return [load_recording(e.path, e) for e in manifest.entries]


# --------------------------------------------------------------------- windows

WINDOW_POLICIES = ("crop_center", "pad_zero_tail")


def window_signal(rec, window_seconds=10.0, policy="pad_zero_tail"):
    if not window_seconds > 0:
        raise DataError("window length must be positive")
    if policy not in WINDOW_POLICIES:
        raise DataError(f"unknown window policy {policy!r}")
    n = int(round(window_seconds * rec.fs))
    x = rec.samples
    if x.size >= n:
        start = (x.size - n) // 2
        return rec.with_samples(x[start:start + n])
    if policy == "crop_center":
        raise DataError(f"{rec.id}: {x.size} samples is shorter than a {n}-sample window")
    return rec.with_samples(np.concatenate([x, np.zeros(n - x.size)]))


# ----------------------------------------------------------------- fold plans

class Lcg64:
    """64-bit linear congruential generator (Knuth's MMIX constants).

    ``state <- (6364136223846793005 * state + 1442695040888963407) mod 2**64``.
    A uniform variate is the top 53 bits of the new state divided by 2**53.
    """

    A = 6364136223846793005
    C = 1442695040888963407
    MASK = (1 << 64) - 1

    def __init__(self, seed):
        self.state = int(seed) & self.MASK
        self.next_u64()

    def next_u64(self):
        self.state = (self.A * self.state + self.C) & self.MASK
        return self.state

    def uniform(self):
        return (self.next_u64() >> 11) / float(1 << 53)

    def randbelow(self, n):
        return min(int(self.uniform() * n), n - 1)

    def shuffle(self, items):
        """Fisher-Yates, from the last position down."""
        items = list(items)
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]
        return items


@dataclass(frozen=True)
class FoldPlan:
    n_folds: int
    assignment: dict
    seed: int

    def fold(self, k):
        return [i for i, f in self.assignment.items() if f == k]

    def sizes(self):
        return [len(self.fold(k)) for k in range(self.n_folds)]

    def split(self, test_fold):
        """(train, validation, test) ids; validation is fold (k+1) mod n.

        With only two folds nothing would be left to train on, so the
        non-test fold is used for both training and validation.
        """
        if not 0 <= test_fold < self.n_folds:
            raise DataError(f"fold {test_fold} outside [0, {self.n_folds})")
        val_fold = (test_fold + 1) % self.n_folds
        if self.n_folds == 2:
            return self.fold(val_fold), self.fold(val_fold), self.fold(test_fold)
        train = [i for i, f in self.assignment.items() if f not in (test_fold, val_fold)]
        return train, self.fold(val_fold), self.fold(test_fold)


def make_fold_plan(ids, n_folds=10, seed=0, strata=None):
    """Shuffle ``ids`` with :class:`Lcg64` and deal them round-robin into folds.

    With ``strata`` (a mapping id -> group key) the ids are shuffled within
    each group and the groups are dealt one after another, so every fold
    receives a near-equal share of each group. Fold sizes still differ by at
    most one.
    """
    ids = list(ids)
    if n_folds < 2:
        raise DataError("need at least two folds")
    if len(ids) < n_folds:
        raise DataError(f"{len(ids)} ids cannot fill {n_folds} folds")
    if len(set(ids)) != len(ids):
        raise DataError("ids must be unique")
    rng = Lcg64(seed)
    if strata is None:
        order = rng.shuffle(ids)
    else:
        order = []
        for key in sorted({strata[i] for i in ids}):
            order.extend(rng.shuffle([i for i in ids if strata[i] == key]))
    assignment = {rid: pos % n_folds for pos, rid in enumerate(order)}
    return FoldPlan(n_folds, dict(sorted(assignment.items())), seed)


# ----------------------------------------------------------- synthetic ECG

@dataclass(frozen=True)
class SyntheticEcgParams:
    heart_rate: float = 60.0
    fs: float = 500.0
    duration: float = 10.0
    label: CaLabel = CaLabel.Normal
    noise: float = 0.0
    lead: LeadId = LeadId.II

    def __post_init__(self):
        if not (self.heart_rate > 0 and self.fs > 0 and self.duration > 0):
            raise DataError("heart rate, sampling rate and duration must be positive")
        if self.noise < 0:
            raise DataError("noise amplitude must be non-negative")
        if self.duration * self.fs < 1:
            raise DataError("duration x fs must give at least one sample")


# (name, centre in s relative to the R peak at 60 bpm, width in s, amplitude in mV)
_WAVES = {
    "P": (-0.16, 0.025, 0.15),
    "Q": (-0.030, 0.010, -0.12),
    "R": (0.0, 0.012, 1.10),
    "S": (0.032, 0.010, -0.28),
    "T": (0.30, 0.050, 0.32),
}

# fraction of each beat period placed before the R peak
_PRE_R = 0.5


def _beat_waves(label, ectopic):
    """Gaussian bumps for one beat of the given class.

    Class morphs:
      Normal  the reference template.
      AF      no P wave (RR jitter and an f-wave are added per record).
      I-AVB   P wave moved early (long PR interval).
      LBBB    broad notched R, no Q, inverted T.
      RBBB    extra late R' bump and a broad S.
      PAC     ectopic beats come early with an inverted P.
      PVC     ectopic beats have no P, a wide tall R and an inverted T.
      STD     depressed ST segment.
      STE     elevated ST segment.
    """
    w = {k: list(v) for k, v in _WAVES.items()}
    extra = []
    if label == CaLabel.AF:
        w["P"][2] = 0.0
    elif label == CaLabel.I_AVB:
        w["P"][0] = -0.36
    elif label == CaLabel.LBBB:
        w["R"][1] *= 2.8
        w["Q"][2] = 0.0
        w["T"][2] = -0.30
        extra.append((0.045, 0.02, 0.55))
    elif label == CaLabel.RBBB:
        w["S"][1] *= 2.5
        extra.append((0.075, 0.014, 0.6))
    elif label == CaLabel.PAC and ectopic:
        w["P"][2] = -0.15
        w["P"][0] = -0.14
    elif label == CaLabel.PVC and ectopic:
        w["P"][2] = 0.0
        w["R"][1] *= 3.5
        w["R"][2] = 1.6
        w["T"][2] = -0.45
    elif label == CaLabel.STD:
        extra.append((0.15, 0.06, -0.25))
    elif label == CaLabel.STE:
        extra.append((0.15, 0.06, 0.28))
    return [tuple(v) for v in w.values()] + extra


def _beat(n, fs, rr, waves):
    t = (np.arange(n) - _PRE_R * n) / fs
    stretch = math.sqrt(rr)
    out = np.zeros(n)
    for centre, width, amp in waves:
        if amp:
            c = centre * stretch if abs(centre) > 0.1 else centre
            out += amp * np.exp(-0.5 * ((t - c) / width) ** 2)
    return out


def synth_ecg(params, seed=0, rec_id=None):
    """Deterministic pseudo-ECG: per-beat Gaussian PQRST bumps plus white noise.

    With a regular rhythm and ``fs * 60 / heart_rate`` integral the signal is
    an exact tiling of one beat. AF jitters the RR intervals by up to 30 %;
    PAC and PVC make roughly a third of the beats ectopic (premature, with a
    compensatory pause after a PVC).
    """
    rng = np.random.default_rng(seed)
    fs, n_total = params.fs, int(round(params.duration * params.fs))
    rr = 60.0 / params.heart_rate
    base_len = max(1, int(round(rr * fs)))
    label = params.label
    template = _beat(base_len, fs, rr, _beat_waves(label, False))

    pieces, filled = [], 0
    while filled < n_total:
        ectopic = label in (CaLabel.PAC, CaLabel.PVC) and rng.random() < 0.35
        if label == CaLabel.AF:
            n = max(1, int(round(base_len * rng.uniform(0.7, 1.3))))
            beat = _beat(n, fs, n / fs, _beat_waves(label, False))
        elif ectopic:
            n = max(1, int(round(base_len * 0.65)))
            beat = _beat(n, fs, rr, _beat_waves(label, True))
            if label == CaLabel.PVC:
                pause = max(1, int(round(base_len * 1.35)))
                beat = np.concatenate([beat, np.zeros(pause - n)]) if pause > n else beat
        else:
            beat = template
        pieces.append(beat)
        filled += beat.size
    x = np.concatenate(pieces)[:n_total]
    if label == CaLabel.AF:
        phase = rng.uniform(0, 2 * np.pi)
        x = x + 0.05 * np.sin(2 * np.pi * 6.0 * np.arange(n_total) / fs + phase)
    if params.noise > 0:
        x = x + rng.normal(0.0, params.noise, n_total)
    return EcgRecording(rec_id or f"synth-{label.token}-{seed}", params.lead, fs, x, label)
