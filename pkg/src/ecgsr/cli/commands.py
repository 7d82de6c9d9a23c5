"""Pipeline commands: synth, prepare, train-judge, train-sr, evaluate, sweep, report.

Output layout under ``out_dir``::

    data/source/                synthetic recordings + manifest.csv
    data/fs<rate>/              windowed, resampled variants + manifest.csv
    runs/<lead>/folds.csv       fold assignment
    runs/<lead>/judge_fs<rate>/ judge cross-validation runs (fold_<k>/...)
    runs/<lead>/sr_<preset>/    generator runs per loss preset
    report/                     report.json, tables, plot data, figures/
    sweep/                      sweep.csv, sweep.png, per-rate runs
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

import numpy as np

from ..esrnet import EsrNetModel, super_resolve
from ..judge import JudgeModel
from ..metrics import boxplot_stats, evaluate_predictions, median, paired_t_test, ppr
from ..resampler import ResampleSpec, downsample, upsample_linear
from ..signal_data import (
    CaLabel,
    DataError,
    EcgRecording,
    LeadId,
    ManifestEntry,
    SyntheticEcgParams,
    load_manifest,
    load_recording,
    make_fold_plan,
    synth_ecg,
    window_signal,
    write_manifest,
    write_recording,
)
from ..trainer import GAMMA_PRESETS, JudgeRecipe, LossWeights, SignalSet, SrRecipe, run_cv
from . import figures
from .config import CONDITIONS, ConfigError, _fmt

log = logging.getLogger(__name__)


class DependencyError(RuntimeError):
    code = "dependency"


def fs_tag(fs):
    return "fs" + _fmt(float(fs))


def _source_manifest_path(cfg):
    return Path(cfg.manifest) if cfg.manifest else cfg.out / "data" / "source" / "manifest.csv"


def _variant_manifest_path(cfg, fs):
    return cfg.out / "data" / fs_tag(fs) / "manifest.csv"


def _lead_dir(cfg, lead):
    return cfg.out / "runs" / str(lead)


def _judge_run(cfg, lead, fs):
    return _lead_dir(cfg, lead) / f"judge_{fs_tag(fs)}"


def _sr_run(cfg, lead, preset):
    return _lead_dir(cfg, lead) / f"sr_{preset}"


def _write_json(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _write_csv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _num(v):
    return repr(float(v)) if v is not None else ""


# ------------------------------------------------------------------ synth

def cmd_synth(cfg):
    if cfg.synth_records < 1:
        raise ConfigError("synth_records must be at least 1")
    if not 0 < cfg.synth_hr_min <= cfg.synth_hr_max:
        raise ConfigError("need 0 < synth_hr_min <= synth_hr_max")
    out = cfg.out / "data" / "source"
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create {out}: {exc}") from None
    lead = LeadId.parse(cfg.synth_lead)
    classes = list(CaLabel)
    entries = []
    for i in range(cfg.synth_records):
        label = classes[i % len(classes)]
        rng = np.random.default_rng([cfg.seed, i])
        hr = float(rng.uniform(cfg.synth_hr_min, cfg.synth_hr_max))
        params = SyntheticEcgParams(hr, cfg.synth_fs, cfg.synth_duration, label, cfg.synth_noise, lead)
        rid = f"syn{i:04d}"
        rec = synth_ecg(params, seed=int(rng.integers(2**31)), rec_id=rid)
        path = out / f"{rid}.txt"
        write_recording(path, rec)
        entries.append(ManifestEntry(rid, path, lead, rec.fs, label))
    manifest = out / "manifest.csv"
    write_manifest(manifest, entries, note=f"synthetic ECG, seed={cfg.seed}")
    cfg.echo(cfg.out / "config.synth.txt")
    return [manifest]


# ---------------------------------------------------------------- prepare

def _load_source(cfg):
    path = _source_manifest_path(cfg)
    if not path.is_file():
        raise DependencyError(f"source manifest {path} not found; run 'esr synth' or set manifest")
    return load_manifest(path)


def _prepare_fs(cfg, manifest, fs):
    out = cfg.out / "data" / fs_tag(fs)
    out.mkdir(parents=True, exist_ok=True)
    entries, modes = [], set()
    for e in manifest.entries:
        rec = window_signal(load_recording(e.path, e), cfg.window_seconds, cfg.window_policy)
        spec = ResampleSpec.auto(rec.fs, fs, cfg.anti_alias)
        modes.add(spec.mode)
        low = downsample(rec, spec)
        path = out / f"{e.id}.txt"
        write_recording(path, low)
        entries.append(ManifestEntry(e.id, path, e.lead, fs, e.label))
    path = out / "manifest.csv"
    note = f"derived from {len(manifest)} records; target_fs={_fmt(fs)}; mode={','.join(sorted(modes))}; anti_alias={str(cfg.anti_alias).lower()}"
    write_manifest(path, entries, note=note)
    return path


def _check_grid(grid, source_fs):
    if not grid:
        raise ConfigError("frequency grid is empty")
    for fs in grid:
        if not 0 < fs <= source_fs:
            raise ConfigError(f"grid frequency {_fmt(fs)} Hz must lie in (0, {_fmt(source_fs)}] Hz")


def cmd_prepare(cfg):
    manifest = _load_source(cfg)
    source_fs = {e.fs for e in manifest.entries}
    if len(source_fs) != 1:
        raise DataError("source recordings must share one sampling rate")
    source_fs = source_fs.pop()
    grid = list(dict.fromkeys(list(cfg.fs_grid) + [cfg.sr_source_fs, cfg.sr_target_fs]))
    _check_grid(grid, source_fs)
    written = [_prepare_fs(cfg, manifest, fs) for fs in grid]
    cfg.echo(cfg.out / "config.prepare.txt")
    return written


# ------------------------------------------------------------- datasets

def _signal_set(cfg, fs, lead):
    path = _variant_manifest_path(cfg, fs)
    if not path.is_file():
        raise DependencyError(f"{path} not found; run 'esr prepare' for {_fmt(fs)} Hz first")
    m = load_manifest(path).for_lead(lead)
    recs = [load_recording(e.path, e) for e in m.entries]
    return SignalSet.from_recordings(recs, cfg.window_seconds, cfg.window_policy)


def _plan(cfg, lead):
    m = _load_source(cfg).for_lead(lead)
    strata = {e.id: int(e.label) for e in m.entries} if cfg.stratify else None
    plan = make_fold_plan(m.ids, cfg.n_folds, cfg.seed, strata)
    _write_csv(_lead_dir(cfg, lead) / "folds.csv", ["id", "fold"], sorted(plan.assignment.items()))
    return plan


def _leads(cfg):
    return _load_source(cfg).leads()


def _train_judges_at(cfg, lead, fs, run_dir, plan, jobs, epochs=None):
    data = _signal_set(cfg, fs, lead)
    recipe = JudgeRecipe(data, cfg.judge_train(epochs), cfg.judge_config().fit_to_length(data.length))
    cfg.echo(run_dir / "config.txt")
    return run_cv(plan, recipe, jobs=jobs, run_dir=run_dir)


# ------------------------------------------------------------- training

def cmd_train_judge(cfg, jobs=1):
    written = []
    for lead in _leads(cfg):
        plan = _plan(cfg, lead)
        for fs in dict.fromkeys([cfg.sr_target_fs, cfg.sr_source_fs]):
            run_dir = _judge_run(cfg, lead, fs)
            _train_judges_at(cfg, lead, fs, run_dir, plan, jobs)
            written.append(run_dir)
    return written


def _load_judges(cfg, lead, n_folds):
    run_dir = _judge_run(cfg, lead, cfg.sr_target_fs)
    judges, texts = {}, {}
    for k in range(n_folds):
        path = run_dir / f"fold_{k}" / "model.ckpt"
        if not path.is_file():
            raise DependencyError(f"judge checkpoint {path} missing; run 'esr train-judge' first")
        judges[k] = JudgeModel.from_checkpoint(path)
        if not judges[k].frozen:
            raise DependencyError(f"{path} is not marked frozen")
        texts[k] = path.read_text(encoding="utf-8")
    return judges, texts


def cmd_train_sr(cfg, jobs=1):
    written = []
    for lead in _leads(cfg):
        plan = _plan(cfg, lead)
        judges, before = _load_judges(cfg, lead, plan.n_folds)
        low = _signal_set(cfg, cfg.sr_source_fs, lead)
        high = _signal_set(cfg, cfg.sr_target_fs, lead)
        for preset in cfg.gammas:
            run_dir = _sr_run(cfg, lead, preset)
            cfg.echo(run_dir / "config.txt")
            recipe = SrRecipe(
                low, high, judges, LossWeights.preset(preset), cfg.sr_train(), cfg.esr_config()
            )
            run_cv(plan, recipe, jobs=jobs, run_dir=run_dir)
            written.append(run_dir)
        for k, judge in judges.items():
            if judge.checkpoint_text() != before[k]:
                raise RuntimeError(f"judge of fold {k} changed during generator training")
    return written


# ------------------------------------------------------------- evaluate

def _condition_dir(cfg, lead, cond):
    if cond == "C_N":
        return _judge_run(cfg, lead, cfg.sr_source_fs)
    if cond == "C_P":
        return _judge_run(cfg, lead, cfg.sr_target_fs)
    return _sr_run(cfg, lead, cond)


def _fold_reports(cfg, lead, cond, n_folds):
    run_dir = _condition_dir(cfg, lead, cond)
    reports = []
    for k in range(n_folds):
        path = run_dir / f"fold_{k}" / "report.json"
        if not path.is_file():
            raise DependencyError(f"missing fold report {path} for run {cond}")
        fold = json.loads(path.read_text(encoding="utf-8"))
        ids = sorted(fold["predictions"])
        preds = [CaLabel.parse(fold["predictions"][i]) for i in ids]
        truths = [CaLabel.parse(fold["labels"][i]) for i in ids]
        reports.append(evaluate_predictions(preds, truths, cfg.average))
    return reports


def _pct(v):
    return None if v is None else int(round(100.0 * v))


def _condition_summary(reports):
    per_class = {
        c.token: median([r.f1[int(c)] for r in reports]) for c in CaLabel
    }
    overall = median([r.overall for r in reports])
    return {
        "fold_overall": [r.overall for r in reports],
        "median_overall": overall,
        "median_per_class": per_class,
        "f1_pct": {"overall": _pct(overall), **{k: _pct(v) for k, v in per_class.items()}},
    }


def _ppr_entry(fh, fl, fr):
    folds = [ppr(h, l, r) for h, l, r in zip(fh, fl, fr)]
    defined = [p.value for p in folds if not p.undefined]
    med = median(defined) if defined else None
    of_medians = ppr(median(fh), median(fl), median(fr))
    anomalous = (med is not None and med < 0) or of_medians.anomalous
    entry = {
        "fold_values": [p.value for p in folds],
        "undefined_folds": sum(p.undefined for p in folds),
        "median_of_fold_ppr": med,
        "median_of_fold_ppr_pct": _pct(med),
        "ppr_of_median_f1": of_medians.to_dict(),
        "anomalous": anomalous,
        "t_test": None,
    }
    if anomalous:
        entry["t_test"] = paired_t_test(fr, fl).to_dict()
    return entry


def evaluate_lead(cfg, lead, n_folds):
    reports = {c: _fold_reports(cfg, lead, c, n_folds) for c in _available_conditions(cfg)}
    fh, fl = reports["C_P"], reports["C_N"]
    fr = reports.get(cfg.ppr_condition)
    if fr is None:
        raise DependencyError(f"no runs for PPR condition {cfg.ppr_condition}")
    table = {}
    for c in CaLabel:
        j = int(c)
        table[c.token] = _ppr_entry([r.f1[j] for r in fh], [r.f1[j] for r in fl], [r.f1[j] for r in fr])
    table["Overall"] = _ppr_entry([r.overall for r in fh], [r.overall for r in fl], [r.overall for r in fr])
    return {
        "conditions": {c: _condition_summary(r) for c, r in reports.items()},
        "ppr": {"condition": cfg.ppr_condition, "FH": "C_P", "FL": "C_N", "per_class": table},
    }


def _available_conditions(cfg):
    return ["C_N"] + [g for g in ("LC", "LR", "LJ") if g in cfg.gammas] + ["C_P"]


def cmd_evaluate(cfg):
    leads = {}
    for lead in _leads(cfg):
        leads[str(lead)] = evaluate_lead(cfg, lead, cfg.n_folds)
    report = {
        "n_folds": cfg.n_folds,
        "average": cfg.average,
        "sr": {"source_fs": cfg.sr_source_fs, "target_fs": cfg.sr_target_fs},
        "gamma_presets": {g: GAMMA_PRESETS[g] for g in cfg.gammas},
        "leads": leads,
    }
    out = cfg.out / "report"
    paths = [_write_json(out / "report.json", report)]
    conds = _available_conditions(cfg)
    paths.append(_write_csv(
        out / "f1_table.csv", ["lead"] + conds,
        [[lead] + [leads[lead]["conditions"][c]["f1_pct"]["overall"] for c in conds] for lead in leads],
    ))
    rows = []
    for name in [c.token for c in CaLabel] + ["Overall"]:
        rows.append([name] + [
            "" if (v := leads[lead]["ppr"]["per_class"][name]["median_of_fold_ppr_pct"]) is None else v
            for lead in leads
        ])
    paths.append(_write_csv(out / "ppr_table.csv", ["class"] + list(leads), rows))
    cfg.echo(out / "config.txt")
    return paths


# ----------------------------------------------------------------- sweep

def cmd_sweep(cfg, jobs=1):
    manifest = _load_source(cfg)
    source_fs = {e.fs for e in manifest.entries}
    if len(source_fs) != 1:
        raise DataError("source recordings must share one sampling rate")
    _check_grid(list(cfg.sweep_grid), source_fs.pop())
    rows = []
    for fs in cfg.sweep_grid:
        if not _variant_manifest_path(cfg, fs).is_file():
            _prepare_fs(cfg, manifest, fs)
        for lead in manifest.leads():
            plan = _plan(cfg, lead)
            run_dir = cfg.out / "sweep" / str(lead) / fs_tag(fs)
            cv = _train_judges_at(cfg, lead, fs, run_dir, plan, jobs, cfg.sweep_epochs)
            rows.append([_fmt(fs), str(lead), repr(cv.median_overall)])
    out = cfg.out / "sweep"
    csv_path = _write_csv(out / "sweep.csv", ["fs", "lead", "median_f1"], rows)
    png = figures.sweep_figure(
        [(float(r[0]), r[1], float(r[2])) for r in rows], out / "sweep.png"
    )
    cfg.echo(out / "config.txt")
    return [csv_path, png]


# ---------------------------------------------------------------- report

def _fold_test_ids(cfg, lead, run_dir):
    path = run_dir / "fold_0" / "report.json"
    if not path.is_file():
        raise DependencyError(f"missing {path}")
    return sorted(json.loads(path.read_text(encoding="utf-8"))["predictions"])


def cmd_report(cfg):
    out = cfg.out / "report"
    written = []
    for lead in _leads(cfg):
        # spread of per-fold overall F1 for each condition
        values = {}
        for cond in cfg.report_conditions:
            run_dir = _condition_dir(cfg, lead, cond)
            if not run_dir.is_dir():
                raise DependencyError(f"unknown or missing run {cond!r} ({run_dir})")
            values[cond] = [r.overall for r in _fold_reports(cfg, lead, cond, cfg.n_folds)]
        rows = []
        for cond, vals in values.items():
            s = boxplot_stats(vals)
            rows.append([cond, _num(s.q1), _num(s.median), _num(s.q3), _num(s.iqr),
                         _num(s.lower_fence), _num(s.upper_fence), ";".join(repr(v) for v in s.outliers)])
        written.append(_write_csv(
            out / f"boxplot_{lead}.csv",
            ["condition", "q1", "median", "q3", "iqr", "lower_fence", "upper_fence", "outliers"], rows,
        ))
        written.append(figures.boxplot_figure(values, out / "figures" / f"boxplot_{lead}.png", f"lead {lead}"))

        # waveforms of test records of fold 0
        presets = [g for g in ("LC", "LJ", "LR") if g in cfg.gammas]
        if not presets:
            continue
        test_ids = _fold_test_ids(cfg, lead, _sr_run(cfg, lead, presets[0]))
        if cfg.report_ids:
            unknown = [i for i in cfg.report_ids if i not in test_ids]
            if unknown:
                raise ConfigError(f"report_ids {unknown} are not test records of fold 0")
            chosen = list(cfg.report_ids)
        else:
            chosen = test_ids[: cfg.report_records]
        low = _signal_set(cfg, cfg.sr_source_fs, lead).subset(chosen)
        high = _signal_set(cfg, cfg.sr_target_fs, lead).subset(chosen)
        models = {}
        for g in presets:
            path = _sr_run(cfg, lead, g) / "fold_0" / "model.ckpt"
            if not path.is_file():
                raise DependencyError(f"missing generator checkpoint {path}")
            models[g] = EsrNetModel.from_checkpoint(path)
        for i, rid in enumerate(chosen):
            t = np.arange(high.length) / high.fs
            rec_low = _as_recording(rid, low.x[i], low.fs, lead)
            linear = upsample_linear(rec_low, high.fs).samples
            recon = {g: super_resolve(m, low.x[i]) for g, m in models.items()}
            header = ["time", "original", "linear"] + presets
            cols = [t, high.x[i], linear] + [recon[g] for g in presets]
            written.append(_write_csv(
                out / "waveforms" / f"{lead}_{rid}.csv", header,
                [[repr(float(v)) for v in row] for row in zip(*cols)],
            ))
            written.append(figures.waveform_figure(
                t, high.x[i], linear, recon, out / "figures" / f"waveform_{lead}_{rid}.png",
                f"{rid} ({CaLabel(int(high.labels[i])).token}), lead {lead}",
            ))
    cfg.echo(out / "config.report.txt")
    return written


def _as_recording(rid, x, fs, lead):
    return EcgRecording(rid, lead, fs, x, CaLabel.Normal)


COMMANDS = {
    "synth": cmd_synth,
    "prepare": cmd_prepare,
    "train-judge": cmd_train_judge,
    "train-sr": cmd_train_sr,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "report": cmd_report,
}
PARALLEL = {"train-judge", "train-sr", "sweep"}
