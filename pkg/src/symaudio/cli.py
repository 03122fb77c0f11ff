"""Command line front end: featurize, train, evaluate, rules.

Exit codes: 0 success, 1 usage or configuration problem, 2 bad input data,
3 internal fault.  All outputs are written atomically, and every command is
deterministic for a fixed config and seed, at any --jobs level.
"""
from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import tempfile
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .audio import (AudioDecodeError, AudioSignal, FeatureCube, bandpass,
                    decode_wav, featurize_signal, resample, trim_nonspeech)
from .config import (ConfigError, ExperimentConfig, learn_params_from,
                     load_config, normalize_mode, validate_config)
from .cubefile import CubeFileError, load_cube_file, write_cube_file
from .evaluation import (METRICS_COLUMNS, RULES_COLUMNS, balanced_holdout,
                         evaluate, extract_rules, metrics_rows, rule_metrics,
                         rules_rows)
from .logiset import build_logiset
from .trees import (learn_forest, learn_tree, model_from_forest,
                    model_from_tree, save_model)

CUBE_NAME = "features.cube"
REPORT_NAME = "features.report.txt"
MODEL_NAME = "model.json"
METRICS_NAME = "metrics.csv"
RULES_NAME = "rules.csv"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser():
    parser = _Parser(prog="symaudio",
                     description="symbolic audio classification toolkit")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="experiment config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--mode", choices=["prop", "modal"],
                       help="representation: prop or modal")
        p.add_argument("--model", choices=["tree", "forest"],
                       help="classifier family")

    p = sub.add_parser("featurize", help="WAV manifest to a feature cube")
    common(p)
    p.add_argument("manifest", nargs="?",
                   help="CSV of path,label rows (default: config manifest)")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel feature extraction workers")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="fit a classifier on a feature cube")
    common(p)
    p.add_argument("cube", nargs="?", help="cube file (default: out dir)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="balanced repeated holdout metrics")
    common(p)
    p.add_argument("cube", nargs="?", help="cube file (default: out dir)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("rules", help="extract and score decision rules")
    common(p)
    p.add_argument("cube", nargs="?", help="cube file (default: out dir)")
    p.set_defaults(func=cmd_rules)
    return parser


def _load_cfg(args):
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    if args.mode is not None:
        cfg = replace(cfg, mode=normalize_mode(args.mode))
    if args.model is not None:
        cfg = replace(cfg, model=args.model)
    return validate_config(cfg)


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            raise _UsageError("a command is required "
                              "(featurize, train, evaluate, rules)")
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    try:
        cfg = _load_cfg(args)
        return args.func(args, cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except (AudioDecodeError, CubeFileError, FileNotFoundError, OSError,
            ValueError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 3


# --- shared output helpers --------------------------------------------------

def _atomic_write_bytes(path, data):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    _atomic_write_bytes(path, buf.getvalue().encode("utf-8"))


def _load_logiset(args, cfg):
    path = args.cube or os.path.join(cfg.out_dir, CUBE_NAME)
    cf = load_cube_file(path)
    cubes = [FeatureCube(cf.attr_names, cf.values[i])
             for i in range(cf.values.shape[0])]
    labels = [cf.classes[l] for l in cf.labels]
    ls = build_logiset(cubes, labels, mode=cfg.mode, classes=cf.classes)
    return ls, path


def _task_name(cfg, cube_path):
    if cfg.task:
        return cfg.task
    return os.path.splitext(os.path.basename(cube_path))[0]


# --- featurize --------------------------------------------------------------

def _read_manifest(path):
    """Rows of (resolved_path, listed_path, label); paths resolve against
    the manifest's own directory."""
    base = os.path.dirname(os.path.abspath(path))
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or all(not c.strip() for c in row):
                continue
            if i == 0 and [c.strip().lower() for c in row] == \
                    ["path", "label"]:
                continue
            if len(row) != 2 or not row[0].strip() or not row[1].strip():
                raise ValueError(
                    f"manifest line {i + 1}: expected 'path,label'")
            listed = row[0].strip()
            resolved = listed if os.path.isabs(listed) \
                else os.path.join(base, listed)
            rows.append((resolved, listed, row[1].strip()))
    if not rows:
        raise ValueError(f"manifest {path} lists no files")
    return rows


def _prep_one(job):
    """Decode and condition one file; returns ('ok', samples) or
    ('error', message).  Runs in worker processes, must not raise."""
    path, cfg = job
    try:
        sig = decode_wav(path)
        if cfg.trim:
            sig = trim_nonspeech(sig, frame_ms=cfg.trim_frame_ms,
                                 threshold_db=cfg.trim_threshold_db)
        sig = resample(sig, cfg.resample_hz)
        if cfg.bandpass_low is not None:
            sig = bandpass(sig, cfg.bandpass_low, cfg.bandpass_high)
        return ("ok", sig.samples)
    except (AudioDecodeError, ValueError, OSError) as e:
        return ("error", str(e))


def _feat_one(job):
    samples, n_target, cfg = job
    try:
        if len(samples) >= n_target:
            samples = samples[:n_target]
        else:
            samples = np.concatenate(
                [samples, np.zeros(n_target - len(samples))])
        sig = AudioSignal(samples=samples, sample_rate=cfg.resample_hz)
        cube = featurize_signal(sig, window_len=cfg.window_len, hop=cfg.hop,
                                n_mel=cfg.n_mel, n_mfcc=cfg.n_mfcc,
                                n_points=cfg.n_points, overlap=cfg.overlap)
        return ("ok", cube.values)
    except ValueError as e:
        return ("error", str(e))


def _map_jobs(fn, jobs, n_workers):
    if n_workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(fn, jobs))


def cmd_featurize(args, cfg):
    manifest = args.manifest or cfg.manifest
    if not manifest:
        raise ConfigError("featurize needs a manifest "
                          "(argument or config key)")
    rows = _read_manifest(manifest)
    n_total = len(rows)

    status = {}   # listed path -> error message, for failed rows
    prepped = _map_jobs(_prep_one, [(r[0], cfg) for r in rows], args.jobs)
    alive = []
    for (resolved, listed, label), (kind, payload) in zip(rows, prepped):
        if kind == "ok":
            alive.append((listed, label, payload))
        else:
            status[listed] = payload

    report_path = os.path.join(cfg.out_dir, REPORT_NAME)
    if not alive:
        _write_report(report_path, rows, status, 0, n_total)
        print(f"featurize: no usable audio among {n_total} files",
              file=sys.stderr)
        return 2

    if cfg.clip_seconds is not None:
        n_target = int(round(cfg.clip_seconds * cfg.resample_hz))
    else:
        n_target = min(len(s) for _, _, s in alive)
    n_min = cfg.window_len + (cfg.n_points - 1) * cfg.hop
    if n_target < n_min:
        raise ValueError(
            f"{n_target} samples per clip cannot fill {cfg.n_points} "
            f"windows of {cfg.window_len} at hop {cfg.hop} "
            f"(need at least {n_min})")

    feats = _map_jobs(_feat_one,
                      [(s, n_target, cfg) for _, _, s in alive], args.jobs)
    notes = {}
    cubes, labels = [], []
    for (listed, label, samples), (kind, payload) in zip(alive, feats):
        if kind == "ok":
            cubes.append(payload)
            labels.append(label)
            if len(samples) < n_target:
                notes[listed] = (f"zero-padded {len(samples)} -> "
                                 f"{n_target} samples")
        else:
            status[listed] = payload

    n_ok = len(cubes)
    _write_report(report_path, rows, status, n_ok, n_total, notes)
    if not cubes:
        print(f"featurize: no usable audio among {n_total} files",
              file=sys.stderr)
        return 2

    classes = tuple(sorted(set(labels)))
    class_id = {c: i for i, c in enumerate(classes)}
    names = _feature_names(cfg)
    write_cube_file(os.path.join(cfg.out_dir, CUBE_NAME), names, classes,
                    np.stack(cubes), [class_id[l] for l in labels])
    n_failed = n_total - n_ok
    print(f"featurized {n_ok}/{n_total} files "
          f"-> {os.path.join(cfg.out_dir, CUBE_NAME)}")
    if n_failed > 0.1 * n_total:
        print(f"featurize: {n_failed} of {n_total} files failed",
              file=sys.stderr)
        return 2
    return 0


def _feature_names(cfg):
    """Attribute names for the configured front end, probed on silence."""
    n = cfg.window_len + (cfg.n_points - 1) * cfg.hop
    probe = AudioSignal(samples=np.full(n, 1e-6), sample_rate=cfg.resample_hz)
    cube = featurize_signal(probe, window_len=cfg.window_len, hop=cfg.hop,
                            n_mel=cfg.n_mel, n_mfcc=cfg.n_mfcc,
                            n_points=cfg.n_points, overlap=cfg.overlap)
    return cube.names


def _write_report(path, rows, status, n_ok, n_total, notes=None):
    notes = notes or {}
    lines = []
    for _, listed, _ in rows:
        if listed in status:
            lines.append(f"{listed}\terror: {status[listed]}")
        elif listed in notes:
            lines.append(f"{listed}\tok ({notes[listed]})")
        else:
            lines.append(f"{listed}\tok")
    lines.append(f"processed {n_ok}/{n_total}")
    _atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))


# --- model commands ---------------------------------------------------------

def cmd_train(args, cfg):
    ls, _ = _load_logiset(args, cfg)
    params = learn_params_from(cfg)
    if cfg.model == "tree":
        model = model_from_tree(learn_tree(ls, params), params, ls.classes,
                                ls.attr_names)
    else:
        model = model_from_forest(learn_forest(ls, params), params,
                                  ls.classes, ls.attr_names)
    out = os.path.join(cfg.out_dir, MODEL_NAME)
    os.makedirs(cfg.out_dir, exist_ok=True)
    save_model(model, out)
    print(f"trained {cfg.model} ({cfg.mode}) -> {out}")
    return 0


def cmd_evaluate(args, cfg):
    ls, cube_path = _load_logiset(args, cfg)
    params = learn_params_from(cfg)
    report = evaluate(ls, params, model=cfg.model,
                      train_frac=cfg.train_frac, repeats=cfg.repeats,
                      seed=cfg.seed)
    rows = metrics_rows(report, _task_name(cfg, cube_path), cfg.mode,
                        cfg.model)
    out = os.path.join(cfg.out_dir, METRICS_NAME)
    _write_csv(out, METRICS_COLUMNS, rows)
    print(f"kappa {report.kappa_mean:.2f} +- {report.kappa_std:.2f}, "
          f"accuracy {report.accuracy_mean:.2f} +- "
          f"{report.accuracy_std:.2f} -> {out}")
    return 0


def cmd_rules(args, cfg):
    ls, _ = _load_logiset(args, cfg)
    params = learn_params_from(cfg)
    labels = [inst.label for inst in ls.instances]
    splits = balanced_holdout(labels, train_frac=cfg.train_frac,
                              repeats=cfg.rules_trees, seed=cfg.seed)
    rows = []
    for train, test in splits:
        tree = learn_tree(ls, params, indices=train)
        rules = extract_rules(tree, mode=cfg.mode)
        kept = rule_metrics(rules, [ls.instances[i] for i in test])
        rows.extend(rules_rows(kept, ls.classes, ls.attr_names))
    out = os.path.join(cfg.out_dir, RULES_NAME)
    _write_csv(out, RULES_COLUMNS, rows)
    print(f"{len(rows)} rules -> {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
