"""Command-line interface.

Every command reads an optional JSON config (``--config`` or the
``SPURT_CONFIG`` environment variable), applies flag overrides, validates the
result and writes CSV or JSON outputs that start with provenance metadata.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as dt
import hashlib
import io
import json
import os
import re
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .classify import (
    LABELS,
    TacticLabels,
    Thresholds,
    ground_truth_labels,
    label_from_daily_states,
    label_from_window_states,
    label_majorization,
    tracking_update,
)
from .evaluate import (
    alpha_cdf_study,
    benchmark_divergence,
    comparative_study,
    confusion,
    table1,
)
from .hmm import (
    EmissionError,
    HmmModel,
    ObservationMode,
    active_days_mu,
    baum_welch,
    observations,
    viterbi,
)
from .profile import ActivityProfile, ProfileError
from .simulate import SimConfig, VectorModel, reference_model, simulate_hmm

CONFIG_ENV = "SPURT_CONFIG"
_HEADER = re.compile(r"^[A-Za-z_][A-Za-z0-9_ ]*$")
METHODS = ("majorization",) + tuple(m.value for m in ObservationMode)


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    delta: int = 7
    alpha_star: float = 2.0
    mode: str = "daily"
    method: str = "majorization"
    thresholds: dict = field(default_factory=dict)
    model: dict = field(default_factory=lambda: reference_model().to_dict())
    n_days: int = 1500 * 7
    state_binning: str = "window"
    start: str = "stationary"
    max_iters: int = 500
    tol: float = 1e-6
    n_max: int | None = None
    n_trials: int = 25_000
    vector_model: int = 1
    K: int = 10
    event: str = "side"
    workers: int = 1
    counts: str | None = None
    states: str | None = None
    model_path: str | None = None
    truth: str | None = None
    truth_states: str | None = None
    pred: str | None = None
    out: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def validate(self):
        ints = ("seed", "delta", "n_days", "max_iters", "n_trials", "vector_model", "K", "workers")
        for name in ints:
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool):
                raise ConfigError(f"{name} must be an integer, got {v!r}")
        if self.delta < 1 or self.n_days < self.delta or self.workers < 1:
            raise ConfigError("delta, n_days and workers must be positive with n_days >= delta")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.mode not in {m.value for m in ObservationMode}:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.state_binning not in ("window", "day"):
            raise ConfigError(f"unknown state_binning {self.state_binning!r}")
        if self.start not in ("stationary", "model"):
            raise ConfigError(f"unknown start {self.start!r}")
        if self.event not in ("side", "proxy", "theorem"):
            raise ConfigError(f"unknown event {self.event!r}")
        if self.vector_model not in (1, 2, 3):
            raise ConfigError("vector_model must be 1, 2 or 3")
        if not (isinstance(self.tol, (int, float)) and self.tol >= 0):
            raise ConfigError("tol must be non-negative")
        if self.n_max is not None and (not isinstance(self.n_max, int) or self.n_max < 1):
            raise ConfigError("n_max must be a positive integer")
        try:
            self.thresholds_obj()
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad thresholds: {e}") from None
        try:
            self.model_obj()
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"bad model: {e}") from None

    def thresholds_obj(self) -> Thresholds:
        d = dict(self.thresholds)
        d.setdefault("alpha_star", self.alpha_star)
        return Thresholds(**d)

    def model_obj(self) -> HmmModel:
        m = dict(self.model)
        m.setdefault("delta", self.delta)
        return HmmModel.from_dict(m)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def provenance(self) -> dict:
        """Everything that determines a result; the output location does not."""
        d = self.to_dict()
        d.pop("out")
        return d

    def digest(self) -> str:
        blob = json.dumps(self.provenance(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(path: str | None, overrides: dict) -> RunConfig:
    path = path or os.environ.get(CONFIG_ENV)
    base: dict = {}
    if path:
        try:
            with open(path) as fh:
                base = json.load(fh)
        except OSError as e:
            raise ConfigError(f"{path}: {e.strerror}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e.msg} at line {e.lineno})") from None
        if not isinstance(base, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
    merged = {**base, **{k: v for k, v in overrides.items() if v is not None}}
    return RunConfig.from_dict(merged)


# input parsing


def _data_lines(path: str):
    try:
        with open(path, newline="") as fh:
            text = fh.read()
    except OSError as e:
        raise DataError(f"{path}: {e.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line and not line.startswith("#"):
            yield lineno, line


def _int_field(path, lineno, s):
    try:
        v = int(s)
    except ValueError:
        raise DataError(f"{path}:{lineno}: expected a non-negative integer count, got {s!r}") from None
    if v < 0:
        raise DataError(f"{path}:{lineno}: negative count {v}")
    return v


def read_counts(path: str) -> np.ndarray:
    """Daily counts from one integer per line or ``date,count`` rows with contiguous ISO dates."""
    counts, dates = [], []
    first = True
    for lineno, line in _data_lines(path):
        parts = [p.strip() for p in line.split(",")]
        if first:
            first = False
            if all(_HEADER.match(p) for p in parts):
                continue
        if len(parts) == 1:
            counts.append(_int_field(path, lineno, parts[0]))
        elif len(parts) == 2:
            try:
                d = dt.date.fromisoformat(parts[0])
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad ISO date {parts[0]!r}") from None
            if dates and d != dates[-1] + dt.timedelta(days=1):
                raise DataError(f"{path}:{lineno}: dates not contiguous ({dates[-1]} then {d})")
            dates.append(d)
            counts.append(_int_field(path, lineno, parts[1]))
        else:
            raise DataError(f"{path}:{lineno}: expected 1 or 2 columns, got {len(parts)}")
    if dates and len(dates) != len(counts):
        raise DataError(f"{path}: mixes dated and undated rows")
    if not counts:
        raise DataError(f"{path}: no counts found")
    return np.array(counts, dtype=np.int64)


def read_states(path: str) -> np.ndarray:
    vals = []
    for lineno, line in _data_lines(path):
        last = line.split(",")[-1].strip()
        if last == "state":
            continue
        if last not in ("0", "1"):
            raise DataError(f"{path}:{lineno}: state must be 0 or 1, got {last!r}")
        vals.append(int(last))
    if not vals:
        raise DataError(f"{path}: no states found")
    return np.array(vals, dtype=np.int64)


def read_labels(path: str) -> TacticLabels:
    rows = [line for _, line in _data_lines(path)]
    if not rows:
        raise DataError(f"{path}: empty label file")
    reader = csv.DictReader(io.StringIO("\n".join(rows)))
    cols: dict[str, list] = {k: [] for k in LABELS}
    present = set(reader.fieldnames or ()) & set(LABELS)
    if not present:
        raise DataError(f"{path}: no label columns among {', '.join(LABELS)}")
    for i, row in enumerate(reader, 2):
        for k in LABELS:
            v = (row.get(k) or "").strip()
            if v not in ("", "0", "1"):
                raise DataError(f"{path}: row {i}: label {k} must be 0, 1 or empty, got {v!r}")
            cols[k].append(v)
    out = {}
    for k in LABELS:
        vals = cols[k]
        out[k] = None if k not in present or all(v == "" for v in vals) else np.array([v == "1" for v in vals])
    return TacticLabels(**out)


# output


def _meta(cfg: RunConfig) -> dict:
    return {"tool-version": __version__, "seed": cfg.seed, "config-hash": cfg.digest()}


def _csv_text(cfg: RunConfig, header, rows) -> str:
    m = _meta(cfg)
    buf = io.StringIO()
    buf.write(f"#tool-version={m['tool-version']} #seed={m['seed']} #config-hash={m['config-hash']}\n")
    buf.write("#config=" + json.dumps(cfg.provenance(), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _json_text(cfg: RunConfig, result) -> str:
    doc = {"meta": _meta(cfg), "config": cfg.provenance(), "result": result}
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, HmmModel):
        return o.to_dict()
    if dataclasses.is_dataclass(o):
        return dataclasses.asdict(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def write_outputs(files: dict[str, str], out_dir: str | None = None):
    """Write several files atomically: either all appear or none do."""
    if out_dir is not None:
        d = Path(out_dir)
        try:
            d.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise DataError(f"{out_dir}: cannot create output directory ({e.strerror})") from None
        if not d.is_dir():
            raise DataError(f"{out_dir}: not a directory")
        files = {str(d / name): text for name, text in files.items()}
    staged = []
    try:
        for target, text in files.items():
            parent = Path(target).parent
            fd, tmp = tempfile.mkstemp(dir=parent, prefix=".spurt-", suffix=".tmp")
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            staged.append((tmp, target))
        for tmp, target in staged:
            os.replace(tmp, target)
    except OSError as e:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)
        raise DataError(f"{getattr(e, 'filename', None) or out_dir}: {e.strerror}") from None


def emit(cfg: RunConfig, text: str):
    if cfg.out:
        write_outputs({cfg.out: text})
    else:
        sys.stdout.write(text)


# commands


def _profile(cfg: RunConfig) -> ActivityProfile:
    if not cfg.counts:
        raise ConfigError("no counts file given (--counts)")
    try:
        return ActivityProfile(read_counts(cfg.counts), cfg.delta)
    except ProfileError as e:
        raise DataError(f"{cfg.counts}: {e}") from None


def cmd_simulate(cfg: RunConfig):
    if not cfg.out:
        raise ConfigError("simulate needs an output directory (--out)")
    sim = SimConfig(cfg.model_obj(), cfg.n_days, cfg.seed, cfg.state_binning, cfg.start)
    counts, states = simulate_hmm(sim)
    write_outputs(
        {
            "counts.csv": _csv_text(cfg, ["count"], ([int(c)] for c in counts)),
            "states.csv": _csv_text(cfg, ["state"], ([int(s)] for s in states)),
        },
        cfg.out,
    )


def _fit(cfg: RunConfig, profile: ActivityProfile, mode: ObservationMode):
    obs = observations(profile, mode)
    mu = active_days_mu(profile.counts) if mode is ObservationMode.ACTIVE_DAYS else None
    return obs, baum_welch(obs, mode, delta=profile.delta, fixed_mu=mu, max_iters=cfg.max_iters, tol=cfg.tol)


def cmd_fit(cfg: RunConfig):
    if not cfg.out:
        raise ConfigError("fit needs an output directory (--out)")
    profile = _profile(cfg)
    mode = ObservationMode(cfg.mode)
    _, fit = _fit(cfg, profile, mode)
    result = {
        "mode": mode.value,
        "model": fit.model.to_dict(),
        "status": "converged" if fit.converged else "max-iters",
        "n_iter": fit.n_iter,
        "loglik": fit.trace[-1],
        "warnings": fit.warnings,
    }
    trace = _csv_text(cfg, ["iteration", "loglik"], ([i, v] for i, v in enumerate(fit.trace)))
    write_outputs({"model.json": _json_text(cfg, result), "trace.csv": trace}, cfg.out)


def _load_model(cfg: RunConfig) -> HmmModel:
    try:
        with open(cfg.model_path) as fh:
            doc = json.load(fh)
    except OSError as e:
        raise DataError(f"{cfg.model_path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise DataError(f"{cfg.model_path}: invalid JSON ({e.msg})") from None
    d = doc.get("result", {}).get("model", doc) if isinstance(doc, dict) else doc
    try:
        return HmmModel.from_dict(d)
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"{cfg.model_path}: not a model ({e})") from None


def _states(cfg: RunConfig, profile: ActivityProfile, mode: ObservationMode):
    if cfg.model_path:
        model = _load_model(cfg)
        obs = observations(profile, mode)
    else:
        obs, fit = _fit(cfg, profile, mode)
        model = fit.model
    return viterbi(model, obs, mode)


def cmd_decode(cfg: RunConfig):
    profile = _profile(cfg)
    mode = ObservationMode(cfg.mode)
    path = _states(cfg, profile, mode)
    emit(cfg, _csv_text(cfg, ["step", "state"], ([i + 1, int(s)] for i, s in enumerate(path))))


def _labels_csv(cfg: RunConfig, labels: TacticLabels) -> str:
    cols = [labels.resilient, labels.coordinating, labels.both, labels.active]
    rows = ([n + 1] + [None if c is None else bool(c[n]) for c in cols] for n in range(len(labels)))
    return _csv_text(cfg, ["window", *LABELS], rows)


def classify_profile(cfg: RunConfig, profile: ActivityProfile) -> TacticLabels:
    th = cfg.thresholds_obj()
    if cfg.method == "majorization":
        return label_majorization(profile, th)
    mode = ObservationMode(cfg.method)
    path = _states(cfg, profile, mode)
    if mode is ObservationMode.DAILY:
        return label_from_daily_states(path, profile, th)
    return label_from_window_states(path, mode)


def cmd_classify(cfg: RunConfig):
    profile = _profile(cfg)
    emit(cfg, _labels_csv(cfg, classify_profile(cfg, profile)))


def cmd_track(cfg: RunConfig):
    profile = _profile(cfg)
    if cfg.n_max is not None and cfg.n_max > profile.n_windows:
        raise DataError(f"n_max {cfg.n_max} exceeds the {profile.n_windows} available windows")
    ts = tracking_update(profile, cfg.alpha_star, cfg.n_max)
    rows = ([n, r, c] for n, (r, c) in enumerate(zip(ts.res, ts.coord)))
    emit(cfg, _csv_text(cfg, ["n", "res", "coord"], rows))


def cmd_eval(cfg: RunConfig):
    if not cfg.pred:
        raise ConfigError("eval needs predicted labels (--pred)")
    pred = read_labels(cfg.pred)
    if cfg.truth:
        truth = read_labels(cfg.truth)
    elif cfg.truth_states:
        truth = ground_truth_labels(read_states(cfg.truth_states), _profile(cfg), cfg.thresholds_obj())
    else:
        raise ConfigError("eval needs --truth labels or --truth-states with --counts")
    if len(truth) != len(pred):
        raise DataError(f"truth has {len(truth)} windows, predictions {len(pred)}")
    result = {}
    for k in LABELS:
        if getattr(truth, k) is not None and getattr(pred, k) is not None:
            result[k] = confusion(truth, pred, k).to_dict()
    if not result:
        raise DataError("no label is present in both truth and predictions")
    emit(cfg, _json_text(cfg, result))


def cmd_study(cfg: RunConfig, which: str):
    if which == "table1":
        rows = table1(cfg.n_trials, cfg.seed, cfg.delta, cfg.event, cfg.workers)
        cols = [f"{f}({a:g})" for f in ("PM", "NPM") for a in (-1.0, 0.0, 1.0, 2.0)]
        header = ["model"] + [c for col in cols for c in (col, col + "_se")]
        emit(cfg, _csv_text(cfg, header, ([r[h] for h in header] for r in rows)))
    elif which == "alphacdf":
        vm = VectorModel(cfg.vector_model, cfg.K)
        res = alpha_cdf_study(vm, cfg.delta, cfg.n_trials, cfg.seed, workers=cfg.workers)
        tab = res.table()
        header = list(tab[0])
        emit(cfg, _csv_text(cfg, header, ([r[h] for h in header] for r in tab)))
    elif which == "divergence":
        if cfg.K < cfg.delta:
            raise ConfigError("divergence needs K >= delta")
        tab = benchmark_divergence(cfg.K, cfg.delta, cfg.alpha_star)
        header = list(tab[0])
        emit(cfg, _csv_text(cfg, header, ([r[h] for h in header] for r in tab)))
    elif which == "table2":
        rep = comparative_study(cfg.seed, cfg.n_days // cfg.delta, cfg.thresholds_obj(), cfg.state_binning, cfg.max_iters)
        emit(cfg, _json_text(cfg, rep))
    else:
        raise ConfigError(f"unknown study {which!r}")


# argument parsing


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV})")
    p.add_argument("--seed", type=int)
    p.add_argument("--delta", type=int)
    p.add_argument("--out", help="output file, or directory for simulate and fit")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spurt", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"spurt {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a daily attack profile from the two-state model")
    _common(p)
    p.add_argument("--n-days", type=int)
    p.add_argument("--state-binning", choices=("window", "day"))

    p = sub.add_parser("fit", help="fit the HMM by Baum-Welch")
    _common(p)
    p.add_argument("--counts")
    p.add_argument("--mode", choices=[m.value for m in ObservationMode])
    p.add_argument("--max-iters", type=int)
    p.add_argument("--tol", type=float)

    p = sub.add_parser("decode", help="Viterbi state path")
    _common(p)
    p.add_argument("--counts")
    p.add_argument("--mode", choices=[m.value for m in ObservationMode])
    p.add_argument("--model", dest="model_path", help="fitted model JSON; fitted on the fly if omitted")

    p = sub.add_parser("classify", help="per-window tactic labels")
    _common(p)
    p.add_argument("--counts")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--model", dest="model_path")
    p.add_argument("--alpha-star", type=float)

    p = sub.add_parser("track", help="resilience and coordination tracking functions")
    _common(p)
    p.add_argument("--counts")
    p.add_argument("--n-max", type=int)
    p.add_argument("--alpha-star", type=float)

    p = sub.add_parser("eval", help="missed-detection and false-alarm rates")
    _common(p)
    p.add_argument("--pred")
    p.add_argument("--truth")
    p.add_argument("--truth-states")
    p.add_argument("--counts")

    p = sub.add_parser("study", help="Monte Carlo studies")
    p.add_argument("which", choices=("table1", "alphacdf", "divergence", "table2"))
    _common(p)
    p.add_argument("--n-trials", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--vector-model", type=int, choices=(1, 2, 3))
    p.add_argument("--K", type=int)
    p.add_argument("--alpha-star", type=float)
    p.add_argument("--event", choices=("side", "proxy", "theorem"))
    p.add_argument("--n-days", type=int)
    return ap


_SKIP = {"command", "config", "which"}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in _SKIP}
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "study":
            cmd_study(cfg, args.which)
        else:
            globals()[f"cmd_{args.command}"](cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except (EmissionError, FloatingPointError, ZeroDivisionError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
