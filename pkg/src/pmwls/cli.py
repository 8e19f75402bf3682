"""Command-line front end: ``pmwls {weights,fit,sim,eval}``.

Exit status is 0 on success, 2 on invalid input (bad flags, malformed files)
and 1 on numerical failure.  Data products are written only to paths named
by flags; standard output carries short human-readable summaries (and the
fit report when no ``--out`` is given).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from typing import Optional, Sequence

import numpy as np

from .errors import NumericalError, PMWLSError, ValidationError
from .evaluate import PipelineConfig, TrialSet, train_test_eval
from .model import Dataset, Scale, get_model, log_model, read_dataset_csv
from .objective import ObjectiveContext, Penalty
from .simulate import (Estimator, TablePreset, get_table, rows_to_csv,
                       run_experiment)
from .solver import SolverConfig, fit
from .tuning import select_tau
from .weights import (IDENTITY, WeightSpec, build_weight, describe,
                      parse_weight, write_matrix_csv)

CONFIG_VERSION = 1
SEED_ENV = "PMWLS_SEED"


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors surface as ValidationError."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(f"{self.prog}: {message}")


# helpers -------------------------------------------------------------------

def resolve_seed(seed: Optional[int]) -> int:
    if seed is not None:
        return seed
    env = os.environ.get(SEED_ENV)
    if env is None or env.strip() == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise ValidationError(f"{SEED_ENV} must be an integer, got {env!r}") \
            from None


def resolve_threads(threads: Optional[int]) -> int:
    if threads is None:
        return os.cpu_count() or 1
    if threads < 1:
        raise ValidationError("--threads must be >= 1")
    return threads


def parse_tau(text: str):
    """``0.1`` -> float; ``auto``, ``auto:G`` or ``auto:G:floor`` -> dict."""
    text = text.strip().lower()
    if not text.startswith("auto"):
        try:
            tau = float(text)
        except ValueError:
            raise ValidationError(f"bad --tau value {text!r}") from None
        if not tau >= 0:
            raise ValidationError("--tau must be >= 0")
        return tau
    parts = [p for p in text[4:].replace(",", ":").split(":") if p]
    if len(parts) > 2:
        raise ValidationError(f"bad --tau value {text!r}")
    try:
        count = int(parts[0]) if parts else 50
        floor = float(parts[1]) if len(parts) > 1 else 1e-4
    except ValueError:
        raise ValidationError(f"bad --tau value {text!r}") from None
    return {"count": count, "floor": floor}


def read_vector_csv(path) -> np.ndarray:
    """Numbers from a CSV file (any layout; a non-numeric header is skipped)."""
    vals = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            cells = [c.strip() for c in row if c.strip()]
            try:
                vals.extend(float(c) for c in cells)
            except ValueError:
                if lineno == 1 and not vals:
                    continue
                raise ValidationError(
                    f"{path}: line {lineno}: non-numeric value") from None
    if not vals:
        raise ValidationError(f"{path}: no values")
    return np.array(vals)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=True) + "\n"


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _mean_model(name: str, data: Dataset):
    model = get_model(name, data.d)
    if data.scale is Scale.LOG and not name.startswith("log"):
        model = log_model(model)
    return model


# weights -------------------------------------------------------------------

def cmd_weights(args) -> int:
    if args.kind == "identity":
        spec = IDENTITY
    elif args.kind == "ar1":
        spec = WeightSpec("ar1", _required(args.rho, "--rho"))
    else:
        spec = WeightSpec("arma11", _required(args.rho, "--rho"),
                          _required(args.phi, "--phi"))
    wm = build_weight(spec, args.n)
    if args.out:
        write_matrix_csv(args.out, wm.W)
    print(describe(wm))
    return 0


def _required(value, flag):
    if value is None:
        raise ValidationError(f"{flag} is required for this weight kind")
    return value


# fit -----------------------------------------------------------------------

def build_fit_context(args, data: Dataset) -> ObjectiveContext:
    weight = parse_weight(args.weight)
    targets = read_vector_csv(args.targets) if args.targets else None
    pen = Penalty(args.penalty, 1.0 if args.penalty != "none" else 0.0,
                  targets=targets)
    if args.method == "pwls":
        return ObjectiveContext.pwls(data, _mean_model(args.model, data),
                                     weight, pen)
    if args.method == "additive":
        if weight.kind != "identity":
            raise ValidationError("the additive comparator is unweighted")
        raw = Dataset(data.z, data.x) if data.scale is Scale.LOG else data
        return ObjectiveContext.pmwls(raw, get_model(args.model, data.d),
                                      IDENTITY, pen)
    return ObjectiveContext.pmwls(data, _mean_model(args.model, data),
                                  weight, pen)


def cmd_fit(args) -> int:
    data = read_dataset_csv(args.data, log=args.log)
    ctx = build_fit_context(args, data)
    cfg = SolverConfig(max_sweeps=args.max_sweeps)
    if args.targets is not None and ctx.penalty.family == "none":
        raise ValidationError("--targets needs a lasso or scad penalty")
    tau = parse_tau(args.tau)
    report = {"model": args.model, "weight": parse_weight(args.weight).label,
              "n": data.n, "d": data.d,
              "scale": data.scale.value}
    if ctx.penalty.family == "none":
        res = fit(ctx, cfg)
    elif isinstance(tau, dict):
        tuned = select_tau(ctx, cfg, tau["count"], tau["floor"])
        res = tuned.fit
        report["bic"] = tuned.bic
        report["path_length"] = len(tuned.path)
        if args.path:
            lines = ["tau,bic,df"] + [f"{t!r},{b!r},{k}"
                                      for t, b, k in tuned.path_rows()]
            _write_text(args.path, "\n".join(lines) + "\n")
    else:
        res = fit(ctx.with_penalty(ctx.penalty.with_tau(tau)), cfg)
    if args.method == "additive":
        res.method = "additive"
    report.update(res.to_dict())
    text = _dump_json(report)
    if args.out:
        _write_text(args.out, text)
        print(f"{res.method} fit: df={res.df} tau={res.tau:.6g} "
              f"Q_n={res.q:.6g} converged={res.converged} -> {args.out}")
    else:
        sys.stdout.write(text)
    return 0 if res.converged or not args.strict else 1


# sim -----------------------------------------------------------------------

SIM_KEYS = {"version", "table", "n", "reps", "seed", "mu_sigma", "methods",
            "tau_count", "tau_floor", "max_sweeps", "model_form", "errors",
            "estimators", "name"}
ERROR_KEYS = {"family", "rho", "phi", "mu", "sigma"}
ESTIMATOR_KEYS = {"method", "weight", "penalty"}


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ValidationError(f"{where}: expected a JSON object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ValidationError(f"{where}: unknown key(s) {unknown}")


def load_sim_config(path) -> dict:
    """Read and validate a JSON experiment configuration."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(
            f"{path}: line {exc.lineno}: {exc.msg}") from None
    _check_keys(doc, SIM_KEYS, path)
    if doc.get("version") != CONFIG_VERSION:
        raise ValidationError(
            f"{path}: field 'version' must be {CONFIG_VERSION}")
    if "table" in doc and ("errors" in doc or "estimators" in doc):
        raise ValidationError(
            f"{path}: give either 'table' or 'errors'+'estimators'")
    if "table" not in doc and not ("errors" in doc and "estimators" in doc):
        raise ValidationError(
            f"{path}: need 'table' or both 'errors' and 'estimators'")
    if "errors" in doc:
        _check_keys(doc["errors"], ERROR_KEYS, f"{path}: errors")
        if not isinstance(doc["estimators"], list) or not doc["estimators"]:
            raise ValidationError(f"{path}: 'estimators' must be a list")
        for i, e in enumerate(doc["estimators"]):
            _check_keys(e, ESTIMATOR_KEYS, f"{path}: estimators[{i}]")
    return doc


def _custom_preset(doc) -> TablePreset:
    err = doc["errors"]
    ests = tuple(Estimator(e.get("method", "pmwls"),
                           parse_weight(e.get("weight", "none")),
                           e.get("penalty", "scad"))
                 for e in doc["estimators"])
    mu_sigma = ((float(err.get("mu", 0.0)), float(err.get("sigma", 1.0))),)
    family = err.get("family", "ar1")
    return TablePreset(doc.get("name", "custom"),
                       doc.get("model_form", "additive"),
                       (family, float(err.get("rho", 0.5)),
                        float(err.get("phi", 0.0))),
                       ests, mu_sigma=mu_sigma)


def _int_list(text: str, flag: str) -> tuple:
    try:
        vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ValidationError(f"bad {flag} value {text!r}") from None
    if not vals:
        raise ValidationError(f"{flag} is empty")
    return vals


def cmd_sim(args) -> int:
    doc = load_sim_config(args.config) if args.config else {}
    table = args.table or doc.get("table")
    if table is None and "errors" not in doc:
        raise ValidationError("sim needs --table or --config")
    preset = get_table(table) if table else _custom_preset(doc)
    name = table or preset.name

    seed = args.seed if args.seed is not None else doc.get("seed")
    seed = resolve_seed(seed)
    sizes = (_int_list(args.n, "--n") if args.n
             else tuple(doc["n"]) if "n" in doc else None)
    reps = args.reps if args.reps is not None else doc.get("reps")
    mu_sigma = None
    if args.mu_sigma:
        try:
            mu, sigma = (float(v) for v in args.mu_sigma.split(","))
        except ValueError:
            raise ValidationError("--mu-sigma takes MU,SIGMA") from None
        mu_sigma = ((mu, sigma),)
    elif "mu_sigma" in doc:
        mu_sigma = tuple(tuple(map(float, ms)) for ms in doc["mu_sigma"])
    methods = ([m.strip() for m in args.methods.split(";")] if args.methods
               else doc.get("methods"))
    solver = SolverConfig(max_sweeps=doc.get("max_sweeps", 1000))
    extra = {"solver": solver}
    for key in ("tau_count", "tau_floor"):
        if key in doc:
            extra[key] = doc[key]
    threads = resolve_threads(args.threads)

    rows_out = []
    for cfg in preset.configs(seed, sizes, reps, mu_sigma, methods, **extra):
        rows = run_experiment(cfg, threads)
        rows_out.extend(rows)
        for r in rows:
            m = r.metrics
            print(f"{name} mu={r.mu:g} sigma={r.sigma:g} n={r.n} "
                  f"{r.label} [{r.penalty}]: MSE={m.mse:.4g} SD={m.sd:.4g} "
                  f"TP={m.tp:.3g} TN={m.tn:.3g} failures={m.failures}")
    if args.out:
        _write_text(args.out, rows_to_csv(name, rows_out))
    return 0


# eval ----------------------------------------------------------------------

def cmd_eval(args) -> int:
    trials = [read_dataset_csv(p, log=args.log) for p in args.trials]
    ts = TrialSet(args.subject, trials)
    model = _mean_model(args.model, trials[0])
    cfg = PipelineConfig(penalty=args.penalty, K=args.K,
                         seed=resolve_seed(args.seed),
                         solver=SolverConfig(max_sweeps=args.max_sweeps))
    report = train_test_eval(ts, model, cfg)
    report["trial_files"] = [os.path.basename(p) for p in args.trials]
    text = _dump_json(report)
    if args.out:
        _write_text(args.out, text)
    for tr in report["trials"]:
        if "error" in tr:
            print(f"trial {tr['train_trial']}: failed: {tr['error']}")
        else:
            tests = ", ".join(f"{v:.2f}" for v in tr["test_vaf"].values())
            print(f"trial {tr['train_trial']}: train VAF {tr['train_vaf']:.2f}"
                  f", test VAF {tests}, weight {tr['weight']}")
    if "average_train_vaf" in report:
        print(f"average train VAF {report['average_train_vaf']:.2f}, "
              f"average test VAF {report['average_test_vaf']:.2f}")
    if not args.out:
        print("(no --out given; full report not written)")
    return 0 if report["failures"] == 0 else 1


# entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pmwls",
                description="Penalized modified weighted least squares.")
    sub = p.add_subparsers(dest="command", required=True,
                           parser_class=_Parser)

    w = sub.add_parser("weights", help="build a weight matrix")
    w.add_argument("--kind", required=True,
                   choices=("identity", "ar1", "arma11"))
    w.add_argument("--rho", type=float)
    w.add_argument("--phi", type=float)
    w.add_argument("--n", type=int, required=True)
    w.add_argument("--out", help="CSV file for W")
    w.set_defaults(func=cmd_weights)

    f = sub.add_parser("fit", help="fit one dataset")
    f.add_argument("--data", required=True, help="CSV with header y,x1..xd")
    f.add_argument("--model", required=True)
    f.add_argument("--method", default="pmwls",
                   choices=("pmwls", "pwls", "additive"))
    f.add_argument("--penalty", default="scad",
                   choices=("none", "lasso", "scad"))
    f.add_argument("--tau", default="auto",
                   help="penalty level, or auto[:COUNT[:FLOOR]]")
    f.add_argument("--weight", default="none",
                   help="none, ar1:RHO or arma11:RHO,PHI")
    f.add_argument("--log", action="store_true",
                   help="responses are multiplicative; fit on log scale")
    f.add_argument("--targets", help="CSV of shrinkage targets")
    f.add_argument("--path", help="CSV file for the (tau, BIC, df) path")
    f.add_argument("--out", help="JSON file for the fit report")
    f.add_argument("--max-sweeps", type=int, default=1000)
    f.add_argument("--strict", action="store_true",
                   help="exit 1 if the solver did not converge")
    f.add_argument("--seed", type=int, help="accepted for uniformity; "
                   "fitting is deterministic")
    f.add_argument("--threads", type=int)
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("sim", help="run a simulation table")
    s.add_argument("--table", help="preset name, e.g. add_scad_5")
    s.add_argument("--config", help="JSON experiment configuration")
    s.add_argument("--n", help="comma-separated sample sizes")
    s.add_argument("--reps", type=int)
    s.add_argument("--mu-sigma", help="restrict to one MU,SIGMA cell")
    s.add_argument("--methods", help="semicolon-separated estimator labels "
                   "(e.g. 'PMWLS (rho=0.5)') or method names "
                   "(pmwls, pwls, additive)")
    s.add_argument("--seed", type=int)
    s.add_argument("--threads", type=int)
    s.add_argument("--out", help="CSV file for the results table")
    s.set_defaults(func=cmd_sim)

    e = sub.add_parser("eval", help="trial-wise train/test evaluation")
    e.add_argument("--trials", nargs="+", required=True)
    e.add_argument("--model", required=True)
    e.add_argument("--log", action="store_true")
    e.add_argument("--penalty", default="scad", choices=("lasso", "scad"))
    e.add_argument("--K", type=int, default=10,
                   help="number of pre-estimations for typical values")
    e.add_argument("--subject", default="subject")
    e.add_argument("--max-sweeps", type=int, default=1000)
    e.add_argument("--seed", type=int)
    e.add_argument("--threads", type=int)
    e.add_argument("--out", help="JSON file for the report")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(message)s")
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    except PMWLSError as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
