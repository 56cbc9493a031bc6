"""Command-line experiment runner.

Every experiment reads a TOML or JSON config, validates it before doing any
work, and writes plot-ready CSVs plus a ``manifest.json``. Exit status: 0 on
success, 2 on validation errors, 3 when a solver fails to converge or no
solution exists, 4 on I/O errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .errors import BracketFailure, NoConvergence, NoSolution, ValidationError

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

KINDS = ("seq-sim", "fixed-point", "lm-sim", "risk", "tau-sep", "adapt-check", "prox",
         "scalar-rep", "appendix-figures")
STOCHASTIC = ("seq-sim", "lm-sim", "appendix-figures")


# ----------------------------------------------------------------------
# small helpers

def fmt(x):
    return format(float(x), ".17g")


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


def tau_tag(tau):
    return format(float(tau), "g")


class Outputs:
    def __init__(self, out_dir):
        self.dir = Path(out_dir) if out_dir else None
        self.files = []

    def write(self, name, text):
        if self.dir is None:
            return
        self.dir.mkdir(parents=True, exist_ok=True)
        (self.dir / name).write_text(text)
        self.files.append(name)

    def json(self, name, obj):
        self.write(name, json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def load_config(path):
    path = Path(path)
    text = path.read_text()
    try:
        if path.suffix == ".toml":
            return tomllib.loads(text)
        if path.suffix == ".json":
            return json.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"{path.name}: cannot parse: {exc}") from exc
    raise ValidationError(f"{path.name}: config must end in .toml or .json")


def bundled_configs():
    """Names of the ready-to-run configs shipped with the package."""
    root = resources.files("symprox") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def bundled_path(name):
    ref = resources.files("symprox") / "configs" / f"{name}.toml"
    if not ref.is_file():
        raise ValidationError(f"no bundled config named {name!r}")
    return Path(str(ref))


# ----------------------------------------------------------------------
# config parsing

def _need(cfg, key, where="config"):
    if key not in cfg or cfg[key] is None:
        raise ValidationError(f"{where}: missing required field '{key}'")
    return cfg[key]


def _num(cfg, key, default=None, where="config", cast=float):
    if key not in cfg:
        if default is None:
            raise ValidationError(f"{where}: missing required field '{key}'")
        return default
    try:
        return cast(cfg[key])
    except (TypeError, ValueError):
        raise ValidationError(f"{where}: field '{key}' must be a number") from None


def parse_penalty(d, where="penalty"):
    from .penalties import PenaltySpec
    if not isinstance(d, dict):
        raise ValidationError(f"{where}: expected a table")
    if d.get("variant") in ("lasso", "ridge", "zero"):
        v = d["variant"]
        if v == "zero":
            return PenaltySpec.zero()
        arg = _num(d, "xi" if v == "lasso" else "c", where=where)
        fn = PenaltySpec.lasso if v == "lasso" else PenaltySpec.ridge
        return fn(arg, scale=_num(d, "scale", 1.0, where))
    return PenaltySpec.from_dict(d)


def parse_measure(d, where="prior"):
    from .measures import EmpiricalMeasure1D
    if isinstance(d, (str, Path)):
        return read_measure(d)
    if not isinstance(d, dict):
        raise ValidationError(f"{where}: expected a table with atoms and weights")
    return EmpiricalMeasure1D(_need(d, "atoms", where), d.get("weights"))


def read_measure(path):
    from .measures import EmpiricalMeasure1D
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".csv":
        return EmpiricalMeasure1D.from_csv(text)
    if path.suffix == ".json":
        return EmpiricalMeasure1D.from_json(text)
    if path.suffix == ".toml":
        return parse_measure(tomllib.loads(text), where=path.name)
    raise ValidationError(f"{path.name}: prior must be .csv, .json or .toml")


def parse_theta(d, p_override=None, where="theta"):
    """Explicit values, quantiles of a prior, normal quantiles or a 3-point vector."""
    from .sequence_model import materialize_theta, normal_quantile_theta, three_point_theta
    if isinstance(d, list):
        return np.asarray(d, dtype=float)
    if not isinstance(d, dict):
        raise ValidationError(f"{where}: expected a table or a list")
    kind = d.get("kind", "prior")
    if kind == "explicit":
        return np.asarray(_need(d, "values", where), dtype=float)
    p = p_override if p_override is not None else _num(d, "p", where=where, cast=int)
    if p < 1:
        raise ValidationError(f"{where}: p must be at least 1")
    if kind == "normal_quantiles":
        return normal_quantile_theta(p)
    if kind == "three_point":
        return three_point_theta(p, _num(d, "mass", 0.05, where), _num(d, "level", 1.0, where))
    if kind == "prior":
        return materialize_theta(parse_measure(d, where), p)
    raise ValidationError(f"{where}: unknown theta kind {kind!r}")


def _taus(cfg, where="config"):
    taus = cfg.get("taus", [cfg["tau"]] if "tau" in cfg else None)
    if not taus:
        raise ValidationError(f"{where}: missing required field 'taus'")
    taus = [float(t) for t in taus]
    if any(not t >= 0 for t in taus):
        raise ValidationError(f"{where}: every tau must be nonnegative")
    return taus


def validate(cfg):
    """Schema checks run before any computation. Returns the kind."""
    kind = _need(cfg, "kind")
    if kind not in KINDS:
        raise ValidationError(f"config: unknown kind {kind!r}; expected one of {KINDS}")
    if kind in STOCHASTIC and "seed" not in cfg:
        raise ValidationError(f"config: missing required field 'seed' for kind {kind!r}")
    if "seed" in cfg and not isinstance(cfg["seed"], int):
        raise ValidationError("config: field 'seed' must be an integer")
    if kind in ("seq-sim", "fixed-point", "lm-sim", "prox", "scalar-rep"):
        parse_penalty(_need(cfg, "penalty"))
    if kind == "seq-sim":
        _need(cfg, "theta")
        _taus(cfg)
    if kind in ("fixed-point", "lm-sim"):
        _num(cfg, "delta")
        _num(cfg, "sigma")
        if kind == "lm-sim":
            _need(cfg, "theta")
        else:
            _need(cfg, "prior")
    if kind in ("risk", "tau-sep", "scalar-rep"):
        parse_measure(_need(cfg, "prior"))
    if kind == "appendix-figures":
        panels = _need(cfg, "panels")
        if not isinstance(panels, list) or not panels:
            raise ValidationError("config: 'panels' must be a non-empty list")
        for i, pan in enumerate(panels):
            where = f"panels[{i}]"
            _need(pan, "name", where)
            parse_penalty(_need(pan, "penalty", where), where + ".penalty")
            _need(pan, "theta", where)
            _taus(pan, where)
    return kind


# ----------------------------------------------------------------------
# experiment runners; each returns a JSON-able result

def run_seq_sim(cfg, out, workers=1):
    from .sequence_model import SequenceConfig, scatter_sample, separability_experiment, trial_seeds
    penalty = parse_penalty(cfg["penalty"])
    taus = _taus(cfg)
    ps = cfg.get("ps")
    theta_spec = cfg["theta"]
    sweep = ps is not None
    ps = [int(p) for p in ps] if sweep else [None]
    m = _num(cfg, "grid_size", 4096, cast=int)
    trials = _num(cfg, "trials", 1, cast=int)
    seed = cfg["seed"]
    entries, gap_rows = [], []
    for ip, p in enumerate(ps):
        theta = parse_theta(theta_spec, p)
        for it, tau in enumerate(taus):
            child = trial_seeds(seed, len(ps) * len(taus))[ip * len(taus) + it]
            run_seed = int(child.generate_state(1)[0])
            sc = SequenceConfig(penalty=penalty, tau=tau, seed=run_seed, theta=theta,
                                grid_size=m, trials=trials, tol=_num(cfg, "tol", 1e-8))
            rep = separability_experiment(sc, workers=workers)
            entry = {"p": sc.p, "tau": tau, **rep.summary(), "gaps": rep.gaps.tolist(),
                     "w2": rep.w2.tolist(), "bound_4w2sq": rep.bounds.tolist()}
            entries.append(entry)
            for t, (g, w) in enumerate(zip(rep.gaps, rep.w2)):
                gap_rows.append([sc.p, tau, t, float(g), float(w)])
            tag = (f"p{sc.p}_" if sweep else "") + f"tau{tau_tag(tau)}"
            sy, sx = scatter_sample(rep.last_y, rep.last_prox, run_seed)
            out.write(f"scatter_{tag}.csv", csv_text(["y", "theta_hat"], zip(sy, sx)))
            out.write(f"theory_{tag}.csv", rep.theory.to_csv())
    out.write("gaps.csv", csv_text(["p", "tau", "trial", "gap", "w2"], gap_rows))
    result = {"kind": "seq-sim", "penalty": penalty.to_dict(), "runs": entries}
    out.json("report.json", result)
    return result


def _linear_config(cfg, with_theta):
    from .linear_model import LinearConfig
    theta = parse_theta(cfg["theta"]) if with_theta else None
    prior = parse_measure(cfg["prior"]) if "prior" in cfg else None
    return LinearConfig(
        penalty=parse_penalty(cfg["penalty"]), delta=_num(cfg, "delta"),
        sigma=_num(cfg, "sigma"), seed=cfg.get("seed", 0), theta=theta, prior=prior,
        grid_size=_num(cfg, "grid_size", 4096, cast=int),
        trials=_num(cfg, "trials", 1, cast=int), tol=_num(cfg, "tol", 1e-8),
        fista_tol=_num(cfg, "fista_tol", 1e-9),
        quadrature_nodes=cfg.get("quadrature_nodes"),
        normalization=cfg.get("normalization", "paper"))


def run_fixed_point(cfg, out, workers=1):
    from .linear_model import solve_fixed_point
    sol = solve_fixed_point(_linear_config(cfg, with_theta=False))
    result = {"kind": "fixed-point", **sol.to_dict()}
    out.json("solution.json", result)
    out.write("effective_map.csv", sol.effective_map.to_csv())
    return result


def run_lm_sim(cfg, out, workers=1):
    from .linear_model import lm_concentration_experiment, separable_equivalent
    lc = _linear_config(cfg, with_theta=True)
    rep = lm_concentration_experiment(lc)
    result = {"kind": "lm-sim", **rep.to_dict()}
    if cfg.get("separable_equivalent", False):
        sep = lm_concentration_experiment(lc, solution=rep.solution,
                                          penalty=separable_equivalent(rep.solution))
        result["separable_equivalent"] = sep.to_dict()
    for k, joint in enumerate(rep.joints):
        out.write(f"joint_trial{k}.csv", csv_text(["theta_hat", "theta"], joint.pairs))
    out.write("predicted_joint.csv", csv_text(["prediction", "theta"], rep.predicted.pairs))
    out.json("report.json", result)
    return result


def run_risk(cfg, out, workers=1):
    from .risk import optimal_separable_risk
    res = optimal_separable_risk(parse_measure(cfg["prior"]), _num(cfg, "tau"),
                                 _num(cfg, "m", 4096, cast=int))
    result = {"kind": "risk", **res.to_dict()}
    out.json("risk.json", result)
    out.write("optimal_map.csv", res.optimal_map.to_csv())
    return result


def run_tau_sep(cfg, out, workers=1):
    from .risk import tau_sep
    sigma, delta = _num(cfg, "sigma"), _num(cfg, "delta")
    t2 = tau_sep(parse_measure(cfg["prior"]), sigma, delta, _num(cfg, "m", 4096, cast=int))
    result = {"kind": "tau-sep", "tau_sep_sq": t2, "tau_sep": float(np.sqrt(t2)),
              "risk_lower_bound": delta * (t2 - sigma**2), "sigma": sigma, "delta": delta}
    out.json("tau_sep.json", result)
    return result


def run_adapt_check(cfg, out, workers=1):
    from .adaptivity import DiscreteCoupling, joint_cm_check
    fam_dir = Path(_need(cfg, "family"))
    files = sorted(fam_dir.glob("*.csv"))
    if not files:
        raise ValidationError(f"family: no coupling CSVs in {fam_dir}")
    fam = [DiscreteCoupling.from_csv(f.read_text()) for f in files]
    rep = joint_cm_check(fam, _num(cfg, "max_cycle", 2, cast=int))
    result = {"kind": "adapt-check", "files": [f.name for f in files], **rep.to_dict()}
    out.json("adapt_check.json", result)
    return result


def _vector(v, where):
    if isinstance(v, str):
        path = Path(v)
        if path.exists():
            rows = [r for r in csv.reader(io.StringIO(path.read_text())) if r]
            if rows and not _is_float(rows[0][0]):
                rows = rows[1:]
            return np.array([float(r[0]) for r in rows])
        try:
            return np.array([float(s) for s in v.split(",")])
        except ValueError:
            raise ValidationError(f"{where}: expected numbers or a CSV path") from None
    return np.asarray(v, dtype=float)


def _is_float(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def run_prox(cfg, out, workers=1):
    from .penalties import prox
    f = parse_penalty(cfg["penalty"])
    y = _vector(_need(cfg, "y"), "y")
    x = prox(f, y, tol=_num(cfg, "tol", 1e-8))
    result = {"kind": "prox", "penalty": f.to_dict(), "y": y.tolist(), "x": x.tolist()}
    out.write("prox.csv", csv_text(["y", "x"], zip(y, x)))
    out.json("prox.json", result)
    return result


def run_scalar_rep(cfg, out, workers=1):
    from .measures import gaussian_convolve
    from .scalar_rep import effective_scalar_rep
    f = parse_penalty(cfg["penalty"])
    grid = gaussian_convolve(parse_measure(cfg["prior"]), _num(cfg, "tau"),
                             _num(cfg, "m", 4096, cast=int))
    amap = effective_scalar_rep(f, grid)
    out.write("map.csv", amap.to_csv())
    out.write("map.json", amap.to_sidecar_json() + "\n")
    return {"kind": "scalar-rep", "nodes": len(amap), **amap.sidecar()}


def run_appendix(cfg, out, workers=1):
    from .sequence_model import figure_panels, fitted_threshold
    seed = cfg["seed"]
    m = _num(cfg, "grid_size", 4096, cast=int)
    summary = []
    for k, pan in enumerate(cfg["panels"]):
        name = pan["name"]
        penalty = parse_penalty(pan["penalty"])
        theta = parse_theta(pan["theta"])
        panels = figure_panels(penalty, theta, _taus(pan), seed + k, m, name=name)
        for pl in panels:
            tag = f"{name}_tau{tau_tag(pl.tau)}"
            out.write(f"theory_{tag}.csv", pl.theory.to_csv())
            out.write(f"scatter_{tag}.csv",
                      csv_text(["y", "theta_hat"], zip(pl.scatter_y, pl.scatter_x)))
            summary.append({"panel": name, "tau": pl.tau,
                            "fitted_threshold": fitted_threshold(pl.theory),
                            "theory_nodes": len(pl.theory)})
    result = {"kind": "appendix-figures", "panels": summary}
    out.json("summary.json", result)
    return result


RUNNERS = {"seq-sim": run_seq_sim, "fixed-point": run_fixed_point, "lm-sim": run_lm_sim,
           "risk": run_risk, "tau-sep": run_tau_sep, "adapt-check": run_adapt_check,
           "prox": run_prox, "scalar-rep": run_scalar_rep, "appendix-figures": run_appendix}


def execute(cfg, out_dir=None, workers=1, source=None):
    """Validate, run and write the manifest. Returns the result dict."""
    kind = validate(cfg)
    out = Outputs(out_dir)
    start = time.perf_counter()
    result = RUNNERS[kind](cfg, out, workers=workers)
    wall = time.perf_counter() - start
    out.json("manifest.json", {"kind": kind, "config": cfg, "seed": cfg.get("seed"),
                               "version": __version__, "source": source,
                               "wall_time_s": wall, "outputs": list(out.files)})
    return result


# ----------------------------------------------------------------------
# argument parsing

def _threads(args):
    n = args.threads if args.threads is not None else os.environ.get("SYMPROX_THREADS", 1)
    try:
        n = int(n)
    except ValueError:
        raise ValidationError("threads must be an integer") from None
    if n < 1:
        raise ValidationError("threads must be at least 1")
    return n


def build_parser():
    ap = argparse.ArgumentParser(prog="symprox", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--threads", type=int, default=None,
                    help="cap on worker threads (also SYMPROX_THREADS)")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_config(name, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=True)
        s.add_argument("--out", default=None)
        return s

    with_config("seq-sim", "sequence-model separability experiment")
    with_config("fixed-point", "solve the (tau*, lambda*) system")
    with_config("lm-sim", "linear-model concentration experiment")
    with_config("appendix-figures", "theory curves and scatter samples for figure panels")

    s = sub.add_parser("prox", help="proximal map of a penalty")
    s.add_argument("--penalty", required=True, help="JSON object or path to a JSON file")
    s.add_argument("--y", required=True, help="comma-separated values or CSV path")
    s.add_argument("--out", default=None)

    s = sub.add_parser("scalar-rep", help="effective scalar representation")
    s.add_argument("--penalty", required=True)
    s.add_argument("--prior", required=True)
    s.add_argument("--tau", type=float, required=True)
    s.add_argument("--m", type=int, default=4096)
    s.add_argument("--out", default=None)

    s = sub.add_parser("risk", help="optimal separable risk")
    s.add_argument("--prior", required=True)
    s.add_argument("--tau", type=float, required=True)
    s.add_argument("--m", type=int, default=4096)
    s.add_argument("--out", default=None)

    s = sub.add_parser("tau-sep", help="critical noise level")
    s.add_argument("--prior", required=True)
    s.add_argument("--sigma", type=float, required=True)
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--m", type=int, default=4096)
    s.add_argument("--out", default=None)

    s = sub.add_parser("adapt-check", help="joint cyclic-monotonicity audit")
    s.add_argument("--family", required=True, help="directory of coupling CSVs (x,g)")
    s.add_argument("--max-cycle", type=int, default=2)
    s.add_argument("--out", default=None)

    sub.add_parser("list-configs", help="list bundled configs")

    s = sub.add_parser("run", help="run a config file or a bundled config by name")
    s.add_argument("config")
    s.add_argument("--out", default=None)
    return ap


def _penalty_arg(text):
    path = Path(text)
    if path.suffix == ".json" and path.exists():
        text = path.read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"penalty: invalid JSON: {exc}") from exc


def _config_from_args(args):
    c = args.command
    if c in ("seq-sim", "fixed-point", "lm-sim", "appendix-figures"):
        cfg = load_config(args.config)
        cfg.setdefault("kind", c)
        if cfg["kind"] != c:
            raise ValidationError(f"config kind {cfg['kind']!r} does not match command {c!r}")
        return cfg, args.config
    if c == "prox":
        return {"kind": "prox", "penalty": _penalty_arg(args.penalty), "y": args.y}, None
    if c == "scalar-rep":
        return {"kind": "scalar-rep", "penalty": _penalty_arg(args.penalty),
                "prior": args.prior, "tau": args.tau, "m": args.m}, None
    if c == "risk":
        return {"kind": "risk", "prior": args.prior, "tau": args.tau, "m": args.m}, None
    if c == "tau-sep":
        return {"kind": "tau-sep", "prior": args.prior, "sigma": args.sigma,
                "delta": args.delta, "m": args.m}, None
    if c == "adapt-check":
        return {"kind": "adapt-check", "family": args.family,
                "max_cycle": args.max_cycle}, None
    # run
    path = Path(args.config)
    if not path.exists() and path.suffix == "":
        path = bundled_path(args.config)
    return load_config(path), str(path)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list-configs":
            print("\n".join(bundled_configs()))
            return EXIT_OK
        workers = _threads(args)
        cfg, source = _config_from_args(args)
        result = execute(cfg, args.out, workers=workers, source=source)
        print(json.dumps(result if args.out is None else {"out": args.out, "kind": cfg["kind"]},
                         sort_keys=True, default=_jsonable))
        return EXIT_OK
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NoConvergence, NoSolution, BracketFailure) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
