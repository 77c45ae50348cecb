"""Command-line front end: ``torobs <command> [options]``.

Every run resolves a configuration (defaults < JSON file < flags), executes
one experiment and writes ``report.json`` plus CSV tables into ``--out``.
Exit codes: 0 success, 1 failed verification or non-convergence, 2 invalid
configuration.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import clusters as cl
from . import duhamel as du
from . import lattice as lt
from . import observability as ob
from . import spectral as sp
from .verify import CHECK_HEADER, run_suite

COMMANDS = ("clusters", "orbits", "gram", "solve", "scan", "verify")
SCAN_KINDS = ("strichartz", "ui", "ynorm", "obs")
SUITES = ("lattice", "clusters", "spectral", "duhamel", "observability", "all")

DEFAULTS = {
    "d": 1,
    "seed": 0,
    "out": "torobs-out",
    "gamma": None,
    "lattice": None,
    "r": 1,
    "f": 60,
    "b": 0.6,
    "eps": 0.1,
    "tau": math.pi / 4,
    "plateau": 0.5,
    "truncation": 512,
    "tol": 1e-10,
    "max_iter": 200,
    "potential": None,
    "u0": None,
    "chi": {"time": None, "space": [[0.0, 1.0]]},
    "kind": "strichartz",
    "suite": "all",
    "p": 4,
    "samples": 100,
    "f_list": [4, 8, 16],
    "delta_grid": [0.01, 0.05, 0.1, 0.25, 0.5, 1.0],
}


class ConfigError(Exception):
    def __init__(self, field: str, message: str, where: str = "<flags>"):
        super().__init__(f"{where}: field '{field}': {message}")
        self.field = field


# ---------------------------------------------------------------- configuration

def _locate(field: str, text: str | None, path: str | None) -> str:
    if text is None:
        return "<flags>"
    for i, line in enumerate(text.splitlines(), 1):
        if f'"{field}"' in line:
            return f"{path}:{i}"
    return f"{path}:1"


def _int(v, field, lo=None, hi=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValueError("must be an integer")
    if lo is not None and v < lo:
        raise ValueError(f"must be >= {lo}")
    if hi is not None and v > hi:
        raise ValueError(f"must be <= {hi}")
    return v


def _path(v):
    if not isinstance(v, str) or not v:
        raise ValueError("must be a path string")
    return v


def _num(v, field, lo=None, hi=None, open_lo=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError("must be a number")
    v = float(v)
    if lo is not None and (v <= lo if open_lo else v < lo):
        raise ValueError(f"must be {'>' if open_lo else '>='} {lo}")
    if hi is not None and v >= hi:
        raise ValueError(f"must be < {hi}")
    return v


def _modes(v, d):
    if not isinstance(v, list):
        raise ValueError("must be a list of {k, re, im} records")
    out = {}
    for rec in v:
        if not isinstance(rec, dict) or set(rec) - {"k", "re", "im"} or "k" not in rec:
            raise ValueError("each mode needs keys k, re, im")
        k = rec["k"]
        if not (isinstance(k, list) and len(k) == d and all(isinstance(x, int) for x in k)):
            raise ValueError(f"k must be a list of {d} integers")
        out[tuple(k)] = complex(rec.get("re", 0.0), rec.get("im", 0.0))
    return out


def _basis(v, d):
    if not (isinstance(v, list) and all(isinstance(r, list) and len(r) == d
                                        and all(isinstance(x, int) for x in r) for r in v)):
        raise ValueError(f"must be a list of integer vectors of length {d}")
    return v


def _validate(cfg: dict) -> None:
    """Type/range checks; raises ValueError tagged with the offending field."""
    checks = {
        "d": lambda v: _int(v, "d", 1, 4),
        "seed": lambda v: _int(v, "seed", 0),
        "r": lambda v: _int(v, "r", 1),
        "f": lambda v: _int(v, "f", 0),
        "b": lambda v: _num(v, "b", 0.5, 1.0, open_lo=True),
        "eps": lambda v: _num(v, "eps", 0.0, None, open_lo=True),
        "tau": lambda v: _num(v, "tau", 0.0, math.pi, open_lo=True),
        "plateau": lambda v: _num(v, "plateau", 0.0, 1.0, open_lo=True),
        "truncation": lambda v: _int(v, "truncation", 1),
        "tol": lambda v: _num(v, "tol", 0.0, None, open_lo=True),
        "max_iter": lambda v: _int(v, "max_iter", 1),
        "p": lambda v: _num(v, "p", 2.0),
        "samples": lambda v: _int(v, "samples", 1),
        "out": _path,
    }
    for key, fn in checks.items():
        try:
            fn(cfg[key])
        except ValueError as e:
            raise _Tagged(key, str(e))
    d = cfg["d"]
    if cfg["eps"] > cfg["b"]:
        raise _Tagged("eps", "must not exceed b")
    if cfg["kind"] not in SCAN_KINDS:
        raise _Tagged("kind", f"must be one of {', '.join(SCAN_KINDS)}")
    if cfg["suite"] not in SUITES:
        raise _Tagged("suite", f"must be one of {', '.join(SUITES)}")
    fl = cfg["f_list"]
    if not (isinstance(fl, list) and fl and all(isinstance(x, int) and x >= 0 for x in fl) and fl == sorted(fl)):
        raise _Tagged("f_list", "must be an increasing list of nonnegative integers")
    dg = cfg["delta_grid"]
    if not (isinstance(dg, list) and dg and all(isinstance(x, (int, float)) and 0 <= x <= 1 for x in dg)
            and dg == sorted(dg)):
        raise _Tagged("delta_grid", "must be an increasing list of numbers in [0, 1]")
    for key in ("potential", "u0"):
        if cfg[key] is not None:
            try:
                _modes(cfg[key], d)
            except (ValueError, TypeError) as e:
                raise _Tagged(key, str(e))
    if cfg["lattice"] is not None:
        try:
            _basis(cfg["lattice"], d)
        except ValueError as e:
            raise _Tagged("lattice", str(e))
    g = cfg["gamma"]
    if g is not None:
        if not isinstance(g, dict) or set(g) - {"offset", "basis"}:
            raise _Tagged("gamma", "must be an object with keys offset, basis")
        off = g.get("offset", [0] * d)
        if not (isinstance(off, list) and len(off) == d and all(isinstance(x, int) for x in off)):
            raise _Tagged("gamma", f"offset must be {d} integers")
        try:
            _basis(g.get("basis", []), d)
        except ValueError as e:
            raise _Tagged("gamma", str(e))
    chi = cfg["chi"]
    if not isinstance(chi, dict) or set(chi) - {"time", "space"}:
        raise _Tagged("chi", "must be an object with keys time, space")
    try:
        _chi(chi, d)
    except (ValueError, TypeError) as e:
        raise _Tagged("chi", str(e))


class _Tagged(Exception):
    def __init__(self, field, message):
        super().__init__(message)
        self.field = field
        self.message = message


def resolve_config(command: str, file_text: str | None, file_path: str | None, overrides: dict) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if file_text is not None:
        try:
            data = json.loads(file_text)
        except json.JSONDecodeError as e:
            raise ConfigError("<json>", e.msg, f"{file_path}:{e.lineno}")
        if not isinstance(data, dict):
            raise ConfigError("<root>", "configuration must be a JSON object", f"{file_path}:1")
        data.pop("command", None)
        for key in data:
            if key not in DEFAULTS:
                raise ConfigError(key, "unknown key", _locate(key, file_text, file_path))
        cfg.update(data)
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    try:
        _validate(cfg)
    except _Tagged as e:
        if overrides.get(e.field) is not None:
            where = "<flags>"
        elif file_text is not None:
            where = _locate(e.field, file_text, file_path)
        else:
            where = "<defaults>"
        raise ConfigError(e.field, e.message, where)
    cfg["command"] = command
    return cfg


# ---------------------------------------------------------------- builders

def _gamma(cfg) -> lt.AffineSublattice:
    d = cfg["d"]
    g = cfg["gamma"]
    if g is None:
        return lt.AffineSublattice.full(d)
    basis = g.get("basis", [])
    direction = lt.hnf_canonicalize(basis, d) if basis else lt.Sublattice.zero(d)
    return lt.AffineSublattice(tuple(g.get("offset", [0] * d)), direction)


def _chi(chi: dict, d: int) -> ob.ProductIndicator:
    t = chi.get("time")
    space = chi.get("space") or []
    if len(space) > d:
        raise ValueError(f"at most {d} spatial intervals")
    sp_iv = tuple(None if iv is None else (float(iv[0]), float(iv[1])) for iv in space)
    return ob.ProductIndicator(d, None if t is None else (float(t[0]), float(t[1])), sp_iv)


def _potential(cfg):
    if cfg["potential"] is None:
        return None
    V = du.PotentialSpec.from_modes(cfg["d"], _modes(cfg["potential"], cfg["d"]))
    if not V.is_real():
        raise ConfigError("potential", "coefficients must satisfy V(-k) = conj V(k)")
    return V


def _u0(cfg, gamma) -> sp.SpectrumField:
    d = cfg["d"]
    if cfg["u0"] is not None:
        return sp.SpectrumField.spatial(d, _modes(cfg["u0"], d))
    rng = np.random.default_rng(cfg["seed"])
    ks = cl.lattice_points_in_ball(gamma, min(cfg["f"], 2) ** 2)
    a = rng.normal(size=len(ks)) + 1j * rng.normal(size=len(ks))
    return sp.SpectrumField.spatial(d, {tuple(int(x) for x in k): c for k, c in zip(ks, a / np.linalg.norm(a))})


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(r)


def _g(x) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------- commands

def cmd_clusters(cfg, out: Path) -> tuple[int, dict]:
    dec = cl.decompose(_gamma(cfg), cfg["r"], cfg["f"])
    st = cl.cluster_stats(dec)
    cl.write_cluster_csv(st, out / "clusters.csv")
    split = cl.neighborhoods(dec)
    return 0, {"cluster_count": len(dec.clusters), "flat_count": st.flat_count,
               "sharp_count": st.sharp_count, "truncated_count": sum(st.truncated),
               "min_separation_sq": st.min_separation_sq,
               "neighborhood_separation_sq": cl.neighborhood_separation_sq(split),
               "max_diameter_sq": max(st.diameters_sq, default=0)}


def cmd_orbits(cfg, out: Path) -> tuple[int, dict]:
    if cfg["lattice"] is None:
        raise ConfigError("lattice", "orbits needs a lattice basis")
    lat = lt.hnf_canonicalize(cfg["lattice"], cfg["d"])
    try:
        cen = lt.orbit_census(lat)
    except lt.LatticeError as e:
        raise ConfigError("lattice", str(e))
    _write_csv(out / "orbits.csv", ["class"] + [f"q{j + 1}" for j in range(cfg["d"])],
               [[i, *rep.offset] for i, rep in enumerate(cen.class_reps)])
    return 0, {"basis": [list(r) for r in lat.basis], "class_count": cen.class_count,
               "covolume_sq": lat.gram_det(), "perp": [list(r) for r in lt.perp(lat).basis]}


def _setup(cfg) -> ob.ObservationSetup:
    return ob.ObservationSetup(_chi(cfg["chi"], cfg["d"]), _gamma(cfg), cfg["f"], _potential(cfg))


def cmd_gram(cfg, out: Path) -> tuple[int, dict]:
    st = _setup(cfg)
    rep = ob.gram_free(st) if st.potential is None else ob.gram_potential(st)
    ob.write_obs_csv([rep], out / "gram.csv", cfg["seed"])
    _write_csv(out / "eigenvalues.csv", ["index", "eigenvalue"],
               [[i, _g(x)] for i, x in enumerate(rep.eigenvalues)])
    return 0, rep.to_dict()


def cmd_solve(cfg, out: Path) -> tuple[int, dict]:
    gamma = _gamma(cfg)
    spec = du.CutoffSpec(cfg["tau"], cfg["plateau"], cfg["truncation"])
    u0 = _u0(cfg, gamma)
    lat = lt.saturate(gamma.direction) if gamma.rank else None
    try:
        rep = du.solve_periodized(u0, _potential(cfg), lat=lat, spec=spec, b=cfg["b"], tol=cfg["tol"],
                                  freq_bound=cfg["f"], gamma=gamma, max_iter=cfg["max_iter"])
    except du.NonContractionError as e:
        print(f"solve: criterion 'contraction' failed: {e}", file=sys.stderr)
        return 1, {"failed": "contraction", "message": str(e)}
    rows = [[n, *k, _g(a.real), _g(a.imag)] for (n, k), a in rep.solution.items()]
    _write_csv(out / "solution.csv", ["n"] + [f"k{j + 1}" for j in range(cfg["d"])] + ["re", "im"], rows)
    _write_csv(out / "residuals.csv", ["iteration", "increment_xb"],
               [[i, _g(x)] for i, x in enumerate(rep.history)])
    data = json.loads(rep.to_json("solution.csv"))
    data["converged"] = rep.residual_xb <= cfg["tol"]
    return (0 if data["converged"] else 1), data


def cmd_scan(cfg, out: Path) -> tuple[int, dict]:
    kind, d, seed = cfg["kind"], cfg["d"], cfg["seed"]
    if kind == "strichartz":
        rows = ob.strichartz_scan(d, cfg["p"], cfg["f_list"], cfg["samples"], seed)
        cols = ["F", "p", "d", "samples", "seed", "random_sup", "random_mean", "extremal_candidate", "sup"]
        _write_csv(out / "strichartz.csv", cols,
                   [[r[c] if isinstance(r[c], int) else _g(r[c]) for c in cols] for r in rows])
        return 0, {"rows": rows}
    if kind == "ui":
        prof = ob.ui_profile(d, cfg["f"], cfg["samples"], cfg["delta_grid"], cfg["p"], seed)
        _write_csv(out / "ui.csv", ["delta", "worst_mass"], prof.rows())
        return 0, prof.to_dict()
    if kind == "ynorm":
        st = _setup(cfg)
        est, its = ob.y_norm_estimate(st, seed=seed)
        dense = math.sqrt(max(ob.gram_free(st).lambda_max, 0.0))
        _write_csv(out / "ynorm.csv", ["F", "power_iteration", "dense", "iterations"],
                   [[cfg["f"], _g(est), _g(dense), its]])
        return 0, {"estimate": est, "dense": dense, "iterations": its}
    st = _setup(cfg)
    reports = [(ob.gram_free if st.potential is None else ob.gram_potential)(st.with_bound(F))
               for F in cfg["f_list"]]
    ob.write_obs_csv(reports, out / "obs.csv", seed)
    return 0, {"scan": [[r.metadata["F"], r.obs_constant] for r in reports]}


def cmd_verify(cfg, out: Path) -> tuple[int, dict]:
    checks = run_suite(cfg["suite"], cfg["seed"])
    _write_csv(out / "verify.csv", CHECK_HEADER, [c.row() for c in checks])
    failed = [f"{c.suite}/{c.name}" for c in checks if not c.passed]
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.suite}: {c.name} ({c.value:.3g} vs {c.tolerance:.3g})")
    return (1 if failed else 0), {"checks": len(checks), "failed": failed}


DISPATCH = {"clusters": cmd_clusters, "orbits": cmd_orbits, "gram": cmd_gram,
            "solve": cmd_solve, "scan": cmd_scan, "verify": cmd_verify}


def dispatch(cfg: dict) -> int:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    code, results = DISPATCH[cfg["command"]](cfg, out)
    report = {"version": __version__, "config": cfg, "results": results, "exit_code": code}
    with open(out / "report.json", "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=2, default=_json_default)
        fh.write("\n")
    return code


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    raise TypeError(f"cannot serialize {type(x).__name__}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="torobs", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"torobs {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        if name == "scan":
            p.add_argument("kind", nargs="?", choices=SCAN_KINDS)
        if name == "verify":
            p.add_argument("--suite", choices=SUITES)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--d", type=int, help="dimension")
        p.add_argument("--r", type=int, help="cluster scale R")
        p.add_argument("--f", type=int, help="frequency bound F")
        p.add_argument("--b", type=float)
        p.add_argument("--eps", type=float)
        p.add_argument("--tau", type=float, help="cutoff half-width")
        p.add_argument("--p", type=float, help="Lebesgue exponent")
        p.add_argument("--samples", type=int)
        p.add_argument("--truncation", type=int, help="cutoff Fourier truncation")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    text = path = None
    if args.config:
        path = args.config
        try:
            text = Path(path).read_text()
        except OSError as e:
            print(f"{path}: cannot read configuration: {e.strerror}", file=sys.stderr)
            return 2
    over = {k: getattr(args, k, None) for k in ("seed", "out", "d", "r", "f", "b", "eps", "tau", "p",
                                                 "samples", "truncation", "kind", "suite")}
    try:
        cfg = resolve_config(args.command, text, path, over)
        return dispatch(cfg)
    except ConfigError as e:
        print(f"invalid configuration: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
