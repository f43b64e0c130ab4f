"""Command line entry point.

    chiralbag run scenario.json
    chiralbag spectrum --theta 0.4 --cutoff 120 [--samples 2.5e-3,5e-2,80]
    chiralbag fit samples.csv [--eta] [--n-max 6]
    chiralbag coeff a4 jets.json [--bc dirichlet|robin --S 0.5 | --operator chiral]

Exit codes: 0 success, 1 a check failed, 2 malformed input, 3 missing file,
4 numerical failure (bracketing, conditioning, cutoff).
``CHIRALBAG_THREADS`` caps the BLAS thread pools and is recorded in reports.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_MALFORMED = 2
EXIT_MISSING = 3
EXIT_NUMERIC = 4

THREAD_ENV = "CHIRALBAG_THREADS"
KINDS = ("clifford_identities", "bochner_check", "a4_eval", "identity_chain", "disk_sweep",
         "interval_conformal", "eta_regularity")

log = logging.getLogger("chiralbag")


class ScenarioError(ValueError):
    pass


def _threads() -> int | None:
    raw = os.environ.get(THREAD_ENV)
    if raw is None:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ScenarioError(f"{THREAD_ENV} must be a positive integer, got {raw!r}")
    if n < 1:
        raise ScenarioError(f"{THREAD_ENV} must be a positive integer, got {raw!r}")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(n))
    return n


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# Scenarios

_PARAM_KEYS = {
    "clifford_identities": {"k", "random_checks", "dims"},
    "bochner_check": {"cases", "dims"},
    "a4_eval": {"geometry", "jets", "bc", "S", "cutoff", "window", "n_max", "grid_size", "sigma"},
    "identity_chain": {"configs", "rtol", "k"},
    "disk_sweep": {"thetas", "cutoff", "window", "n_max", "grid_size", "tolerance"},
    "interval_conformal": {"poly", "cos", "bc", "S", "step", "limit", "window", "n_max", "grid_size", "n_grid"},
    "eta_regularity": {"thetas", "cutoff", "window", "n_max", "grid_size", "floor", "sigma"},
}


def parse_scenario(text: str) -> dict:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc}")
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    extra = set(data) - {"kind", "params", "output_dir", "seed"}
    if extra:
        raise ScenarioError(f"unknown scenario fields: {sorted(extra)}")
    kind = data.get("kind")
    if kind not in KINDS:
        raise ScenarioError(f"unknown kind {kind!r}; expected one of {list(KINDS)}")
    params = data.get("params", {})
    if not isinstance(params, dict):
        raise ScenarioError("params must be an object")
    bad = set(params) - _PARAM_KEYS[kind]
    if bad:
        raise ScenarioError(f"unknown params for {kind}: {sorted(bad)}")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ScenarioError("seed must be a nonnegative integer")
    out = data.get("output_dir", ".")
    if not isinstance(out, str):
        raise ScenarioError("output_dir must be a string")
    return {"kind": kind, "params": params, "output_dir": out, "seed": seed}


def _num(params, key, default, kind=float):
    v = params.get(key, default)
    if kind is int:
        if not isinstance(v, int) or isinstance(v, bool):
            raise ScenarioError(f"{key} must be an integer")
        return v
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(f"{key} must be a number")
    return float(v)


def _list(params, key, default, item=float):
    v = params.get(key, default)
    if not isinstance(v, (list, tuple)) or not v:
        raise ScenarioError(f"{key} must be a nonempty list")
    try:
        return [item(x) for x in v]
    except (TypeError, ValueError):
        raise ScenarioError(f"{key} has an invalid entry")


def _window(params, default):
    w = _list(params, "window", list(default))
    if len(w) != 2:
        raise ScenarioError("window must be [t_min, t_max]")
    return (w[0], w[1])


def _bc(params):
    bc = params.get("bc", "dirichlet")
    if bc == "dirichlet":
        return "dirichlet"
    if bc == "robin":
        return ("robin", _num(params, "S", 0.0))
    raise ScenarioError("bc must be 'dirichlet' or 'robin'")


def _fit_cfg(params, m, eta, window, n_max, grid_size):
    from .asymfit import FitConfig, FitError
    try:
        return FitConfig(m=m, n_max=_num(params, "n_max", n_max, int), window=_window(params, window),
                         grid_size=_num(params, "grid_size", grid_size, int),
                         exponent_offset=-0.5 if eta else 0.0)
    except FitError as exc:
        raise ScenarioError(str(exc))


def _run_kind(sc: dict, exact: bool) -> tuple[dict, dict[str, str]]:
    import numpy as np

    from . import suites
    kind, p = sc["kind"], sc["params"]
    rng = np.random.default_rng(sc["seed"])
    files: dict[str, str] = {}
    if kind == "clifford_identities":
        ks = _list(p, "k", [1, 2], int)
        rep = {"traces": suites.trace_suite(ks)}
        n = _num(p, "random_checks", 1000, int)
        if n:
            rep["properties"] = suites.clifford_properties(rng, n, _list(p, "dims", [2, 4, 6], int))
        rep["ok"] = all(v["ok"] for v in rep.values())
        return rep, files
    if kind == "bochner_check":
        rep = suites.square_identity_suite(rng, _num(p, "cases", 100, int), _list(p, "dims", [2, 4], int))
        return rep, files
    if kind == "identity_chain":
        rep = suites.chain_suite(rng, _num(p, "configs", 100, int), _num(p, "rtol", 1e-12),
                                 _list(p, "k", [1, 2], int))
        return rep, files
    if kind == "a4_eval":
        geometry = p.get("geometry", "disk_dirichlet")
        if geometry == "disk_dirichlet":
            rep = suites.dirichlet_disk_a4(_num(p, "cutoff", 400.0), _window(p, (2e-4, 2e-2)),
                                           _num(p, "n_max", 6, int), _num(p, "grid_size", 80, int),
                                           _num(p, "sigma", 3.0))
            files["a4_fit.csv"] = _table_from_dict(rep.pop("fit_table")).to_csv()
            return rep, files
        if geometry == "jets":
            path = p.get("jets")
            if not isinstance(path, str):
                raise ScenarioError("a4_eval with geometry 'jets' needs a 'jets' path")
            table = _a4_from_jets(Path(path), _bc(p), "scalar", 1, exact)
            files["a4.json"] = table.to_json() + "\n"
            files["a4.csv"] = table.to_csv()
            return {"ok": True, "a4": table.value("a4")}, files
        raise ScenarioError("geometry must be 'disk_dirichlet' or 'jets'")
    if kind in ("disk_sweep", "eta_regularity"):
        thetas = _list(p, "thetas", [0.0, 0.4, 0.8])
        cutoff = _num(p, "cutoff", 120.0)
        cfg = _fit_cfg(p, 2, kind == "eta_regularity", (2.5e-3, 5e-2), 6, 80)
        if kind == "disk_sweep":
            rep = suites.disk_sweep(thetas, cutoff, cfg, _num(p, "tolerance", 1e-3))
            for th, tb in zip(thetas, rep.pop("tables")):
                files[f"coefficients_theta_{th:g}.csv"] = _table_from_dict(tb).to_csv()
            files["stability_report.json"] = dumps({k: v for k, v in rep.items() if k != "ok"})
        else:
            rep = suites.eta_regularity(thetas, cutoff, cfg, _num(p, "floor", 1e-3), _num(p, "sigma", 3.0))
        return rep, files
    if kind == "interval_conformal":
        h = suites.interval_profile(_list(p, "poly", [0.0, 0.0, 0.25]), _list(p, "cos", [0.0, 0.5]))
        cfg = _fit_cfg(p, 1, False, (3e-4, 3e-2), 6, 60)
        rep = suites.interval_conformal(h, _bc(p), _num(p, "step", 1e-3), cfg, _num(p, "limit", 1e-4),
                                        _num(p, "n_grid", 1000, int))
        return rep, files
    raise ScenarioError(f"unknown kind {kind!r}")  # unreachable after parsing


def _table_from_dict(d):
    from .heatcoeff import CoefficientTable
    return CoefficientTable.from_dict(d)


def _log_items(rep: dict, prefix: str = "") -> None:
    for key, val in rep.items():
        if isinstance(val, dict) and "ok" in val:
            _log_items(val, prefix + key + ": ")
    for it in rep.get("items", []):
        log.info("%s%s %s", prefix, "PASS" if it.get("ok") else "FAIL", it.get("label", it))
    for f in rep.get("failures", []):
        log.info("%sFAIL %s", prefix, f)


def cmd_run(args) -> int:
    path = Path(args.scenario)
    if not path.is_file():
        print(f"error: scenario file {path} not found", file=sys.stderr)
        return EXIT_MISSING
    sc = parse_scenario(path.read_text())
    threads = _threads()
    log.info("scenario %s (seed %d)", sc["kind"], sc["seed"])
    rep, files = _run_kind(sc, args.exact)
    _log_items(rep)
    out_dir = Path(sc["output_dir"])
    if not out_dir.is_absolute():
        out_dir = path.parent / out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    report = {"kind": sc["kind"], "seed": sc["seed"], "params": sc["params"], "exact": bool(args.exact),
              "threads": threads, "result": rep}
    files = dict(files)
    files["report.json"] = dumps(report)
    for name in sorted(files):
        (out_dir / name).write_text(files[name])
    status = "PASS" if rep.get("ok") else "FAIL"
    print(f"{sc['kind']}: {status} -> {out_dir / 'report.json'}")
    return EXIT_OK if rep.get("ok") else EXIT_FAILED


# ---------------------------------------------------------------------------
# spectrum / fit / coeff


def _parse_samples_arg(raw: str):
    parts = raw.split(",")
    if len(parts) != 3:
        raise ScenarioError("--samples expects t_min,t_max,count")
    try:
        return float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ScenarioError("--samples expects t_min,t_max,count")


def _header(buf, meta: dict) -> None:
    for k in sorted(meta):
        buf.write(f"# {k}={meta[k]}\n")


def cmd_spectrum(args) -> int:
    import numpy as np

    from .spectral import disk_dirac_spectrum, disk_dirichlet_spectrum, trace_samples
    _threads()
    if args.kind == "dirac":
        spec = disk_dirac_spectrum(args.theta, args.cutoff, args.n_channels)
    else:
        spec = disk_dirichlet_spectrum(args.cutoff)
    meta = {"kind": spec.kind, "dim": spec.dim, "cutoff": repr(spec.cutoff), "channels": len(spec.channel_info),
            "kernel_dim": spec.kernel_dim}
    if args.kind == "dirac":
        meta["theta"] = repr(float(args.theta))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if args.samples:
        lo, hi, n = _parse_samples_arg(args.samples)
        ts = trace_samples(spec, np.geomspace(lo, hi, n))
        _header(buf, meta)
        w.writerow(["t", "heat", "eta", "tail_bound", "eta_tail_bound"])
        for row in zip(ts.t_grid, ts.heat, ts.eta, ts.tail_bound, ts.eta_tail_bound):
            w.writerow([repr(float(x)) for x in row])
    else:
        _header(buf, meta)
        w.writerow(["eigenvalue", "multiplicity"])
        for v, mlt in zip(spec.eigenvalues, spec.multiplicities):
            w.writerow([repr(float(v)), int(mlt)])
    _emit(buf.getvalue(), args.output)
    return EXIT_OK


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def read_samples_csv(text: str):
    import numpy as np

    from .spectral import TraceSamples
    meta, rows = {}, []
    lines = text.splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            meta[k.strip()] = v.strip()
        elif line.strip():
            body.append(line)
    if not body:
        raise ScenarioError("samples file has no header row")
    reader = csv.reader(body)
    head = next(reader)
    need = ["t", "heat"]
    if any(c not in head for c in need):
        raise ScenarioError("samples file needs columns t and heat")
    for r in reader:
        if len(r) != len(head):
            raise ScenarioError("ragged row in samples file")
        rows.append(r)
    try:
        cols = {h: np.array([float(r[i]) for r in rows]) for i, h in enumerate(head)}
    except ValueError:
        raise ScenarioError("non-numeric entry in samples file")
    t = cols["t"]
    zeros = np.zeros_like(t)
    try:
        ts = TraceSamples(t, cols["heat"], cols.get("eta", zeros), cols.get("tail_bound", zeros),
                          cols.get("eta_tail_bound", zeros), int(meta.get("dim", 2)), meta)
    except ValueError as exc:
        raise ScenarioError(str(exc))
    return ts


def cmd_fit(args) -> int:
    from .asymfit import FitConfig, FitError, fit_coefficients
    path = Path(args.samples)
    if not path.is_file():
        print(f"error: samples file {path} not found", file=sys.stderr)
        return EXIT_MISSING
    ts = read_samples_csv(path.read_text())
    m = args.m if args.m is not None else ts.dim
    lo = args.t_min if args.t_min is not None else float(ts.t_grid[0])
    hi = args.t_max if args.t_max is not None else float(ts.t_grid[-1])
    try:
        cfg = FitConfig(m=m, n_max=args.n_max, window=(lo, hi), grid_size=len(ts.t_grid),
                        exponent_offset=-0.5 if args.eta else 0.0)
    except FitError as exc:
        raise ScenarioError(str(exc))
    table = fit_coefficients(ts, cfg)
    _emit(table.to_json() + "\n" if args.format == "json" else table.to_csv(), args.output)
    return EXIT_OK


def _a4_from_jets(path: Path, bc, operator: str, k: int, exact: bool):
    from .bochner import OperatorSpec, decompose
    from .geometry import Quadrature
    from .heatcoeff import CoefficientTable, a4_mixed, a4_mixed_integrands, scalar_laplace_data
    if not path.is_file():
        raise FileNotFoundError(path)
    try:
        quad = Quadrature.from_json(path.read_text())
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed jets file: {exc}")
    if operator == "scalar":
        kind, S = (bc, 0.0) if isinstance(bc, str) else bc
        bd = scalar_laplace_data(quad, kind, S=S, exact_mode=exact)
        fiber = 1
    else:
        spec = OperatorSpec.chiral_ansatz(quad, k=k, exact=exact)
        bd = decompose(spec, quad)
        fiber = None
    value, parts = a4_mixed(bd, quad, fiber=fiber, breakdown=True)
    table = CoefficientTable(meta={"operator": operator, "bc": bc if isinstance(bc, str) else list(bc),
                                   "m": quad.m, "exact": bool(exact)})
    table.add("a4", value)
    for label in sorted(parts):
        table.add(f"a4[{label}]", parts[label])
    if exact:
        interior, boundary = a4_mixed_integrands(bd, quad, exact_mode=True, fiber=fiber)
        table.meta["integrands_exact"] = {
            "interior": [{k_: str(v) for k_, v in sorted(r.items())} for r in interior],
            "boundary": [{k_: str(v) for k_, v in sorted(r.items())} for r in boundary],
        }
    return table


def cmd_coeff(args) -> int:
    _threads()
    bc = "dirichlet" if args.bc == "dirichlet" else ("robin", args.S)
    try:
        table = _a4_from_jets(Path(args.jets), bc, args.operator, args.k, args.exact)
    except FileNotFoundError:
        print(f"error: jets file {args.jets} not found", file=sys.stderr)
        return EXIT_MISSING
    _emit(table.to_json() + "\n" if args.format == "json" else table.to_csv(), args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chiralbag", description="Heat-trace coefficients for chiral bag problems.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log every checked identity to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="execute a scenario file")
    r.add_argument("scenario")
    r.add_argument("--exact", action="store_true", help="exact Clifford arithmetic where available")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("spectrum", help="unit-disk spectrum as CSV")
    s.add_argument("--theta", type=float, default=0.0)
    s.add_argument("--cutoff", type=float, required=True)
    s.add_argument("--n-channels", type=int, default=None)
    s.add_argument("--kind", choices=("dirac", "dirichlet"), default="dirac")
    s.add_argument("--samples", help="emit trace samples on t_min,t_max,count instead")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_spectrum)

    f = sub.add_parser("fit", help="fit asymptotic coefficients to trace samples")
    f.add_argument("samples")
    f.add_argument("--eta", action="store_true", help="fit the eta trace")
    f.add_argument("--m", type=int, default=None)
    f.add_argument("--n-max", type=int, default=6)
    f.add_argument("--t-min", type=float, default=None)
    f.add_argument("--t-max", type=float, default=None)
    f.add_argument("--format", choices=("csv", "json"), default="csv")
    f.add_argument("-o", "--output")
    f.set_defaults(func=cmd_fit)

    c = sub.add_parser("coeff", help="evaluate a coefficient formula on jets")
    c.add_argument("which", choices=("a4",))
    c.add_argument("jets")
    c.add_argument("--operator", choices=("scalar", "chiral"), default="scalar")
    c.add_argument("--bc", choices=("dirichlet", "robin"), default="dirichlet")
    c.add_argument("--S", type=float, default=0.0)
    c.add_argument("--k", type=int, default=1)
    c.add_argument("--exact", action="store_true")
    c.add_argument("--format", choices=("csv", "json"), default="json")
    c.add_argument("-o", "--output")
    c.set_defaults(func=cmd_coeff)
    return ap


def _configure_logging(verbose: bool) -> None:
    # own handler on the current stderr, independent of any root configuration
    for h in list(log.handlers):
        log.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO if verbose else logging.WARNING)
    log.propagate = False


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_MALFORMED if exc.code else EXIT_OK
    _configure_logging(args.verbose)
    from .asymfit import FitError
    from .spectral import BracketingError, CutoffError
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except (FitError, BracketingError, CutoffError, RuntimeError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
