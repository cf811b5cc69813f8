"""Command-line front end.

Every subcommand writes ``<out>/<command>.json`` holding the configuration,
its hash, the library version and the result. Wall-clock data go to
``<out>/<command>.meta.json`` so that the main artifact is reproducible
byte for byte. CSV files accompany the commands that produce series.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import anosovrep as ar
from . import critical as cr
from . import patterson as pt
from . import skewflow as sk
from . import thermo as th
from .words import ResourceCapError


class SchemaError(ValueError):
    pass


# ---------------------------------------------------------------------------
# parsing helpers

def parse_theta(text: str | None):
    """``"0:1,1:1"`` -> [(0, 1), (1, 1)]."""
    if text is None:
        return None
    items = [t for t in text.replace(" ", "").split(",") if t]
    if not items:
        raise SchemaError("theta must list at least one root as factor:index")
    out = []
    for t in items:
        try:
            i, j = t.split(":")
            out.append((int(i), int(j)))
        except ValueError:
            raise SchemaError(f"malformed root {t!r}; expected factor:index") from None
    if len(set(out)) != len(out):
        raise SchemaError("theta has repeated roots")
    return out


def parse_vector(text: str | None, name: str):
    if text is None:
        return None
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise SchemaError(f"{name} must be a comma-separated list of numbers") from None
    if not vals:
        raise SchemaError(f"{name} is empty")
    return np.array(vals)


def load_rep(spec: str, theta) -> ar.Representation:
    path = Path(spec)
    if path.suffix == ".json" or path.exists():
        try:
            rep = ar.Representation.load(path)
        except (OSError, json.JSONDecodeError) as exc:
            raise SchemaError(f"cannot read representation file {spec}: {exc}") from None
    elif spec in ar.EXAMPLES:
        rep = ar.load_example(spec)
    else:
        raise SchemaError(f"unknown representation {spec!r}; bundled: {', '.join(ar.EXAMPLES)}")
    if theta is not None:
        for i, j in theta:
            if not (0 <= i < len(rep.dims) and 1 <= j < rep.dims[i]):
                raise SchemaError(f"root ({i}, {j}) does not exist for dims {rep.dims}")
        rep = rep.with_theta(theta)
    return rep


def default_phi(rep: ar.Representation, phi):
    return np.ones(len(rep.theta)) if phi is None else phi


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def config_hash(config: dict) -> str:
    blob = json.dumps(_jsonable(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# subcommands; each returns (result dict, {filename: text})

def cmd_check_anosov(rep, a):
    gp = ar.gap_profile(rep, a.L)
    out = {"gap_profile": gp.to_json()}
    if a.transversality:
        out["transversality"] = ar.transversality_audit(rep, 40, 14, a.seed).to_json()
    return out, {}


def cmd_limit_cone(rep, a):
    cone = ar.limit_cone(rep, a.L)
    csv = "\n".join(",".join(f"{x:.10g}" for x in d) for d in cone.directions) + "\n"
    return cone.to_json(), {"limit_cone.csv": csv}


def cmd_pressure(rep, a):
    M = cr.model(rep, a.m)
    phi = M.functional(default_phi(rep, a.phi))
    f = M.scalar(phi).scale(-a.s)
    P = th.pressure_transfer(M.sft, f)
    orb = th.pressure_orbits(M.sft, f, a.T)
    return {"transfer": {"value": P, "method": "transfer", "tolerance": 1e-12, "horizon": None},
            "orbits": {"value": orb.value, "method": "periodic orbits", "tolerance": orb.band,
                       "horizon": a.T},
            "truncation_error": M.F.max_error}, {}


def cmd_entropy(rep, a):
    M = cr.model(rep, a.m)
    phi = default_phi(rep, a.phi)
    h = cr.entropy_of_functional(M, phi)
    out = {"h": h, "method": "pressure root", "depth": a.m}
    if a.count_L:
        est = cr.critical_exponent_count(rep, phi, a.count_L)
        out["counting"] = {"delta": est.delta, "L": a.count_L,
                           "relative_difference": abs(est.delta - h) / h}
    return out, {}


def cmd_manhattan(rep, a):
    M = cr.model(rep, a.m)
    pts = cr.manhattan_hypersurface(M, cr.direction_grid(M, a.points))
    files = {"manhattan.csv": cr.hypersurface_csv(pts)}
    if a.svg:
        files["manhattan.svg"] = cr.manhattan_svg(pts)
    res = {"points": len(pts), "max_residual": max(abs(p.residual) for p in pts)}
    if len(rep.theta) == 2:
        res["max_line_defect"] = max(abs(p.phi.vector.sum() - pts[0].phi.vector.sum())
                                     for p in pts)
    return res, files


def cmd_intersection(rep, a):
    M = cr.model(rep, a.m)
    cp = cr.critical_point(M, default_phi(rep, a.phi))
    if a.psi is None:
        raise SchemaError("intersection needs --psi")
    it = cr.dynamical_intersection(M, cp, a.psi, a.T)
    return {"critical_phi": cp.phi.vector, "gibbs": it.gibbs, "periods": it.periods,
            "band": it.band, "lower_bound": it.lower_bound}, {}


def cmd_patterson(rep, a):
    phi = default_phi(rep, a.phi)
    M = cr.model(rep, a.m)
    cp = cr.critical_point(M, phi, verify=False)
    nu = pt.patterson_sum(rep, cp.phi, 1.0 + a.s_offset, a.L, complete_tail=a.complete_tail)
    return ({"atoms": nu.size, "critical_phi": cp.phi.vector, "s": 1.0 + a.s_offset,
             "tail_mass": nu.tail_mass, "skipped": nu.skipped},
            {"patterson_atoms.json": nu.dumps()})


def cmd_shadow_test(rep, a):
    phi = default_phi(rep, a.phi)
    M = cr.model(rep, a.m)
    cp = cr.critical_point(M, phi, verify=False)
    nu = pt.patterson_sum(rep, cp.phi, 1.0 + a.s_offset, a.L, complete_tail=True)
    rpt = pt.shadow_statistics(rep, cp.phi, nu, a.alpha, a.L, 1.0)
    return ({"slope": rpt.slope, "intercept": rpt.intercept, "r2": rpt.r2,
             "quantile_spread": rpt.spread_q, "spread": rpt.spread, "count": rpt.count},
            {"shadow.csv": rpt.csv()})


def cmd_bowen_margulis(rep, a):
    M = cr.model(rep, a.m)
    cp = cr.critical_point(M, default_phi(rep, a.phi), verify=False)
    rpt = sk.measure_correspondence(M, cp, a.samples, a.seed, a.s_offset, a.L)
    rows = ["past,future,bowen_margulis,gibbs,z"]
    rows += [f"{p},{q},{b:.8g},{g:.8g},{z:.4g}" for (p, q), b, g, z in
             zip(rpt.cylinders, rpt.bowen_margulis, rpt.gibbs, rpt.zscores)]
    return ({"max_z": rpt.max_z, "ess": rpt.ess, "agree_3sigma": rpt.max_z < 3},
            {"bowen_margulis.csv": "\n".join(rows) + "\n"})


def _coin(a):
    cm = sk.coin_model(a.dim, arithmetic=a.arithmetic)
    return cm


def cmd_skew_dichotomy(rep, a):
    cm = _coin(a)
    rs = sk.recurrence_stats(cm.sft, cm.chain, cm.K, a.radius, a.horizon, a.trials, a.seed,
                             jobs=a.jobs)
    csv = "n,partial_sum\n" + "".join(f"{n},{v:.10g}\n" for n, v in
                                      enumerate(rs.partial_sums, start=1))
    return ({"dim": a.dim, "verdict": rs.verdict, "tail_exponent": rs.tail_exponent,
             "ci": list(rs.ci), "mean_returns": rs.mean_returns,
             "return_histogram": rs.return_counts}, {"partial_sums.csv": csv})


def cmd_mixing_fit(rep, a):
    cm = _coin(a)
    fit = sk.mixing_exponent(cm.sft, cm.chain, cm.K, a.radius, a.horizon, a.trials, a.seed,
                             jobs=a.jobs)
    res = {"dim": a.dim, "applicable": fit.applicable, "alpha": fit.alpha,
           "stderr": fit.stderr, "ci": list(fit.ci), "window": list(fit.window),
           "expected": a.dim / 2}
    files = {}
    if fit.correlations is not None:
        c = fit.correlations
        files["correlations.csv"] = "n,omega,stderr\n" + "".join(
            f"{n},{o:.10g},{e:.10g}\n" for n, o, e in zip(c.n, c.omega, c.stderr))
    return res, files


def cmd_conical_survey(rep, a):
    surv = sk.conical_mass_survey(rep, default_phi(rep, a.phi), a.radius, a.samples, a.N,
                                  a.seed, m=a.m)
    return surv.to_json(), {}


COMMANDS = {
    "check-anosov": cmd_check_anosov,
    "limit-cone": cmd_limit_cone,
    "pressure": cmd_pressure,
    "entropy": cmd_entropy,
    "manhattan": cmd_manhattan,
    "intersection": cmd_intersection,
    "patterson": cmd_patterson,
    "shadow-test": cmd_shadow_test,
    "bowen-margulis": cmd_bowen_margulis,
    "skew-dichotomy": cmd_skew_dichotomy,
    "mixing-fit": cmd_mixing_fit,
    "conical-survey": cmd_conical_survey,
}

# a parent parser shares its actions, so per-command defaults are resolved here
DEFAULT_DEPTH = {"conical-survey": 6}

# commands whose inputs are synthetic coin models rather than representations
NO_REP = {"skew-dichotomy", "mixing-fit"}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--rep", default="schottky_sl2",
                        help="representation JSON file or bundled example name")
    common.add_argument("--theta", help="roots as factor:index pairs, e.g. 0:1,1:1")
    common.add_argument("--out", default="anosovlab-out", help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--phi", help="functional coefficients, comma separated")
    common.add_argument("--m", type=int, default=None,
                        help="Ledrappier truncation depth (default 8; 6 for conical-survey)")

    p = argparse.ArgumentParser(prog="anosovlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    s = {name: sub.add_parser(name, parents=[common]) for name in COMMANDS}

    s["check-anosov"].add_argument("--L", type=int, default=12)
    s["check-anosov"].add_argument("--transversality", action="store_true")
    s["limit-cone"].add_argument("--L", type=int, default=10)
    s["pressure"].add_argument("--s", type=float, default=1.0)
    s["pressure"].add_argument("--T", type=int, default=10)
    s["entropy"].add_argument("--count-L", dest="count_L", type=int, default=0)
    s["manhattan"].add_argument("--points", type=int, default=15)
    s["manhattan"].add_argument("--svg", action="store_true")
    s["intersection"].add_argument("--psi")
    s["intersection"].add_argument("--T", type=int, default=10)
    for name in ("patterson", "shadow-test", "bowen-margulis"):
        s[name].add_argument("--L", type=int, default=10)
        s[name].add_argument("--s-offset", dest="s_offset", type=float,
                             default=0.02 if name == "bowen-margulis" else 0.05)
    s["patterson"].add_argument("--complete-tail", dest="complete_tail", action="store_true")
    s["shadow-test"].add_argument("--alpha", type=float, default=1.0)
    s["bowen-margulis"].add_argument("--samples", type=int, default=100000)
    for name in ("skew-dichotomy", "mixing-fit"):
        s[name].add_argument("--dim", type=int, default=1)
        s[name].add_argument("--radius", type=float, default=2.0)
        s[name].add_argument("--horizon", type=int, default=400)
        s[name].add_argument("--trials", type=int, default=100000)
        s[name].add_argument("--arithmetic", action="store_true")
    s["conical-survey"].add_argument("--radius", type=float, default=0.5,
                                     help="tube radius in units of the transverse diffusion scale")
    s["conical-survey"].add_argument("--samples", type=int, default=1000)
    s["conical-survey"].add_argument("--N", type=int, default=1000)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    a = parser.parse_args(argv)
    try:
        theta = parse_theta(a.theta)
        a.phi = parse_vector(a.phi, "phi")
        if hasattr(a, "psi"):
            a.psi = parse_vector(a.psi, "psi")
        if a.jobs < 1:
            raise SchemaError("--jobs must be positive")
        if a.m is None:
            a.m = DEFAULT_DEPTH.get(a.command, 8)
        rep = None if a.command in NO_REP else load_rep(a.rep, theta)
        if rep is not None and a.phi is not None and len(a.phi) != len(rep.theta):
            raise SchemaError(f"phi has {len(a.phi)} coefficients, theta has {len(rep.theta)}")
        config = {k: v for k, v in vars(a).items() if k not in ("out", "jobs")}
        config["theta"] = theta
        if rep is not None:
            config["rep"] = rep.to_json()
        digest = config_hash(config)
        t0 = time.time()
        result, files = COMMANDS[a.command](rep, a)
        elapsed = time.time() - t0
    except (SchemaError, ValueError, ResourceCapError) as exc:
        kind = "schema error" if isinstance(exc, SchemaError) else "error"
        print(f"anosovlab {a.command}: {kind}: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, SchemaError) else 1
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    record = {"command": a.command, "version": __version__, "config_hash": digest,
              "config": config, "result": result}
    text = json.dumps(_jsonable(record), sort_keys=True, indent=1)
    (out / f"{a.command}.json").write_text(text + "\n")
    meta = {"config_hash": digest, "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "elapsed_seconds": elapsed, "jobs": a.jobs}
    (out / f"{a.command}.meta.json").write_text(json.dumps(meta, indent=1) + "\n")
    for name, body in files.items():
        (out / name).write_text(body)
    print(json.dumps(_jsonable({"command": a.command, "config_hash": digest,
                                "result": _summary(result)}), sort_keys=True))
    return 0


def _summary(result):
    """The result without long arrays, for the terminal."""
    if isinstance(result, dict):
        return {k: _summary(v) for k, v in result.items()
                if not isinstance(v, (list, np.ndarray)) or len(v) <= 8}
    return result


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
