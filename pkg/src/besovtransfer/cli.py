"""Config-driven experiment runner.

Configs are TOML files with four tables: ``[map]``, ``[space]``,
``[discretization]`` and ``[experiment]``.  Unknown keys are errors, not
warnings; every CSV output carries a header row and a trailing metadata
comment block of ``# key=value`` lines.  Identical config and seed give
byte-identical outputs.

Exit codes: 0 success, 1 configuration/validation error, 2 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - env dependent
    import tomli as tomllib

import numpy as np

from . import __version__
from .besov import BesovParams, greedy_regular_decompose, verify_regular_domain
from .functions import PiecewiseConstantFn, haar_analysis, indicator, load_fn, save_fn
from .grid import Region
from .besov import besov_norm_haar, besov_norm_osc
from .maps import (
    MapSpec,
    besov_jacobian_example,
    besov_jacobian_family,
    linear_circle,
    lorenz_map,
    markov_holder,
    tent,
    wild_family,
    winky_face,
)
from .normcmp import inclusion_suite, norm_corpus
from .spectral import (
    dense_spectrum,
    ess_bound,
    leading_eigen,
    ly_fit,
    second_modulus,
)
from .stats import DEFAULT_SEED, acim, correlations, wild_escape
from .transfer import export_operator, mass_balance_error, ulam_matrix, weighted_matrix


class ConfigError(ValueError):
    pass


_KNOWN_KEYS = {
    "map": {"name", "ell", "t", "n", "amplitude", "gamma", "alpha", "zeta",
            "k0", "i_max", "mode", "delta", "thetas", "images", "layout"},
    "space": {"s", "p", "q"},
    "discretization": {"level", "quadrature_order", "i_max", "depth_cap"},
    "experiment": {"operation", "seed", "probes", "j", "j_min", "j_max",
                   "n_max", "out", "tau", "function", "phi", "psi",
                   "alphas", "region", "region_kind", "alpha_exponent",
                   "max_level", "n_corpus", "horizon", "orbits",
                   "threshold", "dense", "levels"},
}

BESTIARY = [
    {"name": "linear_circle", "params": "ell >= 2 (integer)",
     "r_ess": "ell^-s (Markov partition sums)", "theorem": "markov"},
    {"name": "markov_holder", "params": "n >= 2, 0 <= amplitude < 1 - 1/n",
     "r_ess": "(inf w)^-s", "theorem": "markov"},
    {"name": "tent", "params": "t in (1/2, 1]",
     "r_ess": "(2t)^-s", "theorem": "c1-continuous / entropy"},
    {"name": "lorenz", "params": "gamma > 0, optional layout",
     "r_ess": "alpha^-s with alpha = inf|F'|", "theorem": "lorenz"},
    {"name": "pbv_interval", "params": "bi-Lipschitz branches, |f'| of p-bounded variation",
     "r_ess": "(inf|f'|)^-s", "theorem": "p-bounded variation"},
    {"name": "besov_jacobian", "params": "thetas, images, oscillating potentials",
     "r_ess": "LY-only (a-priori smallness)", "theorem": "low-regularity jacobian"},
    {"name": "wild_family", "params": "alpha > 0, zeta in [0,1], k0 >= 1",
     "r_ess": "LY-only (alpha, k0 large); none at alpha = 1",
     "theorem": "infinitely many branches"},
    {"name": "winky_face", "params": "k0 >= 1, expanding rectangle targets",
     "r_ess": "(min expansion)^-2s", "theorem": "piecewise expanding on the square"},
]


def _check_keys(cfg: dict):
    for section, table in cfg.items():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        for key in table:
            if key not in _KNOWN_KEYS[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")


def build_map(mc: dict, disc: dict) -> MapSpec:
    name = mc.get("name")
    if name == "linear_circle":
        return linear_circle(int(mc["ell"]))
    if name == "tent":
        return tent(float(mc["t"]))
    if name == "markov_holder":
        return markov_holder(int(mc["n"]), float(mc.get("amplitude", 0.0)))
    if name == "lorenz":
        return lorenz_map(float(mc["gamma"]), mc.get("layout"))
    if name == "wild_family":
        return wild_family(
            float(mc["alpha"]), float(mc["zeta"]), int(mc["k0"]),
            i_max=int(mc.get("i_max", disc.get("i_max", 40))),
            mode=mc.get("mode", "repaired"),
        )
    if name == "besov_jacobian":
        if "thetas" in mc:
            return besov_jacobian_family(mc["thetas"],
                                         [tuple(j) for j in mc["images"]])
        return besov_jacobian_example(float(mc.get("delta", 0.1)))
    if name == "winky_face":
        return winky_face(int(mc["k0"]))
    raise ConfigError(f"unknown map name {name!r}")


def build_space(sc: dict) -> BesovParams:
    q = sc.get("q", "inf")
    qv = math.inf if (isinstance(q, str) and q == "inf") else float(q)
    try:
        return BesovParams(float(sc["s"]), float(sc.get("p", 1.0)), qv)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def write_csv(path, header, rows, meta):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
        for k in sorted(meta):
            fh.write(f"# {k}={meta[k]}\n")


def _fmt(v):
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def _std_meta(cfg, seed, K):
    return {
        "besovtransfer_version": __version__,
        "numpy_version": np.__version__,
        "level": K,
        "seed": seed,
        "map": cfg.get("map", {}).get("name", "-"),
    }


def _parse_function(desc: str, K: int) -> PiecewiseConstantFn:
    kind, _, arg = desc.partition(":")
    if kind == "file":
        return load_fn(arg)
    if kind == "indicator":
        a, b = (float(v) for v in arg.split(","))
        return indicator(Region.intervals([(a, b)]), K)
    if kind == "sin":
        xs = (np.arange(1 << K) + 0.5) / (1 << K)
        return PiecewiseConstantFn(1, K, np.sin(2 * math.pi * float(arg) * xs))
    if kind == "constant":
        return PiecewiseConstantFn(1, K, np.full(1 << K, float(arg)))
    raise ConfigError(f"unknown function descriptor {desc!r}")


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def op_norm(cfg, out_dir, seed, K):
    params = build_space(cfg["space"])
    f = _parse_function(cfg["experiment"]["function"], K)
    co = haar_analysis(f)
    rows = [[
        cfg["experiment"]["function"], params.s, params.p,
        "inf" if math.isinf(params.q) else params.q, K,
        besov_norm_haar(co, params), besov_norm_osc(f, params.s),
    ]]
    path = os.path.join(out_dir, cfg["experiment"].get("out", "norm.csv"))
    write_csv(path, ["function", "s", "p", "q", "K", "besov_haar", "besov_osc"],
              rows, _std_meta(cfg, seed, K))
    return [path]


def op_operator(cfg, out_dir, seed, K):
    m = build_map(cfg["map"], cfg.get("discretization", {}))
    tau = cfg["experiment"].get("tau")
    op = (weighted_matrix(m, float(tau), K) if tau is not None
          else ulam_matrix(m, K))
    path = os.path.join(out_dir, cfg["experiment"].get("out", "operator.txt"))
    export_operator(op, path)
    spath = path + ".summary.csv"
    write_csv(
        spath, ["map", "K", "nnz", "mass_balance_error"],
        [[m.name, K, op.matrix.nnz, mass_balance_error(op)]],
        _std_meta(cfg, seed, K),
    )
    return [path, spath]


def op_spectrum(cfg, out_dir, seed, K):
    m = build_map(cfg["map"], cfg.get("discretization", {}))
    op = ulam_matrix(m, K)
    lam1, v1, diag = leading_eigen(op)
    lam2, d2 = second_modulus(op, lam1, v1)
    rows = [[m.name, K, lam1, diag["residual"], lam2, d2.get("spread", 0.0)]]
    if cfg["experiment"].get("dense", False) and op.n <= 4096:
        moduli = dense_spectrum(op)
        rows[0].append(float(moduli[1]) if moduli.size > 1 else 0.0)
        header = ["map", "K", "lambda1", "residual", "lambda2", "spread",
                  "lambda2_dense"]
    else:
        header = ["map", "K", "lambda1", "residual", "lambda2", "spread"]
    path = os.path.join(out_dir, cfg["experiment"].get("out", "spectrum.csv"))
    write_csv(path, header, rows, _std_meta(cfg, seed, K))
    return [path]


def _expand_maps(mc: dict, disc: dict):
    """A list-valued map parameter turns one config into a sweep."""
    for key, val in mc.items():
        if key != "name" and isinstance(val, list) and key not in (
            "thetas", "images", "layout",
        ):
            out = []
            for v in val:
                sub = dict(mc)
                sub[key] = v
                out.append((f"{mc['name']}[{key}={v}]", build_map(sub, disc)))
            return out
    return [(mc.get("name", "?"), build_map(mc, disc))]


def op_ly(cfg, out_dir, seed, K):
    params = build_space(cfg["space"])
    exp = cfg["experiment"]
    if "j" in exp:
        js = [int(exp["j"])]
    else:
        js = list(range(int(exp.get("j_min", 1)), int(exp.get("j_max", 8)) + 1))
    rows = []
    for label, m in _expand_maps(cfg["map"], cfg.get("discretization", {})):
        try:
            eb = ess_bound(m, params).value
        except ValueError:
            eb = float("nan")
        op = ulam_matrix(m, K)
        for j in js:
            fit = ly_fit(m, params, j, K, n_probes=int(exp.get("probes", 200)),
                         seed=seed, op=op)
            rows.append([
                label, params.s, params.p,
                "inf" if math.isinf(params.q) else params.q,
                j, K, fit.C, fit.lam, fit.lam_root, eb,
            ])
    path = os.path.join(out_dir, exp.get("out", "ly.csv"))
    write_csv(path, ["map", "s", "p", "q", "j", "K", "C", "lambda",
                     "lambda_root", "ess_bound"], rows, _std_meta(cfg, seed, K))
    return [path]


def op_acim(cfg, out_dir, seed, K):
    from .stats import support_cells

    m = build_map(cfg["map"], cfg.get("discretization", {}))
    params = build_space(cfg["space"]) if "space" in cfg else None
    res = acim(m, K, params=params)
    fpath = os.path.join(out_dir, "acim_density.csv")
    save_fn(res.density, fpath)
    rows = [[m.name, K, res.lam1, res.residual, res.mass_deficit,
             res.besov_norm if res.besov_norm is not None else "nan"]]
    path = os.path.join(out_dir, cfg["experiment"].get("out", "acim.csv"))
    write_csv(path, ["map", "K", "lambda1", "residual", "mass_deficit",
                     "besov_norm"], rows, _std_meta(cfg, seed, K))
    floor = 1e-8 * float(res.density.values.max())
    cells, measure, _ = support_cells(res.density, floor)
    spath = os.path.join(out_dir, "support_cells.csv")
    meta = _std_meta(cfg, seed, K)
    meta["support_measure"] = measure
    meta["floor"] = floor
    write_csv(spath, ["level"] + [f"i{d}" for d in range(m.dim)],
              [[c.level, *c.index] for c in cells], meta)
    return [path, fpath, spath]


def op_correlations(cfg, out_dir, seed, K):
    m = build_map(cfg["map"], cfg.get("discretization", {}))
    exp = cfg["experiment"]
    phi = _parse_function(exp.get("phi", "sin:1"), K)
    psi = _parse_function(exp.get("psi", "indicator:0.0,0.5"), K)
    n_max = int(exp.get("n_max", 30))
    C, rate = correlations(m, phi, psi, n_max, K)
    rows = [[n, C[n]] for n in range(n_max + 1)]
    meta = _std_meta(cfg, seed, K)
    meta["fitted_rate"] = rate
    path = os.path.join(out_dir, exp.get("out", "correlations.csv"))
    write_csv(path, ["n", "C"], rows, meta)
    return [path]


def op_wild(cfg, out_dir, seed, K):
    exp = cfg["experiment"]
    mc = cfg["map"]
    alphas = exp.get("alphas", [float(mc.get("alpha", 1.0))])
    rows = []
    for a in alphas:
        rep = wild_escape(
            float(a), float(mc.get("zeta", 1.0)), int(mc.get("k0", 4)),
            int(exp.get("orbits", 10000)), int(exp.get("horizon", 100000)),
            threshold=float(exp.get("threshold", 2.0**-20)),
            seed=seed, i_max=int(mc.get("i_max", 40)),
        )
        rows.append(rep.csv_row())
    path = os.path.join(out_dir, exp.get("out", "wild.csv"))
    write_csv(path, ["alpha", "zeta", "k0", "orbits", "horizon", "threshold",
                     "escaped_fraction", "absorbed_fraction", "drift",
                     "drift_se", "drift_exact"], rows, _std_meta(cfg, seed, K))
    return [path]


def op_regular_domain(cfg, out_dir, seed, K):
    exp = cfg["experiment"]
    kind = exp.get("region_kind", "intervals")
    data = exp["region"]
    if kind == "intervals":
        region = Region.intervals([tuple(p) for p in data])
    elif kind == "rects":
        region = Region.rects([tuple(p) for p in data])
    else:
        region = Region.polygon([tuple(p) for p in data])
    params = build_space(cfg["space"])
    alpha = float(exp.get("alpha_exponent", 1.0 - params.s * params.p))
    cert = greedy_regular_decompose(region, alpha, int(exp.get("max_level", 10)))
    ok, worst, report = verify_regular_domain(cert)
    jpath = os.path.join(out_dir, "certificate.json")
    with open(jpath, "w", encoding="utf-8") as fh:
        fh.write(cert.to_json())
    rows = [[kind, alpha, cert.C, cert.lam, cert.k0, int(ok), worst,
             report["worst_ratio"]]]
    path = os.path.join(out_dir, exp.get("out", "regular_domain.csv"))
    write_csv(path, ["region", "alpha", "C", "lambda", "k0", "verified",
                     "worst_level", "worst_ratio"], rows, _std_meta(cfg, seed, K))
    return [path, jpath]


def op_compare_norms(cfg, out_dir, seed, K):
    exp = cfg["experiment"]
    params = build_space(cfg["space"])
    fns = norm_corpus(K, int(exp.get("n_corpus", 100)), seed)
    reports = inclusion_suite(fns, params.s)
    rows = [r.csv_row() for r in reports]
    meta = _std_meta(cfg, seed, K)
    meta["violations"] = sum(
        (not r.keller_ok) + (not r.liverani_ok) + (not r.butterley_ok)
        for r in reports
    )
    path = os.path.join(out_dir, exp.get("out", "compare_norms.csv"))
    write_csv(path, ["id", "s", "K", "keller", "butterley", "liverani",
                     "besov_haar_11", "besov_osc", "keller_ok", "liverani_ok",
                     "butterley_ok"], rows, meta)
    return [path]


_OPERATIONS = {
    "norm": op_norm,
    "operator": op_operator,
    "spectrum": op_spectrum,
    "ly": op_ly,
    "acim": op_acim,
    "correlations": op_correlations,
    "wild": op_wild,
    "regular-domain": op_regular_domain,
    "compare-norms": op_compare_norms,
}


def run_config(path, out_dir=None, seed=None, level=None, operation=None,
               threads=None):
    with open(path, "rb") as fh:
        cfg = tomllib.load(fh)
    _check_keys(cfg)
    exp = cfg.setdefault("experiment", {})
    operation = operation or exp.get("operation")
    if operation not in _OPERATIONS:
        raise ConfigError(f"unknown operation {operation!r}")
    disc = cfg.get("discretization", {})
    K = int(level if level is not None else disc.get("level", 10))
    seed = int(seed if seed is not None else exp.get("seed", DEFAULT_SEED))
    out_dir = out_dir or "."
    os.makedirs(out_dir, exist_ok=True)
    if threads:
        try:  # optional; numerical results do not depend on it
            from threadpoolctl import threadpool_limits

            threadpool_limits(limits=int(threads))
        except Exception:
            pass
    return _OPERATIONS[operation](cfg, out_dir, seed, K)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="besovtransfer",
        description="Experiments with transfer operators on Besov spaces "
                    "over dyadic grids.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    list_p = sub.add_parser("list-bestiary", help="available map families")
    list_p.add_argument("--json", action="store_true")
    for name in ["run"] + sorted(_OPERATIONS):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out-dir", default=".")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--level", type=int, default=None)
    args = parser.parse_args(argv)

    if args.command == "list-bestiary":
        if args.json:
            print(json.dumps(BESTIARY, indent=1, sort_keys=True))
        else:
            for row in BESTIARY:
                print(f"{row['name']:16s} {row['params']:55s} r_ess: {row['r_ess']}")
        return 0

    operation = None if args.command == "run" else args.command
    try:
        files = run_config(args.config, args.out_dir, args.seed, args.level,
                           operation, args.threads)
    except (ConfigError, FileNotFoundError, KeyError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    for f in files:
        print(f)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
