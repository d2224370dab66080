"""Config-driven command line entry point.

Subcommands wire structure discovery, sampling and diagnostics into
reproducible experiments:

- ``structure``  estimate the dependence graph, write edges.txt / perm.txt
- ``run``        run one adaptive chain, write trace.csv and friends
- ``bench``      time backend update/sampling kernels over a size grid
- ``bfactor``    run a chain and emit the proposal-quality series

Configuration is a flat key=value INI file (sections [target], [run],
[structure], [bench], [output]); command-line flags override file keys, and
the PRECMC_OUTPUT_DIR environment variable overrides the configured output
directory (flags still win). Exit codes: 0 on success, 1 on runtime failure,
2 on usage or configuration errors.
"""

import argparse
import configparser
import os
import sys

import numpy as np

from .errors import ConfigError, PrecmcError
from .diagnostics import timing_probe
from .samplers import RunConfig, run_chain
from .sparse import factor_fill, symbolic_cholesky
from .structure import (
    build_regressor_sets,
    estimate_edges,
    read_edges,
    read_perm,
    write_edges,
    write_perm,
)
from .targets import GaussianTarget, build_lattice_gmrf, build_spline

BENCH_COMPONENTS = ("cov_update", "l_update", "sample_cov", "sample_prec")


def _load_config(path):
    cp = configparser.ConfigParser()
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"could not parse {path}: {exc}") from exc
    return cp


def _get(cp, section, key, cast, default):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key)
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from exc


def _build_target(cp):
    name = _get(cp, "target", "name", str, "lattice_gmrf")
    if name == "lattice_gmrf":
        return build_lattice_gmrf(
            side=_get(cp, "target", "side", int, 8),
            kappa2=_get(cp, "target", "kappa2", float, 1.0),
            alpha=_get(cp, "target", "alpha", int, 1),
            sigma_obs=_get(cp, "target", "sigma_obs", float, 0.3),
            n_obs=_get(cp, "target", "n_obs", int, None),
            seed=_get(cp, "target", "seed", int, 0),
        )
    if name == "spline":
        return build_spline(
            n_basis=_get(cp, "target", "n_basis", int, 30),
            data_source=_get(cp, "target", "data", str, "synthetic"),
            seed=_get(cp, "target", "data_seed", int, 0),
            n_points=_get(cp, "target", "n_points", int, 120),
        )
    if name == "diag_gauss":
        dim = _get(cp, "target", "dim", int, 10)
        return GaussianTarget(np.eye(dim))
    raise ConfigError(f"[target] name: unknown target {name!r}")


def _output_dir(cp, args):
    if getattr(args, "output_dir", None):
        return args.output_dir
    env = os.environ.get("PRECMC_OUTPUT_DIR")
    if env:
        return env
    return _get(cp, "output", "dir", str, "precmc_out")


def _echo_effective_config(path, sections):
    cp = configparser.ConfigParser()
    for name, kv in sections.items():
        cp[name] = {k: str(v) for k, v in kv.items() if v is not None}
    with open(path, "w") as fh:
        cp.write(fh)


def _target_section(cp):
    name = _get(cp, "target", "name", str, "lattice_gmrf")
    if name == "lattice_gmrf":
        return {
            "name": name,
            "side": _get(cp, "target", "side", int, 8),
            "kappa2": _get(cp, "target", "kappa2", float, 1.0),
            "alpha": _get(cp, "target", "alpha", int, 1),
            "sigma_obs": _get(cp, "target", "sigma_obs", float, 0.3),
            "n_obs": _get(cp, "target", "n_obs", int, None),
            "seed": _get(cp, "target", "seed", int, 0),
        }
    if name == "diag_gauss":
        return {"name": name, "dim": _get(cp, "target", "dim", int, 10)}
    return {
        "name": name,
        "n_basis": _get(cp, "target", "n_basis", int, 30),
        "data": _get(cp, "target", "data", str, "synthetic"),
        "data_seed": _get(cp, "target", "data_seed", int, 0),
        "n_points": _get(cp, "target", "n_points", int, 120),
    }


def cmd_structure(args):
    cp = _load_config(args.config)
    target = _build_target(cp)
    out = _output_dir(cp, args)
    os.makedirs(out, exist_ok=True)

    tol = args.tol if args.tol is not None else _get(cp, "structure", "tol", float, 1e-8)
    probes = args.probes if args.probes is not None else _get(cp, "structure", "probes", int, 3)
    probe_seed = (
        args.probe_seed if args.probe_seed is not None else _get(cp, "structure", "seed", int, 0)
    )

    edges = estimate_edges(target, tol=tol, n_probes=probes, probe_seed=probe_seed)
    perm, _sets = build_regressor_sets(edges)

    edges_path = os.path.join(out, "edges.txt")
    perm_path = os.path.join(out, "perm.txt")
    write_edges(edges_path, edges)
    write_perm(perm_path, perm)

    natural = factor_fill(edges)
    reordered = factor_fill(edges, perm)
    print(f"n = {edges.n}")
    print(f"edges = {edges.edge_count}")
    print(f"factor nnz natural order = {natural}")
    print(f"factor nnz reordered     = {reordered}")
    print(f"wrote {edges_path} and {perm_path}")

    _echo_effective_config(
        os.path.join(out, "effective_config.ini"),
        {
            "target": _target_section(cp),
            "structure": {"tol": tol, "probes": probes, "seed": probe_seed},
            "output": {"dir": out},
        },
    )
    return 0


def _run_config_from(cp, args, out):
    kernel = args.kernel or _get(cp, "run", "kernel", str, "mala")
    backend = args.backend or _get(cp, "run", "backend", str, "precision")
    cfg = RunConfig(
        kernel=kernel,
        backend=backend,
        iterations=args.iterations
        if args.iterations is not None
        else _get(cp, "run", "iterations", int, 10_000),
        thin=args.thin if args.thin is not None else _get(cp, "run", "thin", int, 50),
        seed=args.seed if args.seed is not None else _get(cp, "run", "seed", int, 0),
        warmup=args.warmup if args.warmup is not None else _get(cp, "run", "warmup", int, 100),
        sigma0=_get(cp, "run", "sigma0", float, None),
        bfactor_every=args.bfactor_every
        if args.bfactor_every is not None
        else _get(cp, "run", "bfactor_every", int, 0),
        structure=_get(cp, "run", "structure", str, "auto"),
        structure_tol=_get(cp, "structure", "tol", float, 1e-8),
        structure_probes=_get(cp, "structure", "probes", int, 3),
        structure_seed=_get(cp, "structure", "seed", int, 0),
        accept_window=_get(cp, "run", "accept_window", int, 1000),
        output_dir=out,
    )
    coords = _get(cp, "run", "trace_coords", str, None)
    if coords:
        cfg = RunConfig(**{**cfg.__dict__, "trace_coords": tuple(int(s) for s in coords.split(","))})

    edges_path = _get(cp, "run", "structure_edges", str, None)
    perm_path = _get(cp, "run", "structure_perm", str, None)
    if edges_path and perm_path:
        try:
            edges = read_edges(edges_path)
            perm = read_perm(perm_path)
            factor = symbolic_cholesky(edges.permuted(perm))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"structure files unusable: {exc}") from exc
        cfg = RunConfig(
            **{
                **cfg.__dict__,
                "regressor_sets": [factor.rows[j] for j in range(edges.n)],
                "perm": perm,
            }
        )
    return cfg


def _echo_run_config(cp, cfg, out, path):
    run_kv = {
        "kernel": cfg.kernel,
        "backend": cfg.backend,
        "iterations": cfg.iterations,
        "thin": cfg.thin,
        "seed": cfg.seed,
        "warmup": cfg.warmup,
        "sigma0": cfg.sigma0,
        "bfactor_every": cfg.bfactor_every,
        "structure": cfg.structure,
        "accept_window": cfg.accept_window,
        "trace_coords": ",".join(str(c) for c in cfg.trace_coords)
        if cfg.trace_coords is not None
        else None,
        "structure_edges": _get(cp, "run", "structure_edges", str, None),
        "structure_perm": _get(cp, "run", "structure_perm", str, None),
    }
    _echo_effective_config(
        path,
        {
            "target": _target_section(cp),
            "run": run_kv,
            "structure": {
                "tol": cfg.structure_tol,
                "probes": cfg.structure_probes,
                "seed": cfg.structure_seed,
            },
            "output": {"dir": out},
        },
    )


def cmd_run(args, force_bfactor=False):
    cp = _load_config(args.config)
    target = _build_target(cp)
    out = _output_dir(cp, args)
    os.makedirs(out, exist_ok=True)
    cfg = _run_config_from(cp, args, out)
    if cfg.regressor_sets is not None and len(cfg.regressor_sets) != target.dim:
        raise ConfigError(
            f"structure files describe {len(cfg.regressor_sets)} coordinates, "
            f"target has {target.dim}"
        )
    if force_bfactor and cfg.bfactor_every <= 0:
        every = max(1, cfg.iterations // 100)
        cfg = RunConfig(**{**cfg.__dict__, "bfactor_every": every})
    cfg = cfg.resolved(target)
    _echo_run_config(cp, cfg, out, os.path.join(out, "effective_config.ini"))

    result = run_chain(cfg, target)
    rate = result.chain.accepts / max(result.chain.iter, 1)
    print(f"iterations = {result.chain.iter}")
    print(f"acceptance rate = {rate:.4f}")
    print(f"final sigma = {result.scale.sigma:.6g}")
    if result.bfactor is not None and len(result.bfactor):
        print(f"b: start = {result.bfactor[0, 1]:.4g}, final = {result.bfactor[-1, 1]:.4g}")
    for name, path in sorted(result.paths.items()):
        print(f"wrote {path}")
    return 0


def cmd_bench(args):
    cp = _load_config(args.config)
    out = _output_dir(cp, args)
    os.makedirs(out, exist_ok=True)

    raw_components = args.components or _get(cp, "bench", "components", str, "l_update,cov_update")
    raw_sizes = args.sizes or _get(cp, "bench", "sizes", str, "100,400,1600")
    reps = args.reps if args.reps is not None else _get(cp, "bench", "reps", int, 50)
    components = [c.strip() for c in raw_components.split(",") if c.strip()]
    try:
        sizes = [int(s) for s in raw_sizes.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"[bench] sizes: cannot parse {raw_sizes!r}") from None
    for c in components:
        if c not in BENCH_COMPONENTS:
            raise ConfigError(f"[bench] components: unknown component {c!r}")

    rows = []
    for comp in components:
        for n in sizes:
            mean_ns = timing_probe(comp, n, reps)
            rows.append((comp, n, mean_ns))
            print(f"{comp:12s} n={n:6d}  mean = {mean_ns / 1e6:.4f} ms")

    path = os.path.join(out, "timings.csv")
    with open(path, "w") as fh:
        fh.write("component,n,mean_ns\n")
        for comp, n, mean_ns in rows:
            fh.write(f"{comp},{n},{mean_ns:.1f}\n")
    print(f"wrote {path}")

    means = {(c, n): m for c, n, m in rows}
    if len(sizes) >= 2:
        lo, hi = sizes[0], sizes[-1]
        if ("l_update", lo) in means and ("cov_update", lo) in means:
            r_l = means[("l_update", hi)] / means[("l_update", lo)]
            r_c = means[("cov_update", hi)] / means[("cov_update", lo)]
            print(f"growth {lo} -> {hi}: l_update x{r_l:.1f}, cov_update x{r_c:.1f}")
    if ("sample_prec", 400) in means and ("sample_cov", 400) in means:
        if means[("sample_prec", 400)] > means[("sample_cov", 400)]:
            print("note: sparse sampling slower than dense at n=400 on this machine")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="precmc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("-c", "--config", default=None, help="INI config file")
        sp.add_argument("--output-dir", default=None, help="output directory (overrides config)")

    sp = sub.add_parser("structure", help="estimate the conditional-dependence structure")
    add_common(sp)
    sp.add_argument("--tol", type=float, default=None)
    sp.add_argument("--probes", type=int, default=None)
    sp.add_argument("--probe-seed", type=int, default=None)
    sp.set_defaults(func=cmd_structure)

    for name, force in (("run", False), ("bfactor", True)):
        sp = sub.add_parser(name, help="run an adaptive chain" if not force else
                            "run a chain and emit the proposal-quality series")
        add_common(sp)
        sp.add_argument("--kernel", choices=["mhrw", "mala"], default=None)
        sp.add_argument("--backend", choices=["covariance", "precision"], default=None)
        sp.add_argument("--iterations", type=int, default=None)
        sp.add_argument("--thin", type=int, default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--warmup", type=int, default=None)
        sp.add_argument("--bfactor-every", type=int, default=None)
        sp.set_defaults(func=lambda a, f=force: cmd_run(a, force_bfactor=f))

    sp = sub.add_parser("bench", help="time backend kernels over a size grid")
    add_common(sp)
    sp.add_argument("--components", default=None, help="comma list of kernels to time")
    sp.add_argument("--sizes", default=None, help="comma list of dimensions")
    sp.add_argument("--reps", type=int, default=None)
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PrecmcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
