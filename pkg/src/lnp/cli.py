"""Command-line front end: lnp {simulate|fit|test|peppf|diagnose}.

Every command is deterministic under a fixed seed and configuration; the
seed falls back to the LNP_SEED environment variable when no flag or
config value supplies one.  Exit codes: 0 success, 2 validation error,
3 numerical error, 4 I/O error.
"""

import argparse
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import report
from .crm import CrmSpec
from .errors import ValidationError
from .mixture import bayes_factor, component_summaries, pacf, summarize_densities
from .partition import (
    LnpParams,
    TwoSamplePartition,
    enumerate_two_sample_partitions,
    log_peppf_lnp_dirichlet,
    log_peppf_lnp_general,
    log_peppf_lnp_stable,
    log_peppf_nested,
)
from .sampler import ChainConfig, GammaPrior, run_chain, write_chain_csv
from .specialfn import JMethod

_RUN_KEYS_REQUIRED = ("iterations", "burn_in", "seed")
_RUN_KEYS_OPTIONAL = {
    "s0": float,
    "S0": float,
    "w": float,
    "W": float,
    "a": (float, type(None)),
    "A": float,
    "gamma_prior": dict,
    "j_method": dict,
    "sigma0_grid_size": int,
    "gamma_proposal_sd": float,
    "density_grid_size": int,
    "chains": int,
    "trace_points": list,
    "trace_sample": int,
}


@dataclass
class RunConfig:
    """Validated run settings; defaults follow the reference study."""

    iterations: int = 10_000
    burn_in: int = 5_000
    seed: int = 0
    s0: float = 1.0
    S0: float = 1.0
    w: float = 1.0
    W: float = 100.0
    a: float = None
    A: float = 2.0
    gamma_prior: dict = field(default_factory=lambda: {"shape": 1.0, "rate": 1.0})
    j_method: dict = field(default_factory=lambda: {"kind": "quadrature"})
    sigma0_grid_size: int = 200
    gamma_proposal_sd: float = 0.5
    density_grid_size: int = 512
    chains: int = 1
    trace_points: list = field(default_factory=list)
    trace_sample: int = 1

    def chain_config(self, seed=None):
        method = JMethod(
            kind=self.j_method.get("kind", "quadrature"),
            mc_samples=int(self.j_method.get("mc_samples", 100_000)),
            seed=int(self.j_method.get("seed", 0)),
        )
        return ChainConfig(
            iterations=self.iterations,
            burn_in=self.burn_in,
            seed=self.seed if seed is None else seed,
            s0=self.s0,
            S0=self.S0,
            w=self.w,
            W=self.W,
            A=self.A,
            a=self.a,
            gamma_prior=GammaPrior(
                float(self.gamma_prior.get("shape", 1.0)),
                float(self.gamma_prior.get("rate", 1.0)),
            ),
            j_method=method,
            sigma0_grid_size=self.sigma0_grid_size,
            gamma_proposal_sd=self.gamma_proposal_sd,
            density_grid_size=self.density_grid_size,
        )

    def echo(self):
        payload = {k: getattr(self, k) for k in (
            "iterations", "burn_in", "seed", "s0", "S0", "w", "W", "a", "A",
            "gamma_prior", "j_method", "sigma0_grid_size", "gamma_proposal_sd",
            "density_grid_size", "chains", "trace_points", "trace_sample",
        )}
        return payload

    def content_hash(self):
        canon = json.dumps(self.echo(), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def load_run_config(path):
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path}: invalid JSON ({exc})") from exc
    if not isinstance(payload, dict):
        raise ValidationError(f"config {path}: top level must be an object")
    for key in _RUN_KEYS_REQUIRED:
        if key not in payload:
            raise ValidationError(f"config {path}: missing required key '{key}'")
    known = set(_RUN_KEYS_REQUIRED) | set(_RUN_KEYS_OPTIONAL)
    unknown = sorted(set(payload) - known)
    if unknown:
        raise ValidationError(f"config {path}: unknown keys {unknown}")
    config = RunConfig()
    for key, value in payload.items():
        setattr(config, key, value)
    config.iterations = int(config.iterations)
    config.burn_in = int(config.burn_in)
    config.seed = int(config.seed)
    return config


def _apply_overrides(config, args):
    for key in (
        "iterations", "burn_in", "seed", "s0", "S0", "w", "W", "a", "A",
        "sigma0_grid_size", "gamma_proposal_sd", "density_grid_size", "chains",
        "trace_sample",
    ):
        value = getattr(args, key, None)
        if value is not None:
            setattr(config, key, value)
    if getattr(args, "trace_points", None):
        config.trace_points = list(args.trace_points)
    if getattr(args, "mc_j", False):
        config.j_method = {"kind": "monte_carlo", "mc_samples": args.mc_samples}
    if config.seed is None:
        config.seed = int(os.environ.get("LNP_SEED", "0"))
    if config.burn_in >= config.iterations:
        raise ValidationError("burn_in must be smaller than iterations")
    return config


def _add_run_flags(parser):
    parser.add_argument("--config", help="JSON config file (flags override it)")
    parser.add_argument("--iterations", type=int)
    parser.add_argument("--burn-in", dest="burn_in", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--s0", type=float)
    parser.add_argument("--S0", type=float)
    parser.add_argument("--w", type=float)
    parser.add_argument("--W", type=float)
    parser.add_argument("--a", type=float)
    parser.add_argument("--A", type=float)
    parser.add_argument("--sigma0-grid-size", dest="sigma0_grid_size", type=int)
    parser.add_argument("--gamma-proposal-sd", dest="gamma_proposal_sd", type=float)
    parser.add_argument("--density-grid-size", dest="density_grid_size", type=int)
    parser.add_argument("--chains", type=int)
    parser.add_argument("--mc-j", action="store_true",
                        help="evaluate the J integral by Monte Carlo")
    parser.add_argument("--mc-samples", type=int, default=100_000)
    parser.add_argument("--trace-points", dest="trace_points", type=float, nargs="+")
    parser.add_argument("--trace-sample", dest="trace_sample", type=int, choices=(1, 2))
    parser.add_argument("--no-plots", action="store_true")


def _build_config(args):
    config = load_run_config(args.config) if args.config else RunConfig()
    if args.config is None and args.seed is None:
        config.seed = int(os.environ.get("LNP_SEED", "0"))
    return _apply_overrides(config, args)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args):
    seed = args.seed if args.seed is not None else int(os.environ.get("LNP_SEED", "0"))
    data = data_mod.generate_scenario(args.scenario, args.n1, args.n2, seed)
    comment = f"scenario={args.scenario} n1={args.n1} n2={args.n2} seed={seed}"
    data_mod.save_csv(data, args.out, header_comment=comment)
    print(f"wrote {args.n1 + args.n2} rows to {args.out}")
    return 0


def _run_chains(data, config):
    """One output per chain, sub-seeded deterministically from the base seed."""
    if config.chains <= 1:
        return [run_chain((data.sample1, data.sample2), config.chain_config())]
    seeds = [
        int(np.random.SeedSequence([config.seed, i]).generate_state(1)[0])
        for i in range(config.chains)
    ]
    grid = None
    configs = []
    for chain_seed in seeds:
        cc = config.chain_config(seed=chain_seed)
        if grid is None:
            from .sampler import default_density_grid

            grid = default_density_grid(
                data.sample1, data.sample2, config.density_grid_size
            )
        configs.append(
            ChainConfig(
                **{
                    **cc.__dict__,
                    "density_grid": grid,
                }
            )
        )
    with ProcessPoolExecutor(max_workers=min(config.chains, os.cpu_count() or 1)) as pool:
        return list(pool.map(_chain_job, [(data.sample1, data.sample2, c) for c in configs]))


def _chain_job(payload):
    x1, x2, config = payload
    return run_chain((x1, x2), config)


def _pool_outputs(outputs):
    if len(outputs) == 1:
        return outputs[0]
    from .sampler import ChainOutput

    records = {
        name: np.concatenate([o.records[name] for o in outputs])
        for name in outputs[0].records
    }
    return ChainOutput(
        records=records,
        grid=outputs[0].grid,
        density1=np.concatenate([o.density1 for o in outputs]),
        density2=np.concatenate([o.density2 for o in outputs]),
        seed=outputs[0].seed,
        n_retained=sum(o.n_retained for o in outputs),
    )


def _write_density_csv(summary, path, comment):
    with open(path, "w") as fh:
        fh.write(f"# {comment}\n")
        fh.write("grid,mean1,q05_1,q95_1,mean2,q05_2,q95_2\n")
        for i in range(summary.grid.size):
            cells = (
                summary.grid[i],
                summary.mean1[i],
                summary.band1[0][i],
                summary.band1[1][i],
                summary.mean2[i],
                summary.band2[0][i],
                summary.band2[1][i],
            )
            fh.write(",".join(repr(float(c)) for c in cells) + "\n")


def _fit_to_dir(data, config, out_dir, make_plots=True):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = _run_chains(data, config)
    pooled = _pool_outputs(outputs)
    comment = f"config-hash: {config.content_hash()}"
    if len(outputs) == 1:
        write_chain_csv(pooled, out_dir / "chain.csv", header_comment=comment)
    else:
        for i, out in enumerate(outputs):
            write_chain_csv(out, out_dir / f"chain_{i:02d}.csv", header_comment=comment)
        write_chain_csv(pooled, out_dir / "chain.csv", header_comment=comment)
    summary = summarize_densities(pooled.grid, pooled.density1, pooled.density2)
    _write_density_csv(summary, out_dir / "density.csv", comment)
    np.savez_compressed(
        out_dir / "density_draws.npz",
        grid=pooled.grid,
        density1=pooled.density1.astype(np.float32),
        density2=pooled.density2.astype(np.float32),
        iters=pooled.records["iter"],
    )
    tables = component_summaries(pooled.records)
    bf = bayes_factor(pooled.records)
    summaries = {
        "K1": {str(k): v for k, v in sorted(tables.k1.items())},
        "K2": {str(k): v for k, v in sorted(tables.k2.items())},
        "K12": {str(k): v for k, v in sorted(tables.k12.items())},
        "map": {"K1": tables.map_k1, "K2": tables.map_k2, "K12": tables.map_k12},
        "bayes_factor": None if math.isinf(bf.value) else bf.value,
        "bayes_factor_smoothed": bf.smoothed,
        "posterior_p_homogeneous": bf.posterior_p1,
        "prior_odds": bf.prior_odds,
        "manifest": {
            "config": config.echo(),
            "config_hash": config.content_hash(),
            "seed": config.seed,
            "chains": config.chains,
            "n_retained": pooled.n_retained,
            "provenance": data.provenance,
        },
    }
    (out_dir / "summaries.json").write_text(json.dumps(summaries, indent=2) + "\n")
    if make_plots:
        report.density_figure(summary, out_dir / "density.png", data)
    return pooled, summary, summaries


def cmd_fit(args):
    data = data_mod.load_csv(args.data)
    config = _build_config(args)
    _, _, summaries = _fit_to_dir(data, config, args.out, make_plots=not args.no_plots)
    print(f"fit complete: MAP K1={summaries['map']['K1']} "
          f"K2={summaries['map']['K2']} K12={summaries['map']['K12']}; "
          f"outputs in {args.out}")
    return 0


def cmd_test(args):
    data = data_mod.load_csv(args.data)
    config = _build_config(args)
    out_dir = args.out or (Path(args.data).with_suffix("") .as_posix() + "_test_out")
    _, _, summaries = _fit_to_dir(data, config, out_dir, make_plots=not args.no_plots)
    bf = summaries["bayes_factor"]
    bf_text = "inf" if bf is None else f"{bf:.6g}"
    p1 = summaries["posterior_p_homogeneous"]
    if bf is None or bf > 1.0:
        verdict = "evidence for homogeneity"
    elif bf < 0.01:
        verdict = "reject homogeneity: the samples come from different distributions"
    else:
        verdict = "weak evidence against homogeneity"
    print(f"BF = {bf_text}")
    print(f"prior odds (I=0 vs I=1) = {summaries['prior_odds']:.6g}")
    print(f"P(I=1 | data) = {p1:.6g}")
    print(f"verdict: {verdict}")
    return 0


def _peppf_models(args):
    requested = args.model or ["all"]
    if "all" in requested:
        if args.family == "stable":
            return ["nested", "general", "stable"]
        return ["nested", "general", "dirichlet"]
    return requested


def _peppf_params(args):
    if args.family == "stable":
        outer = CrmSpec("stable", sigma=args.sigma)
        inner = CrmSpec("stable", sigma=args.sigma0)
    else:
        outer = CrmSpec("gamma", args.c)
        inner = CrmSpec("gamma", args.c0)
    return LnpParams(outer, inner, args.gamma)


def _evaluate_peppf(model, params, args, part):
    if model == "nested":
        return log_peppf_nested(params, part)
    if model == "general":
        return log_peppf_lnp_general(params, part)
    if model == "stable":
        return log_peppf_lnp_stable(args.sigma, args.sigma0, args.gamma, part)
    if model == "dirichlet":
        return log_peppf_lnp_dirichlet(args.c, args.c0, args.gamma, part)
    raise ValidationError(f"unknown model {model!r}")


def cmd_peppf(args):
    params = _peppf_params(args)
    models = _peppf_models(args)
    if args.normalize:
        n1, n2 = args.normalize
        parts = enumerate_two_sample_partitions(n1, n2)
        for model in models:
            total = sum(
                math.exp(_evaluate_peppf(model, params, args, p)) for p in parts
            )
            print(f"{model}: sum over {len(parts)} partitions of "
                  f"({n1},{n2}) = {total:.6f}")
        return 0
    if not args.partition:
        raise ValidationError("provide --partition JSON or --normalize N1 N2")
    text = args.partition
    if os.path.exists(text):
        text = Path(text).read_text()
    part = TwoSamplePartition.from_json(text)
    results = {}
    for model in models:
        logp = _evaluate_peppf(model, params, args, part)
        results[model] = logp
        print(f"{model}: log_peppf = {logp:.10f}   peppf = {math.exp(logp):.10g}")
        if model == "nested":
            from .crm import prior_coincidence
            from .partition import log_eppf

            pi1 = prior_coincidence(params.outer)
            first = math.log(pi1) + log_eppf(params.inner, part.pooled_freqs)
            second = math.exp(logp) - math.exp(first)
            print(f"  first-term contribution = {math.exp(first):.10g}, "
                  f"second-term contribution = {second:.10g}"
                  + ("  (exactly 0: shared cluster present)" if part.k0 > 0 else ""))
    names = list(results)
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            a, b = math.exp(results[names[i]]), math.exp(results[names[j]])
            rel = abs(a - b) / max(abs(a), abs(b), 1e-300)
            print(f"rel_diff({names[i]}, {names[j]}) = {rel:.3e}")
    return 0


def cmd_diagnose(args):
    from .sampler import read_chain_csv

    records = read_chain_csv(args.chain)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    max_lag = args.max_lag
    p_sigma = pacf(records["sigma"], max_lag)
    p_sigma0 = pacf(records["sigma0"], max_lag)
    with open(out_dir / "pacf.csv", "w") as fh:
        fh.write("lag,sigma,sigma0\n")
        fh.write("0,1.0,1.0\n")  # lag 0 is 1 by convention
        for h in range(max_lag):
            fh.write(f"{h + 1},{float(p_sigma[h])!r},{float(p_sigma0[h])!r}\n")
    lags = np.arange(1, max_lag + 1)
    if not args.no_plots:
        report.pacf_figure(lags, p_sigma, p_sigma0, len(records["sigma"]),
                           out_dir / "pacf.png")
    if args.trace_points:
        draws_path = Path(args.chain).parent / "density_draws.npz"
        if not draws_path.exists():
            raise ValidationError(
                f"density trace requested but {draws_path} not found; "
                "re-run fit to produce it"
            )
        stash = np.load(draws_path)
        grid = stash["grid"]
        dens = stash["density1"] if args.trace_sample == 1 else stash["density2"]
        iters = stash["iters"]
        idx = [int(np.argmin(np.abs(grid - p))) for p in args.trace_points]
        labels = [f"x={grid[i]:.4g}" for i in idx]
        with open(out_dir / "trace.csv", "w") as fh:
            fh.write("iter," + ",".join(
                f"f{args.trace_sample}_at_{grid[i]:.6g}" for i in idx) + "\n")
            for r in range(dens.shape[0]):
                fh.write(str(int(iters[r])) + "," +
                         ",".join(repr(float(dens[r, i])) for i in idx) + "\n")
        if not args.no_plots:
            report.trace_figure(iters, [dens[:, i] for i in idx], labels,
                                out_dir / "trace.png")
    print(f"diagnostics written to {out_dir}")
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lnp",
        description="Latent nested priors: two-sample density estimation and "
        "homogeneity testing",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a synthetic two-sample dataset")
    p.add_argument("--scenario", required=True,
                   choices=sorted(data_mod.SCENARIOS) + ["iris"])
    p.add_argument("--n1", type=int, default=100)
    p.add_argument("--n2", type=int, default=100)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_simulate_dispatch)

    p = sub.add_parser("fit", help="run the Gibbs sampler and write outputs")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    _add_run_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("test", help="fit, then report the homogeneity Bayes factor")
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    _add_run_flags(p)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("peppf", help="evaluate partition probabilities")
    p.add_argument("--partition", help="partition JSON (inline or a file path)")
    p.add_argument("--model", action="append",
                   choices=["nested", "general", "stable", "dirichlet", "all"])
    p.add_argument("--family", choices=["stable", "gamma"], default="stable")
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--sigma0", type=float, default=0.5)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--c0", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--normalize", type=int, nargs=2, metavar=("N1", "N2"))
    p.set_defaults(func=cmd_peppf)

    p = sub.add_parser("diagnose", help="PACF and density-trace diagnostics")
    p.add_argument("--chain", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-lag", dest="max_lag", type=int, default=30)
    p.add_argument("--trace-points", dest="trace_points", type=float, nargs="+")
    p.add_argument("--trace-sample", dest="trace_sample", type=int,
                   choices=(1, 2), default=1)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_diagnose)
    return parser


def _simulate_dispatch(args):
    if args.scenario == "iris":
        data = data_mod.iris_petal_width()
        data_mod.save_csv(data, args.out, header_comment="iris petal width (mm)")
        print(f"wrote {data.sample1.size + data.sample2.size} rows to {args.out}")
        return 0
    return cmd_simulate(args)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ArithmeticError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
