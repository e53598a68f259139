"""Command-line experiment runner.

Subcommands::

    simulate-linear    synthetic data for the matrix-variate linear pipeline
    fit-linear         closed-form full, two-step and cut posteriors
    simulate-rollcall  synthetic roll-call votes with covariates
    fit                MCMC for one regime (full, twostep or cut)
    diagnose           summaries of a trace directory
    compare            side-by-side tables and figures across regimes

Settings come from an optional TOML file (``--config``) and ``--set key=value``
overrides; unknown keys are rejected.  Exit status is 0 on success, 1 for
user errors and 2 for numerical failures.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from . import diagnostics as dg
from . import io
from . import linear_pipeline as lp
from . import svgplot
from .engine import (
    ChainConfig,
    NumericalFailure,
    run_cut,
    run_full,
    run_two_step,
    run_working_first_level,
)
from .irt import DataError, IrtFirstModule, RollCallData, RollCallSettings, simulate_rollcall
from .mvn import DimensionError, NotPositiveDefiniteError
from .selection import CovariateMatrix, SelectionSecondModule, SingularModelError

log = logging.getLogger("cutinfer")


class UserError(Exception):
    pass


CHAIN_KEYS = {
    "chains": 4, "burn_in": 1000, "samples": 1000, "thin": 1, "inner_steps": 200,
    "a1": 1.0, "a2": 1.0, "seed": 0, "n_jobs": 1, "check_every": 100,
}

DEFAULTS = {
    "simulate-linear": {"N": 50, "J": 10, "L": 2, "K": 3, "sigma2_star": 1.0, "tau2_star": 1.0,
                        "xi_scale": 1.0, "seed": 0},
    "fit-linear": {"sigma2": 1.0, "tau2": 1.0, "xi_prior_var": 1.0},
    "simulate-rollcall": {"N": 50, "J": 200, "final_fraction": 0.5, "bridge_fraction": -1.0,
                          "eta0": 0.0, "eta": [1.5, 0.0, 0.0, -1.5, 0.0], "alpha_sd": 2.0,
                          "alpha_zero_fraction": 0.0, "mu_sd": 1.0, "rho_beta": 0.0,
                          "sigma2_beta": 1.0, "missing_fraction": 0.0, "seed": 0},
    "fit": {**CHAIN_KEYS, "standardize": True, "tied_sweeps": 50},
    "diagnose": {"top": 100},
    "compare": {"top": 100},
}


# ---------------------------------------------------------------------------
# configuration

def _parse_value(text):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _coerce(key, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise UserError(f"{key} must be true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise UserError(f"{key} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise UserError(f"{key} must be a number")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list) or not all(isinstance(v, (int, float)) for v in value):
            raise UserError(f"{key} must be a list of numbers")
        return [float(v) for v in value]
    return value


def resolve_config(command, path=None, overrides=()):
    defaults = DEFAULTS[command]
    cfg = dict(defaults)
    given = {}
    if path:
        p = Path(path)
        if not p.is_file():
            raise UserError(f"{p}: no such config file")
        try:
            given.update(tomllib.loads(p.read_text()))
        except tomllib.TOMLDecodeError as exc:
            raise UserError(f"{p}: {exc}") from exc
    for item in overrides:
        if "=" not in item:
            raise UserError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        given[k.strip()] = _parse_value(v.strip())
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise UserError(f"unknown config keys for {command}: {', '.join(unknown)}")
    for k, v in given.items():
        cfg[k] = _coerce(k, v, defaults[k])
    return cfg


def _chain_config(cfg):
    try:
        return ChainConfig(**{k: cfg[k] for k in CHAIN_KEYS})
    except ValueError as exc:
        raise UserError(str(exc)) from exc


def _out_dir(path):
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_timing(d, t0):
    io.write_json(d / "timing.json", {"wall_time_seconds": round(time.perf_counter() - t0, 3)})


# ---------------------------------------------------------------------------
# linear pipeline

def cmd_simulate_linear(args, cfg):
    rng = np.random.default_rng(cfg["seed"])
    N, J, L, K = cfg["N"], cfg["J"], cfg["L"], cfg["K"]
    if not (L <= J and K <= N and min(N, J, L, K) >= 1):
        raise UserError("need 1 <= L <= J and 1 <= K <= N")
    W = rng.standard_normal((L, J))
    X = rng.standard_normal((N, K))
    xi = cfg["xi_scale"] * rng.standard_normal((K, L))
    lcfg = lp.LinearPipelineConfig(W, X, cfg["sigma2_star"], cfg["tau2_star"])
    Y, zeta = lp.simulate(lcfg, xi, lp.TrueVariances(cfg["sigma2_star"], cfg["tau2_star"]), rng)
    d = _out_dir(args.out)
    for name, A in (("W", W), ("X", X), ("Y", Y), ("zeta", zeta), ("xi", xi)):
        io.write_matrix(d / f"{name}.csv", A)
    io.write_json(d / "manifest.json", {"command": "simulate-linear", "config": cfg,
                                        "version": __version__})
    print(f"wrote linear pipeline data (N={N}, J={J}, L={L}, K={K}) to {d}")


def _fmt_matrix(A):
    return np.array2string(np.asarray(A), precision=6, suppress_small=True, max_line_width=120)


def cmd_fit_linear(args, cfg):
    d = Path(args.data)
    W, X, Y = (io.read_matrix(d / f"{n}.csv") for n in ("W", "X", "Y"))
    try:
        lcfg = lp.LinearPipelineConfig(W, X, cfg["sigma2"], cfg["tau2"])
    except (lp.RankDeficientError, DimensionError, ValueError) as exc:
        raise UserError(str(exc)) from exc
    if Y.shape != (lcfg.N, lcfg.J):
        raise UserError(f"Y has shape {Y.shape}, expected {(lcfg.N, lcfg.J)}")
    out = {}
    for kind in (lp.PosteriorKind.FULL, lp.PosteriorKind.TWO_STEP, lp.PosteriorKind.CUT):
        post = lp.closed_form_posterior(Y, lcfg, kind)
        out[kind.value] = post
        print(f"== {kind.value} ==")
        print("M =\n" + _fmt_matrix(post.M))
        print("U =\n" + _fmt_matrix(post.U))
        print("V =\n" + _fmt_matrix(post.V))
    scalar = (lcfg.N, lcfg.J, lcfg.L, lcfg.K) == (1, 1, 1, 1)
    if scalar:
        res = lp.lemma1_quantities(lcfg, Y, xi_prior_var=cfg["xi_prior_var"])
        kj, km, how = res.kl_joint, res.kl_marginal, f"quadrature, {res.n_grid} points"
    else:
        kj, km = lp.gaussian_kl_pair(Y, lcfg)
        how = "closed-form Gaussian"
    print(f"== KL(cut || full) check ({how}) ==")
    print(f"joint    = {kj:.10g}")
    print(f"marginal = {km:.10g}")
    print(f"|diff|   = {abs(kj - km):.3g}")
    if args.out:
        o = _out_dir(args.out)
        for k, post in out.items():
            for part in ("M", "U", "V"):
                io.write_matrix(o / f"{k}_{part}.csv", getattr(post, part))
        io.write_json(o / "manifest.json", {
            "command": "fit-linear", "config": cfg, "version": __version__,
            "inputs": {n: io.git_blob_hash(d / f"{n}.csv") for n in ("W", "X", "Y")},
            "kl_joint": kj, "kl_marginal": km,
        })


# ---------------------------------------------------------------------------
# roll-call pipeline

def cmd_simulate_rollcall(args, cfg):
    bf = cfg["bridge_fraction"]
    try:
        st = RollCallSettings(
            n_legislators=cfg["N"], n_votes=cfg["J"], final_fraction=cfg["final_fraction"],
            bridge_fraction=None if bf < 0 else bf, eta0=cfg["eta0"], eta=tuple(cfg["eta"]),
            alpha_sd=cfg["alpha_sd"], alpha_zero_fraction=cfg["alpha_zero_fraction"],
            mu_sd=cfg["mu_sd"], rho_beta=cfg["rho_beta"], sigma2_beta=cfg["sigma2_beta"],
            missing_fraction=cfg["missing_fraction"],
        )
    except ValueError as exc:
        raise UserError(str(exc)) from exc
    sim = simulate_rollcall(st, np.random.default_rng(cfg["seed"]))
    d = _out_dir(args.out)
    lids = [f"L{i + 1}" for i in range(st.n_legislators)]
    vids = [f"v{j + 1}" for j in range(st.n_votes)]
    io.write_rollcall(d / "rollcall.csv", sim.data.Y, lids, vids)
    io.write_vote_types(d / "votes.csv", sim.data.w, vids)
    io.write_covariates(d / "covariates.csv", sim.X, legislator_ids=lids)
    t = sim.truth
    io.write_json(d / "truth.json", {
        "zeta": t.zeta, "beta0": t.beta0, "beta1": t.beta1, "mu": t.mu, "alpha": t.alpha,
        "eta0": cfg["eta0"], "eta": cfg["eta"],
        "xi": [int(e != 0) for e in cfg["eta"]],
    })
    io.write_json(d / "manifest.json", {"command": "simulate-rollcall", "config": cfg,
                                        "version": __version__})
    print(f"wrote {st.n_legislators} x {st.n_votes} roll-call data with "
          f"{int(t.zeta.sum())} bridges to {d}")


def _load_rollcall(args, standardize):
    try:
        lids, vids, Y = io.read_rollcall(args.rollcall)
        vids, w = io.read_vote_types(args.votes, vids)
        data = RollCallData(Y, w, lids, vids)
        if args.covariates:
            names, Xv = io.read_covariates(args.covariates, lids)
        else:
            names, Xv = (), np.zeros((len(lids), 0))
        X = CovariateMatrix(Xv, names, standardize=standardize)
    except (DataError, io.InputError, ValueError) as exc:
        raise UserError(str(exc)) from exc
    return data, X


def _dump_failure(d, exc):
    path = d / "failure_state.txt"
    with open(path, "w") as fh:
        fh.write(f"{exc}\nregime={exc.regime} chain={exc.chain} iteration={exc.iteration}\n")
        st = exc.state
        items = vars(st).items() if hasattr(st, "__dict__") else [("state", st)]
        with np.printoptions(threshold=sys.maxsize, precision=17):
            for k, v in items:
                fh.write(f"{k} = {np.asarray(v)!r}\n")
    return path


def cmd_fit(args, cfg):
    t0 = time.perf_counter()
    data, X = _load_rollcall(args, cfg["standardize"])
    cc = _chain_config(cfg)
    first = IrtFirstModule(data, tied_sweeps=cfg["tied_sweeps"])
    second = SelectionSecondModule(X)
    d = _out_dir(args.out)
    try:
        if args.regime == "full":
            res = run_full(first, second, cc)
        else:
            working = run_working_first_level(first, cc)
            fn = run_two_step if args.regime == "twostep" else run_cut
            res = fn(first, second, cc, working=working)
    except (NumericalFailure, SingularModelError) as exc:
        if isinstance(exc, NumericalFailure):
            print(f"state dumped to {_dump_failure(d, exc)}", file=sys.stderr)
        raise
    files = io.write_traces(d, res)
    inputs = {"rollcall": args.rollcall, "votes": args.votes}
    if args.covariates:
        inputs["covariates"] = args.covariates
    manifest = {
        "command": "fit",
        "version": __version__,
        "regime": res.regime,
        "config": cfg,
        "seed": cc.seed,
        "inputs": {k: {"path": str(v), "hash": io.git_blob_hash(v)} for k, v in inputs.items()},
        "covariate_names": list(X.names),
        "shapes": {k: list(v.shape[2:]) for k, v in res.traces.items()},
        "n_chains": res.n_chains,
        "n_draws": res.n_draws,
        "threshold": cc.threshold,
        "trace_files": files,
    }
    if res.regime == "twostep":
        manifest["zeta_hat"] = res.traces["zeta"][0, 0]
    _write_timing(d, t0)
    io.write_json(d / "manifest.json", manifest)  # written last
    rep = dg.build_report(res)
    print(f"{res.regime}: {res.n_chains} chains x {res.n_draws} draws written to {d}")
    _print_report(rep, X.names)


# ---------------------------------------------------------------------------
# summaries

def _load_run(path):
    d = Path(path)
    man = io.read_json(d / "manifest.json")
    if man.get("command") != "fit":
        raise UserError(f"{d}: not a fit output directory")
    res = io.read_traces(d, man["regime"], man["shapes"])
    for k in ("zeta", "xi"):
        res.traces[k] = res.traces[k].astype(np.int8)
    return man, res


def _scale(names, items):
    s = np.ones(len(names))
    for item in items or ():
        k, _, v = item.partition("=")
        if k not in names:
            raise UserError(f"unknown covariate {k!r} in --scale")
        try:
            s[list(names).index(k)] = float(v)
        except ValueError:
            raise UserError(f"bad scale {item!r}") from None
    return s


def _print_report(rep, names):
    print("covariate           PIP    median")
    for k, nm in enumerate(names):
        print(f"{nm:<18} {rep.pip[k]:6.3f}  {int(rep.median_model[k])}")
    b = rep.bf_summary
    print(f"bridging frequency: {b.mean:.4f} [{b.lower:.4f}, {b.upper:.4f}]")
    if rep.kl_bound is not None:
        kb = rep.kl_bound
        if math.isinf(kb.value):
            print(f"KL bound: exceeds log(draws) = {kb.floor:.4f} (no draw at the empty model)")
        else:
            print(f"KL bound: {kb.value:.6f}")
    if rep.rhat:
        worst = max(rep.rhat.items(), key=lambda kv: kv[1])
        print(f"max R-hat: {worst[1]:.4f} ({worst[0]})")


def cmd_diagnose(args, cfg):
    man, res = _load_run(args.traces)
    names = man["covariate_names"]
    rep = dg.build_report(res, top=cfg["top"], scale=_scale(names, args.scale))
    d = _out_dir(args.out or Path(args.traces) / "diagnostics")
    io.write_table(d / "pip.csv", ["covariate", "pip", "median_model"],
                   [[n, rep.pip[k], int(rep.median_model[k])] for k, n in enumerate(names)])
    io.write_table(d / "rhat.csv", ["parameter", "rhat"], sorted(rep.rhat.items()))
    io.write_table(d / "cumprob.csv", ["rank", "cumulative_probability"],
                   [[r + 1, v] for r, v in enumerate(rep.cumprob)])
    io.write_table(d / "bridging_frequency.csv", ["draw", "bf"],
                   [[i, v] for i, v in enumerate(rep.bf_summary.trace)])
    io.write_table(d / "odds_ratios.csv",
                   ["covariate", "pip", "mean", "lower95", "upper95", "never_included",
                    "convention"],
                   [[n, o.pip, o.mean, o.lower, o.upper, int(o.never_included),
                     "conditional_on_inclusion"] for n, o in zip(names, rep.odds_ratios)])
    kb = rep.kl_bound
    io.write_json(d / "report.json", {
        "regime": res.regime,
        "pip": rep.pip, "median_model": rep.median_model, "rhat": rep.rhat,
        "bf": {"mean": rep.bf_summary.mean, "lower95": rep.bf_summary.lower,
               "upper95": rep.bf_summary.upper},
        "cumprob": rep.cumprob,
        "kl_bound": None if kb is None else {"value": kb.value, "n_draws": kb.n_draws,
                                             "floor": kb.floor,
                                             "exceeds_floor": kb.exceeds_floor},
    })
    _print_report(rep, names)
    print(f"diagnostics written to {d}")


def cmd_compare(args, cfg):
    runs = [_load_run(p) for p in args.runs]
    names = runs[0][0]["covariate_names"]
    if any(m["covariate_names"] != names for m, _ in runs):
        raise UserError("runs use different covariates")
    labels = [m["regime"] for m, _ in runs]
    if len(set(labels)) != len(labels):
        labels = [f"{m['regime']}:{Path(p).name}" for (m, _), p in zip(runs, args.runs)]
    scale = _scale(names, args.scale)
    reps = [dg.build_report(r, top=cfg["top"], scale=scale) for _, r in runs]
    d = _out_dir(args.out)
    io.write_table(d / "model_size.csv", ["regime", "median_model_size", "mean_model_size"],
                   [[lab, int(rep.median_model.sum()),
                     float(np.asarray(r.traces["xi"], dtype=float).sum(axis=-1).mean())
                     if len(names) else 0.0]
                    for lab, rep, (_, r) in zip(labels, reps, runs)])
    io.write_table(d / "pip.csv", ["covariate", *labels],
                   [[n, *(rep.pip[k] for rep in reps)] for k, n in enumerate(names)])
    io.write_table(d / "median_model.csv", ["covariate", *labels],
                   [[n, *(int(rep.median_model[k]) for rep in reps)] for k, n in enumerate(names)])
    io.write_table(d / "bridging_frequency.csv", ["regime", "mean", "lower95", "upper95"],
                   [[lab, rep.bf_summary.mean, rep.bf_summary.lower, rep.bf_summary.upper]
                    for lab, rep in zip(labels, reps)])
    io.write_table(d / "cumprob.csv", ["rank", *labels],
                   [[i + 1, *(rep.cumprob[i] for rep in reps)] for i in range(cfg["top"])])
    io.write_table(d / "odds_ratios.csv",
                   ["regime", "covariate", "pip", "mean", "lower95", "upper95", "never_included"],
                   [[lab, n, o.pip, o.mean, o.lower, o.upper, int(o.never_included)]
                    for lab, rep in zip(labels, reps) for n, o in zip(names, rep.odds_ratios)])
    svgplot.line_plot(d / "cumprob.svg", {lab: rep.cumprob for lab, rep in zip(labels, reps)},
                      title=f"Cumulative probability of the top {cfg['top']} models",
                      xlabel="model rank", ylabel="cumulative probability")
    svgplot.bar_plot(d / "model_size.svg",
                     {lab: float(rep.median_model.sum()) for lab, rep in zip(labels, reps)},
                     title="Median-model size", ylabel="covariates included")
    if names:
        svgplot.heatmap(d / "pip_heatmap.svg", np.column_stack([rep.pip for rep in reps]),
                        names, labels, title="Posterior inclusion probabilities")
        groups = {lab: [(o.mean, o.lower, o.upper, bool(rep.median_model[k]))
                        for k, o in enumerate(rep.odds_ratios)]
                  for lab, rep in zip(labels, reps)}
        svgplot.interval_plot(d / "odds_ratios.svg", groups, names,
                              title="Odds ratios given inclusion (95% intervals)",
                              xlabel="odds ratio")
    print("regime              median size   BF mean")
    for lab, rep in zip(labels, reps):
        print(f"{lab:<20} {int(rep.median_model.sum()):>10}   {rep.bf_summary.mean:.4f}")
    print(f"comparison written to {d}")


# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="cutinfer", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="TOML settings file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one setting (repeatable)")
        return sp

    sp = add("simulate-linear", "simulate linear-pipeline data")
    sp.add_argument("--out", required=True)
    sp = add("fit-linear", "closed-form posteriors for the linear pipeline")
    sp.add_argument("--data", required=True, help="directory holding W.csv, X.csv and Y.csv")
    sp.add_argument("--out")
    sp = add("simulate-rollcall", "simulate roll-call data with covariates")
    sp.add_argument("--out", required=True)
    sp = add("fit", "run full, two-step or cut MCMC")
    sp.add_argument("--regime", required=True, choices=("full", "twostep", "cut"))
    sp.add_argument("--rollcall", required=True)
    sp.add_argument("--votes", required=True)
    sp.add_argument("--covariates")
    sp.add_argument("--out", required=True)
    sp = add("diagnose", "summaries from a trace directory")
    sp.add_argument("--traces", required=True)
    sp.add_argument("--out")
    sp.add_argument("--scale", action="append", metavar="NAME=FACTOR",
                    help="odds-ratio multiplier for one covariate")
    sp = add("compare", "compare several fitted regimes")
    sp.add_argument("--runs", nargs="+", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--scale", action="append", metavar="NAME=FACTOR")
    return p


COMMANDS = {
    "simulate-linear": cmd_simulate_linear,
    "fit-linear": cmd_fit_linear,
    "simulate-rollcall": cmd_simulate_rollcall,
    "fit": cmd_fit,
    "diagnose": cmd_diagnose,
    "compare": cmd_compare,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args.command, args.config, args.set)
        COMMANDS[args.command](args, cfg)
    except (UserError, io.InputError, DataError, lp.RankDeficientError, DimensionError,
            NotPositiveDefiniteError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalFailure, SingularModelError, lp.QuadratureError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
