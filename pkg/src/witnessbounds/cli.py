"""Command-line interface: ``witnessbounds {bounds,search,simulate,aleph,bench}``.

Every command writes a JSON document that starts with the resolved run
configuration.  Exit codes: 0 success, 2 usage, 3 I/O, 4 invalid data,
5 infeasible, 6 solver failure.
"""

from __future__ import annotations

import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import click
import numpy as np

from .engine import Engine, sample_bounds
from .errors import DataError, InfeasibleError, SolverError, WitnessBoundsError
from .params import RelaxationParams
from .relaxation import (
    aleph_mh, backdoor_ace_from_data, grid_search, pair_mean_table, reference_set,
    table_backdoor_ace, trunc_gaussian_prior, uniform_prior,
)
from .synthetic import StudyConfig, run_study
from .tables import BinaryDataset, ContingencyTable, DirichletSpec, dirichlet_sample, empirical_counts
from .witness import SearchConfig, SummaryMode, falsification_test, rule1_candidates, summarize, wpp_search

SCHEMA_VERSION = 1
WORKERS_ENV = "WITNESSBOUNDS_WORKERS"
EXIT_IO, EXIT_DATA, EXIT_INFEASIBLE, EXIT_SOLVER = 3, 4, 5, 6


@dataclass
class RunConfig:
    command: str
    input: str | None = None
    x: str | None = None
    y: str | None = None
    witness: str | None = None
    z: list[str] = field(default_factory=list)
    pool: list[str] = field(default_factory=list)
    aleph: dict | None = None
    engine: str = Engine.AUTO.value
    seed: int = 0
    samples: int = 1000
    out: str | None = None
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.samples < 1:
            raise click.BadParameter("must be at least 1", param_hint="--samples")
        roles = [c for c in (self.x, self.y, self.witness) if c]
        if len(set(roles)) != len(roles):
            raise click.BadParameter("X, Y and witness must be distinct columns")
        if set(self.z) & set(roles):
            raise click.BadParameter("Z must not contain X, Y or the witness", param_hint="--z")


def _split_cols(value) -> list[str]:
    out = []
    for v in value or ():
        out.extend(c.strip() for c in v.split(",") if c.strip())
    return out


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise click.UsageError(f"{WORKERS_ENV} must be an integer, got {raw!r}")


def _load(path: str) -> BinaryDataset:
    try:
        return BinaryDataset.from_csv(path)
    except OSError as exc:
        _fail(f"cannot read {path}: {exc}", EXIT_IO)


def _emit(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2, default=_json_default)
    if out:
        try:
            with open(out, "w") as fh:
                fh.write(text + "\n")
        except OSError as exc:
            _fail(f"cannot write {out}: {exc}", EXIT_IO)
    else:
        click.echo(text)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _fail(msg: str, code: int):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _guard(fn):
    """Map package errors onto exit codes."""

    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except DataError as exc:
            _fail(str(exc), EXIT_DATA)
        except InfeasibleError as exc:
            _fail(str(exc), EXIT_INFEASIBLE)
        except SolverError as exc:
            _fail(str(exc), EXIT_SOLVER)
        except WitnessBoundsError as exc:
            _fail(str(exc), EXIT_DATA)

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _aleph_options(fn):
    for opt in reversed([
        click.option("--eps-w", type=click.FloatRange(0, 1), default=0.2, show_default=True),
        click.option("--eps-x", type=click.FloatRange(0, 1), default=0.2, show_default=True),
        click.option("--eps-y", type=click.FloatRange(0, 1), default=0.2, show_default=True),
        click.option("--beta-low", type=click.FloatRange(0, 1, min_open=True), default=1.0, show_default=True),
        click.option("--beta-high", type=click.FloatRange(1), default=1.0, show_default=True),
    ]):
        fn = opt(fn)
    return fn


def _common_options(fn):
    for opt in reversed([
        click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False)),
        click.option("--x", "x_col", required=True, help="Treatment column."),
        click.option("--y", "y_col", required=True, help="Outcome column."),
        click.option("--engine", type=click.Choice([e.value for e in Engine]), default="auto", show_default=True),
        click.option("--samples", type=int, default=1000, show_default=True),
        click.option("--seed", type=int, default=0, show_default=True),
        click.option("--out", type=click.Path(dir_okay=False), default=None),
    ]):
        fn = opt(fn)
    return fn


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool) -> None:
    """Bounds on average causal effects from witness/admissible-set pairs."""
    import logging

    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, stream=sys.stderr)


@main.command()
@_common_options
@_aleph_options
@click.option("--witness", required=True)
@click.option("--z", multiple=True, help="Admissible-set columns (comma separated or repeated).")
@_guard
def bounds(input_path, x_col, y_col, engine, samples, seed, out, eps_w, eps_x, eps_y, beta_low, beta_high,
           witness, z):
    """Posterior ACE bounds for one witness/admissible-set pair."""
    aleph = RelaxationParams(eps_w, eps_x, eps_y, beta_low, beta_high)
    cfg = RunConfig("bounds", input_path, x_col, y_col, witness, _split_cols(z), aleph=aleph.to_dict(),
                    engine=engine, seed=seed, samples=samples, out=out)
    cfg.validate()
    data = _load(input_path)
    counts = empirical_counts(data, y_col, x_col, witness, cfg.z)
    fr = falsification_test(counts, aleph, samples, np.random.default_rng(seed), engine=engine)
    doc = {"schema": SCHEMA_VERSION, "run_config": asdict(cfg), "accepted": fr.accepted,
           "rejection_rate": fr.rejection_rate, "engine_failures": fr.engine_failures}
    if fr.expected is not None:
        doc["expected"] = fr.expected.to_dict()
        doc["expected_method"] = fr.expected_method
        doc["quantiles"] = {
            "levels": [0.025, 0.975],
            "lower": np.quantile(fr.lower, [0.025, 0.975]).tolist(),
            "upper": np.quantile(fr.upper, [0.025, 0.975]).tolist(),
        }
    _emit(doc, out)
    if not fr.accepted:
        click.echo(f"pair rejected: rejection rate {fr.rejection_rate:.3f}", err=True)
        sys.exit(EXIT_INFEASIBLE)


@main.command()
@_common_options
@_aleph_options
@click.option("--pool", multiple=True, help="Candidate covariates; default is every other column.")
@click.option("--max-set-size", type=int, default=3, show_default=True)
@click.option("--forbid-witness", multiple=True, help="Columns never used as witness.")
@click.option("--forbid-member", multiple=True, help="Columns never placed in an admissible set.")
@click.option("--summary", type=click.Choice([m.value for m in SummaryMode]), default="min-max-expected",
              show_default=True)
@_guard
def search(input_path, x_col, y_col, engine, samples, seed, out, eps_w, eps_x, eps_y, beta_low, beta_high,
           pool, max_set_size, forbid_witness, forbid_member, summary):
    """Search all witness/admissible-set pairs and summarize the survivors."""
    aleph = RelaxationParams(eps_w, eps_x, eps_y, beta_low, beta_high)
    data = _load(input_path)
    pool = _split_cols(pool) if pool else [c for c in data.columns if c not in (x_col, y_col)]
    cfg = RunConfig("search", input_path, x_col, y_col, pool=pool, aleph=aleph.to_dict(), engine=engine,
                    seed=seed, samples=samples, out=out,
                    extra={"max_set_size": max_set_size, "forbid_witness": _split_cols(forbid_witness),
                           "forbid_member": _split_cols(forbid_member), "summary": summary,
                           "workers": _workers()})
    cfg.validate()
    sc = SearchConfig(max_set_size=max_set_size, forbidden_witnesses=tuple(cfg.extra["forbid_witness"]),
                      forbidden_members=tuple(cfg.extra["forbid_member"]), n_samples=samples,
                      engine=Engine(engine), seed=seed, workers=cfg.extra["workers"])
    results = wpp_search(data, pool, x_col, y_col, aleph, sc) if pool else []
    doc = {"schema": SCHEMA_VERSION, "run_config": asdict(cfg), "results": [r.to_dict() for r in results],
           "summary": summarize(results, summary).to_dict() if results else None}
    _emit(doc, out)


@main.command()
@click.option("--solvable/--not-solvable", default=True, show_default=True)
@click.option("--hard/--easy", default=True, show_default=True)
@click.option("--datasets", type=int, default=100, show_default=True)
@click.option("--points", type=int, default=5000, show_default=True)
@click.option("--samples", type=int, default=1000, show_default=True)
@click.option("--k-eps", multiple=True, type=float, help="Relaxation levels (repeatable).")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["json", "text"]), default="json", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@_guard
def simulate(solvable, hard, datasets, points, samples, k_eps, seed, fmt, out):
    """Run the synthetic benchmark for one case."""
    kw = {"k_eps": tuple(k_eps)} if k_eps else {}
    scfg = StudyConfig(solvable=solvable, hard=hard, n_datasets=datasets, n_points=points, mc_samples=samples,
                       seed=seed, workers=_workers(), **kw)
    cfg = RunConfig("simulate", seed=seed, samples=samples, out=out, extra=asdict(scfg))
    report = run_study(scfg)
    if fmt == "text":
        text = report.to_text()
        if out:
            with open(out, "w") as fh:
                fh.write(text + "\n")
        else:
            click.echo(text)
        return
    _emit({"schema": SCHEMA_VERSION, "run_config": asdict(cfg), "report": report.to_dict()}, out)


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False))
@click.option("--x", "x_col", required=True)
@click.option("--y", "y_col", required=True)
@click.option("--witness", required=True, help="Witness of the target pair.")
@click.option("--z", multiple=True, help="Admissible set of the target pair.")
@click.option("--pool", multiple=True, help="Covariates for the reference sets; default is every other column.")
@click.option("--allow-empty", is_flag=True, help="Keep the empty set as a reference set.")
@click.option("--iters", type=int, default=10_000, show_default=True)
@click.option("--prior", type=click.Choice(["uniform", "informative"]), default="uniform", show_default=True)
@click.option("--prior-means", nargs=3, type=float, default=(0.2, 0.2, 0.95), show_default=True)
@click.option("--prior-vars", nargs=3, type=float, default=(0.1, 0.1, 0.05), show_default=True)
@click.option("--target-length", type=float, default=None,
              help="Run the width grid search against this interval length instead of MCMC.")
@click.option("--engine", type=click.Choice([e.value for e in Engine]), default="backsub", show_default=True)
@click.option("--chain-out", type=click.Path(dir_okay=False), default=None, help="CSV file for the chain.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@_guard
def aleph(input_path, x_col, y_col, witness, z, pool, allow_empty, iters, prior, prior_means, prior_vars,
          target_length, engine, chain_out, seed, out):
    """Choose relaxation parameters for a target pair."""
    data = _load(input_path)
    z_cols = _split_cols(z)
    pool = _split_cols(pool) if pool else [c for c in data.columns if c not in (x_col, y_col)]
    cfg = RunConfig("aleph", input_path, x_col, y_col, witness, z_cols, pool=pool, engine=engine, seed=seed,
                    samples=iters, out=out,
                    extra={"prior": prior, "prior_means": list(prior_means), "prior_vars": list(prior_vars),
                           "allow_empty": allow_empty, "target_length": target_length, "chain_out": chain_out})
    cfg.validate()
    table = pair_mean_table(data, y_col, x_col, witness, z_cols)
    doc = {"schema": SCHEMA_VERSION, "run_config": asdict(cfg),
           "target_backdoor_ace": table_backdoor_ace(table)}
    if target_length is not None:
        pts = grid_search(table, target_length, engine=engine)
        doc["grid"] = [{"k_eps": p.k_eps, "c": p.c,
                        "interval": p.interval.to_dict() if p.interval else None} for p in pts]
        _emit(doc, out)
        return

    cands = rule1_candidates(data, [c for c in pool if c not in (x_col, y_col)], x_col, y_col,
                             SearchConfig(workers=_workers()))
    refs = reference_set([(c.witness, c.z_cols, backdoor_ace_from_data(data, c.z_cols, x_col, y_col))
                          for c in cands], z_cols, allow_empty)
    if len(refs) < 2:
        click.echo(f"warning: reference set has {len(refs)} element(s); the posterior is driven by the prior",
                   err=True)
    logp = uniform_prior if prior == "uniform" else trunc_gaussian_prior(prior_means, prior_vars)
    chain = aleph_mh(table, [r.ace for r in refs], iters, np.random.default_rng(seed), prior=logp, engine=engine)
    if chain_out:
        chain.to_csv(chain_out)
    arr = np.array([s.as_tuple() for s in chain.samples])
    doc["reference_set"] = [{"set": sorted(r.z_cols), "ace": r.ace} for r in refs]
    doc["posterior_mean"] = chain.means()
    doc["posterior_quantiles"] = {
        name: np.quantile(col, [0.025, 0.5, 0.975]).tolist()
        for name, col in zip(("eps_w", "eps_xy", "beta", "m"), [*arr.T, chain.m])
    }
    doc["acceptance"] = chain.acceptance
    _emit(doc, out)


def chain_model_table(rng: np.random.Generator) -> np.ndarray:
    """Joint ``P(y, x, w)`` of a W -> X -> Y model with uniform(0, 1) conditionals."""
    pw, px, py = rng.uniform(), rng.uniform(size=2), rng.uniform(size=2)
    w_marg = np.array([1 - pw, pw])
    x_given_w = np.stack([1 - px, px])  # [x, w]
    y_given_x = np.stack([1 - py, py])  # [y, x]
    return y_given_x[:, :, None] * x_given_w[None, :, :] * w_marg[None, None, :]


@main.command()
@click.option("--trials", type=int, default=20, show_default=True)
@click.option("--eps", type=click.FloatRange(0, 1), default=0.2, show_default=True)
@click.option("--beta-low", type=click.FloatRange(0, 1, min_open=True), default=0.9, show_default=True)
@click.option("--beta-high", type=click.FloatRange(1), default=1.1, show_default=True)
@click.option("--samples", type=int, default=100, show_default=True, help="Posterior draws per timing run.")
@click.option("--points", type=int, default=1000, show_default=True, help="Data points per trial.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@_guard
def bench(trials, eps, beta_low, beta_high, samples, points, seed, out):
    """Time both engines and compare their widths on random chain models."""
    aleph_p = RelaxationParams(eps, eps, eps, beta_low, beta_high)
    cfg = RunConfig("bench", aleph=aleph_p.to_dict(), seed=seed, samples=samples, out=out,
                    extra={"trials": trials, "points": points})
    rng = np.random.default_rng(seed)
    t_bs, t_lp, gaps, lp_widths = [], [], [], []
    for _ in range(trials):
        joint = chain_model_table(rng)
        table = joint[None]
        weights = np.ones(1)
        iv_bs = sample_bounds(table[None], weights[None], aleph_p, Engine.BACKSUB)
        iv_lp = sample_bounds(table[None], weights[None], aleph_p, Engine.LP)
        if iv_bs.feasible[0] and iv_lp.feasible[0]:
            w_lp = iv_lp.upper[0] - iv_lp.lower[0]
            gaps.append((iv_bs.upper[0] - iv_bs.lower[0]) - w_lp)
            lp_widths.append(w_lp)
        # timing on posterior draws from a sampled dataset
        flat = rng.multinomial(points, joint.ravel()).reshape(1, 2, 2, 2).astype(float)
        draws = dirichlet_sample(ContingencyTable(flat), DirichletSpec.bdeu(10, 1), rng, size=samples)
        t0 = time.perf_counter()
        sample_bounds(draws.values, draws.weights, aleph_p, Engine.BACKSUB)
        t1 = time.perf_counter()
        sample_bounds(draws.values, draws.weights, aleph_p, Engine.LP)
        t2 = time.perf_counter()
        t_bs.append(t1 - t0)
        t_lp.append(t2 - t1)
    ratio = np.array(t_lp) / np.array(t_bs)
    doc = {"schema": SCHEMA_VERSION, "run_config": asdict(cfg),
           "time_backsub": {"mean": float(np.mean(t_bs)), "sd": float(np.std(t_bs))},
           "time_lp": {"mean": float(np.mean(t_lp)), "sd": float(np.std(t_lp))},
           "time_ratio": {"mean": float(ratio.mean()), "sd": float(ratio.std())},
           "width_difference": {"mean": float(np.mean(gaps)) if gaps else None,
                                "sd": float(np.std(gaps)) if gaps else None,
                                "n": len(gaps)},
           "lp_width_mean": float(np.mean(lp_widths)) if lp_widths else None}
    _emit(doc, out)


if __name__ == "__main__":
    main()
