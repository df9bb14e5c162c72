"""Command-line entry point emitting all CSV/JSON artifacts.

Exit codes: 0 success, 1 usage/config error, 2 numerical non-convergence,
3 I/O failure.
"""
from __future__ import annotations

import pickle
import sys
import time
from multiprocessing import get_context
from pathlib import Path

import click
import numpy as np

from .config import ConfigError, RunConfig, load_config
from .dos import SolverError, RadialGrid, solve_el, sigma_from_dos
from .ensembles import GgeParams, ag_eigs, empirical_dos, sample_ag
from .ghd import DressingOperator, build_summary, euler_scale_curve
from .io import read_csv, read_json, write_csv, write_json
from .md import MdPlan, TrialAccumulator, aggregate, estimate_rows, run_metadata, run_trials

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_IO = 3


def _load(config_path, out, seed) -> RunConfig:
    cfg = load_config(config_path)
    if seed is not None:
        cfg = cfg.with_seed(seed)
    if out is not None:
        cfg = cfg.with_out_dir(out)
    return cfg


def _common(fn):
    fn = click.option("--seed", type=int, default=None,
                      help="Override the configured random seed.")(fn)
    fn = click.option("--threads", type=int, default=1, show_default=True,
                      help="Worker processes for MD trials.")(fn)
    fn = click.option("--out", type=click.Path(), default=None,
                      help="Override the configured output directory.")(fn)
    fn = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                      required=True, help="TOML run configuration.")(fn)
    return fn


@click.group()
def cli() -> None:
    """Volterra lattice GGE: density of states, GHD, and MD correlations."""


def _solve_dos(cfg: RunConfig):
    params = GgeParams(cfg["beta"], tuple(cfg["potential"]))
    grid = RadialGrid(float(cfg["grid"]["w_max"]), int(cfg["grid"]["m"]))
    sol = solve_el(
        params, grid,
        damping=float(cfg["solver"]["damping"]),
        tol=float(cfg["solver"]["tol"]),
        max_iter=int(cfg["solver"]["max_iter"]),
    )
    return sol


@cli.command()
@_common
def dos(config_path, out, threads, seed) -> None:
    """Solve the Euler-Lagrange density of states; write dos.csv."""
    cfg = _load(config_path, out, seed)
    sol = _solve_dos(cfg)
    sigma_norm, kappa = sigma_from_dos(sol)
    rows = zip(sol.grid.nodes, sol.varrho, sigma_norm)
    write_csv(cfg.out_dir / "dos.csv", ("w", "varrho", "sigma_norm"), rows,
              config_hash=cfg.config_hash)
    write_json(cfg.out_dir / "dos_meta.json", {
        "beta": sol.beta,
        "potential": list(sol.potential),
        "mu": sol.mu,
        "kappa": kappa,
        "grid": {"w_max": sol.grid.w_max, "m": sol.grid.m},
        "residual": sol.residual,
        "iterations": sol.iterations,
        "converged": sol.converged,
    }, config_hash=cfg.config_hash)
    if not sol.converged:
        click.echo("dos: solver did not converge", err=True)
        sys.exit(EXIT_NUMERIC)


@cli.command()
@_common
def ghd(config_path, out, threads, seed) -> None:
    """Compute C, B, curves and the shock abscissa; write ghd artifacts."""
    cfg = _load(config_path, out, seed)
    sol = _solve_dos(cfg)
    if not sol.converged:
        click.echo("ghd: dos solve did not converge", err=True)
        sys.exit(EXIT_NUMERIC)
    op = DressingOperator(sol)
    n_max = int(cfg["ghd"]["n_max"])
    summary = build_summary(op, n_max)
    write_json(cfg.out_dir / "ghd_summary.json", summary.to_dict(),
               config_hash=cfg.config_hash)
    for m, n in cfg["ghd"]["pairs"]:
        curve = euler_scale_curve(op, m, n, summary)
        rows = zip(curve.w, curve.xi, curve.value, curve.diverged)
        write_csv(cfg.out_dir / f"ghd_curve_m{m}_n{n}.csv",
                  ("w", "xi", "value", "diverged"), rows, config_hash=cfg.config_hash)


def _md_plan(cfg: RunConfig) -> MdPlan:
    md = cfg["md"]
    return MdPlan(
        gge=GgeParams(cfg["beta"], tuple(cfg["potential"])),
        n_pairs=int(md["n_pairs"]),
        trials=int(md["trials"]),
        times=tuple(md["times"]),
        fields=tuple((int(m), int(n)) for m, n in md["fields"]),
        base_seed=int(md["seed"]),
        tol=float(md["tol"]),
        current_convention=md["convention"],
        use_fft=bool(md["fft"]),
    )


def _run_md(plan: MdPlan, cfg: RunConfig, threads: int) -> TrialAccumulator:
    """Batched trial loop with checkpoint/resume at batch granularity."""
    ckpt_path = cfg.out_dir / "md_checkpoint.pkl"
    batch = int(cfg["md"]["batch"])
    acc = TrialAccumulator(plan)
    done = 0
    if ckpt_path.exists():
        with ckpt_path.open("rb") as fh:
            saved = pickle.load(fh)
        if saved["config_hash"] != cfg.config_hash:
            raise ConfigError("checkpoint belongs to a different config; refusing resume")
        acc, done = saved["acc"], saved["done"]
    starts = list(range(done, plan.trials, batch))
    jobs = [(plan, s, min(batch, plan.trials - s)) for s in starts]
    if threads > 1 and len(jobs) > 1:
        with get_context("spawn").Pool(threads) as pool:
            for part in pool.imap(_run_batch, jobs):
                acc.merge(part)
                done += part.n_ok + len(part.dropped)
                _checkpoint(ckpt_path, cfg, acc, done)
    else:
        for job in jobs:
            acc.merge(_run_batch(job))
            done = job[1] + job[2]
            _checkpoint(ckpt_path, cfg, acc, done)
    return acc


def _run_batch(job) -> TrialAccumulator:
    plan, start, count = job
    return run_trials(plan, start, count)


def _checkpoint(path: Path, cfg: RunConfig, acc: TrialAccumulator, done: int) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with tmp.open("wb") as fh:
        pickle.dump({"config_hash": cfg.config_hash, "acc": acc, "done": done}, fh)
    tmp.replace(path)


@cli.command()
@_common
def md(config_path, out, threads, seed) -> None:
    """Run MD correlation trials; write md_correlations.csv."""
    cfg = _load(config_path, out, seed)
    plan = _md_plan(cfg)
    t0 = time.perf_counter()
    acc = _run_md(plan, cfg, threads)
    if acc.n_ok == 0:
        click.echo("md: all trials failed", err=True)
        sys.exit(EXIT_NUMERIC)
    estimates = aggregate(acc)
    write_csv(cfg.out_dir / "md_correlations.csv",
              ("m", "n", "t", "j", "xi", "S", "tS", "stderr"),
              estimate_rows(estimates), config_hash=cfg.config_hash)
    write_json(cfg.out_dir / "md_meta.json",
               run_metadata(acc, time.perf_counter() - t0),
               config_hash=cfg.config_hash)
    (cfg.out_dir / "md_checkpoint.pkl").unlink(missing_ok=True)


def _sign_changes(values: np.ndarray) -> int:
    signs = np.sign(values[np.abs(values) > 0])
    return int(np.sum(signs[1:] != signs[:-1]))


@cli.command()
@_common
def compare(config_path, out, threads, seed) -> None:
    """Join rescaled MD profiles with GHD curves; write compare CSVs."""
    cfg = _load(config_path, out, seed)
    out_dir = cfg.out_dir
    md_header, md_data, md_hash = read_csv(out_dir / "md_correlations.csv")
    summary = read_json(out_dir / "ghd_summary.json")
    if md_hash != cfg.config_hash or summary.get("config_hash") != cfg.config_hash:
        click.echo("compare: artifact config hashes do not match this config", err=True)
        sys.exit(EXIT_USAGE)
    xi0 = float(summary["xi0"])
    xi_min = float(cfg["compare"]["xi_min"])
    window = float(cfg["compare"]["window"])
    col = {name: k for k, name in enumerate(md_header)}
    metrics = {"xi0": xi0, "pairs": {}}
    for m, n in cfg["md"]["fields"]:
        _, curve, curve_hash = read_csv(out_dir / f"ghd_curve_m{m}_n{n}.csv")
        if curve_hash != cfg.config_hash:
            click.echo("compare: curve hash mismatch", err=True)
            sys.exit(EXIT_USAGE)
        cxi, cval = curve[:, 1], curve[:, 2]
        sel = (md_data[:, col["m"]] == m) & (md_data[:, col["n"]] == n)
        rows = []
        pair_metrics = {}
        for t in sorted(set(md_data[sel, col["t"]])):
            if t <= 0:
                continue
            block = md_data[sel & (md_data[:, col["t"]] == t)]
            order = np.argsort(block[:, col["xi"]])
            xi = block[order, col["xi"]]
            t_s = block[order, col["tS"]]
            se = block[order, col["stderr"]] * t
            ghd_val = np.interp(xi, cxi, cval, left=np.nan, right=np.nan)
            ghd_val[xi > xi0] = np.nan
            rows += [(t, x, v, g, e) for x, v, g, e in zip(xi, t_s, ghd_val, se)]
            smooth = (xi >= xi_min) & (xi <= xi0 - 0.2) & np.isfinite(ghd_val)
            l1 = float(np.trapezoid(np.abs(t_s[smooth] - ghd_val[smooth]), xi[smooth]))
            peak = float(np.nanmax(ghd_val[smooth])) if np.any(smooth) else np.nan
            zone = (xi >= xi0 - window) & (xi <= xi0 + window)
            pair_metrics[f"t={t:g}"] = {
                "l1_smooth": l1,
                "ghd_peak_smooth": peak,
                "sign_changes_near_xi0": _sign_changes(t_s[zone]),
            }
        write_csv(out_dir / f"compare_m{m}_n{n}.csv",
                  ("t", "xi", "md_tS", "ghd_value", "stderr"), rows,
                  config_hash=cfg.config_hash)
        metrics["pairs"][f"m{m}_n{n}"] = pair_metrics
    write_json(out_dir / "compare_metrics.json", metrics, config_hash=cfg.config_hash)


@cli.command("ensemble-check")
@_common
def ensemble_check(config_path, out, threads, seed) -> None:
    """Validate the AG sampler spectrum against the EL density."""
    cfg = _load(config_path, out, seed)
    ec = cfg["ensemble_check"]
    beta = float(cfg["beta"])
    n_pairs, samples = int(ec["n_pairs"]), int(ec["samples"])
    eigs = [ag_eigs(sample_ag(beta, n_pairs, int(ec["seed"]) + k))
            for k in range(samples)]
    second = float(np.mean([np.sum(w**2) for w in eigs]) / n_pairs)
    sol = _solve_dos(cfg)
    hist = empirical_dos(eigs, int(ec["bins"]), sol.grid.w_max)
    hist.to_csv(cfg.out_dir / "ensemble_hist.csv")
    rho_nodes = sol.varrho / beta
    centers = hist.bin_centers
    rho_c = np.interp(centers, sol.grid.nodes, rho_nodes)
    mask = centers >= 0.2
    width = hist.bin_edges[1] - hist.bin_edges[0]
    l1 = float(np.sum(np.abs(hist.counts[mask] - rho_c[mask])) * width)
    write_json(cfg.out_dir / "ensemble_check.json", {
        "beta": beta,
        "n_pairs": n_pairs,
        "samples": samples,
        "second_moment": second,
        "second_moment_expected": beta / 2.0,
        "l1_density_distance": l1,
    }, config_hash=cfg.config_hash)


def main() -> None:
    try:
        cli.main(standalone_mode=False)
    except (ConfigError, click.UsageError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_USAGE)
    except SolverError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_NUMERIC)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_IO)
    except click.exceptions.Exit as exc:  # click's own sys-exit wrapper
        sys.exit(exc.exit_code)


if __name__ == "__main__":
    main()
