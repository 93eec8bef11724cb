"""Config-driven experiment runner: sweeps, records, plots, and validators."""

from __future__ import annotations

import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis
from .channel import SPEED_OF_LIGHT, build_channels, observe, pilot_estimate, stack_real
from .config import config_hash
from .errors import ConfigurationError
from .occlusion import OcclusionParams, default_block_distance, occlusion_matrices, sensing_range_mask
from .scene import (
    NodeLayout,
    PriorParams,
    bs_array,
    build_grid,
    sample_box_positions,
    sample_scene,
    sample_shell_positions,
)
from .solvers import SolverOptions, run_bilinear, run_gamp, run_multiview

SCHEMA_VERSION = "1"
RECORDS_HEADER = (
    "schema_version,config_hash,sweep_variable,sweep_value,trial,solver,seed,"
    "mse_in_range,mse_full,iterations,converged,unsensable_voxels,"
    "occluded_entries,misfit_final,stop_reason"
)
AGGREGATE_HEADER = (
    "schema_version,config_hash,sweep_variable,sweep_value,solver,trials,"
    "mse_in_range_median,mse_in_range_iqr,mse_full_median,mse_full_iqr,converged_rate"
)

_RHO_CAL_KEY = (1_048_576,)
_VALIDATE_KEY = (2_097_152,)


@dataclass
class TrialRecord:
    """One (sweep point, trial, solver) outcome."""

    sweep_variable: str
    sweep_value: float
    trial: int
    solver: str
    seed: str
    mse_in_range: float
    mse_full: float
    iterations: int
    converged: bool
    unsensable_voxels: int
    occluded_entries: int
    misfit_final: float
    stop_reason: str
    misfit_trace: np.ndarray | None = field(default=None, repr=False)
    mse_trace: np.ndarray | None = field(default=None, repr=False)
    event_iters: np.ndarray | None = field(default=None, repr=False)
    x_hat: np.ndarray | None = field(default=None, repr=False)
    sigma_x: np.ndarray | None = field(default=None, repr=False)

    def csv_row(self, cfg_hash: str) -> str:
        vals = [
            SCHEMA_VERSION,
            cfg_hash,
            self.sweep_variable,
            repr(self.sweep_value),
            str(self.trial),
            self.solver,
            self.seed,
            repr(float(self.mse_in_range)),
            repr(float(self.mse_full)),
            str(self.iterations),
            "true" if self.converged else "false",
            str(self.unsensable_voxels),
            str(self.occluded_entries),
            repr(float(self.misfit_final)),
            self.stop_reason,
        ]
        return ",".join(vals)


def make_grid(cfg: dict):
    sc = cfg["scene"]
    return build_grid(sc["origin"], sc["extents"], sc["voxel_sizes"])


def make_prior(cfg: dict) -> PriorParams:
    p = cfg["scene"]["prior"]
    return PriorParams(
        sparsity=p["sparsity"],
        slab_mean=p["slab_mean"],
        slab_var=p["slab_var"],
        occluder_threshold=p["occluder_threshold"],
    )


def make_occ_params(cfg: dict, grid, prior: PriorParams) -> OcclusionParams:
    bd = cfg["scene"]["block_distance"]
    if bd is None:
        bd = default_block_distance(grid)
    return OcclusionParams(block_distance=bd, coeff_threshold=prior.occluder_threshold)


def _user_positions(cfg_users: dict, grid, rng, count: int) -> np.ndarray:
    placement = cfg_users["placement"]
    if placement == "explicit":
        pos = np.asarray(cfg_users["positions"], dtype=float)
        if count != pos.shape[0]:
            raise ConfigurationError("layout.users: cannot sweep user count with explicit positions")
        return pos
    if placement == "box":
        lo, hi = cfg_users["box"]
        return sample_box_positions(lo, hi, count, rng)
    return sample_shell_positions(grid, count, rng)


def sample_layout(cfg: dict, grid, rng, *, n_users: int | None = None, n_bs: int | None = None) -> NodeLayout:
    """Draw one layout: users first, then BS centers and antenna arrays in order."""
    lay = cfg["layout"]
    count = n_users if n_users is not None else lay["users"]["count"]
    users = _user_positions(lay["users"], grid, rng, count)
    entries = lay["bs"] if n_bs is None else lay["bs"][:n_bs]
    if not entries:
        raise ConfigurationError("layout.bs: bs-count sweep exceeded configured BS entries")
    spacing = SPEED_OF_LIGHT / cfg["channel"]["carrier_hz"] / 2.0
    ants, ids = [], []
    for b, entry in enumerate(entries):
        pos = entry["position"]
        if pos == "shell":
            pos = sample_shell_positions(grid, 1, rng)[0]
        arr = bs_array(pos, tuple(entry["array_shape"]), spacing)
        ants.append(arr)
        ids.extend([b] * arr.shape[0])
    return NodeLayout(users=users, bs_antennas=np.vstack(ants), bs_ids=np.asarray(ids))


def _sweep_overrides(cfg: dict, value) -> tuple[int | None, int | None, float]:
    var = cfg["sweep"]["variable"]
    snr = cfg["channel"]["snr_db"]
    n_users = n_bs = None
    if var == "users":
        n_users = int(value)
    elif var == "snr":
        snr = float(value)
    elif var == "bs-count":
        n_bs = int(value)
        if n_bs > len(cfg["layout"]["bs"]):
            raise ConfigurationError("sweep.values: bs-count exceeds configured BS entries")
    return n_users, n_bs, snr


def _auto_misfit_tol(system) -> float | None:
    """Misfit stopping level at 1.55x the expected noise l1 mass.

    A complex measurement with per-entry noise variance s has mean modulus
    sqrt(pi*s)/2, so a fully explained observation leaves a residual near
    n_complex times that; stopping slightly above it flags convergence once
    only noise remains. The 1.55 factor balances stopping speed against the
    accuracy left on the table. Noiseless systems get no misfit stop.
    """
    sigma_w = 2.0 * system.noise_var
    if sigma_w <= 0.0:
        return None
    return 1.55 * system.n_complex * np.sqrt(np.pi * sigma_w) / 2.0


def _resolve_rho(cfg: dict) -> float:
    """Blockage probability for the soft baseline, calibrated when set to auto."""
    rho = cfg["solver"]["rho"]
    if rho != "auto":
        return float(rho)
    if "bilinear" not in cfg["solver"]["algorithms"]:
        return 0.0
    grid = make_grid(cfg)
    prior = make_prior(cfg)
    occp = make_occ_params(cfg, grid, prior)
    rng = np.random.default_rng(np.random.SeedSequence(cfg["sweep"]["base_seed"], spawn_key=_RHO_CAL_KEY))
    scene_sampler = lambda r: sample_scene(grid, prior, cfg["scene"]["scatterers"], r)
    node_sampler = lambda n, r: sample_shell_positions(grid, n, r)
    p_u, _ = analysis.p_block_empirical(scene_sampler, node_sampler, occp, 200, rng, side="user")
    p_b, _ = analysis.p_block_empirical(scene_sampler, node_sampler, occp, 200, rng, side="bs")
    return analysis.combined_blockage_prob(p_u, p_b, grid.n_voxels)


def _run_trial(cfg: dict, sweep_idx: int, value, trial: int, rho: float) -> list[TrialRecord]:
    var = cfg["sweep"]["variable"]
    base_seed = cfg["sweep"]["base_seed"]
    rng = np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=(sweep_idx, trial)))
    seed_label = f"{base_seed}:{sweep_idx}:{trial}"

    grid = make_grid(cfg)
    prior = make_prior(cfg)
    occp = make_occ_params(cfg, grid, prior)
    n_users, n_bs, snr_db = _sweep_overrides(cfg, value)

    layout = sample_layout(cfg, grid, rng, n_users=n_users, n_bs=n_bs)
    fld = sample_scene(grid, prior, cfg["scene"]["scatterers"], rng)
    occ = occlusion_matrices(fld, layout, occp)
    ens = build_channels(grid, fld, layout, occ, cfg["channel"]["carrier_hz"])
    if cfg["channel"]["observation"] == "pilot":
        ens = pilot_estimate(ens, cfg["channel"]["pilot_length"], snr_db, rng)
    else:
        ens = observe(ens, snr_db, rng)
    system = stack_real(ens)
    mask = sensing_range_mask(occ)
    unsens = grid.n_voxels - int(mask.sum())

    sol = cfg["solver"]
    misfit_tol = sol["misfit_tol"]
    if misfit_tol == "auto":
        misfit_tol = _auto_misfit_tol(system)
    opts = SolverOptions(
        max_iters=sol["max_iters"],
        misfit_tol=misfit_tol,
        damping=sol["damping"],
        damping_min=sol["damping_min"],
        sigma_h_floor=sol["sigma_h_floor"],
        debias=sol["debias"],
    )

    records = []
    for name in sol["algorithms"]:
        try:
            kwargs = dict(x_true=fld.x, range_mask=mask if mask.any() else None)
            if name == "gamp":
                res = run_gamp(system, prior, opts, **kwargs)
            elif name == "bilinear":
                res = run_bilinear(system, prior, rho, opts, **kwargs)
            else:
                res = run_multiview(system, grid, layout, prior, occp, opts, **kwargs)
            rec = TrialRecord(
                sweep_variable=var,
                sweep_value=float(value),
                trial=trial,
                solver=name,
                seed=seed_label,
                mse_in_range=analysis.mse_in_range(fld.x, res.x_hat, mask) if mask.any() else float("nan"),
                mse_full=analysis.mse(fld.x, res.x_hat),
                iterations=res.n_iters,
                converged=res.converged,
                unsensable_voxels=unsens,
                occluded_entries=int((res.v_est == 0).sum()) if res.v_est is not None else 0,
                misfit_final=res.final_misfit,
                stop_reason=res.stop_reason,
                misfit_trace=res.misfit_trace,
                mse_trace=res.mse_trace,
                event_iters=res.event_iters,
                x_hat=res.x_hat,
                sigma_x=res.sigma_x,
            )
        except Exception as exc:  # crash isolation: one bad trial must not kill the sweep
            rec = TrialRecord(
                sweep_variable=var,
                sweep_value=float(value),
                trial=trial,
                solver=name,
                seed=seed_label,
                mse_in_range=float("nan"),
                mse_full=float("nan"),
                iterations=0,
                converged=False,
                unsensable_voxels=unsens,
                occluded_entries=0,
                misfit_final=float("nan"),
                stop_reason=f"error:{type(exc).__name__}",
            )
        records.append(rec)
    return records


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_records(records: list[TrialRecord], cfg_hash: str, path: Path) -> None:
    lines = [RECORDS_HEADER] + [r.csv_row(cfg_hash) for r in records]
    _atomic_write(path, "\n".join(lines) + "\n")


def aggregate_records(records: list[TrialRecord]):
    """Median/IQR per (sweep value, solver); NaN metrics are skipped."""
    keys = sorted({(r.sweep_value, r.solver) for r in records}, key=lambda k: (k[0], k[1]))
    rows = []
    for value, solver in keys:
        group = [r for r in records if r.sweep_value == value and r.solver == solver]
        ir = np.asarray([g.mse_in_range for g in group])
        fu = np.asarray([g.mse_full for g in group])
        with np.errstate(all="ignore"):
            row = {
                "sweep_value": value,
                "solver": solver,
                "trials": len(group),
                "mse_in_range_median": float(np.nanmedian(ir)) if np.any(np.isfinite(ir)) else float("nan"),
                "mse_in_range_iqr": _iqr(ir),
                "mse_full_median": float(np.nanmedian(fu)) if np.any(np.isfinite(fu)) else float("nan"),
                "mse_full_iqr": _iqr(fu),
                "converged_rate": float(np.mean([g.converged for g in group])),
            }
        rows.append(row)
    return rows


def _iqr(values: np.ndarray) -> float:
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        return float("nan")
    q75, q25 = np.percentile(finite, [75, 25])
    return float(q75 - q25)


def _write_aggregate(rows, cfg: dict, cfg_hash: str, path: Path) -> None:
    var = cfg["sweep"]["variable"]
    lines = [AGGREGATE_HEADER]
    for row in rows:
        lines.append(
            ",".join(
                [
                    SCHEMA_VERSION,
                    cfg_hash,
                    var,
                    repr(row["sweep_value"]),
                    row["solver"],
                    str(row["trials"]),
                    repr(row["mse_in_range_median"]),
                    repr(row["mse_in_range_iqr"]),
                    repr(row["mse_full_median"]),
                    repr(row["mse_full_iqr"]),
                    repr(row["converged_rate"]),
                ]
            )
        )
    _atomic_write(path, "\n".join(lines) + "\n")


def run_scenario(cfg: dict, out_dir=None, workers: int = 1) -> list[TrialRecord]:
    """Run the configured sweep; optionally write all outputs under ``out_dir``.

    Reruns with the same config and seed are byte-identical. A solver failure
    inside one trial is recorded and the sweep continues.
    """
    cfg_hash = config_hash(cfg)
    rho = _resolve_rho(cfg)
    tasks = [
        (sweep_idx, value, trial)
        for sweep_idx, value in enumerate(cfg["sweep"]["values"])
        for trial in range(cfg["sweep"]["trials"])
    ]
    records: list[TrialRecord] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_trial, cfg, si, v, tr, rho) for si, v, tr in tasks]
            for fut in futures:
                records.extend(fut.result())
    else:
        for si, v, tr in tasks:
            records.extend(_run_trial(cfg, si, v, tr, rho))

    if out_dir is not None:
        out = Path(out_dir)
        (out / "voxels").mkdir(parents=True, exist_ok=True)
        (out / "traces").mkdir(parents=True, exist_ok=True)
        _write_records(records, cfg_hash, out / "records.csv")
        _write_aggregate(aggregate_records(records), cfg, cfg_hash, out / "aggregate.csv")
        meta = {"config": cfg, "config_hash": cfg_hash, "rho": rho, "schema_version": SCHEMA_VERSION}
        _atomic_write(out / "run.json", json.dumps(meta, sort_keys=True, indent=2) + "\n")
        for r in records:
            tag = f"{r.sweep_variable}{r.sweep_value:g}_t{r.trial:03d}_{r.solver}"
            if r.x_hat is not None:
                _write_voxels(r, out / "voxels" / f"voxels_{tag}.csv")
            if r.misfit_trace is not None and r.misfit_trace.size:
                _write_trace(r, out / "traces" / f"trace_{tag}.csv")
        if "png" in cfg["output"]["formats"]:
            emit_plots(records, out / "plots")
        else:
            emit_plot_data(records, out / "plots")
    return records


def _write_voxels(r: TrialRecord, path: Path) -> None:
    lines = ["index,x_hat,sigma_x"]
    for i, (xh, sx) in enumerate(zip(r.x_hat, r.sigma_x)):
        lines.append(f"{i},{xh!r},{sx!r}")
    _atomic_write(path, "\n".join(lines) + "\n")


def _write_trace(r: TrialRecord, path: Path) -> None:
    lines = ["iteration,misfit,mse,occluded_entries"]
    n = r.misfit_trace.size
    mse_tr = r.mse_trace if r.mse_trace is not None and len(r.mse_trace) == n else [float("nan")] * n
    for i in range(n):
        lines.append(f"{i + 1},{float(r.misfit_trace[i])!r},{float(mse_tr[i])!r},{r.occluded_entries}")
    _atomic_write(path, "\n".join(lines) + "\n")


def emit_plot_data(records: list[TrialRecord], plot_dir) -> list[Path]:
    """Write the deterministic CSV sidecars behind every figure."""
    if not records:
        raise ValueError("no records to plot")
    plot_dir = Path(plot_dir)
    plot_dir.mkdir(parents=True, exist_ok=True)
    rows = aggregate_records(records)
    var = records[0].sweep_variable
    written = []
    for metric in ("mse_in_range", "mse_full"):
        lines = [f"{var},solver,median,iqr,trials"]
        for row in rows:
            lines.append(
                f"{row['sweep_value']!r},{row['solver']},{row[f'{metric}_median']!r},"
                f"{row[f'{metric}_iqr']!r},{row['trials']}"
            )
        path = plot_dir / f"{metric}_vs_{var}.csv"
        _atomic_write(path, "\n".join(lines) + "\n")
        written.append(path)
    conv = _convergence_table(records)
    if conv is not None:
        lines = ["iteration,solver,misfit_median"]
        for it, solver, med in conv:
            lines.append(f"{it},{solver},{med!r}")
        path = plot_dir / "convergence.csv"
        _atomic_write(path, "\n".join(lines) + "\n")
        written.append(path)
    return written


def _convergence_table(records: list[TrialRecord]):
    """Median channel misfit per iteration at the largest sweep value."""
    with_traces = [r for r in records if r.misfit_trace is not None and r.misfit_trace.size]
    if not with_traces:
        return None
    top = max(r.sweep_value for r in with_traces)
    rows = []
    for solver in sorted({r.solver for r in with_traces}):
        traces = [r.misfit_trace for r in with_traces if r.solver == solver and r.sweep_value == top]
        if not traces:
            continue
        n = max(t.size for t in traces)
        grid_tr = np.full((len(traces), n), np.nan)
        for i, t in enumerate(traces):
            grid_tr[i, : t.size] = t
        with np.errstate(all="ignore"):
            med = np.nanmedian(grid_tr, axis=0)
        rows.extend((it + 1, solver, float(med[it])) for it in range(n) if np.isfinite(med[it]))
    return rows


def emit_plots(records: list[TrialRecord], plot_dir) -> list[Path]:
    """Render MSE-vs-sweep and convergence figures plus their CSV sidecars."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = emit_plot_data(records, plot_dir)
    plot_dir = Path(plot_dir)
    rows = aggregate_records(records)
    var = records[0].sweep_variable
    solvers = sorted({r["solver"] for r in rows})
    for metric, label in (("mse_in_range", "in-range MSE"), ("mse_full", "full-range MSE")):
        fig, ax = plt.subplots(figsize=(6, 4))
        for solver in solvers:
            pts = [(r["sweep_value"], r[f"{metric}_median"]) for r in rows if r["solver"] == solver]
            pts.sort()
            xs, ys = zip(*pts)
            ax.plot(xs, ys, marker="o", label=solver)
        ax.set_xlabel(var)
        ax.set_ylabel(label)
        ax.set_yscale("log")
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        path = plot_dir / f"{metric}_vs_{var}.png"
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
    conv = _convergence_table(records)
    if conv is not None:
        fig, ax = plt.subplots(figsize=(6, 4))
        for solver in sorted({c[1] for c in conv}):
            pts = [(it, med) for it, s, med in conv if s == solver]
            xs, ys = zip(*pts)
            ax.plot(xs, ys, label=solver)
        ax.set_xlabel("iteration")
        ax.set_ylabel("channel misfit")
        ax.set_yscale("log")
        ax.grid(True, alpha=0.3)
        ax.legend()
        fig.tight_layout()
        path = plot_dir / "convergence.png"
        fig.savefig(path)
        plt.close(fig)
        written.append(path)
    return written


def read_records(path) -> list[TrialRecord]:
    """Load records.csv back into TrialRecord objects (without traces)."""
    lines = Path(path).read_text().strip().splitlines()
    if not lines or lines[0] != RECORDS_HEADER:
        raise ValueError(f"unrecognized records schema in {path}")
    out = []
    for line in lines[1:]:
        f = line.split(",")
        out.append(
            TrialRecord(
                sweep_variable=f[2],
                sweep_value=float(f[3]),
                trial=int(f[4]),
                solver=f[5],
                seed=f[6],
                mse_in_range=float(f[7]),
                mse_full=float(f[8]),
                iterations=int(f[9]),
                converged=f[10] == "true",
                unsensable_voxels=int(f[11]),
                occluded_entries=int(f[12]),
                misfit_final=float(f[13]),
                stop_reason=f[14],
            )
        )
    return out


def load_traces(records: list[TrialRecord], records_dir) -> list[TrialRecord]:
    """Attach per-iteration misfit traces from a run directory's trace files."""
    traces = Path(records_dir) / "traces"
    for r in records:
        tag = f"{r.sweep_variable}{r.sweep_value:g}_t{r.trial:03d}_{r.solver}"
        path = traces / f"trace_{tag}.csv"
        if path.exists():
            data = np.genfromtxt(path, delimiter=",", skip_header=1, ndmin=2)
            if data.size:
                r.misfit_trace = data[:, 1]
    return records


def validate_analysis(cfg: dict, out_dir=None, *, position_draws: int = 4000, exact_draws: int = 120,
                      empirical_trials: int = 400, count_trials: int = 120):
    """Evaluate the closed-form range/bound analysis against Monte-Carlo.

    Returns (RangeReport, BoundReport). The expected-count formulas are fed
    with the exact per-path probabilities; the published first-order forms are
    reported alongside. Empirical unsensable counts are measured for a
    single-BS layout (all antennas co-located) and for the configured BS count.
    """
    grid = make_grid(cfg)
    prior = make_prior(cfg)
    occp = make_occ_params(cfg, grid, prior)
    scatterers = cfg["scene"]["scatterers"]
    occupancy = ("count", scatterers) if isinstance(scatterers, int) else ("rate", scatterers)
    sparsity = (
        scatterers / grid.n_voxels if isinstance(scatterers, int) else scatterers
    )
    n_users = cfg["layout"]["users"]["count"]
    n_bs = len(cfg["layout"]["bs"])
    total_ants = sum(e["array_shape"][0] * e["array_shape"][1] for e in cfg["layout"]["bs"])

    ss = np.random.SeedSequence(cfg["sweep"]["base_seed"], spawn_key=_VALIDATE_KEY)
    rngs = [np.random.default_rng(s) for s in ss.spawn(8)]
    shell = lambda n, r: sample_shell_positions(grid, n, r)
    scene_sampler = lambda r: sample_scene(grid, prior, scatterers, r)
    exceed = analysis.occluder_exceed_prob(prior)

    pu_closed = analysis.p_block_user_closed(grid, sparsity, occp.block_distance, shell, position_draws, rngs[0])
    pb_closed = analysis.p_block_bs_closed(grid, sparsity, occp.block_distance, shell, position_draws, rngs[1])
    pu_exact = analysis.p_block_user_exact(grid, occupancy, exceed, occp.block_distance, shell, exact_draws, rngs[2])
    pb_exact = analysis.p_block_bs_exact(grid, occupancy, exceed, occp.block_distance, shell, exact_draws, rngs[3])
    pu_emp, pu_se = analysis.p_block_empirical(scene_sampler, shell, occp, empirical_trials, rngs[4], side="user")
    pb_emp, pb_se = analysis.p_block_empirical(scene_sampler, shell, occp, empirical_trials, rngs[5], side="bs")

    n_con = analysis.unsensed_counts(pu_exact, pb_exact, n_users, 1, grid.n_voxels, "con")
    n_dis = analysis.unsensed_counts(pu_exact, pb_exact, n_users, n_bs, grid.n_voxels, "dis")
    n_con_closed = analysis.unsensed_counts(pu_closed, pb_closed, n_users, 1, grid.n_voxels, "con")
    n_dis_closed = analysis.unsensed_counts(pu_closed, pb_closed, n_users, n_bs, grid.n_voxels, "dis")

    def layout_con(r):
        pos = sample_shell_positions(grid, 1, r)[0]
        spacing = SPEED_OF_LIGHT / cfg["channel"]["carrier_hz"] / 2.0
        ants = bs_array(pos, (total_ants, 1), spacing)
        return NodeLayout(users=shell(n_users, r), bs_antennas=ants, bs_ids=np.zeros(total_ants, dtype=int))

    def layout_dis(r):
        return sample_layout(cfg, grid, r)

    emp_con, emp_con_se, _ = analysis.unsensable_empirical(scene_sampler, layout_con, occp, count_trials, rngs[6])
    emp_dis, emp_dis_se, _ = analysis.unsensable_empirical(scene_sampler, layout_dis, occp, count_trials, rngs[7])

    report = analysis.RangeReport(
        p_block_user_closed=pu_closed,
        p_block_bs_closed=pb_closed,
        p_block_user_exact=pu_exact,
        p_block_bs_exact=pb_exact,
        p_block_user_emp=pu_emp,
        p_block_user_emp_se=pu_se,
        p_block_bs_emp=pb_emp,
        p_block_bs_emp_se=pb_se,
        p_out_user=pu_exact**n_users,
        p_out_bs_con=pb_exact,
        p_out_bs_dis=pb_exact**n_bs,
        n_bar_con=n_con,
        n_bar_dis=n_dis,
        n_bar_con_closed=n_con_closed,
        n_bar_dis_closed=n_dis_closed,
        emp_unsensable_con=emp_con,
        emp_unsensable_con_se=emp_con_se,
        emp_unsensable_dis=emp_dis,
        emp_unsensable_dis_se=emp_dis_se,
        n_users=n_users,
        n_bs_dis=n_bs,
        n_voxels=grid.n_voxels,
    )
    r_con = analysis.signal_l1_radius(prior.sparsity, prior.slab_mean, grid.n_voxels, n_con)
    r_dis = analysis.signal_l1_radius(prior.sparsity, prior.slab_mean, grid.n_voxels, n_dis)
    bounds = analysis.BoundReport(
        r_con=r_con,
        r_dis=r_dis,
        bound_con=analysis.mse_bound(1.0, r_con, grid.n_voxels, n_users, total_ants),
        bound_dis=analysis.mse_bound(1.0, r_dis, grid.n_voxels, n_users, total_ants),
        norm_const=1.0,
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _atomic_write(out / "analysis.csv", report.CSV_FIELDS + "," + bounds.CSV_FIELDS + "\n" + report.csv_row() + "," + bounds.csv_row() + "\n")
        _atomic_write(out / "analysis.txt", report.summary() + "\n" + bounds.summary() + "\n")
    return report, bounds
