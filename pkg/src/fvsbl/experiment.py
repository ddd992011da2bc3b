"""Monte Carlo sweep over calibration-weight deviation levels.

For each (sigma, trial) the same synthetic measurement is estimated twice,
with and without the calibration update, and OSPA/RMSE metrics are
recorded. Trials draw from counter-based RNG substreams of the master
seed, so outputs are identical regardless of the parallelism level.
"""

from __future__ import annotations

import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .array_model import ArrayGeometry, SignalGrid
from .channel_sim import (
    DEFAULT_ANGLES_DEG,
    DEFAULT_DELAY_DISTANCES_M,
    SimConfig,
    default_scenario,
    draw_calibration_weights,
    synthesize_measurement,
)
from .estimator import EstimatorConfig, run_fvsbl
from .metrics import MetricsConfig, ospa, rmse_weights, tau_to_distance

MODES = ("cal", "nocal")


@dataclass(frozen=True)
class ArraySetup:
    """Geometry/grid parameters of the simulated receiver."""

    elements: int = 4
    samples: int = 64
    bandwidth: float = 1e9
    carrier: float = 60e9

    def build(self):
        grid = SignalGrid.default(
            N=self.samples, bandwidth=self.bandwidth, f_c=self.carrier
        )
        geom = ArrayGeometry.half_wavelength_ula(self.elements, grid.f_c, grid.c)
        return geom, grid


@dataclass(frozen=True)
class TrialRecord:
    sigma: float
    trial_index: int
    mode: str
    ospa_tau_d: float
    ospa_phi: float
    gain_rmse: float
    phase_rmse: float
    k_hat: int
    iterations: int
    converged: bool
    failed: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    sigma_grid: tuple
    trials_per_sigma: int = 100
    scenario: SimConfig = field(default_factory=SimConfig)
    array: ArraySetup = field(default_factory=ArraySetup)
    estimator: EstimatorConfig = None
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    master_seed: int = 20260823
    out_dir: Path = Path("results")
    parallelism: int = 0  # 0 -> os.cpu_count()
    modes: tuple = MODES

    def __post_init__(self):
        sigmas = tuple(float(s) for s in self.sigma_grid)
        if not sigmas or any(s < 0 for s in sigmas):
            raise ValueError("sigma_grid must be non-empty and nonnegative")
        object.__setattr__(self, "sigma_grid", sigmas)
        if self.trials_per_sigma < 1:
            raise ValueError("trials_per_sigma must be >= 1")
        if self.master_seed < 0:
            raise ValueError("master_seed must be a nonnegative integer")
        if any(m not in MODES for m in self.modes) or not self.modes:
            raise ValueError(f"modes must be a subset of {MODES}")
        object.__setattr__(self, "out_dir", Path(self.out_dir))
        if self.estimator is None:
            geom, grid = self.array.build()
            object.__setattr__(
                self, "estimator", EstimatorConfig.default(geom, grid)
            )

    @classmethod
    def default(cls, **overrides):
        """Default sweep: 8 log-spaced sigmas over [1e-3, 3.5e-1], 100 trials."""
        overrides.setdefault(
            "sigma_grid", tuple(np.logspace(math.log10(1e-3), math.log10(0.35), 8))
        )
        return cls(**overrides)

    @classmethod
    def from_mapping(cls, data: dict):
        """Build a config from a (YAML-derived) nested mapping."""
        data = dict(data)
        kwargs = {}
        for key in (
            "sigma_grid",
            "trials_per_sigma",
            "master_seed",
            "out_dir",
            "parallelism",
        ):
            if key in data:
                kwargs[key] = data.pop(key)
        if "modes" in data:
            kwargs["modes"] = tuple(data.pop("modes"))
        if "array" in data:
            kwargs["array"] = ArraySetup(**data.pop("array"))
        if "scenario" in data:
            sc = dict(data.pop("scenario"))
            if "component_snrs_db" in sc:
                sc["component_snrs_db"] = tuple(sc["component_snrs_db"])
            kwargs["scenario"] = SimConfig(**sc)
        if "metrics" in data:
            kwargs["metrics"] = MetricsConfig(**data.pop("metrics"))
        est_opts = data.pop("estimator", {})
        if data:
            raise ValueError(f"unknown config keys: {sorted(data)}")
        config = cls(**kwargs) if "sigma_grid" in kwargs else cls.default(**kwargs)
        if est_opts:
            geom, grid = config.array.build()
            from .estimator import ThetaGrid
            from .vsbl_core import Hyperparams

            grid_kwargs = {}
            for key in ("angle_step_deg", "delay_step_cells"):
                if key in est_opts:
                    grid_kwargs[key] = est_opts.pop(key)
            hyper = Hyperparams(chi=est_opts.pop("chi")) if "chi" in est_opts else Hyperparams()
            est = EstimatorConfig.default(
                geom,
                grid,
                theta_grid=ThetaGrid.default(grid, **grid_kwargs),
                hyper=hyper,
                **est_opts,
            )
            config = replace(config, estimator=est)
        return config

    @classmethod
    def from_yaml(cls, path):
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        return cls.from_mapping(data)


def run_trial(config: ExperimentConfig, sigma_index: int, trial_index: int):
    """Run one trial (all configured modes on the identical measurement)."""
    sigma = config.sigma_grid[sigma_index]
    geom, grid = config.array.build()
    rng = np.random.default_rng(
        [config.master_seed, sigma_index, trial_index]
    )
    scenario = config.scenario
    truth, _, _ = default_scenario(
        0.0,
        seed=0,
        geom=geom,
        grid=grid,
        component_snrs_db=scenario.component_snrs_db,
        noise_precision=scenario.noise_precision,
    )
    # redraw amplitude phases from the trial substream
    phases = np.exp(2j * np.pi * rng.uniform(size=truth.K))
    components = tuple(
        (abs(a) * ph, th)
        for (a, th), ph in zip(truth.components, phases)
    )
    truth = replace(truth, components=components)
    cal = draw_calibration_weights(sigma, geom.num_elements, rng)
    y = synthesize_measurement(
        truth, cal, scenario.noise_precision, geom, grid, rng
    )

    true_tau_d = [tau_to_distance(t.tau, grid.c) for t in truth.thetas]
    true_phi = [math.degrees(t.phi) for t in truth.thetas]
    records = []
    for mode in config.modes:
        est_config = replace(config.estimator, calibration_enabled=(mode == "cal"))
        try:
            result = run_fvsbl(y, geom, grid, est_config)
        except Exception:
            records.append(
                TrialRecord(
                    sigma=sigma,
                    trial_index=trial_index,
                    mode=mode,
                    ospa_tau_d=math.nan,
                    ospa_phi=math.nan,
                    gain_rmse=math.nan,
                    phase_rmse=math.nan,
                    k_hat=-1,
                    iterations=0,
                    converged=False,
                    failed=True,
                )
            )
            continue
        est_tau_d = [tau_to_distance(t.tau, grid.c) for t in result.thetas]
        est_phi = [math.degrees(t.phi) for t in result.thetas]
        mcfg = config.metrics
        gain_rmse, phase_rmse = rmse_weights(
            result.w_hat, cal.w, calibrated=(mode == "cal")
        )
        records.append(
            TrialRecord(
                sigma=sigma,
                trial_index=trial_index,
                mode=mode,
                ospa_tau_d=ospa(est_tau_d, true_tau_d, mcfg.cutoff_tau_d, mcfg.ospa_order),
                ospa_phi=ospa(est_phi, true_phi, mcfg.cutoff_phi, mcfg.ospa_order),
                gain_rmse=gain_rmse,
                phase_rmse=phase_rmse,
                k_hat=result.k_hat,
                iterations=result.iterations,
                converged=result.converged,
            )
        )
    return records


def _run_trial_star(args):
    return run_trial(*args)


def run_sweep(config: ExperimentConfig):
    """Execute the full sweep; returns (records, aggregate rows).

    Results are sorted by (sigma, trial, mode) so output order does not
    depend on the worker pool scheduling.
    """
    work = [
        (config, si, ti)
        for si in range(len(config.sigma_grid))
        for ti in range(config.trials_per_sigma)
    ]
    workers = config.parallelism or os.cpu_count() or 1
    records = []
    if workers > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for chunk in pool.map(_run_trial_star, work, chunksize=4):
                records.extend(chunk)
    else:
        for args in work:
            records.extend(run_trial(*args))
    order = {m: i for i, m in enumerate(MODES)}
    records.sort(key=lambda r: (r.sigma, r.trial_index, order[r.mode]))
    return records, aggregate(records)


def aggregate(records):
    """Per-sigma arithmetic means of each metric, split by mode.

    Failed trials are excluded from the means. Returns a list of rows
    {sigma, <metric>_<mode>...} sorted by sigma; missing modes yield None.
    """
    metric_names = ("ospa_tau_d", "ospa_phi", "gain_rmse", "phase_rmse")
    sigmas = sorted({r.sigma for r in records})
    rows = []
    for sigma in sigmas:
        row = {"sigma": sigma}
        for mode in MODES:
            group = [
                r for r in records
                if r.sigma == sigma and r.mode == mode and not r.failed
            ]
            for name in metric_names:
                key = f"{name}_{mode}"
                row[key] = (
                    float(np.mean([getattr(r, name) for r in group]))
                    if group
                    else None
                )
        rows.append(row)
    return rows


def _format(value):
    return "" if value is None else f"{value:.8g}"


def _atomic_write(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


CSV_SCHEMAS = {
    "OSPA_tau.csv": ("OSPA_tau_cal", "OSPA_tau_nocal", "ospa_tau_d"),
    "OSPA_phi.csv": ("OSPA_phi_cal", "OSPA_phi_nocal", "ospa_phi"),
    "RMSE_w_gain.csv": ("RMSE_w_gain_cal", "RMSE_w_gain_nocal", "gain_rmse"),
    "RMSE_w_phase.csv": ("RMSE_w_phase_cal", "RMSE_w_phase_nocal", "phase_rmse"),
}


def emit_outputs(records, out_dir, render_figures=True):
    """Write the four aggregate CSVs, the raw trial records, a standalone
    plot script, and (optionally) rendered PNG figures.

    The sigma_sim2 column holds the weight standard deviation, matching the
    x-axis of the evaluation figures. Each file is written atomically.
    Returns the list of written paths.
    """
    if not records:
        raise ValueError("no records to emit")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise OSError(f"output directory {out_dir} is not writable")
    rows = aggregate(records)
    written = []
    for fname, (cal_col, nocal_col, metric) in CSV_SCHEMAS.items():
        lines = [f"sigma_sim2,{cal_col},{nocal_col}"]
        for row in rows:
            lines.append(
                f"{_format(row['sigma'])},"
                f"{_format(row[f'{metric}_cal'])},"
                f"{_format(row[f'{metric}_nocal'])}"
            )
        path = out_dir / fname
        _atomic_write(path, "\n".join(lines) + "\n")
        written.append(path)

    trial_fields = (
        "sigma", "trial_index", "mode", "ospa_tau_d", "ospa_phi",
        "gain_rmse", "phase_rmse", "k_hat", "iterations", "converged",
        "failed",
    )
    lines = [",".join(trial_fields)]
    for r in records:
        lines.append(
            ",".join(
                f"{v:.8g}" if isinstance(v, float) else str(v)
                for v in (getattr(r, f) for f in trial_fields)
            )
        )
    path = out_dir / "trials.csv"
    _atomic_write(path, "\n".join(lines) + "\n")
    written.append(path)

    from .plots import PLOT_SCRIPT, render_all

    script_path = out_dir / "plot_results.py"
    _atomic_write(script_path, PLOT_SCRIPT)
    written.append(script_path)
    if render_figures:
        written.extend(render_all(out_dir))
    return written
