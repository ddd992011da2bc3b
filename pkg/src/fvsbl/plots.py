"""Figure rendering for sweep outputs.

Reads the aggregate CSVs from an output directory and renders the
calibrated-vs-uncalibrated comparison figures: OSPA curves on a log-x
scale and weight RMSE curves on log-log scales. A standalone copy of the
plotting logic is emitted next to the CSVs so figures can be regenerated
without the package installed.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

FIGURES = (
    ("OSPA_tau.csv", "ospa_tau.png", "OSPA $\\tau_d$ (m)", False),
    ("OSPA_phi.csv", "ospa_phi.png", "OSPA $\\varphi$ (deg)", False),
    ("RMSE_w_gain.csv", "rmse_w_gain.png", "RMSE $w_p$ gain", True),
    ("RMSE_w_phase.csv", "rmse_w_phase.png", "RMSE $w_p$ phase (deg)", True),
)


def _read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    cols = {name: [] for name in reader.fieldnames}
    for row in rows:
        for name in reader.fieldnames:
            value = row[name]
            cols[name].append(float(value) if value != "" else None)
    return cols


def render_figure(csv_path, png_path, ylabel, logy):
    cols = _read_csv(csv_path)
    sigma = cols.pop("sigma_sim2")
    fig, ax = plt.subplots(figsize=(6, 3.2))
    styles = {"cal": dict(marker="s", color="C0"), "nocal": dict(marker="o", color="C3", linestyle="--")}
    for name, values in cols.items():
        pts = [(s, v) for s, v in zip(sigma, values) if v is not None]
        if not pts:
            continue
        label = "cal" if name.endswith("_cal") else "no cal"
        style = styles["cal" if name.endswith("_cal") else "nocal"]
        ax.plot([p[0] for p in pts], [p[1] for p in pts], label=label, **style)
    ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(r"$\sigma_{\mathrm{w,sim}}$")
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.4)
    ax.legend(loc="upper left", fontsize=9)
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return Path(png_path)


def render_all(out_dir):
    """Render every available figure from the CSVs in `out_dir`."""
    out_dir = Path(out_dir)
    written = []
    for csv_name, png_name, ylabel, logy in FIGURES:
        csv_path = out_dir / csv_name
        if csv_path.exists():
            written.append(
                render_figure(csv_path, out_dir / png_name, ylabel, logy)
            )
    return written


PLOT_SCRIPT = '''#!/usr/bin/env python3
"""Regenerate the sweep figures from the CSVs in this directory."""
import csv
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

FIGURES = (
    ("OSPA_tau.csv", "ospa_tau.png", "OSPA tau_d (m)", False),
    ("OSPA_phi.csv", "ospa_phi.png", "OSPA phi (deg)", False),
    ("RMSE_w_gain.csv", "rmse_w_gain.png", "RMSE w_p gain", True),
    ("RMSE_w_phase.csv", "rmse_w_phase.png", "RMSE w_p phase (deg)", True),
)

here = Path(__file__).resolve().parent
for csv_name, png_name, ylabel, logy in FIGURES:
    path = here / csv_name
    if not path.exists():
        continue
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        names = reader.fieldnames
    sigma = [float(r["sigma_sim2"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.2))
    for name in names[1:]:
        pts = [(s, float(r[name])) for s, r in zip(sigma, rows) if r[name] != ""]
        if not pts:
            continue
        label = "cal" if name.endswith("_cal") else "no cal"
        style = "-s" if name.endswith("_cal") else "--o"
        ax.plot([p[0] for p in pts], [p[1] for p in pts], style, label=label)
    ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel("sigma_w,sim")
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.4)
    ax.legend(loc="upper left", fontsize=9)
    fig.tight_layout()
    fig.savefig(here / png_name, dpi=150)
    plt.close(fig)
    print(f"wrote {here / png_name}")
'''
