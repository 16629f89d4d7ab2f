"""Report figures: power and setpoint profiles rendered next to the CSVs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _shade_on_peak(ax, tariff):
    spd = tariff.steps_per_day
    n_days = -(-tariff.n_f // spd)
    for d in range(n_days):
        lo = (d * spd + tariff.n_on) * tariff.dt_hours
        hi = (d * spd + tariff.n_off) * tariff.dt_hours
        hi = min(hi, tariff.n_f * tariff.dt_hours)
        if lo < tariff.n_f * tariff.dt_hours:
            ax.axvspan(lo, hi, color="0.85", zorder=0,
                       label="on-peak" if d == 0 else None)


def profile_figure(result, path: Path) -> Path:
    """Two stacked panels: HVAC power, then setpoint and wall temperatures."""
    t = np.arange(len(result.controls)) * result.tariff.dt_hours
    fig, (ax_p, ax_t) = plt.subplots(2, 1, sharex=True, figsize=(8, 5.5))

    _shade_on_peak(ax_p, result.tariff)
    ax_p.step(t, result.power_kw, where="post", color="tab:red", lw=1.4)
    ax_p.set_ylabel("HVAC power [kW]")
    ax_p.set_title(f"strategy: {result.strategy}")
    ax_p.legend(loc="upper left", fontsize=8)

    _shade_on_peak(ax_t, result.tariff)
    ax_t.step(t, result.controls, where="post", color="tab:blue", lw=1.4,
              label="setpoint u")
    for i in range(result.trajectory.shape[1]):
        ax_t.plot(np.arange(len(result.trajectory)) * result.tariff.dt_hours,
                  result.trajectory[:, i], lw=0.8, alpha=0.6,
                  label=f"wall T{i + 1}" if i == 0 else None)
    ax_t.set_ylabel("temperature [degC]")
    ax_t.set_xlabel("hour")
    ax_t.legend(loc="upper left", fontsize=8)

    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def comparison_figure(results, path: Path) -> Path:
    """All strategies' power profiles on one axis."""
    fig, ax = plt.subplots(figsize=(8, 3.8))
    _shade_on_peak(ax, results[0].tariff)
    for r in results:
        t = np.arange(len(r.controls)) * r.tariff.dt_hours
        ax.step(t, r.power_kw, where="post", lw=1.3, label=r.strategy)
    ax.set_xlabel("hour")
    ax.set_ylabel("HVAC power [kW]")
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_figures(results, out_dir) -> list[Path]:
    """PNG per strategy plus a combined comparison, written into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [profile_figure(r, out / f"profile_{r.strategy}.png") for r in results]
    if len(results) > 1:
        written.append(comparison_figure(results, out / "comparison.png"))
    return written
