"""CSV tables, schema checks and plot-script emission.

Every table written here is re-read with pandas and its columns compared
with the schema below before a command reports success. Frequencies are
converted from kHz to Hz at this boundary.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import pandas as pd

from ..core import HybridBeamError, khz_to_hz
from .harmonics import DISPLACEMENT_CHANNELS, FORCE_CHANNELS, VOLTAGE_CHANNELS
from .iterative_coupler import SweepRecord
from .stability import BoundaryPoint, LocusCurve, Root

logger = logging.getLogger("hybrid_beam.reporting")

FLOAT_FORMAT = "%.10g"


def _sweep_columns() -> list[str]:
    cols = ["damping_scale", "seed", "repeat", "omega_hz"]
    for side in ("ps", "ns"):
        for name in DISPLACEMENT_CHANNELS + FORCE_CHANNELS:
            cols += [f"{side}_{name}_amp", f"{side}_{name}_phase_rad"]
    cols += ["forcing_kn", "u_per_force_mm_per_kn"]
    for name in VOLTAGE_CHANNELS:
        cols += [f"{name}_re_V", f"{name}_im_V"]
    cols += ["ref_u_amp", "ref_u_phase_rad", "ref_error_mm", "residual_norm_mm", "iterations", "probes", "converged"]
    for name in FORCE_CHANNELS + DISPLACEMENT_CHANNELS:
        cols += [f"delay_ms_{name}", f"amplification_pct_{name}"]
    return cols


SCHEMAS: dict[str, list[str]] = {
    "modes": ["kind", "mode", "frequency_hz", "damping_ratio"],
    "condensed": [
        "side", "freq_hz", "re_uu", "im_uu", "re_up", "im_up", "re_pu", "im_pu", "re_pp", "im_pp",
    ],
    "roots": ["alpha", "tau_ms", "delta_rad_per_ms", "f_hz", "family"],
    "locus": ["alpha", "curve", "family", "tau_ms", "delta_rad_per_ms", "f_hz"],
    "boundary": ["f_cutoff_hz", "alpha", "tau_crit_ms", "crossing", "error"],
    "sweep": _sweep_columns(),
    "raw": ["t_ms", "l1_mm", "l2_mm", "eps1", "eps2", "v_front_V", "v_back_V"],
    "verify": ["criterion", "group", "passed", "measured", "expected", "detail"],
}


def write_table(rows: Iterable[Mapping] | pd.DataFrame, path: Path, schema: str) -> Path:
    """Write ``rows`` under the named schema and re-read the file to check it."""
    columns = SCHEMAS[schema]
    frame = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows))
    missing = [c for c in columns if c not in frame.columns]
    if missing and len(frame):
        raise HybridBeamError(f"{schema} table lacks columns {missing}")
    frame = frame.reindex(columns=columns)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    check_table(path, schema)
    logger.debug("wrote %s (%d rows)", path, len(frame))
    return path


def check_table(path: Path, schema: str) -> pd.DataFrame:
    """Re-read a CSV and verify its header against the schema.

    Raises:
        HybridBeamError: if the file cannot be parsed or the columns differ.
    """
    try:
        frame = pd.read_csv(path)
    except (OSError, ValueError) as e:
        raise HybridBeamError(f"cannot re-read {path}: {e}") from e
    if list(frame.columns) != SCHEMAS[schema]:
        raise HybridBeamError(f"{path} does not match the {schema} schema: {list(frame.columns)}")
    return frame


def root_rows(roots: Sequence[Root]) -> list[dict]:
    return [
        {
            "alpha": r.alpha,
            "tau_ms": r.tau,
            "delta_rad_per_ms": r.delta,
            "f_hz": khz_to_hz(r.f),
            "family": r.family,
        }
        for r in roots
    ]


def locus_rows(curves: Sequence[LocusCurve]) -> list[dict]:
    rows = []
    for j, curve in enumerate(curves):
        for p in curve.points:
            rows.append(
                {
                    "alpha": p.alpha,
                    "curve": j,
                    "family": curve.family,
                    "tau_ms": p.tau,
                    "delta_rad_per_ms": p.delta,
                    "f_hz": khz_to_hz(p.f),
                }
            )
    return rows


def boundary_rows(points: Sequence[BoundaryPoint]) -> list[dict]:
    return [
        {
            "f_cutoff_hz": khz_to_hz(p.f_cutoff),
            "alpha": p.alpha,
            "tau_crit_ms": p.tau_crit,
            "crossing": p.crossing,
            "error": p.error or "",
        }
        for p in points
    ]


def sweep_rows(
    records: Sequence[SweepRecord], weights: Sequence[float], damping_scale: float, seed: int, repeat: int = 0
) -> list[dict]:
    rows = []
    for record in records:
        row = {"damping_scale": damping_scale, "seed": seed, "repeat": repeat}
        row.update(record.to_row(weights))
        rows.append(row)
    return rows


ROOTS_PLOT = '''"""Root maps of the delayed hybrid characteristic function, one panel per delay."""
import matplotlib.pyplot as plt
import pandas as pd

roots = pd.read_csv("{csv}")
taus = sorted(roots["tau_ms"].unique())
fig, axes = plt.subplots(1, len(taus), figsize=(3.2 * len(taus), 3.4), sharey=True, squeeze=False)
for ax, tau in zip(axes[0], taus):
    sel = roots[roots["tau_ms"] == tau]
    for family, marker in (("delay-free-continuation", "o"), ("delay-born", "x")):
        part = sel[sel["family"] == family]
        ax.plot(part["delta_rad_per_ms"], part["f_hz"] / 1000.0, marker, label=family)
    ax.axvline(0.0, color="k", lw=0.8)
    ax.set_title(f"tau = {{tau:g}} ms")
    ax.set_xlabel("delta [rad/ms]")
axes[0][0].set_ylabel("f [kHz]")
axes[0][-1].legend(fontsize=7)
fig.tight_layout()
fig.savefig("{stem}.pdf")
'''

LOCUS_PLOT = '''"""Root locus over delay, coloured by branch."""
import matplotlib.pyplot as plt
import pandas as pd

locus = pd.read_csv("{csv}")
fig, (ax_f, ax_d) = plt.subplots(1, 2, figsize=(9, 3.6))
for curve, part in locus.groupby("curve"):
    unstable = part[part["delta_rad_per_ms"] > 0]
    if unstable.empty:
        continue
    ax_f.plot(unstable["tau_ms"], unstable["f_hz"] / 1000.0, ".-", lw=0.8)
    ax_d.plot(unstable["tau_ms"], unstable["delta_rad_per_ms"], ".-", lw=0.8)
tau = locus["tau_ms"].clip(lower=0.3).sort_values().unique()
ax_f.plot(tau, 1.0 / (2.0 * tau), "k--", label="f = 1/(2 tau)")
ax_f.set_xlabel("tau [ms]")
ax_f.set_ylabel("f [kHz]")
ax_f.legend()
ax_d.set_xlabel("tau [ms]")
ax_d.set_ylabel("delta [rad/ms]")
fig.tight_layout()
fig.savefig("{stem}.pdf")
'''

BOUNDARY_PLOT = '''"""Cut-off stability boundaries in the (tau, alpha) plane."""
import matplotlib.pyplot as plt
import pandas as pd

boundary = pd.read_csv("{csv}")
fig, ax = plt.subplots(figsize=(5, 4))
for fc, part in boundary.groupby("f_cutoff_hz"):
    ax.plot(part["tau_crit_ms"], part["alpha"], "o-", label=f"f_c = {{fc:g}} Hz")
ax.set_xlabel("tau_crit [ms]")
ax.set_ylabel("alpha")
ax.legend()
fig.tight_layout()
fig.savefig("{stem}.pdf")
'''

SWEEP_PLOT = '''"""Interface FRF amplitude and phase, and iteration counts per point."""
import matplotlib.pyplot as plt
import pandas as pd

sweep = pd.read_csv("{csv}")
fig, (ax_a, ax_p, ax_i) = plt.subplots(3, 1, figsize=(6, 8), sharex=True)
for (scale, seed, repeat), run in sweep.groupby(["damping_scale", "seed", "repeat"]):
    label = f"damping x{{scale:g}}, seed {{seed}}"
    ok = run[run["converged"]]
    nc = run[~run["converged"]]
    line, = ax_a.plot(ok["omega_hz"], ok["u_per_force_mm_per_kn"], "o-", ms=3, label=label)
    ax_a.plot(nc["omega_hz"], nc["u_per_force_mm_per_kn"], "x", color=line.get_color())
    for _, row in nc.iterrows():
        ax_a.annotate("NC", (row["omega_hz"], row["u_per_force_mm_per_kn"]), fontsize=7)
    ax_p.plot(ok["omega_hz"], ok["ps_u_phase_rad"], "o-", ms=3, color=line.get_color())
    ax_i.bar(run["omega_hz"] + 0.02 * repeat, run["iterations"], width=0.03, color=line.get_color())
    ax_a.plot(run["omega_hz"], run["ref_u_amp"] / run["forcing_kn"], "k:", lw=0.8)
ax_a.set_ylabel("|U_u| / F [mm/kN]")
ax_a.legend(fontsize=7)
ax_p.set_ylabel("phase U_u [rad]")
ax_i.set_ylabel("iterations")
ax_i.set_xlabel("frequency [Hz]")
fig.tight_layout()
fig.savefig("{stem}.pdf")
'''

RAW_PLOT = '''"""Raw interface signals of the last window with the period average."""
import matplotlib.pyplot as plt
import pandas as pd

raw = pd.read_csv("{csv}")
period = {period}
fig, axes = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
t = raw["t_ms"] - raw["t_ms"].iloc[0]
for ax, cols in zip(axes, (("l1_mm", "l2_mm"), ("eps1", "eps2"))):
    for col in cols:
        ax.plot(t, raw[col], lw=0.6, label=col)
        avg = raw[col].to_numpy().reshape(-1, period).mean(axis=0)
        ax.plot(t.iloc[:period], avg, "k--", lw=1.0)
    ax.legend(fontsize=7)
axes[-1].set_xlabel("t [ms]")
fig.tight_layout()
fig.savefig("{stem}.pdf")
'''

PLOT_TEMPLATES = {
    "roots": ROOTS_PLOT,
    "locus": LOCUS_PLOT,
    "boundary": BOUNDARY_PLOT,
    "sweep": SWEEP_PLOT,
    "raw": RAW_PLOT,
}


def write_plot_script(csv_path: Path, kind: str, **extra) -> Path:
    """Generate ``plot_<stem>.py`` next to ``csv_path``; it renders ``<stem>.pdf`` when run."""
    csv_path = Path(csv_path)
    script = csv_path.with_name(f"plot_{csv_path.stem}.py")
    script.write_text(PLOT_TEMPLATES[kind].format(csv=csv_path.name, stem=csv_path.stem, **extra))
    return script
