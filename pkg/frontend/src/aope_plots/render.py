"""Render scaled-error curves with confidence bands from experiment CSVs.

Input is the curve CSV written by the experiment harness (header
policy,arm,n,mean,std,ci_low,ci_high,M,seed). One panel per policy; each arm
draws a mean line plus a shaded interval band around it, with a horizontal
zero reference. Output is a PNG whose bytes depend only on the input and the
spec (fixed metadata, no timestamps).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

EXPECTED_HEADER = ["policy", "arm", "n", "mean", "std", "ci_low", "ci_high", "M", "seed"]

ARM_COLORS = {"adaptive": "tab:blue", "shadow": "tab:orange"}
FALLBACK_COLORS = ("tab:green", "tab:red", "tab:purple", "tab:brown")


class SchemaError(ValueError):
    """The CSV header does not match the experiment export schema."""


@dataclass
class PlotSpec:
    csv_paths: list[str]
    out_path: str
    group_key: str = "policy"
    dpi: int = 150
    x_label: str = "n"
    y_label: str = "sqrt(n) x (estimate - true value)"
    arm_colors: dict = field(default_factory=lambda: dict(ARM_COLORS))


@dataclass
class CurveRow:
    policy: str
    arm: str
    n: int
    mean: float
    ci_low: float
    ci_high: float


def load_rows(path) -> list[CurveRow]:
    """Parse one CSV, insisting on the exact export header."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected header {','.join(EXPECTED_HEADER)}")
        if header != EXPECTED_HEADER:
            missing = [c for c in EXPECTED_HEADER if c not in header]
            extra = [c for c in header if c not in EXPECTED_HEADER]
            parts = []
            if missing:
                parts.append(f"missing column(s): {', '.join(missing)}")
            if extra:
                parts.append(f"unexpected column(s): {', '.join(extra)}")
            if not parts:
                parts.append("columns out of order")
            raise SchemaError(f"{path}: {'; '.join(parts)}")
        rows = []
        for record in reader:
            if not record or record == [""]:
                continue
            by_name = dict(zip(EXPECTED_HEADER, record))
            rows.append(
                CurveRow(
                    policy=by_name["policy"],
                    arm=by_name["arm"],
                    n=int(by_name["n"]),
                    mean=float(by_name["mean"]),
                    ci_low=float(by_name["ci_low"]),
                    ci_high=float(by_name["ci_high"]),
                )
            )
    return rows


def build_figure(rows: list[CurveRow], spec: PlotSpec):
    """One panel per policy; per arm a mean line and a shaded CI band."""
    policies = sorted({r.policy for r in rows})
    n_panels = max(len(policies), 1)
    fig, axes = plt.subplots(
        1, n_panels, figsize=(4.8 * n_panels, 3.6), squeeze=False, sharey=False
    )
    if not policies:
        ax = axes[0][0]
        ax.axhline(0.0, color="black", linewidth=0.8)
        ax.set_xlabel(spec.x_label)
        ax.set_ylabel(spec.y_label)
        ax.set_title("no data")
        fig.tight_layout()
        return fig
    fallback = iter(FALLBACK_COLORS)
    colors = dict(spec.arm_colors)
    for panel, policy in enumerate(policies):
        ax = axes[0][panel]
        sub = [r for r in rows if r.policy == policy]
        for arm in sorted({r.arm for r in sub}):
            pts = sorted((r for r in sub if r.arm == arm), key=lambda r: r.n)
            xs = [r.n for r in pts]
            color = colors.setdefault(arm, next(fallback, "gray"))
            ax.plot(xs, [r.mean for r in pts], label=arm, color=color)
            ax.fill_between(
                xs, [r.ci_low for r in pts], [r.ci_high for r in pts],
                color=color, alpha=0.25, linewidth=0,
            )
        ax.axhline(0.0, color="black", linewidth=0.8)
        ax.set_title(policy)
        ax.set_xlabel(spec.x_label)
        ax.set_ylabel(spec.y_label)
        ax.legend()
    fig.tight_layout()
    return fig


def render(spec: PlotSpec) -> str:
    """Load every listed CSV and write the PNG; returns the output path."""
    rows = []
    for path in spec.csv_paths:
        rows.extend(load_rows(path))
    fig = build_figure(rows, spec)
    out = Path(spec.out_path)
    fig.savefig(out, dpi=spec.dpi, metadata={"Software": "aope-plots"})
    plt.close(fig)
    return str(out)
