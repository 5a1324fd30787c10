"""Tabular forms of the study results, one table per artifact."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .estimation import FitStatus
from .io import write_table
from .simulation import TESTS, AgreementRow, EigenPoint, Fig6Result, MedianPoint, PowerPoint, ReplicateTable


def power_rows(points: Sequence[PowerPoint]):
    header = ["R", "test", "rate", "n_valid"]
    rows = [[p.R, name, p.rate[name], p.n_valid[name]] for p in points for name in TESTS]
    return header, rows


def failure_rows(points: Sequence[PowerPoint]):
    header = ["R", "fit", "status", "count"]
    rows = [
        [p.R, fit, s.name.lower(), p.failures[fit][s.name.lower()]]
        for p in points
        for fit in ("null", "full")
        for s in FitStatus
    ]
    return header, rows


def median_rows(points: Sequence[MedianPoint]):
    header = [
        "R",
        "n_valid",
        "median_t_exp",
        "median_t_obs",
        "median_ratio",
        "median_t_obs_positive",
        "median_t_obs_negative",
        "n_positive",
        "n_negative",
    ]
    rows = [
        [p.R, p.n_valid, p.t_exp, p.t_obs, p.ratio, p.t_obs_positive, p.t_obs_negative, p.n_positive, p.n_negative]
        for p in points
    ]
    return header, rows


def agreement_rows(rows_in: Sequence[AgreementRow]):
    header = ["R", "variant", "agreement", "n", "replicates", "considered_fraction"]
    rows = [[r.R, r.variant, r.agreement, r.n, r.replicates, r.considered_fraction] for r in rows_in]
    return header, rows


def eigen_rows(points: Sequence[EigenPoint]):
    header = ["R", "n_valid"] + [f"median_eig{j}" for j in range(1, 5)] + [f"expected_eig{j}" for j in range(1, 5)]
    rows = []
    for p in points:
        expected = p.expected if p.expected is not None else np.full(4, np.nan)
        rows.append([p.R, p.n_valid, *map(float, p.median), *map(float, expected)])
    return header, rows


def asymptotic_rows(points):
    header = [
        "R",
        "psi2",
        "psi_star",
        "p1_star",
        "p2_star",
        "eig1",
        "eig2",
        "eig3",
        "eig4",
        "projected_eigenvalue",
        "reciprocal",
    ]
    rows = []
    for pt, psi2 in points:
        star = pt.pseudo_true.theta_null_star
        leading = pt.projected.leading if pt.projected is not None else float("nan")
        rows.append(
            [pt.R, psi2, star.psi, star.p1, star.p2, *map(float, pt.expected_info.eigenvalues), leading,
             pt.reciprocal_leading]
        )
    return header, rows


def fig6_rows(result: Fig6Result):
    header = ["replicate", "reciprocal_eigenvalue"]
    rows = [[i, float(v)] for i, v in enumerate(result.reciprocal)]
    return header, rows


def scatter_rows(tables: Sequence[ReplicateTable]):
    header = ["R", "replicate", "t_exp", "t_obs"]
    rows = []
    for t in tables:
        valid = np.isfinite(t.t_exp) & np.isfinite(t.t_obs)
        for i in np.flatnonzero(valid):
            rows.append([t.R, int(i), float(t.t_exp[i]), float(t.t_obs[i])])
    return header, rows


def write_rows(out_dir, stem: str, table, fmt: str = "csv") -> Path:
    header, rows = table
    return write_table(Path(out_dir) / f"{stem}.{fmt}", header, rows, fmt)
