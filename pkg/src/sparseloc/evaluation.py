"""Tolerance-disk matching of reconstructions against ground truth.

Matching is one-to-one and greedy: the globally shortest unmatched pair within
the tolerance is matched first, repeatedly. Ties (distances equal within
1e-12) are broken by lower truth index, then lower reconstruction index.
Molecules are compared only within the same frame index, and counts are
summed over frames before the Jaccard ratio is taken (micro-average).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import MoleculeSet

__all__ = ["MatchResult", "match_frame", "jaccard_sweep", "format_sweep_table",
           "sweep_table_csv"]

logger = logging.getLogger(__name__)

_TIE_TOL = 1e-12


@dataclass(frozen=True)
class MatchResult:
    """Counts and matched pairs for one tolerance.

    ``pairs`` holds (truth index, reconstruction index, distance_nm) with
    indices referring to positions in the input sets. The Jaccard index is
    TP / (TP + FP + FN), defined as 1 when all three counts are zero.
    """

    tolerance_nm: float
    true_positives: int
    false_positives: int
    false_negatives: int
    pairs: tuple[tuple[int, int, float], ...]

    @property
    def jaccard(self) -> float:
        denom = self.true_positives + self.false_positives + self.false_negatives
        if denom == 0:
            return 1.0
        return self.true_positives / denom


def _coords(mols: MoleculeSet, offset_nm=(0.0, 0.0)):
    x, y, _, frames = mols.arrays()
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("molecule coordinates must be finite")
    return x + offset_nm[0], y + offset_nm[1], frames


def _greedy_match(tx, ty, rx, ry, tol):
    """Greedy shortest-pair-first matching; returns (ti, ri, dist) triples."""
    if tx.size == 0 or rx.size == 0:
        return []
    dist = np.hypot(tx[:, None] - rx[None, :], ty[:, None] - ry[None, :])
    ti, ri = np.nonzero(dist <= tol)
    candidates = sorted(zip(dist[ti, ri], ti, ri), key=lambda p: p[0])
    # regroup near-equal distances so index order decides inside a tie group
    ordered = []
    i = 0
    while i < len(candidates):
        j = i + 1
        while j < len(candidates) and candidates[j][0] - candidates[j - 1][0] <= _TIE_TOL:
            j += 1
        ordered.extend(sorted(candidates[i:j], key=lambda p: (p[1], p[2])))
        i = j
    t_used = set()
    r_used = set()
    pairs = []
    for d, t, r in ordered:
        if t in t_used or r in r_used:
            continue
        t_used.add(t)
        r_used.add(r)
        pairs.append((int(t), int(r), float(d)))
    return pairs


def _optimal_match(tx, ty, rx, ry, tol):
    """Maximum-cardinality (then minimum-distance) matching within tolerance."""
    from scipy.optimize import linear_sum_assignment

    if tx.size == 0 or rx.size == 0:
        return []
    dist = np.hypot(tx[:, None] - rx[None, :], ty[:, None] - ry[None, :])
    big = 2.0 * tol * max(tx.size, rx.size) + 1.0
    cost = np.where(dist <= tol, dist, big)
    rows, cols = linear_sum_assignment(cost)
    return [
        (int(t), int(r), float(dist[t, r]))
        for t, r in zip(rows, cols)
        if dist[t, r] <= tol
    ]


def match_frame(
    truth: MoleculeSet,
    recon: MoleculeSet,
    tol_nm: float,
    recon_offset_nm: tuple[float, float] = (0.0, 0.0),
    method: str = "greedy",
) -> MatchResult:
    """Match reconstructions to ground truth within a tolerance disk.

    ``recon_offset_nm`` shifts every reconstructed position before matching —
    a knob for absorbing a global half-pixel convention mismatch in external
    ground-truth files. ``method`` selects the default greedy matcher or an
    optimal-assignment mode.
    """
    if not (tol_nm > 0):
        raise ValueError("tol_nm must be positive")
    if method not in ("greedy", "optimal"):
        raise ValueError(f"unknown matching method {method!r}")
    tx, ty, tframes = _coords(truth)
    rx, ry, rframes = _coords(recon, recon_offset_nm)

    matcher = _greedy_match if method == "greedy" else _optimal_match
    tp = 0
    pairs = []
    for frame in sorted(set(tframes.tolist()) | set(rframes.tolist())):
        t_idx = np.flatnonzero(tframes == frame)
        r_idx = np.flatnonzero(rframes == frame)
        local = matcher(tx[t_idx], ty[t_idx], rx[r_idx], ry[r_idx], tol_nm)
        tp += len(local)
        pairs.extend((int(t_idx[t]), int(r_idx[r]), d) for t, r, d in local)
    fp = len(recon) - tp
    fn = len(truth) - tp
    logger.debug("matched %d pairs at %.1f nm (fp=%d fn=%d)", tp, tol_nm, fp, fn)
    return MatchResult(float(tol_nm), tp, fp, fn, tuple(pairs))


def jaccard_sweep(
    truth: MoleculeSet,
    recon: MoleculeSet,
    tolerances: Sequence[float],
    **kwargs,
) -> list[MatchResult]:
    """Match at each tolerance; counts are aggregated over all frames."""
    if len(tolerances) == 0:
        raise ValueError("tolerance list must be nonempty")
    return [match_frame(truth, recon, tol, **kwargs) for tol in tolerances]


def format_sweep_table(results_by_label: dict[str, list[MatchResult]]) -> str:
    """Plain-text table: one row per labelled reconstruction, Jaccard in %."""
    labels = list(results_by_label)
    tolerances = [r.tolerance_nm for r in results_by_label[labels[0]]]
    width = max([len("Method - Tolerance (nm)")] + [len(l) for l in labels])
    header = "Method - Tolerance (nm)".ljust(width) + "".join(
        f"{t:>10.0f}" for t in tolerances
    )
    lines = [header]
    for label in labels:
        row = label.ljust(width) + "".join(
            f"{100.0 * r.jaccard:>10.1f}" for r in results_by_label[label]
        )
        lines.append(row)
    return "\n".join(lines)


def sweep_table_csv(results_by_label: dict[str, list[MatchResult]]) -> str:
    labels = list(results_by_label)
    tolerances = [r.tolerance_nm for r in results_by_label[labels[0]]]
    lines = ["method," + ",".join(f"{t:g}" for t in tolerances)]
    for label in labels:
        lines.append(
            label + "," + ",".join(f"{100.0 * r.jaccard:.1f}" for r in results_by_label[label])
        )
    return "\n".join(lines) + "\n"
