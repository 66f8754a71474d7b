"""Accuracy of a candidate temperature trace against a reference trace.

Two scores: the mean absolute error over (time, node) samples, and the
temperature-violation accuracy, i.e. the fraction of reference samples at
or above the threshold that the candidate flags. The candidate flags a
sample once it is within ``guard`` kelvin of the threshold. Violations are
counted per (node, time) pair.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .traces import TemperatureTrace


@dataclass(frozen=True)
class ComparisonReport:
    mae: float
    violation_accuracy: float | None  # None when the reference has no violations
    reference_violations: int
    flagged_and_matched: int
    false_positives: int
    false_positive_rate: float | None
    threshold: float
    guard: float
    n_samples: int
    nodes: tuple[str, ...]
    per_node_mae: dict[str, float] = field(default_factory=dict)

    def to_text(self) -> str:
        acc = "undefined" if self.violation_accuracy is None else repr(self.violation_accuracy)
        fpr = "undefined" if self.false_positive_rate is None else repr(self.false_positive_rate)
        lines = [
            f"mae_k = {self.mae!r}",
            f"violation_accuracy = {acc}",
            f"reference_violations = {self.reference_violations}",
            f"flagged_and_matched = {self.flagged_and_matched}",
            f"false_positives = {self.false_positives}",
            f"false_positive_rate = {fpr}",
            f"threshold_c = {self.threshold!r}",
            f"guard_k = {self.guard!r}",
            f"samples = {self.n_samples}",
            f"nodes = {len(self.nodes)}",
        ]
        return "\n".join(lines) + "\n"

    def write_per_node_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node_id", "mae_k"])
            for nid, v in self.per_node_mae.items():
                w.writerow([nid, repr(v)])


def resample_hold(trace: TemperatureTrace, times: np.ndarray, columns: list[int]) -> np.ndarray:
    """Values at ``times`` by previous-sample hold."""
    idx = np.searchsorted(trace.times, times + 1e-9, side="right") - 1
    if np.any(idx < 0):
        raise ValueError("resampling before the first candidate sample")
    return trace.values[np.ix_(idx, columns)]


def compare(
    reference: TemperatureTrace,
    candidate: TemperatureTrace,
    threshold: float = 85.0,
    guard: float = 1.0,
    nodes=None,
    chiplet_only: bool = True,
) -> ComparisonReport:
    """Score ``candidate`` against ``reference``.

    Comparison runs over the nodes both traces share, narrowed to chiplet
    nodes when either trace knows which those are (``chiplet_only``), or to
    an explicit ``nodes`` collection.
    """
    if guard < 0:
        raise ValueError("guard must be >= 0")
    cand_cols = {nid: c for c, nid in enumerate(candidate.node_ids)}
    common = [nid for nid in reference.node_ids if nid in cand_cols]
    if nodes is not None:
        wanted = set(nodes)
        common = [nid for nid in common if nid in wanted]
    elif chiplet_only:
        chiplets = reference.chiplet_nodes or candidate.chiplet_nodes
        if chiplets:
            common = [nid for nid in common if nid in chiplets]
    if not common:
        raise ValueError("reference and candidate traces share no nodes to compare")

    lo = max(reference.times[0], candidate.times[0])
    hi = min(reference.times[-1], candidate.times[-1])
    if lo > hi + 1e-9:
        raise ValueError("reference and candidate traces do not overlap in time")
    sel = (reference.times >= lo - 1e-9) & (reference.times <= hi + 1e-9)
    times = reference.times[sel]

    ref_cols = {nid: c for c, nid in enumerate(reference.node_ids)}
    ref = reference.values[np.ix_(np.nonzero(sel)[0], [ref_cols[n] for n in common])]
    cand = resample_hold(candidate, times, [cand_cols[n] for n in common])

    err = np.abs(ref - cand)
    violations = ref >= threshold
    flagged = cand >= threshold - guard
    n_ref = int(violations.sum())
    matched = int((violations & flagged).sum())
    false_pos = int((flagged & ~violations).sum())
    n_clear = int((~violations).sum())
    return ComparisonReport(
        mae=float(err.mean()),
        violation_accuracy=(matched / n_ref) if n_ref else None,
        reference_violations=n_ref,
        flagged_and_matched=matched,
        false_positives=false_pos,
        false_positive_rate=(false_pos / n_clear) if n_clear else None,
        threshold=float(threshold),
        guard=float(guard),
        n_samples=int(err.size),
        nodes=tuple(common),
        per_node_mae={nid: float(v) for nid, v in zip(common, err.mean(axis=0))},
    )
