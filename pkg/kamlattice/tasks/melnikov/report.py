import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from kamlattice.tasks.algebra.types import multi_l1
from kamlattice.tasks.melnikov.types import ExcisionStage, ExcisionWitness, ParameterBox, WitnessKind

logger = logging.getLogger(__name__)


ExcisionFn = Callable[[ParameterBox, int], tuple[ParameterBox, list[ExcisionWitness]]]
"""
One excision pass at Fourier radius ``K``, e.g. ``lambda box, K: excise_tangent(box, K, c21)``.
"""


def stage_of(kind: WitnessKind, K: float, threshold: float, before: ParameterBox, after: ParameterBox, witnesses: list[ExcisionWitness]) -> ExcisionStage:
    return ExcisionStage(kind, float(K), float(threshold), before.alive_count, after.alive_count, list(witnesses))


@dataclass
class MeasureRow:
    kind: str
    K: float
    threshold: float
    before: int
    after: int
    killed_fraction: float
    surviving_fraction: float

    def to_json(self) -> dict:
        return self.__dict__.copy()


@dataclass
class MeasureReport:
    """
    Per-scale survival table, fitted decay exponents of the killed fraction per witness kind, and witness histograms.

    ``slopes[kind]`` is the log-log slope of the killed fraction against ``K``; ``None`` when fewer than
    two scales with a nonzero kill are available.
    """
    total: int
    rows: list[MeasureRow] = field(default_factory=list)
    slopes: dict[str, float | None] = field(default_factory=dict)
    histograms: dict[str, dict[int, int]] = field(default_factory=dict)

    @property
    def fraction(self) -> float:
        return self.rows[-1].surviving_fraction if self.rows else 1.0

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "fraction": self.fraction,
            "rows": [r.to_json() for r in self.rows],
            "slopes": self.slopes,
            "histograms": {kind: {str(k): v for k, v in hist.items()} for kind, hist in self.histograms.items()},
        }


def fit_slope(Ks, values) -> float | None:
    """Least-squares slope of ``log values`` against ``log K`` over positive values."""
    Ks = np.asarray(Ks, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = values > 0
    if len(np.unique(Ks[mask])) < 2:
        return None
    slope, _ = np.polyfit(np.log(Ks[mask]), np.log(values[mask]), 1)
    return float(slope)


def measure_report(history: list[ExcisionStage], total: int | None = None) -> MeasureReport:
    """
    Summarize a sequence of excision stages.

    Args:
        history: Stages in the order they were applied.
        total: Sample count of the original box; defaults to the first stage's ``before``.
    """
    if not history:
        return MeasureReport(total or 0)
    total = history[0].before if total is None else total
    if len({stage.K for stage in history}) < 2:
        logger.warning("Measure report over fewer than two scales: no decay exponent can be fitted")
    report = MeasureReport(total)
    for stage in history:
        killed = (stage.before - stage.after) / stage.before if stage.before else 0.0
        report.rows.append(MeasureRow(stage.kind.value, stage.K, stage.threshold, stage.before, stage.after, killed, stage.after / total))
        hist = report.histograms.setdefault(stage.kind.value, {})
        for order, count in Counter(multi_l1(w.k) for w in stage.witnesses).items():
            hist[order] = hist.get(order, 0) + count
    for kind in {row.kind for row in report.rows}:
        rows = [row for row in report.rows if row.kind == kind]
        report.slopes[kind] = fit_slope([r.K for r in rows], [r.killed_fraction for r in rows])
    logger.info(f"Measure report: surviving fraction {report.fraction:.4f}, slopes {report.slopes}")
    return report


def excision_trend(box: ParameterBox, Ks: list[int], excise: ExcisionFn, kind: WitnessKind, threshold: Callable[[int], float]) -> list[ExcisionStage]:
    """
    Run one excision independently at each ``K`` from the same starting box.

    The stages share no state, so the killed fractions measure the excised set at each scale on its own.
    """
    stages = []
    for K in Ks:
        after, witnesses = excise(box, K)
        stages.append(stage_of(kind, K, threshold(K), box, after, witnesses))
    return stages


def witness_rows(stages: list[ExcisionStage]) -> list[dict]:
    """Flat witness records tagged with their stage radius, ready for tabular export."""
    return [{"K": stage.K, **w.to_json(), "k": str(list(w.k)), "sites": str(list(w.sites))} for stage in stages for w in stage.witnesses]
