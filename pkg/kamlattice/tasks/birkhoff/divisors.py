import logging
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from kamlattice.tasks.exceptions import ModelDomainError
from kamlattice.tasks.model.bbm import bbm_normal_frequency, bbm_weight
from kamlattice.tasks.model.gpc import gpc_eigenvalue, gpc_quartic_table
from kamlattice.tasks.model.types import Equation, FrequencyModel

logger = logging.getLogger(__name__)

IDENTITY_TOLERANCE = 1e-12
DEFAULT_FLOOR = 1e-10


def cubic_divisor(j: int, k: int, l: int, tau: float) -> float:
    """
    ``λ_j + λ_k + λ_l`` for a zero-sum triple of signed BBM modes.

    The direct sum is checked against the closed product form
    ``−jkl τ³ (3 + τ²(k² + kl + l²)) / Π(1 + τ²·²)``, i.e. ``∓δ_j²δ_k²δ_l²(3 + τ²(k² + kl + l²))``.

    Raises:
        ModelDomainError: if the triple does not sum to zero or contains the zero mode.
    """
    if j + k + l != 0:
        raise ModelDomainError(f"Cubic selection rule violated: {j} + {k} + {l} != 0")
    if 0 in (j, k, l):
        raise ModelDomainError(f"Zero mode in cubic triple ({j}, {k}, {l})")
    direct = bbm_normal_frequency(j, tau) + bbm_normal_frequency(k, tau) + bbm_normal_frequency(l, tau)
    sign = -np.sign(j * k * l)
    closed = sign * np.prod([bbm_weight(m, tau) ** 2 for m in (j, k, l)]) * (3.0 + tau * tau * (k * k + k * l + l * l))
    if abs(direct - closed) > IDENTITY_TOLERANCE * max(1.0, abs(direct)):
        logger.warning(f"Cubic divisor identity mismatch at ({j}, {k}, {l}): {direct!r} vs {closed!r}")
    return float(direct)


def quartic_divisor_bbm(j: int, k: int, l: int, m: int, tau: float) -> float:
    """
    ``λ_j + λ_k + λ_l + λ_m`` for a zero-sum quadruple of signed BBM modes, from the product identity

    ``τ⁻³ Π(1+τ²·²) Σλ = 3(k+l)(k+m)(l+m) + (k+l)(k+m)(l+m)(k²+l²+lm+m²+k(l+m)) τ²
    + kl(k+l)m(k+m)(l+m)(k+l+m) τ⁴``.

    The direct sum is compared with it and a mismatch is logged.

    Raises:
        ModelDomainError: if the quadruple does not sum to zero or contains the zero mode.
    """
    if j + k + l + m != 0:
        raise ModelDomainError(f"Quartic selection rule violated: {j} + {k} + {l} + {m} != 0")
    if 0 in (j, k, l, m):
        raise ModelDomainError(f"Zero mode in quartic quadruple ({j}, {k}, {l}, {m})")
    t2 = tau * tau
    pairs = (k + l) * (k + m) * (l + m)
    numerator = (
        3.0 * pairs
        + pairs * (k * k + l * l + l * m + m * m + k * (l + m)) * t2
        + k * l * (k + l) * m * (k + m) * (l + m) * (k + l + m) * t2 * t2
    )
    closed = tau ** 3 * numerator / np.prod([1.0 + t2 * v * v for v in (j, k, l, m)])
    direct = sum(bbm_normal_frequency(v, tau) for v in (j, k, l, m))
    if abs(direct - closed) > IDENTITY_TOLERANCE * max(1.0, abs(direct)):
        logger.warning(f"Quartic divisor identity mismatch at ({j}, {k}, {l}, {m}): {direct!r} vs {closed!r}")
    return float(closed)


@dataclass
class DivisorMinimum:
    """Smallest divisor of one family with the tuple attaining it and the number of tuples scanned."""
    family: str
    value: float
    attained_at: tuple
    scanned: int
    identity_defect: float = 0.0

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "value": self.value,
            "attained_at": [list(v) if isinstance(v, tuple) else v for v in self.attained_at],
            "scanned": self.scanned,
            "identity_defect": self.identity_defect,
        }


@dataclass
class NonresonanceReport:
    """
    Outcome of an exhaustive divisor scan of the Birkhoff normal form.

    ``tail_bound`` bounds the contribution of a single site beyond ``Ñ``: ``|λ_j| ≤ 1/(τ|j|)`` for BBM and
    ``1 − √λ_j ≤ 1/(2‖j‖²)`` for gPC. ``passed`` is false when a minimum falls below ``floor``.
    """
    equation: str
    radius: int
    N_tilde: int
    floor: float
    tail_bound: float
    minima: dict[str, DivisorMinimum] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(m.value >= self.floor for m in self.minima.values() if m.scanned)

    def to_json(self) -> dict:
        return {
            "equation": self.equation,
            "radius": self.radius,
            "N_tilde": self.N_tilde,
            "floor": self.floor,
            "tail_bound": self.tail_bound,
            "passed": self.passed,
            "minima": {name: m.to_json() for name, m in self.minima.items()},
        }


def default_tail_radius(model: FrequencyModel) -> int:
    """``Ñ = max(lattice radius, 4·max |j|)`` over the tangent sites."""
    largest = max((max(abs(v) for v in site) for site in model.tangent_sites), default=0)
    return max(model.lattice_radius, 4 * largest)


def _scan_bbm(model: FrequencyModel, radius: int, report: NonresonanceReport) -> None:
    tau = model.tau[0]
    J = {site[0] for site in model.tangent_sites}
    modes = [v for v in range(-radius, radius + 1) if v != 0]

    best, where, count, defect = np.inf, (), 0, 0.0
    for j, k in product(modes, repeat=2):
        l = -(j + k)
        if l == 0 or abs(l) > radius:
            continue
        value = cubic_divisor(j, k, l, tau)
        closed = -np.sign(j * k * l) * np.prod([bbm_weight(v, tau) ** 2 for v in (j, k, l)]) * (3.0 + tau * tau * (k * k + k * l + l * l))
        defect = max(defect, abs(value - closed))
        count += 1
        if abs(value) < best:
            best, where = abs(value), (j, k, l)
    report.minima["cubic"] = DivisorMinimum("cubic", float(best), where, count, float(defect))

    best, where, count, defect = np.inf, (), 0, 0.0
    for j, k, l in product(modes, repeat=3):
        m = -(j + k + l)
        if m == 0 or abs(m) > radius:
            continue
        if J and not J.intersection(abs(v) for v in (j, k, l, m)):
            continue
        if (j + k) * (j + l) * (j + m) == 0:
            continue
        value = quartic_divisor_bbm(j, k, l, m, tau)
        direct = sum(bbm_normal_frequency(v, tau) for v in (j, k, l, m))
        defect = max(defect, abs(value - direct))
        count += 1
        if abs(value) < best:
            best, where = abs(value), (j, k, l, m)
    report.minima["quartic"] = DivisorMinimum("quartic", float(best) if count else float("inf"), where, count, float(defect))


def _scan_gpc(model: FrequencyModel, report: NonresonanceReport) -> None:
    roots = np.sqrt([gpc_eigenvalue(s, model.tau) for s in model.sites])
    tangent = set(model.tangent_indices)
    best, where, count = np.inf, (), 0
    for quad in gpc_quartic_table(model).entries:
        if tangent and not tangent.intersection(quad):
            continue
        for signs in product((1, -1), repeat=4):
            plus = sorted(q for q, s in zip(quad, signs) if s > 0)
            minus = sorted(q for q, s in zip(quad, signs) if s < 0)
            if plus == minus:
                continue
            value = abs(sum(s * roots[q] for q, s in zip(quad, signs)))
            count += 1
            if value < best:
                best, where = value, (tuple(model.sites[q] for q in quad), signs)
    report.minima["quartic"] = DivisorMinimum("quartic", float(best) if count else float("inf"), where, count)


def nonresonance_scan(
    model: FrequencyModel,
    radius: int | None = None,
    N_tilde: int | None = None,
    floor: float = DEFAULT_FLOOR,
) -> NonresonanceReport:
    """
    Exhaustive scan of the cubic and quartic Birkhoff divisors over the retained lattice.

    BBM: every zero-sum signed triple, and every zero-sum quadruple touching ``J`` off the resonant set
    ``(j+k)(j+l)(j+m) = 0``. gPC: every sign combination ``±√λ_m ± √λ_n ± √λ_l ± √λ_k`` of a quartic
    coefficient touching ``J``, the cancelling combinations ``{m, l} = {n, k}`` excluded.

    Args:
        model: The lattice model.
        radius: Largest ``|j|`` scanned (BBM only, default the lattice radius).
        N_tilde: Threshold beyond which the tail bound replaces the scan (default ``max(radius, 4·max J)``).
        floor: Divisors below it fail the report.
    """
    N_tilde = default_tail_radius(model) if N_tilde is None else N_tilde
    match model.equation:
        case Equation.BBM:
            radius = model.lattice_radius if radius is None else radius
            report = NonresonanceReport(model.equation.value, radius, N_tilde, floor, 1.0 / (model.tau[0] * N_tilde))
            _scan_bbm(model, radius, report)
        case Equation.GPC:
            norm2 = min(model.tau) ** 2 * N_tilde ** 2
            report = NonresonanceReport(model.equation.value, model.lattice_radius, N_tilde, floor, 1.0 / (2.0 * norm2))
            _scan_gpc(model, report)
        case _:
            raise ValueError(f"Unsupported equation: {model.equation}")
    for name, m in report.minima.items():
        logger.info(f"Minimal {name} divisor {m.value:.3e} at {m.attained_at} over {m.scanned} tuples")
        if m.scanned and m.value < floor:
            logger.warning(f"{name} divisor {m.value:.3e} below floor {floor:.1e} at {m.attained_at}")
    return report
