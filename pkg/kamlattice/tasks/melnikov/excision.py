import logging
from itertools import product

import numpy as np
from rich.progress import track
from scipy.spatial import cKDTree

from kamlattice.tasks.homology.constants import first_split_radius
from kamlattice.tasks.melnikov.types import ExcisionWitness, ParameterBox, WitnessKind
from kamlattice.tasks.model.types import FrequencyMap, FrequencyModel

logger = logging.getLogger(__name__)

# largest tolerated |∂μ| before the eigenvalue-derivative check is flagged
DERIVATIVE_FLAG = 0.5


def enumerate_k(N: int, K: int, include_zero: bool = False) -> np.ndarray:
    """
    Integer vectors of the ℓ¹ ball ``|k|₁ ≤ K`` with ``±k`` identified (the first nonzero entry is positive).

    Returns:
        np.ndarray: Shape ``(count, N)``; the zero vector comes first when ``include_zero``.
    """
    K = int(K)
    out = [(0,) * N] if include_zero else []
    for k in product(range(-K, K + 1), repeat=N):
        if 0 < sum(abs(v) for v in k) <= K:
            if next(v for v in k if v != 0) > 0:
                out.append(k)
    return np.array(out, dtype=int).reshape(-1, N)


def _frequency_map(model: FrequencyModel | None, N: int, frequency_map: FrequencyMap | None) -> FrequencyMap:
    if frequency_map is not None:
        return frequency_map
    normal = model.normal_frequencies if model is not None else np.zeros(0)
    return FrequencyMap.identity(N, normal)


def _dtype(extended_precision: bool):
    return np.longdouble if extended_precision else np.float64


class _SortedShifts:
    """``(k, ω)`` over a k-set, sorted once per sample so every target is located by bisection."""

    def __init__(self, ks: np.ndarray, omega: np.ndarray, dtype):
        values = ks.astype(dtype) @ np.asarray(omega, dtype=dtype)
        self.order = np.argsort(values, kind="stable")
        self.values = values[self.order]

    def nearest(self, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """
        For each target ``t`` the signed divisor ``(k,ω) + t`` of least modulus and the row of ``k``.
        """
        queries = -targets
        pos = np.searchsorted(self.values, queries)
        left = np.clip(pos - 1, 0, len(self.values) - 1)
        right = np.clip(pos, 0, len(self.values) - 1)
        d_left = self.values[left] + targets
        d_right = self.values[right] + targets
        use_right = np.abs(d_right) < np.abs(d_left)
        chosen = np.where(use_right, right, left)
        return np.where(use_right, d_right, d_left), self.order[chosen]


def _excise(
    box: ParameterBox,
    kind: WitnessKind,
    threshold: float,
    scan,
    progress: bool,
) -> tuple[ParameterBox, list[ExcisionWitness]]:
    """Run ``scan(sample_index) -> (divisor, k, sites) | None`` over alive samples and kill the offenders."""
    witnesses: list[ExcisionWitness] = []
    dead = []
    indices = box.alive_indices()
    for i in track(indices, description=f"Excising ({kind.value})", disable=not progress):
        hit = scan(int(i))
        if hit is None:
            continue
        divisor, k, sites = hit
        witnesses.append(ExcisionWitness(kind, tuple(int(v) for v in k), tuple(int(s) for s in sites), float(divisor), threshold, int(i)))
        dead.append(i)
    out = box.kill(dead) if dead else box
    logger.info(
        f"{kind.value} excision at threshold {threshold:.3e}: {len(dead)} of {len(indices)} samples killed, "
        f"surviving fraction {out.fraction:.4f}"
    )
    return out, witnesses


def excise_tangent(
    box: ParameterBox,
    K: int,
    c21: float,
    frequency_map: FrequencyMap | None = None,
    extended_precision: bool = False,
    progress: bool = False,
) -> tuple[ParameterBox, list[ExcisionWitness]]:
    """
    Kill the samples with ``|(k, ω(ξ))| < K^{−c₂₁}`` for some ``0 < |k| ≤ K``.

    Args:
        box: Parameter box; only alive samples are scanned.
        K: Fourier radius.
        c21: Tangent exponent.
        frequency_map: ``ω(ξ)``; ``None`` means ``ω = ξ``.
        extended_precision: Evaluate ``(k, ω)`` in ``numpy.longdouble``.
        progress: Show a progress bar.

    Returns:
        tuple[ParameterBox, list[ExcisionWitness]]: The reduced box and one witness per killed sample.
    """
    threshold = float(K ** (-c21))
    fmap = _frequency_map(None, box.N, frequency_map)
    ks = enumerate_k(box.N, K)
    if len(ks) == 0:
        return box, []
    dtype = _dtype(extended_precision)
    omegas = fmap.omega(box.samples)
    zero = np.zeros(1, dtype=dtype)

    def scan(i: int):
        divisor, row = _SortedShifts(ks, omegas[i], dtype).nearest(zero)
        if abs(divisor[0]) < threshold:
            return divisor[0], ks[row[0]], ()
        return None

    return _excise(box, WitnessKind.TANGENT, threshold, scan, progress)


def far_site_check(model: FrequencyModel, K: float, c: float, y: float | None = None, frequency_map: FrequencyMap | None = None, samples: np.ndarray | None = None) -> dict:
    """
    Verify that every normal site with ``|j| ≥ K₂`` has ``|λ_j − ϖ| < (½K^{−c/y})³``.

    Such sites are never scanned by :func:`excise_first`; the tangent bound covers them.

    Returns:
        dict: ``K2``, ``bound``, the largest deviation among far sites, their count and ``passed``.
    """
    y = 3.0 * model.dim_d / model.kappa + 3.0 if y is None else y
    K2 = first_split_radius(K, c, y, model.kappa)
    bound = float((0.5 * K ** (-c / y)) ** 3)
    weights = model.weights[list(model.normal_indices)]
    far = weights >= K2
    fmap = _frequency_map(model, model.N, frequency_map)
    if samples is None:
        freqs = fmap.normal_offset[None, :]
    else:
        freqs = fmap.normal(samples)
    worst = float(np.abs(freqs[:, far] - model.limit_point).max()) if far.any() else 0.0
    report = {"K2": K2, "bound": bound, "far_sites": int(far.sum()), "max_deviation": worst, "passed": worst < bound}
    if not report["passed"]:
        logger.warning(f"Far normal sites |j| ≥ {K2:.3e} deviate by {worst:.3e}, above the bound {bound:.3e}")
    return report


def excise_first(
    box: ParameterBox,
    model: FrequencyModel,
    K: int,
    c: float,
    y: float | None = None,
    frequency_map: FrequencyMap | None = None,
    extended_precision: bool = False,
    progress: bool = False,
) -> tuple[ParameterBox, list[ExcisionWitness]]:
    """
    Kill the samples with ``|(k, ω) ± Ω_j| < ½K^{−c}`` for some ``|k| ≤ K`` and normal site ``|j| < K₂``.

    Sites with ``|j| ≥ K₂`` are checked by :func:`far_site_check` and never excised. The mode
    ``k = 0`` is scanned only when the accumulation point ``ϖ`` is nonzero; for ``ϖ = 0`` the
    zero mode is handled by the angle-average convention.

    Returns:
        tuple[ParameterBox, list[ExcisionWitness]]: The reduced box and one witness per killed sample,
        carrying the position of the offending site in the model's site list.
    """
    threshold = 0.5 * float(np.exp(-c * np.log(K)))
    check = far_site_check(model, K, c, y, frequency_map, box.alive_samples())
    normal = np.asarray(model.normal_indices)
    near = model.weights[normal] < check["K2"]
    fmap = _frequency_map(model, box.N, frequency_map)
    ks = enumerate_k(box.N, K, include_zero=model.limit_point != 0.0)
    if len(ks) == 0 or not near.any():
        return box, []
    dtype = _dtype(extended_precision)
    omegas = fmap.omega(box.samples)
    normals = fmap.normal(box.samples)[:, near]
    site_ids = normal[near]

    def scan(i: int):
        freqs = np.asarray(normals[i], dtype=dtype)
        targets = np.concatenate([freqs, -freqs])
        divisors, rows = _SortedShifts(ks, omegas[i], dtype).nearest(targets)
        best = int(np.argmin(np.abs(divisors)))
        if abs(divisors[best]) < threshold:
            return divisors[best], ks[rows[best]], (site_ids[best % len(site_ids)],)
        return None

    return _excise(box, WitnessKind.FIRST, threshold, scan, progress)


def _pair_targets(mu: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Sums ``μ_i + μ_j`` (``i ≤ j``) and differences ``μ_i − μ_j`` (``i < j``) with their index pairs."""
    i_sum, j_sum = np.triu_indices(len(mu))
    i_dif, j_dif = np.triu_indices(len(mu), k=1)
    sums = mu[i_sum] + mu[j_sum]
    diffs = mu[i_dif] - mu[j_dif]
    return sums, np.stack([i_sum, j_sum], axis=1), diffs, np.stack([i_dif, j_dif], axis=1)


def eigenvalue_derivative_bound(samples: np.ndarray, eigs: np.ndarray) -> float:
    """
    Largest ``|μ_j(ξ) − μ_j(ξ′)|/|ξ − ξ′|`` between each sample and its nearest neighbour.
    """
    samples = np.asarray(samples, dtype=float)
    if len(samples) < 2:
        return 0.0
    distance, neighbour = cKDTree(samples).query(samples, k=2)
    step = distance[:, 1]
    jumps = np.abs(np.sort(eigs, axis=1) - np.sort(eigs[neighbour[:, 1]], axis=1)).max(axis=1)
    valid = step > 0
    return float((jumps[valid] / step[valid]).max(initial=0.0))


def excise_second(
    box: ParameterBox,
    model: FrequencyModel,
    K: int,
    c: float,
    headblock_eigs: np.ndarray | None = None,
    frequency_map: FrequencyMap | None = None,
    extended_precision: bool = False,
    progress: bool = False,
) -> tuple[ParameterBox, list[ExcisionWitness]]:
    """
    Kill the samples where ``|(k, ω) ± (μ_i + μ_j)| < K^{−c}`` or ``|(k, ω) ± (μ_i − μ_j)| < K^{−c}``.

    ``μ`` are the eigenvalues of the head operator ``Λ + B`` per sample, shape ``(count, n)`` over the
    model's normal sites; without them the normal frequencies ``Ω_j(ξ)`` are used, which is exact for
    ``B = 0``. Sums are scanned over ``|k| ≤ K`` (the zero mode included), differences over
    ``0 < |k| ≤ K``. The eigenvalue derivative across neighbouring samples is logged and flagged
    above ``0.5``.

    Returns:
        tuple[ParameterBox, list[ExcisionWitness]]: The reduced box and one witness per killed sample,
        carrying the pair of site positions.
    """
    threshold = float(np.exp(-c * np.log(K)))
    normal = np.asarray(model.normal_indices)
    fmap = _frequency_map(model, box.N, frequency_map)
    if headblock_eigs is None:
        mus = fmap.normal(box.samples)
    else:
        mus = np.real(np.asarray(headblock_eigs))
        if mus.shape != (box.count, len(normal)):
            raise ValueError(f"Head-block eigenvalues of shape {mus.shape}, expected {(box.count, len(normal))}")
        derivative = eigenvalue_derivative_bound(box.alive_samples(), mus[box.alive])
        log = logger.warning if derivative > DERIVATIVE_FLAG else logger.debug
        log(f"Head-block eigenvalue derivative across samples: {derivative:.3e}")
    if len(normal) == 0:
        return box, []
    dtype = _dtype(extended_precision)
    omegas = fmap.omega(box.samples)
    ks_sum = enumerate_k(box.N, K, include_zero=True)
    ks_dif = enumerate_k(box.N, K)

    def scan(i: int):
        sums, sum_pairs, diffs, dif_pairs = _pair_targets(np.asarray(mus[i], dtype=dtype))
        best = None
        for ks, values, pairs in ((ks_sum, sums, sum_pairs), (ks_dif, diffs, dif_pairs)):
            if len(ks) == 0 or len(values) == 0:
                continue
            targets = np.concatenate([values, -values])
            divisors, rows = _SortedShifts(ks, omegas[i], dtype).nearest(targets)
            m = int(np.argmin(np.abs(divisors)))
            if abs(divisors[m]) < threshold and (best is None or abs(divisors[m]) < abs(best[0])):
                a, b = pairs[m % len(values)]
                best = (divisors[m], ks[rows[m]], (normal[a], normal[b]))
        return best

    return _excise(box, WitnessKind.SECOND, threshold, scan, progress)


def rescan_witness(witness: ExcisionWitness, omega: np.ndarray, frequencies: np.ndarray) -> float:
    """
    Recompute a witness divisor from ``ω`` and the full site frequency vector of its sample.

    Tangent witnesses give ``(k, ω)``; first-Melnikov ones the smaller of ``|(k,ω) ± Ω_j|``; second-Melnikov
    ones the smallest of ``|(k,ω) ± Ω_i ± Ω_j|``.
    """
    kw = float(np.dot(witness.k, omega))
    match witness.kind:
        case WitnessKind.TANGENT:
            return kw
        case WitnessKind.FIRST:
            (j,) = witness.sites
            candidates = [kw + frequencies[j], kw - frequencies[j]]
        case WitnessKind.SECOND:
            i, j = witness.sites
            candidates = [kw + s * frequencies[i] + t * frequencies[j] for s in (1, -1) for t in (1, -1)]
    return float(min(candidates, key=abs))
