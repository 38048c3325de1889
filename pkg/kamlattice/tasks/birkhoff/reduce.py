import logging

import numpy as np
from scipy.special import binom

from kamlattice.tasks.algebra.poly import HamiltonianPoly, y_degree, z_degree
from kamlattice.tasks.algebra.types import TermKey, exponent_power
from kamlattice.tasks.birkhoff.types import NormalFormPackage, ReducedNormalForm
from kamlattice.tasks.exceptions import ConfigurationError

logger = logging.getLogger(__name__)


def _action_series(power: float, zeta: float, order: int) -> list[float]:
    """Coefficients of ``(ζ + y)^power = Σ_n c_n y^n`` for ``n ≤ order + 1``."""
    return [float(binom(power, n)) * zeta ** (power - n) for n in range(order + 2)]


def substitute_actions(
    poly: HamiltonianPoly,
    tangent: tuple[int, ...],
    zeta: np.ndarray,
    max_y_degree: int = 2,
) -> tuple[HamiltonianPoly, float]:
    """
    Substitute ``z_{j_t} = √(ζ_t + y_t) e^{−ix_t}``, ``z̄_{j_t} = √(ζ_t + y_t) e^{ix_t}`` into an angle-free polynomial.

    A factor ``z_{j_t}^a z̄_{j_t}^b`` becomes ``(ζ_t + y_t)^{(a+b)/2} e^{i(b−a)x_t}``; the action power is
    expanded in ``y_t`` up to ``max_y_degree``.

    Returns:
        tuple[HamiltonianPoly, float]: The polynomial in ``N`` angles over the remaining sites, and the largest
        coefficient of the first dropped order.
    """
    N = len(tangent)
    if poly.n_angles != 0:
        raise ValueError(f"Action substitution expects an angle-free polynomial, got {poly.n_angles} angles")
    out: dict[TermKey, complex] = {}
    dropped = 0.0
    for key, c in poly.items():
        powers = [(exponent_power(key.alpha, s), exponent_power(key.beta, s)) for s in tangent]
        alpha = tuple((s, p) for s, p in key.alpha if s not in tangent)
        beta = tuple((s, p) for s, p in key.beta if s not in tangent)
        k = tuple(b - a for a, b in powers)
        # expansions per tangent direction, multiplied out below
        series = [_action_series(0.5 * (a + b), zeta[t], max_y_degree) for t, (a, b) in enumerate(powers)]
        partial = {(0,) * N: complex(c)}
        for t in range(N):
            grown = {}
            for gamma, value in partial.items():
                for n, coeff in enumerate(series[t]):
                    if coeff == 0:
                        continue
                    g = list(gamma)
                    g[t] += n
                    grown[tuple(g)] = grown.get(tuple(g), 0j) + value * coeff
            partial = grown
        for gamma, value in partial.items():
            if sum(gamma) > max_y_degree:
                dropped = max(dropped, abs(value))
                continue
            new_key = TermKey(k, gamma, alpha, beta)
            out[new_key] = out.get(new_key, 0j) + value
    return HamiltonianPoly(N, out), dropped


def _in_annulus(zeta: np.ndarray, epsilon0: float) -> bool:
    root = np.sqrt(epsilon0)
    return bool(np.all(zeta >= root) and np.all(zeta <= 2.0 * root))


def action_angle_reduce(
    package: NormalFormPackage,
    zeta: np.ndarray,
    epsilon0: float | None = None,
    max_y_degree: int = 2,
) -> ReducedNormalForm:
    """
    Parameterized normal form at the amplitudes ``ζ``.

    The transformed Hamiltonian is rewritten in action-angle variables on the tangent sites; the constant is
    dropped, the angle-free terms linear in ``y`` give ``ω⁰``, the angle-free diagonal terms ``|z_j|²`` give
    ``Ω⁰`` and the rest is ``R⁰``. ``ξ = λ^{(N)} + 𝓑ζ`` is the twist image of ``ζ``.

    Raises:
        ValueError: if some ``ζ_t`` is not positive.
        ConfigurationError: if the twist matrix is singular.
    """
    model = package.model
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape != (model.N,):
        raise ValueError(f"Expected {model.N} amplitudes, got shape {zeta.shape}")
    if np.any(zeta <= 0):
        raise ValueError(f"Amplitudes must be positive, got {zeta}")
    if epsilon0 is not None and not _in_annulus(zeta, epsilon0):
        logger.warning(f"Amplitudes {zeta} outside [√ε₀, 2√ε₀] for ε₀ = {epsilon0}: expansions may be inaccurate")

    det = np.linalg.det(package.twist)
    if abs(det) < 1e-14:
        raise ConfigurationError(f"Twist matrix is singular (det = {det:.3e})")
    condition = float(np.linalg.cond(package.twist))
    logger.info(f"Twist solve on {model.N} tangent sites: condition number {condition:.3e}")

    tangent = model.tangent_indices
    H, remainder = substitute_actions(package.transformed, tangent, zeta, max_y_degree)
    N = model.N
    zero = (0,) * N
    omega = np.zeros(N, dtype=complex)
    normal_pos = {s: i for i, s in enumerate(model.normal_indices)}
    Omega = np.zeros(len(normal_pos), dtype=complex)

    def is_frequency(key: TermKey) -> bool:
        if key.k != zero:
            return False
        if y_degree(key) == 1 and z_degree(key) == 0:
            return True
        return y_degree(key) == 0 and len(key.alpha) == 1 and key.alpha == key.beta and key.alpha[0][1] == 1

    for key, c in H.items():
        if key.k != zero:
            continue
        if y_degree(key) == 1 and z_degree(key) == 0:
            omega[key.gamma.index(1)] += c
        elif is_frequency(key):
            Omega[normal_pos[key.alpha[0][0]]] += c
    H0 = H.filter(is_frequency)
    R0 = H.filter(lambda key: not is_frequency(key) and not (key.k == zero and y_degree(key) == 0 and z_degree(key) == 0))

    xi = package.xi_of(zeta)
    diagnostics = {
        "constant": float(H[TermKey(zero, zero, (), ())].real),
        "omega_imag": float(np.abs(omega.imag).max(initial=0.0)),
        "Omega_imag": float(np.abs(Omega.imag).max(initial=0.0)),
        "omega_defect": float(np.abs(omega.real - xi).max(initial=0.0)),
        "Omega_defect": float(np.abs(Omega.real - package.Omega0(zeta)).max(initial=0.0)),
        "R0_terms": len(R0),
    }
    if epsilon0 is not None:
        diagnostics["in_annulus"] = _in_annulus(zeta, epsilon0)
    logger.debug(f"Action-angle reduction: {diagnostics}, dropped order {remainder:.3e}")
    return ReducedNormalForm(
        zeta=zeta,
        xi=xi,
        omega0=omega.real,
        Omega0=Omega.real,
        H0=H0,
        R0=R0,
        frequency_map=package.frequency_map,
        sites=tuple(model.normal_indices),
        remainder=remainder,
        twist_condition=condition,
        diagnostics=diagnostics,
    )
