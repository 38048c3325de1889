import logging

import numpy as np

from kamlattice.tasks.algebra.lie import lie_transform
from kamlattice.tasks.algebra.poly import HamiltonianPoly, z_degree
from kamlattice.tasks.birkhoff.closed_forms import closed_form_twist, twist_frequency_map
from kamlattice.tasks.birkhoff.divisors import DEFAULT_FLOOR
from kamlattice.tasks.birkhoff.generators import (
    cancellation_residual,
    fourth_order_reduction,
    is_resonant,
    monomial_divisor,
    resonant_table,
    third_order_generator,
    touches,
)
from kamlattice.tasks.birkhoff.types import NormalFormPackage
from kamlattice.tasks.exceptions import ModelDomainError
from kamlattice.tasks.model.bbm import bbm_cubic_table, bbm_hamiltonian
from kamlattice.tasks.model.gpc import gpc_hamiltonian, gpc_quartic_table
from kamlattice.tasks.model.types import CubicCoeffs, Equation, FrequencyModel, QuarticCoeffs

logger = logging.getLogger(__name__)


def _relative(a: np.ndarray, b: np.ndarray) -> float:
    scale = float(np.linalg.norm(b))
    return float(np.linalg.norm(a - b)) / scale if scale > 0 else float(np.linalg.norm(a))


def _finish(
    model: FrequencyModel,
    H0: HamiltonianPoly,
    H1: HamiltonianPoly,
    F3: HamiltonianPoly,
    max_z_degree: int,
    floor: float,
    diagnostics: dict,
) -> NormalFormPackage:
    J = set(model.tangent_indices)
    R4 = (H1 - H0).homogeneous(4)
    G_bar, F4, _ = fourth_order_reduction(R4, model, tuple(J), floor)
    removed = R4.filter(lambda key: touches(key, J) and not is_resonant(key))
    diagnostics["quartic_cancellation"] = cancellation_residual(removed, H0, F4)
    diagnostics["quartic_min_divisor"] = min((abs(monomial_divisor(key, model.frequency_array)) for key in F4), default=float("inf"))

    H2 = lie_transform(H1, F4, order=2, max_z_degree=max_z_degree)
    D = H2 - H0
    G_hat = D.filter(lambda key: not touches(key, J) and z_degree(key) <= 4)
    R_tilde = D.filter(lambda key: touches(key, J) and not (z_degree(key) == 4 and is_resonant(key)))
    G_table = resonant_table(D, model.n_sites, J)
    diagnostics["resonant_drift"] = float(np.abs(G_table - G_bar).max(initial=0.0))
    diagnostics["G_bar_asymmetry"] = float(np.abs(G_bar - G_bar.T).max(initial=0.0))

    tangent = list(model.tangent_indices)
    normal = list(model.normal_indices)
    twist = 2.0 * G_bar[np.ix_(tangent, tangent)]
    coupling = 2.0 * G_bar[np.ix_(normal, tangent)]
    frequency_map = twist_frequency_map(model.tangent_frequencies, model.normal_frequencies, twist, coupling)

    closed_twist, closed_coupling = closed_form_twist(model)
    diagnostics["twist_det"] = float(np.linalg.det(twist))
    diagnostics["twist_condition"] = float(np.linalg.cond(twist))
    diagnostics["closed_form_twist_defect"] = _relative(twist, closed_twist)
    diagnostics["closed_form_coupling_defect"] = _relative(coupling, closed_coupling)
    diagnostics["R_tilde_max"] = R_tilde.max_abs()

    logger.info(
        f"Normal form of the {model.equation.value} lattice: {len(F3)} cubic and {len(F4)} quartic generator terms, "
        f"twist det {diagnostics['twist_det']:.3e}, closed-form twist defect {diagnostics['closed_form_twist_defect']:.2e}"
    )
    return NormalFormPackage(
        model=model,
        H0=H0,
        F3=F3,
        F4=F4,
        G_bar=G_bar,
        G_hat=G_hat,
        R_tilde=R_tilde,
        transformed=H2,
        twist=twist,
        coupling=coupling,
        frequency_map=frequency_map,
        max_z_degree=max_z_degree,
        diagnostics=diagnostics,
    )


def bbm_normal_form(
    model: FrequencyModel,
    cubic: CubicCoeffs | None = None,
    max_z_degree: int = 4,
    lie_order: int = 3,
    floor: float = DEFAULT_FLOOR,
) -> NormalFormPackage:
    """
    Birkhoff normal form of the BBM lattice: the cubic term is removed entirely by ``Ψ^{(3)}`` and the
    non-resonant quartic terms touching the tangent sites by ``Ψ^{(4)}``.
    """
    if model.equation is not Equation.BBM:
        raise ModelDomainError(f"Expected a BBM model, got {model.equation.value}")
    if max_z_degree < 4:
        raise ValueError(f"The quartic normal form needs max_z_degree >= 4, got {max_z_degree}")
    if cubic is None:
        cubic = bbm_cubic_table(model.lattice_radius, model.tau[0], model.period[0])
    H0, R = bbm_hamiltonian(model, cubic)
    F3 = third_order_generator(cubic, model, floor)
    diagnostics = {
        "cubic_cancellation": cancellation_residual(R, H0, F3),
        "cubic_min_divisor": min((abs(monomial_divisor(key, model.frequency_array)) for key in F3), default=float("inf")),
    }
    H1 = lie_transform(H0 + R, F3, order=lie_order, max_z_degree=max_z_degree)
    diagnostics["cubic_leftover"] = H1.homogeneous(3).max_abs()
    return _finish(model, H0, H1, F3, max_z_degree, floor, diagnostics)


def gpc_normal_form(
    model: FrequencyModel,
    quartic: QuarticCoeffs | None = None,
    max_z_degree: int = 4,
    floor: float = DEFAULT_FLOOR,
) -> NormalFormPackage:
    """Birkhoff normal form of the gPC lattice: only ``Ψ^{(4)}`` is needed, the nonlinearity being quartic."""
    if model.equation is not Equation.GPC:
        raise ModelDomainError(f"Expected a gPC model, got {model.equation.value}")
    if max_z_degree < 4:
        raise ValueError(f"The quartic normal form needs max_z_degree >= 4, got {max_z_degree}")
    if quartic is None:
        quartic = gpc_quartic_table(model)
    H0, G = gpc_hamiltonian(model, quartic)
    return _finish(model, H0, H0 + G, HamiltonianPoly.zero(0), max_z_degree, floor, {})


def build_normal_form(model: FrequencyModel, max_z_degree: int = 4, floor: float = DEFAULT_FLOOR) -> NormalFormPackage:
    match model.equation:
        case Equation.BBM:
            return bbm_normal_form(model, max_z_degree=max_z_degree, floor=floor)
        case Equation.GPC:
            return gpc_normal_form(model, max_z_degree=max_z_degree, floor=floor)
        case _:
            raise ValueError(f"Unsupported equation: {model.equation}")
