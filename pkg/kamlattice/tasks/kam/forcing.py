import logging

from kamlattice.tasks.algebra.poly import HamiltonianPoly
from kamlattice.tasks.exceptions import ConfigurationError

logger = logging.getLogger(__name__)


def _real(term: HamiltonianPoly) -> HamiltonianPoly:
    return term + term.conj()


def angle_forcing(n_angles: int, sites: tuple[int, ...], amplitude: float, forced_sites: int = 2) -> HamiltonianPoly:
    """
    Real, zero-mean low-order forcing of size ``amplitude`` on the unit modes ``±e_i``.

    Every angle ``x_i`` drives one of the first ``forced_sites`` normal sites, in every low-order block:
    ``cos x_i``, ``y_j cos x_i``, ``z_s e^{ix_i} + c.c.``, ``|z_s|² e^{ix_i} + c.c.`` and ``z_s z_t e^{ix_i} + c.c.``
    The angle-independent blocks stay empty, so ``ω`` and ``B`` only move at second order.

    Raises:
        ConfigurationError: if there are no normal sites to force or the amplitude is not positive.
    """
    if amplitude <= 0:
        raise ConfigurationError(f"Forcing amplitude must be positive, got {amplitude}")
    forced = tuple(sites[:forced_sites])
    if not forced or n_angles < 1:
        raise ConfigurationError(f"Nothing to force: {n_angles} angles on sites {sites}")
    out = HamiltonianPoly.zero(n_angles)
    for i in range(n_angles):
        k = tuple(int(j == i) for j in range(n_angles))
        y = tuple(int(j == (i + 1) % n_angles) for j in range(n_angles))
        s = forced[i % len(forced)]
        t = forced[(i + 1) % len(forced)]
        out = out + _real(HamiltonianPoly.monomial(n_angles, 0.5 * amplitude, k=k))
        out = out + _real(HamiltonianPoly.monomial(n_angles, 0.5 * amplitude, k=k, gamma=y))
        out = out + _real(HamiltonianPoly.monomial(n_angles, amplitude, k=k, alpha={s: 1}))
        out = out + _real(HamiltonianPoly.monomial(n_angles, amplitude, k=k, alpha={s: 1}, beta={s: 1}))
        out = out + _real(HamiltonianPoly.monomial(n_angles, amplitude, k=k, alpha={s: 1, t: 1} if s != t else {s: 2}))
    logger.debug(f"Angle forcing of size {amplitude:.3e}: {len(out)} terms on sites {forced}")
    return out
