"""Gradient-absorbing decomposition of symmetric fields near the basis center.

Plain basis decomposition of H leaves the non-oscillatory gradient errors
lam^-2 grad(a) (x) grad(a) of the corrugation step unaccounted for.  This
fixed-point sweep re-decomposes H minus the current gradient term, so those
errors are pre-absorbed into the coefficients; each sweep shrinks the
remainder by sigma^-2 because amplitude gradients carry the mu scale while
the ladder frequencies start at sigma * mu.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import PrimitiveBasis
from .errors import NonPositiveCoefficient, OutsideBall
from .fields import (DEFAULT_FD_ORDER, Field, ScalarField, SymmField,
                     gradient, sup_norm, sym_outer, sym_pairs)

_EPS = 1e-9


def valid_slices(f: Field) -> tuple[slice, ...]:
    """Index slices of the band where the field's samples are trustworthy."""
    spec = f.spec
    skip = int(np.ceil((spec.margin - f.valid_margin) / spec.h - _EPS))
    skip = max(skip, 0)
    stop = spec.points_per_axis - skip
    return (slice(skip, stop),) * spec.dim


@dataclass
class AbsorptionResult:
    """Amplitudes, ladder frequencies, absorbed gradient term, and remainder."""

    amplitudes: list[ScalarField]      # pair order of sym_pairs(d)
    frequencies: list[float]           # ladder lam_1j = sigma^j mu, j = 1..d
    gradient_term: SymmField           # sum_j lam_1j^-2 grad a_1j (x) grad a_1j
    residual: SymmField
    iterations: int
    convergence: list[float]           # sup norm of the gradient-term update per sweep

    def reconstruct_gap(self, H: SymmField, basis: PrimitiveBasis) -> float:
        """Sup norm of H minus all decomposition pieces; zero by construction."""
        recon = self.gradient_term + self.residual
        spec = H.spec
        for amp, mat in zip(self.amplitudes, basis.matrices):
            sq = amp * amp
            data = np.stack([sq.data * mat[i, j] for i, j in sym_pairs(spec.dim)])
            recon = recon + SymmField(spec, data, sq.valid_margin)
        return sup_norm(H - recon)


def absorb_decompose(H: SymmField, mu: float, sigma: float, sweeps: int,
                     order: int = DEFAULT_FD_ORDER,
                     coefficient_floor: float = 0.25) -> AbsorptionResult:
    """Decompose H = sum a_ij^2 eta_ij (x) eta_ij + gradient term + residual.

    Requires H within half the coefficient-stability radius of the basis
    center.  ``sweeps`` fixed-point iterations leave a residual of measured
    size O(sigma^-2 sweeps).  Raises NonPositiveCoefficient if any sweep's
    coefficients fall to ``coefficient_floor`` (the relative frequency sigma
    is too small for the input's gradient content).
    """
    if sweeps < 1:
        raise ValueError("need at least one sweep")
    if sigma <= 1.0:
        raise ValueError("relative frequency must exceed 1")
    spec = H.spec
    d = spec.dim
    basis = PrimitiveBasis(d)
    center = SymmField.from_constant(spec, basis.center)
    dist = sup_norm(H - center)
    if dist > basis.r0 / 2.0 + 1e-12:
        raise OutsideBall(
            f"input is {dist:.4g} from the basis center; limit is r0/2 = {basis.r0 / 2:.4g}")

    lams = [sigma ** j * mu for j in range(1, d + 1)]
    grad_term: SymmField | None = None
    amplitudes: list[ScalarField] = []
    convergence: list[float] = []

    for _ in range(sweeps):
        target = H if grad_term is None else H - grad_term
        coeffs = basis.decompose_field(target)
        band = (slice(None),) + valid_slices(target)
        low = float(coeffs[band].min())
        if low <= coefficient_floor:
            raise NonPositiveCoefficient(
                f"coefficient dropped to {low:.4g} (floor {coefficient_floor});"
                f" increase sigma")
        safe = np.maximum(coeffs, coefficient_floor)  # clamp only invalid-band garbage
        amplitudes = [ScalarField(spec, np.sqrt(safe[p]), target.valid_margin)
                      for p in range(coeffs.shape[0])]
        new_grad = None
        for j in range(d):
            g = gradient(amplitudes[j], order)  # pairs (0, j) are the first d entries
            piece = (1.0 / lams[j] ** 2) * sym_outer(g, g)
            new_grad = piece if new_grad is None else new_grad + piece
        convergence.append(sup_norm(new_grad if grad_term is None
                                    else new_grad - grad_term))
        grad_term = new_grad

    recon = basis.reconstruct_field(
        np.stack([(a * a).data for a in amplitudes]),
        spec, amplitudes[0].valid_margin)
    residual = H - recon - grad_term
    return AbsorptionResult(amplitudes, lams, grad_term, residual, sweeps, convergence)
