"""Integration-by-parts reduction of oscillatory symmetric-matrix errors.

An error of the form profile(lam t_eta)/lam * H(x), oscillating along the
basis direction eta_1j, is rewritten as (i) a gradient potential that a
tangential correction can cancel, (ii) a boundary term smaller by
lam^-(k+2), and (iii) a series confined to the eta_st (s, t >= 2) sector.
The recursion differentiates H once per level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import PrimitiveBasis
from .corrugation import OscScalar, constant_vector, sym_grad_scaled
from .fields import (DEFAULT_FD_ORDER, SymmField, VectorField, sym_grad,
                     sym_outer)
from .profiles import Profile, primitive_chain


def _row_matching_vector(H: SymmField, eta: np.ndarray) -> VectorField:
    """The vector L with sym(L (x) eta) reproducing the first row of H."""
    d = H.spec.dim
    eta0 = float(eta[0])
    h00 = H.entry(0, 0)
    comps = []
    for p in range(d):
        col = H.entry(p, 0)
        comps.append((2.0 * col.data - (eta[p] / eta0) * h00.data) / eta0)
    return VectorField(H.spec, np.stack(comps), H.valid_margin)


def _sector_remainder(H: SymmField, L: VectorField, eta: np.ndarray) -> SymmField:
    return H - sym_outer(L, constant_vector(H.spec, eta, L.valid_margin))


def lp_operators(H: SymmField, j: int, depth: int,
                 order: int = DEFAULT_FD_ORDER) -> tuple[list[VectorField], list[SymmField]]:
    """The level-i reduction fields for i = 0..depth along direction eta_1j.

    ``j`` is the 1-based column of the first-row direction family.  Both
    returned families are linear in H; level i reads i derivatives of H.
    """
    d = H.spec.dim
    if not 1 <= j <= d:
        raise ValueError(f"direction index {j} out of range for d={d}")
    basis = PrimitiveBasis(d)
    eta = basis.direction(0, j - 1)
    L = [_row_matching_vector(H, eta)]
    P = [_sector_remainder(H, L[0], eta)]
    for _ in range(depth):
        S = sym_grad(L[-1], order)
        L.append(_row_matching_vector(S, eta))
        P.append(_sector_remainder(S, L[-1], eta))
    return L, P


@dataclass
class IbpExpansion:
    """The three groups of the reduction at a fixed depth."""

    depth: int
    j: int
    lam: float
    eta: np.ndarray
    boundary: SymmField
    potential: VectorField
    potential_terms: list[tuple[OscScalar, VectorField]]
    p_series: list[SymmField]

    def p_total(self) -> SymmField:
        out = self.p_series[0]
        for term in self.p_series[1:]:
            out = out + term
        return out


def ibp_expand(H: SymmField, j: int, depth: int, base: Profile, lam: float,
               order: int = DEFAULT_FD_ORDER) -> IbpExpansion:
    """Expand profile(lam t_eta)/lam * H into boundary + sym-grad potential + sector series."""
    spec = H.spec
    basis = PrimitiveBasis(spec.dim)
    eta = basis.direction(0, j - 1)
    chain = primitive_chain(base, depth + 1)
    L, P = lp_operators(H, j, depth, order)

    sign = 1.0 if (depth + 1) % 2 == 0 else -1.0
    bdry_osc = OscScalar(spec, eta, ((chain[depth + 1], lam),),
                         scale=sign / lam ** (depth + 2))
    boundary = bdry_osc.as_field() * sym_grad(L[depth], order)

    potential_terms = []
    pot = None
    for i in range(depth + 1):
        osc = OscScalar(spec, eta, ((chain[i + 1], lam),),
                        scale=(-1.0) ** i / lam ** (i + 2))
        potential_terms.append((osc, L[i]))
        term = osc.as_field() * L[i]
        pot = term if pot is None else pot + term

    p_series = []
    for i in range(depth + 1):
        osc = OscScalar(spec, eta, ((chain[i], lam),),
                        scale=(-1.0) ** i / lam ** (i + 1))
        p_series.append(osc.as_field() * P[i])

    return IbpExpansion(depth, j, lam, eta, boundary, pot, potential_terms, p_series)


def reconstruction_residual(exp: IbpExpansion, H: SymmField, base: Profile,
                            hybrid: bool = False,
                            order: int = DEFAULT_FD_ORDER) -> SymmField:
    """boundary + sym grad(potential) + sector series - profile(lam t)/lam H.

    With ``hybrid`` the potential is differentiated term by term with the
    chain rule on the oscillation (the identity is then exact to rounding);
    otherwise the assembled potential field goes through the grid stencils,
    which measures the discretization error of the reduction.
    """
    if hybrid:
        middle = None
        for osc, Lf in exp.potential_terms:
            t = sym_grad_scaled(osc, Lf, order)
            middle = t if middle is None else middle + t
    else:
        middle = sym_grad(exp.potential, order)
    target_osc = OscScalar(H.spec, exp.eta, ((base, exp.lam),), scale=1.0 / exp.lam)
    target = target_osc.as_field() * H
    return exp.boundary + middle + exp.p_total() - target


def first_row_coefficients(P: SymmField) -> np.ndarray:
    """Basis coefficients a_1t of a matrix field; zero iff the field lies in
    the eta_st (s, t >= 2) sector."""
    basis = PrimitiveBasis(P.spec.dim)
    return basis.decompose_field(P)[: P.spec.dim]
