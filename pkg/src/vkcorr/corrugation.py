"""Single-step corrugation synthesis and its residual identity.

A step adds a high-frequency normal oscillation plus compensating tangential
terms so that the quadratic form (1/2)(grad v)^T grad v + sym grad w gains
exactly one rank-one contribution a^2 eta (x) eta, up to curvature-sized
errors.  Derivatives of profile(lam * <x, eta>) factors are taken by the
chain rule (exact); only smooth amplitude factors see finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import (DEFAULT_FD_ORDER, GridSpec, ScalarField, SymmField,
                     VectorField, gradient, hessian, sym_grad, sym_outer,
                     sym_pairs)
from .profiles import (CORRUGATION, ENVELOPE, TANGENTIAL_GRAD,
                       TANGENTIAL_QUAD, Profile)

_PHASE_CACHE: dict = {}


def phase_array(spec: GridSpec, eta: np.ndarray) -> np.ndarray:
    """The linear phase <x, eta> sampled on the grid."""
    key = (spec, tuple(np.round(eta, 15)))
    if key not in _PHASE_CACHE:
        coords = spec.coords()
        _PHASE_CACHE[key] = sum(e * c for e, c in zip(eta, coords))
    return _PHASE_CACHE[key]


def constant_vector(spec: GridSpec, vec: np.ndarray, valid_margin: float = None) -> VectorField:
    vm = spec.margin if valid_margin is None else valid_margin
    data = np.stack([np.full(spec.shape, float(c)) for c in vec])
    return VectorField(spec, data, vm)


def rank_one(spec: GridSpec, coeff: ScalarField, eta: np.ndarray) -> SymmField:
    """coeff(x) * eta (x) eta as a symmetric matrix field."""
    data = np.stack([coeff.data * (eta[i] * eta[j]) for i, j in sym_pairs(spec.dim)])
    return SymmField(spec, data, coeff.valid_margin)


@dataclass
class OscScalar:
    """scale * amp(x) * prod_i p_i(lam_i * <x, eta>), all factors one direction.

    Values are sampled exactly; the gradient differentiates the trigonometric
    factors in closed form and the amplitude by finite differences.  For
    amplitudes assembled as products (a^2, b * b_prev) pass ``amp_grad`` with
    the product-rule gradient, so downstream identities cancel against the
    same first-derivative arrays instead of a stencil applied to the product.
    """

    spec: GridSpec
    eta: np.ndarray
    factors: tuple[tuple[Profile, float], ...]
    amp: ScalarField | None = None
    scale: float = 1.0
    amp_grad: VectorField | None = None

    def trig_values(self) -> np.ndarray:
        t = phase_array(self.spec, self.eta)
        out = np.ones(self.spec.shape)
        for profile, lam in self.factors:
            out = out * profile(lam * t)
        return out

    def values(self) -> np.ndarray:
        out = self.scale * self.trig_values()
        if self.amp is not None:
            out = out * self.amp.data
        return out

    @property
    def valid_margin(self) -> float:
        return self.spec.margin if self.amp is None else self.amp.valid_margin

    def as_field(self) -> ScalarField:
        return ScalarField(self.spec, self.values(), self.valid_margin)

    def _trig_derivative_values(self) -> np.ndarray:
        """d/dt of the product of trigonometric factors, in closed form."""
        t = phase_array(self.spec, self.eta)
        out = np.zeros(self.spec.shape)
        for i, (profile, lam) in enumerate(self.factors):
            term = lam * profile.derivative()(lam * t)
            for j, (other, olam) in enumerate(self.factors):
                if j != i:
                    term = term * other(olam * t)
            out = out + term
        return out

    def gradient(self, order: int = DEFAULT_FD_ORDER) -> VectorField:
        along = self.scale * self._trig_derivative_values()
        if self.amp is not None:
            along = along * self.amp.data
        data = np.stack([along * e for e in self.eta])
        vm = self.spec.margin
        if self.amp is not None:
            ga = self.amp_grad if self.amp_grad is not None else gradient(self.amp, order)
            vm = ga.valid_margin
            trig = self.scale * self.trig_values()
            data = data + trig * ga.data
        return VectorField(self.spec, data, vm)


def sym_grad_scaled(c: OscScalar, V: VectorField, order: int = DEFAULT_FD_ORDER) -> SymmField:
    """sym grad of c(x) V(x): product rule, oscillation handled in closed form."""
    return sym_outer(c.gradient(order), V) + c.as_field() * sym_grad(V, order)


@dataclass
class CorrugationParams:
    """One corrugation: amplitude field, frequency, direction, target slot."""

    amplitude: ScalarField
    frequency: float
    direction: np.ndarray
    slot: int

    def __post_init__(self):
        self.direction = np.asarray(self.direction, dtype=np.float64)
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-12:
            raise ValueError("corrugation direction must be a unit vector")
        if self.frequency <= 0:
            raise ValueError("corrugation frequency must be positive")

    def displacement(self) -> OscScalar:
        """The scalar profile(lam t)/lam * a added to the target component."""
        return OscScalar(self.amplitude.spec, self.direction,
                         ((CORRUGATION, self.frequency),), self.amplitude,
                         scale=1.0 / self.frequency)


def kuiper_step(v: VectorField, w: VectorField, params: CorrugationParams,
                order: int = DEFAULT_FD_ORDER) -> tuple[VectorField, VectorField]:
    """Add one corrugation targeting a^2 eta (x) eta of the defect."""
    a, lam, eta, n = (params.amplitude, params.frequency,
                      params.direction, params.slot)
    spec = v.spec
    if w.spec != spec or a.spec != spec:
        raise ValueError("corrugation inputs live on different grids")
    if not (0 <= n < v.ncomp):
        raise ValueError(f"slot {n} out of range for a {v.ncomp}-component field")
    if w.ncomp != spec.dim:
        raise ValueError("tangential field must have d components")

    disp = params.displacement()
    v_new = v.copy()
    v_new.set_component(n, v.component(n) + disp.as_field())

    gv = gradient(v.component(n), order)
    ga = gradient(a, order)
    quad = OscScalar(spec, eta, ((TANGENTIAL_QUAD, lam),), a * a, scale=1.0 / lam,
                     amp_grad=2.0 * (a * ga))
    grad_term = OscScalar(spec, eta, ((TANGENTIAL_GRAD, lam),), a, scale=1.0 / lam ** 2)
    w_new = (w
             - disp.as_field() * gv
             + quad.as_field() * constant_vector(spec, eta)
             + grad_term.as_field() * ga)
    return v_new, w_new


def quadratic_increment(v: VectorField, w: VectorField, params: CorrugationParams,
                        order: int = DEFAULT_FD_ORDER) -> SymmField:
    """Exact-in-oscillation increment of (1/2)(grad v)^T grad v + sym grad w
    under one corrugation step.

    The oscillatory factors are differentiated in closed form; amplitude and
    base-field derivatives are the module's finite differences, so the
    returned field matches a pure-FD recomputation to stencil accuracy while
    staying meaningful when the oscillation approaches the grid scale.
    """
    a, lam, eta, n = (params.amplitude, params.frequency,
                      params.direction, params.slot)
    spec = v.spec
    disp = params.displacement()
    g_disp = disp.gradient(order)
    gv = gradient(v.component(n), order)
    ga = gradient(a, order)

    inc = sym_outer(gv, g_disp) + 0.5 * sym_outer(g_disp, g_disp)
    inc = inc - sym_grad_scaled(disp, gv, order)
    quad = OscScalar(spec, eta, ((TANGENTIAL_QUAD, lam),), a * a, scale=1.0 / lam,
                     amp_grad=2.0 * (a * ga))
    inc = inc + sym_outer(quad.gradient(order), constant_vector(spec, eta))
    grad_term = OscScalar(spec, eta, ((TANGENTIAL_GRAD, lam),), a, scale=1.0 / lam ** 2)
    inc = inc + sym_grad_scaled(grad_term, ga, order)
    return inc


def step_residual(v: VectorField, w: VectorField, v_new: VectorField,
                  w_new: VectorField, params: CorrugationParams,
                  order: int = DEFAULT_FD_ORDER) -> SymmField:
    """LHS minus RHS of the single-step residual identity.

    LHS is the measured quadratic-form increment minus the intended rank-one
    term; RHS collects the curvature errors.  Vanishes to machine precision
    for constant amplitude and affine v; converges at stencil order otherwise.
    """
    a, lam, eta, n = (params.amplitude, params.frequency,
                      params.direction, params.slot)
    spec = v.spec
    check_v, check_w = kuiper_step(v, w, params, order)
    scale = max(float(np.max(np.abs(check_v.data))), 1.0)
    if (np.max(np.abs(check_v.data - v_new.data)) > 1e-10 * scale
            or np.max(np.abs(check_w.data - w_new.data)) > 1e-10 * scale):
        raise ValueError("fields were not produced by kuiper_step with these parameters")

    lhs = quadratic_increment(v, w, params, order) - rank_one(spec, a * a, eta)

    hv = hessian(v.component(n), order)
    ha = hessian(a, order)
    ga = gradient(a, order)
    disp = params.displacement()
    grad_term = OscScalar(spec, eta, ((TANGENTIAL_GRAD, lam),), a, scale=1.0 / lam ** 2)
    envelope = OscScalar(spec, eta, ((ENVELOPE, lam),), None, scale=1.0 / lam ** 2)
    rhs = (-1.0 * (disp.as_field() * hv)
           + grad_term.as_field() * ha
           + envelope.as_field() * sym_outer(ga, ga))
    return lhs - rhs
