"""One defect-reduction stage: mollify, decompose, corrugate, account.

A stage runs K inner steps.  Each step decomposes the current defect into
rank-one primitive pieces (with gradient absorption), cancels the first-row
pieces with corrugations of the first codimension slot at the ladder
frequencies, pushes the leftover oscillatory error into the lower-right
sector via integration by parts, absorbs that sector into updated
amplitudes, and cancels it with corrugations of the remaining slots at the
next base frequency.  All defect changes are tracked through exact-in-
oscillation increments; an honest finite-difference recomputation is
reported next to the tracked value.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np

from .absorption import AbsorptionResult, absorb_decompose, valid_slices
from .algebra import Dims, PrimitiveBasis, codim_pair, defect
from .corrugation import (CorrugationParams, OscScalar, constant_vector,
                          kuiper_step, quadratic_increment, sym_grad_scaled)
from .errors import ConfigError, GuardExceeded, MarginExhausted, \
    NonPositiveCoefficient, ResolutionGuard
from .fields import (DEFAULT_FD_ORDER, GridSpec, ScalarField, SymmField,
                     VectorField, diff, gradient, mollify, stencil_reach,
                     sup_norm, sym_grad, sym_outer, sym_pairs)
from .ibp import lp_operators
from .profiles import (CORRUGATION, ENVELOPE, ENVELOPE_OSC,
                       TANGENTIAL_GRAD, primitive_chain)


@dataclass(frozen=True)
class FrequencySchedule:
    """Frequency and defect-magnitude progression across the K inner steps."""

    d: int
    sigma: float
    steps: int          # K
    reduction: int      # N
    mu0: float
    delta0: float

    def __post_init__(self):
        if self.steps < 1 or self.reduction < 1:
            raise ConfigError("K and N must be at least 1")
        if self.sigma <= 1.0:
            raise ConfigError("sigma must exceed 1")
        for k in range(1, self.steps + 1):
            if not self.mu(k - 1) < self.lam(k) < self.mu(k):
                raise ConfigError("frequency progression must interleave strictly")
        deltas = [self.delta(k) for k in range(self.steps + 1)]
        if any(b >= a for a, b in zip(deltas, deltas[1:])):
            raise ConfigError("defect magnitudes must decrease strictly")
        ratios = [np.sqrt(self.delta(k)) * self.mu(k) for k in range(self.steps + 1)]
        if any(b < a * (1 - 1e-12) for a, b in zip(ratios, ratios[1:])):
            raise ConfigError("sqrt(delta_k) mu_k must be nondecreasing")

    def mu(self, k: int) -> float:
        if k == 0:
            return self.mu0
        return self.mu0 * self.sigma ** (self.d + self.reduction
                                         + (self.d + self.reduction / 2.0) * (k - 1))

    def lam(self, k: int) -> float:
        return self.mu(k - 1) * self.sigma ** self.d

    def delta(self, k: int) -> float:
        return self.delta0 / self.sigma ** (self.reduction * k)

    def ladder(self, k: int) -> list[float]:
        """Intra-step frequencies at counter k; the last equals lam(k+1)."""
        return [self.mu(k) * self.sigma ** j for j in range(1, self.d + 1)]

    def top_frequency(self) -> float:
        return self.mu(self.steps)


@dataclass
class StageConfig:
    """Parameters and guards for one stage."""

    sigma: float
    steps: int = 1                      # K
    reduction: int = 1                  # N
    bound_m: float | None = None        # floor for the C^2 bound; measured if None
    reg_r: int = 1
    reg_beta: float = 1.0
    fd_order: int = DEFAULT_FD_ORDER
    points_per_oscillation: float = 8.0
    constant_cap: float = 100.0         # cap on measured |D_k| / delta_k
    error_slack: float = 200.0          # slack factor on error-field predictions
    coefficient_floor: float = 0.25
    check_guards: bool = True
    snapshot_dir: str | None = None     # dump v_k, w_k per inner step when set

    def __post_init__(self):
        if self.reg_r not in (0, 1):
            raise ConfigError("regularity r must be 0 or 1")
        if not 0.0 < self.reg_beta <= 1.0:
            raise ConfigError("regularity beta must lie in (0, 1]")


def _hess_composed(f: ScalarField, order: int) -> SymmField:
    """Symmetrized composition of first-derivative stencils."""
    return sym_grad(gradient(f, order), order)


def c1_norm(v: VectorField, order: int = DEFAULT_FD_ORDER) -> float:
    best = sup_norm(v)
    for n in range(v.ncomp):
        for axis in range(v.spec.dim):
            best = max(best, sup_norm(diff(v.component(n), axis, order)))
    return best


def c2_seminorm(v: VectorField, order: int = DEFAULT_FD_ORDER) -> float:
    """Sup norm of all second derivatives of all components."""
    best = 0.0
    for n in range(v.ncomp):
        best = max(best, sup_norm(_hess_composed(v.component(n), order)))
    return best


@dataclass
class StepLog:
    """Diagnostics for one inner step (one k value)."""

    k: int
    delta_k: float
    defect_norm: float
    constant_k: float
    shift: float
    absorption_residual_norm: float
    absorption_constant: float          # |F| sigma^(2N) / delta_k
    first_pass_error_norms: list[float]
    first_pass_error_constants: list[float]
    sector_norms: list[float]
    sector_leak: float                  # max first-row coefficient of sum G
    amp_squared_min: float
    amp_squared_max: float
    b_squared_min: float
    b_squared_max: float
    higher_error_norms: list[float]
    higher_error_constants: list[float]
    quad_error_norm: float
    quad_error_constant: float
    tracking_gap: float                 # |D_tracked - def5 assembly|
    valid_margin: float


@dataclass
class StageReport:
    sigma: float
    steps: int
    reduction: int
    delta0: float
    mu0: float
    bound_m: float
    grid_points: int
    grid_h: float
    fd_order: int
    v_c1_distance: float = 0.0
    w_c1_distance: float = 0.0
    v_c2_norm: float = 0.0
    w_c2_norm: float = 0.0
    mollification_gap_v: float = 0.0    # |v0 - v|_1 + |w0 - w|_1
    mollification_gap_a: float = 0.0    # |A0 - A|_0
    final_defect_tracked: float = 0.0   # |D(A, v_K, w_K)| via tracked D_K
    final_defect_fd: float = 0.0        # honest FD recomputation
    final_defect_vs_a0_tracked: float = 0.0
    final_defect_vs_a0_fd: float = 0.0
    fd_tracking_gap: float = 0.0
    c1_constant: float = 0.0            # |v~ - v|_1 / sqrt(delta0)
    c2_constant: float = 0.0            # |D2 v~| / (M sigma^(dK+N))
    decay_constant: float = 0.0         # |D_K| sigma^(KN) / delta0
    margin_initial: float = 0.0
    margin_final: float = 0.0
    step_logs: list[StepLog] = dc_field(default_factory=list)

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "step_logs"}
        out["step_logs"] = [dict(log.__dict__) for log in self.step_logs]
        return out


@dataclass
class ScaledDecomposition:
    """Defect split into scaled rank-one amplitudes, gradient term, remainder,
    and the constant center shift that keeps coefficients positive."""

    amplitudes: list[ScalarField]
    ladder: list[float]
    remainder: SymmField
    gradient_term: SymmField
    shift: float
    raw: AbsorptionResult


def mollify_inputs(v: VectorField, w: VectorField, A: SymmField, bound_m: float,
                   delta0: float, order: int = DEFAULT_FD_ORDER
                   ) -> tuple[VectorField, VectorField, SymmField, SymmField, float]:
    """Smooth the inputs at length 1/mu0 and compute the starting defect."""
    mu0 = bound_m / np.sqrt(delta0)
    length = 1.0 / mu0
    v0 = mollify(v, length)
    w0 = mollify(w, length)
    A0 = mollify(A, length)
    D0 = defect(A0, v0, w0, order)
    return v0, w0, A0, D0, mu0


def stage_defect_decompose(D_k: SymmField, delta_k: float, constant_k: float,
                           mu_k: float, sigma: float, sweeps: int,
                           order: int = DEFAULT_FD_ORDER,
                           coefficient_floor: float = 0.25) -> ScaledDecomposition:
    """Rescale the defect into the absorption ball around the basis center,
    decompose, and scale back."""
    basis = PrimitiveBasis(D_k.spec.dim)
    shift = 2.0 * constant_k * delta_k / basis.r0
    H = SymmField.from_constant(D_k.spec, basis.center) + (1.0 / shift) * D_k
    raw = absorb_decompose(H, mu_k, sigma, sweeps, order, coefficient_floor)
    root = np.sqrt(shift)
    amps = [ScalarField(a.spec, root * a.data, a.valid_margin) for a in raw.amplitudes]
    return ScaledDecomposition(amps, raw.frequencies, shift * raw.residual,
                               shift * raw.gradient_term, shift, raw)


@dataclass
class FirstPassResult:
    v: VectorField
    w: VectorField
    defect_change: SymmField
    boundary_errors: list[SymmField]    # F_1j
    sector_errors: list[SymmField]      # G_1j


def first_codim_pass(v: VectorField, w: VectorField, amps: Sequence[ScalarField],
                     ladder: Sequence[float], shift: float, depth: int,
                     order: int = DEFAULT_FD_ORDER) -> FirstPassResult:
    """Cancel the first-row primitive defects with slot-0 corrugations.

    Each direction's corrugation carries a tangential correction that
    integrates the oscillatory error by parts ``depth`` times; the leftovers
    split into boundary-sized fields and sector fields for later absorption.
    The first direction also carries the linear drift cancelling the center
    shift of the decomposition.
    """
    spec = v.spec
    d = spec.dim
    basis = PrimitiveBasis(d)
    chain_main = primitive_chain(CORRUGATION, depth + 1)
    chain_grad = primitive_chain(TANGENTIAL_GRAD, depth + 1)
    chain_env = primitive_chain(ENVELOPE_OSC, depth + 1)

    V, W = v.copy(), w.copy()
    change: SymmField | None = None
    boundary_errors: list[SymmField] = []
    sector_errors: list[SymmField] = []

    for j in range(1, d + 1):
        a = amps[j - 1]
        lam = float(ladder[j - 1])
        eta = basis.direction(0, j - 1)
        params = CorrugationParams(a, lam, eta, slot=0)

        inc = quadratic_increment(V, W, params, order)
        V_next, W_next = kuiper_step(V, W, params, order)

        ga = gradient(a, order)
        H_field = a * _hess_composed(V.component(0), order)
        H_amp = a * _hess_composed(a, order)
        H_grad = sym_outer(ga, ga)
        L_f, P_f = lp_operators(H_field, j, depth, order)
        L_a, P_a = lp_operators(H_amp, j, depth, order)
        L_g, P_g = lp_operators(H_grad, j, depth, order)

        theta_terms: list[tuple[OscScalar, VectorField]] = []
        for i in range(depth + 1):
            sgn = (-1.0) ** i
            theta_terms.append((OscScalar(spec, eta, ((chain_main[i + 1], lam),),
                                          scale=-sgn / lam ** (i + 2)), L_f[i]))
            theta_terms.append((OscScalar(spec, eta, ((chain_grad[i + 1], lam),),
                                          scale=sgn / lam ** (i + 3)), L_a[i]))
            theta_terms.append((OscScalar(spec, eta, ((chain_env[i + 1], lam),),
                                          scale=sgn / lam ** (i + 3)), L_g[i]))

        theta = None
        theta_sym = None
        for osc, L_i in theta_terms:
            piece = osc.as_field() * L_i
            theta = piece if theta is None else theta + piece
            sym_piece = sym_grad_scaled(osc, L_i, order)
            theta_sym = sym_piece if theta_sym is None else theta_sym + sym_piece

        if j == 1:
            coords = spec.coords()
            drift_data = np.stack([
                sum(basis.center[p, q] * coords[q] for q in range(d))
                for p in range(d)])
            drift = VectorField(spec, shift * drift_data, spec.margin)
            theta = theta + drift
            theta_sym = theta_sym + SymmField.from_constant(spec, shift * basis.center)

        W_next = W_next - theta
        step_change = (-1.0 * inc) + theta_sym
        change = step_change if change is None else change + step_change

        sign_b = (-1.0) ** (depth + 1)
        bdry = None
        for chain, L_list, extra in ((chain_main, L_f, 0), (chain_grad, L_a, 1),
                                     (chain_env, L_g, 1)):
            factor = -1.0 if chain is chain_main else 1.0
            osc = OscScalar(spec, eta, ((chain[depth + 1], lam),),
                            scale=sign_b * factor / lam ** (depth + 2 + extra))
            piece = osc.as_field() * sym_grad(L_list[depth], order)
            bdry = piece if bdry is None else bdry + piece
        boundary_errors.append(bdry)

        sector = None
        for i in range(depth + 1):
            sgn = (-1.0) ** i
            for chain, P_list, extra in ((chain_main, P_f, 0), (chain_grad, P_a, 1),
                                         (chain_env, P_g, 1)):
                factor = -1.0 if chain is chain_main else 1.0
                osc = OscScalar(spec, eta, ((chain[i], lam),),
                                scale=sgn * factor / lam ** (i + 1 + extra))
                piece = osc.as_field() * P_list[i]
                sector = piece if sector is None else sector + piece
        sector_errors.append(sector)

        V, W = V_next, W_next

    return FirstPassResult(V, W, change, boundary_errors, sector_errors)


@dataclass
class SectorAbsorption:
    b_fields: dict[tuple[int, int], ScalarField]   # 0-based pairs, i <= j, i >= 1
    leak: float                                    # max first-row coefficient
    b_squared_min: float
    b_squared_max: float


def absorb_sector(sector_errors: Sequence[SymmField], amps: Sequence[ScalarField],
                  positivity_floor: float) -> SectorAbsorption:
    """Fold the sector errors into the remaining squared amplitudes."""
    spec = sector_errors[0].spec
    d = spec.dim
    basis = PrimitiveBasis(d)
    total = sector_errors[0]
    for g in sector_errors[1:]:
        total = total + g
    coeffs = basis.decompose_field(total)
    band = (slice(None),) + valid_slices(total)
    leak = float(np.max(np.abs(coeffs[:d][band])))

    b_fields: dict[tuple[int, int], ScalarField] = {}
    b_min, b_max = np.inf, -np.inf
    pairs = sym_pairs(d)
    for p, (i, j) in enumerate(pairs):
        if i == 0:
            continue
        sq = amps[p] * amps[p]
        b_sq = sq.data - coeffs[p]
        vb = valid_slices(amps[p])
        low = float(b_sq[vb].min())
        if low < positivity_floor:
            raise NonPositiveCoefficient(
                f"b^2 for pair {(i + 1, j + 1)} dropped to {low:.4g}"
                f" (floor {positivity_floor:.4g}); increase sigma")
        b_min = min(b_min, low)
        b_max = max(b_max, float(b_sq[vb].max()))
        safe = np.maximum(b_sq, positivity_floor)
        b_fields[(i, j)] = ScalarField(spec, np.sqrt(safe),
                                       min(amps[p].valid_margin, total.valid_margin))
    return SectorAbsorption(b_fields, leak, b_min, b_max)


@dataclass
class HigherPassResult:
    v: VectorField
    w: VectorField
    defect_change: SymmField
    history_errors: list[SymmField]     # H_n
    quad_error: SymmField               # G


def higher_codim_pass(v: VectorField, w: VectorField,
                      b_fields: dict[tuple[int, int], ScalarField],
                      mu_next: float,
                      history: Sequence[tuple[dict[tuple[int, int], ScalarField], float]],
                      order: int = DEFAULT_FD_ORDER) -> HigherPassResult:
    """Cancel the remaining primitive defects with slots 1..codim-1.

    ``history`` holds the (b, mu) data of earlier inner steps; corrugations
    added now ride on components already oscillating at those frequencies,
    and the tangential correction integrates that interaction by parts.
    """
    spec = v.spec
    d = spec.dim
    dims = Dims(d)
    basis = PrimitiveBasis(d)
    gamma1 = primitive_chain(CORRUGATION, 2)
    dgamma = CORRUGATION.derivative()
    ddgamma = dgamma.derivative()

    V, W = v.copy(), w.copy()
    change: SymmField | None = None
    history_errors: list[SymmField] = []
    quad_error: SymmField | None = None

    for n in range(2, dims.codim + 1):
        i1, j1 = codim_pair(n, d)
        pair = (i1 - 1, j1 - 1)
        b = b_fields[pair]
        eta = basis.direction(*pair)
        params = CorrugationParams(b, mu_next, eta, slot=n - 1)

        base_hess = _hess_composed(V.component(n - 1), order)
        inc = quadratic_increment(V, W, params, order)
        V_next, W_next = kuiper_step(V, W, params, order)

        theta = None
        theta_sym = None
        gb_here = gradient(b, order)
        for b_prev, mu_prev in history:
            bp = b_prev[pair]
            cross = OscScalar(spec, eta, ((gamma1[1], mu_next), (dgamma, mu_prev)),
                              b, scale=2.0 / mu_next ** 2)
            gbp = gradient(bp, order)
            product_grad = b * gbp + bp * gb_here
            piece = cross.as_field() * gbp
            sym_piece = sym_grad_scaled(cross, gbp, order)

            ride = OscScalar(spec, eta, ((gamma1[1], mu_next), (ddgamma, mu_prev)),
                             b * bp, scale=mu_prev / mu_next ** 2,
                             amp_grad=product_grad)
            piece = piece + ride.as_field() * constant_vector(spec, eta)
            sym_piece = sym_piece + sym_outer(ride.gradient(order),
                                              constant_vector(spec, eta))

            inner = OscScalar(spec, eta, ((ddgamma, mu_prev),), b * bp,
                              scale=mu_prev, amp_grad=product_grad)
            outer = OscScalar(spec, eta, ((gamma1[2], mu_next),),
                              scale=-1.0 / mu_next ** 3)
            inner_grad = inner.gradient(order)
            piece = piece + outer.as_field() * inner_grad
            sym_piece = sym_piece + sym_grad_scaled(outer, inner_grad, order)

            theta = piece if theta is None else theta + piece
            theta_sym = sym_piece if theta_sym is None else theta_sym + sym_piece

        if theta is not None:
            W_next = W_next + theta
            step_change = (-1.0 * inc) - theta_sym
        else:
            step_change = -1.0 * inc
            theta_sym = SymmField.zeros(spec)
        change = step_change if change is None else change + step_change

        osc_disp = OscScalar(spec, eta, ((CORRUGATION, mu_next),), b,
                             scale=1.0 / mu_next)
        h_err = osc_disp.as_field() * base_hess - theta_sym
        history_errors.append(h_err)

        gb = gradient(b, order)
        g_term = (OscScalar(spec, eta, ((TANGENTIAL_GRAD, mu_next),), b,
                            scale=1.0 / mu_next ** 2).as_field()
                  * _hess_composed(b, order)
                  + OscScalar(spec, eta, ((ENVELOPE, mu_next),),
                              scale=1.0 / mu_next ** 2).as_field()
                  * sym_outer(gb, gb))
        quad_error = g_term if quad_error is None else quad_error + g_term

        V, W = V_next, W_next

    return HigherPassResult(V, W, change, history_errors, quad_error)


def _static_margin_check(spec: GridSpec, mu0: float, steps: int, reduction: int,
                         order: int):
    length = 1.0 / mu0
    reach = stencil_reach(order) * spec.h
    budget = length + reach * (steps * (2 * reduction + 8) + 4)
    if budget > spec.margin + 1e-12:
        raise MarginExhausted(budget, spec.margin,
                              f"stage with K={steps}, N={reduction}, mu0={mu0:.4g}")


def run_stage(v: VectorField, w: VectorField, A: SymmField,
              config: StageConfig) -> tuple[VectorField, VectorField, StageReport]:
    """Run the full K-step stage and report measured norms and constants."""
    spec = v.spec
    d = spec.dim
    dims = Dims(d)
    order = config.fd_order
    basis = PrimitiveBasis(d)
    if v.ncomp != dims.codim:
        raise ConfigError(f"normal field needs {dims.codim} components for d={d}")
    if w.ncomp != d:
        raise ConfigError("tangential field needs d components")

    raw_defect = defect(A, v, w, order)
    delta0 = sup_norm(raw_defect)
    if not 0.0 < delta0 <= 1.0 + 1e-12:
        raise ConfigError(
            f"starting defect norm {delta0:.4g} violates the precondition 0 < |D| <= 1")

    measured_m = max(c1_norm(v, order), c2_seminorm(v, order),
                     c1_norm(w, order), c2_seminorm(w, order), 1.0)
    bound_m = max(measured_m, config.bound_m or 0.0)

    schedule = FrequencySchedule(d, config.sigma, config.steps, config.reduction,
                                 bound_m / np.sqrt(delta0), delta0)
    top = schedule.top_frequency()
    if top * spec.h > 2.0 * np.pi / config.points_per_oscillation + 1e-12:
        raise ResolutionGuard(
            f"top frequency {top:.4g} needs h <= "
            f"{2 * np.pi / (config.points_per_oscillation * top):.4g}"
            f" but the grid has h = {spec.h:.4g}; refine the grid")
    _static_margin_check(spec, schedule.mu0, config.steps, config.reduction, order)

    v0, w0, A0, D0, mu0 = mollify_inputs(v, w, A, bound_m, delta0, order)
    report = StageReport(
        sigma=config.sigma, steps=config.steps, reduction=config.reduction,
        delta0=delta0, mu0=mu0, bound_m=bound_m,
        grid_points=spec.points_per_axis, grid_h=spec.h, fd_order=order,
        mollification_gap_v=c1_norm(v0 - v, order) + c1_norm(w0 - w, order),
        mollification_gap_a=sup_norm(A0 - A),
        margin_initial=min(v.valid_margin, w.valid_margin, A.valid_margin))

    V, W = v0, w0
    D_tracked = D0
    history: list[tuple[dict[tuple[int, int], ScalarField], float]] = []

    for k in range(config.steps):
        delta_k = schedule.delta(k)
        defect_norm = sup_norm(D_tracked)
        constant_k = defect_norm / delta_k
        if constant_k > config.constant_cap:
            raise GuardExceeded(
                f"defect constant {constant_k:.4g} exceeded the cap"
                f" {config.constant_cap} at step {k}")
        if defect_norm == 0.0:
            raise ConfigError("defect vanished mid-stage; nothing to decompose")

        deco = stage_defect_decompose(D_tracked, delta_k, constant_k,
                                      schedule.mu(k), config.sigma,
                                      config.reduction, order,
                                      config.coefficient_floor)
        ladder = schedule.ladder(k)

        first = first_codim_pass(V, W, deco.amplitudes[:d], ladder, deco.shift,
                                 config.reduction, order)

        floor = constant_k * delta_k / (2.0 * basis.r0)
        sector = absorb_sector(first.sector_errors, deco.amplitudes, floor)

        mu_next = schedule.mu(k + 1)
        higher = higher_codim_pass(first.v, first.w, sector.b_fields, mu_next,
                                   history, order)

        D_next = D_tracked + first.defect_change + higher.defect_change

        assembled = deco.remainder
        for f_err in first.boundary_errors:
            assembled = assembled - f_err
        for h_err in higher.history_errors:
            assembled = assembled + h_err
        assembled = assembled - higher.quad_error
        tracking_gap = sup_norm(D_next - assembled)

        amp_sq = [(a * a).data[valid_slices(a)] for a in deco.amplitudes]
        f_norms = [sup_norm(f) for f in first.boundary_errors]
        g_norms = [sup_norm(g) for g in first.sector_errors]
        h_norms = [sup_norm(h) for h in higher.history_errors]
        quad_norm = sup_norm(higher.quad_error)
        absorb_norm = sup_norm(deco.remainder)
        sig = config.sigma
        log = StepLog(
            k=k, delta_k=delta_k, defect_norm=defect_norm, constant_k=constant_k,
            shift=deco.shift,
            absorption_residual_norm=absorb_norm,
            absorption_constant=absorb_norm * sig ** (2 * config.reduction) / delta_k,
            first_pass_error_norms=f_norms,
            first_pass_error_constants=[fn * sig ** (config.reduction + 2) / delta_k
                                        for fn in f_norms],
            sector_norms=g_norms,
            sector_leak=sector.leak,
            amp_squared_min=min(float(a.min()) for a in amp_sq),
            amp_squared_max=max(float(a.max()) for a in amp_sq),
            b_squared_min=sector.b_squared_min,
            b_squared_max=sector.b_squared_max,
            higher_error_norms=h_norms,
            higher_error_constants=[hn * sig ** config.reduction / delta_k
                                    for hn in h_norms],
            quad_error_norm=quad_norm,
            quad_error_constant=quad_norm * sig ** config.reduction / delta_k,
            tracking_gap=tracking_gap,
            valid_margin=min(higher.v.valid_margin, higher.w.valid_margin),
        )
        report.step_logs.append(log)
        if config.check_guards:
            worst = max(log.first_pass_error_constants
                        + log.higher_error_constants
                        + [log.quad_error_constant])
            if worst > config.error_slack:
                raise GuardExceeded(
                    f"error-field constant {worst:.4g} exceeded the slack"
                    f" {config.error_slack} at step {k}")

        V, W = higher.v, higher.w
        D_tracked = D_next
        history.append((sector.b_fields, mu_next))
        if config.snapshot_dir:
            from . import fields as _fields
            import os as _os
            _os.makedirs(config.snapshot_dir, exist_ok=True)
            _fields.save_field(V, _os.path.join(config.snapshot_dir,
                                                f"v_step{k + 1}.mafield"))
            _fields.save_field(W, _os.path.join(config.snapshot_dir,
                                                f"w_step{k + 1}.mafield"))

    final_vs_a0_fd = defect(A0, V, W, order)
    final_tracked_vs_a = (A - A0) + D_tracked
    final_fd = defect(A, V, W, order)

    report.v_c1_distance = c1_norm(V - v, order)
    report.w_c1_distance = c1_norm(W - w, order)
    report.v_c2_norm = c2_seminorm(V, order)
    report.w_c2_norm = c2_seminorm(W, order)
    report.final_defect_tracked = sup_norm(final_tracked_vs_a)
    report.final_defect_fd = sup_norm(final_fd)
    report.final_defect_vs_a0_tracked = sup_norm(D_tracked)
    report.final_defect_vs_a0_fd = sup_norm(final_vs_a0_fd)
    report.fd_tracking_gap = sup_norm(final_vs_a0_fd - D_tracked)
    report.c1_constant = report.v_c1_distance / np.sqrt(delta0)
    report.c2_constant = report.v_c2_norm / (
        bound_m * config.sigma ** (d * config.steps + config.reduction))
    report.decay_constant = (report.final_defect_vs_a0_tracked
                             * config.sigma ** (config.steps * config.reduction)
                             / delta0)
    report.margin_final = min(V.valid_margin, W.valid_margin)
    return V, W, report
