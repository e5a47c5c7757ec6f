"""Named identity suites behind the `verify` command.

Each suite re-checks the invariants of one engine layer at small sizes and
returns machine-readable results; any failed check flips the suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .absorption import absorb_decompose
from .algebra import Dims, PrimitiveBasis, codim_index, codim_pair
from .corrugation import CorrugationParams, kuiper_step, step_residual
from .errors import UnknownSuite
from .fields import (GridSpec, ScalarField, SymmField, VectorField,
                     sup_norm, sym_pairs)
from .ibp import (first_row_coefficients, ibp_expand, lp_operators,
                  reconstruction_residual)
from .profiles import (CORRUGATION, ENVELOPE, ENVELOPE_OSC, TANGENTIAL_GRAD,
                       TANGENTIAL_QUAD, primitive_chain)

SUITES = ("profiles", "basis", "step", "ibp", "kallen", "all")


@dataclass
class Check:
    name: str
    passed: bool
    measured: float
    limit: float
    comparison: str = "<="

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _smooth(spec: GridSpec, seed: int, scale: float = 1.0, freq: float = 2.0):
    rng = np.random.default_rng(seed)
    coords = spec.coords()
    out = np.zeros(spec.shape)
    for _ in range(3):
        amp = rng.normal() * scale / 3.0
        ks = rng.uniform(0.5, 1.0, size=spec.dim) * freq
        phase = rng.uniform(0, 2 * np.pi)
        out = out + amp * np.sin(sum(k * c for k, c in zip(ks, coords)) + phase)
    return ScalarField(spec, out, spec.margin)


def _symm(spec: GridSpec, seed: int, scale: float = 1.0, freq: float = 2.0):
    npairs = len(sym_pairs(spec.dim))
    data = np.stack([_smooth(spec, seed + q, scale, freq).data
                     for q in range(npairs)])
    return SymmField(spec, data, spec.margin)


def suite_profiles() -> list[Check]:
    t = np.linspace(-12.0, 12.0, 10_000)
    checks = []
    lhs = 0.5 * CORRUGATION.derivative()(t) ** 2 + TANGENTIAL_QUAD.derivative()(t)
    checks.append(Check("profile_identity_unit", None, float(np.max(np.abs(lhs - 1))),
                        1e-12))
    lhs = (CORRUGATION.derivative()(t) * CORRUGATION(t)
           + 2 * TANGENTIAL_QUAD(t) + TANGENTIAL_GRAD.derivative()(t))
    checks.append(Check("profile_identity_cross", None, float(np.max(np.abs(lhs))),
                        1e-12))
    lhs = 0.5 * CORRUGATION(t) ** 2 + TANGENTIAL_GRAD(t) - ENVELOPE(t)
    checks.append(Check("profile_identity_envelope", None,
                        float(np.max(np.abs(lhs))), 1e-12))
    worst = 0.0
    for base in (CORRUGATION, TANGENTIAL_QUAD, TANGENTIAL_GRAD, ENVELOPE_OSC):
        chain = primitive_chain(base, 5)
        for i in range(5):
            worst = max(worst, float(np.max(np.abs(chain[i + 1].derivative()(t)
                                                   - chain[i](t)))))
    checks.append(Check("primitive_chain_recursion", None, worst, 1e-12))
    for c in checks:
        c.passed = c.measured <= c.limit
    return checks


def suite_basis() -> list[Check]:
    checks = []
    rng = np.random.default_rng(0)
    for d in (2, 3, 4):
        basis = PrimitiveBasis(d)
        worst = 0.0
        for _ in range(1000):
            raw = rng.normal(size=(d, d))
            H = 0.5 * (raw + raw.T)
            back = basis.reconstruct(basis.decompose(H))
            worst = max(worst, float(np.max(np.abs(back - H))
                                     / max(1.0, np.max(np.abs(H)))))
        checks.append(Check(f"roundtrip_d{d}", worst <= 1e-12, worst, 1e-12))
        ones_gap = float(np.max(np.abs(basis.decompose(basis.center) - 1.0)))
        checks.append(Check(f"center_ones_d{d}", ones_gap <= 1e-12, ones_gap, 1e-12))
    b2 = PrimitiveBasis(2)
    id_gap = float(np.max(np.abs(b2.decompose(np.eye(2)) - [1.0, 0.0, 1.0])))
    checks.append(Check("hand_identity_d2", id_gap <= 1e-12, id_gap, 1e-12))
    off_gap = float(np.max(np.abs(
        b2.decompose(np.array([[0.0, 1.0], [1.0, 0.0]])) - [-1.0, 2.0, -1.0])))
    checks.append(Check("hand_offdiag_d2", off_gap <= 1e-12, off_gap, 1e-12))
    ok = True
    for d in range(2, 7):
        seen = set()
        for i in range(2, d + 1):
            for j in range(i, d + 1):
                n = codim_index(i, j, d)
                ok = ok and (n not in seen) and codim_pair(n, d) == (i, j)
                seen.add(n)
        ok = ok and sorted(seen) == list(range(2, Dims(d).codim + 1))
    checks.append(Check("codim_bijection_d2_6", ok, 0.0 if ok else 1.0, 0.5))
    for d in (2, 3):
        basis = PrimitiveBasis(d)
        ent = rng.uniform(-1, 1, size=(100_000, len(basis.pairs)))
        ent /= np.abs(ent).max(axis=1, keepdims=True)
        coeffs = ent @ basis._inv.T * basis.r0
        worst = float(np.max(np.abs(coeffs)))
        checks.append(Check(f"radius_ball_d{d}", worst <= 0.5 + 1e-12, worst, 0.5))
    return checks


def suite_step() -> list[Check]:
    checks = []
    spec = GridSpec.for_domain((0.0, 0.0), (1.0, 1.0), 257, 0.3)
    eta = np.array([1.0, 1.0]) / np.sqrt(2.0)
    a = ScalarField.full(spec, 0.7)
    v = VectorField.sample(spec, [lambda x, y: 0.3 * x - 0.1 * y,
                                  lambda x, y: 0.2 * y])
    w = VectorField.zeros(spec, 2)
    p = CorrugationParams(a, 8.0, eta, 0)
    vn, wn = kuiper_step(v, w, p)
    exact = sup_norm(step_residual(v, w, vn, wn, p))
    checks.append(Check("residual_exact_constant_affine", exact <= 1e-10,
                        exact, 1e-10))
    sups = []
    for pts in (129, 257):
        s = GridSpec.for_domain((0.0, 0.0), (1.0, 1.0), pts, 0.3)
        aa = _smooth(s, 3, 0.6, 3.0)
        vv = VectorField(s, np.stack([_smooth(s, 4, 1.0, 3.0).data,
                                      _smooth(s, 5, 1.0, 3.0).data]), s.margin)
        ww = VectorField(s, np.stack([_smooth(s, 6).data, _smooth(s, 7).data]),
                         s.margin)
        pp = CorrugationParams(aa, 8.0, np.array([1.0, 0.0]), 0)
        v2, w2 = kuiper_step(vv, ww, pp, order=2)
        sups.append(sup_norm(step_residual(vv, ww, v2, w2, pp, order=2)))
    order = float(np.log2(sups[0] / sups[1]))
    checks.append(Check("residual_convergence_order", 1.5 <= order <= 2.5,
                        order, 1.5, ">="))
    dist = sup_norm(vn - v)
    bound = 2.0 * sup_norm(a) / 8.0
    checks.append(Check("c0_profile_bound", dist <= bound + 1e-12, dist, bound))
    return checks


def suite_ibp() -> list[Check]:
    checks = []
    spec = GridSpec.for_domain((0.0, 0.0), (1.0, 1.0), 257, 0.35)
    H = _symm(spec, 20, 1.0, 3.0)
    for depth in (0, 1, 2):
        exp = ibp_expand(H, 2, depth, CORRUGATION, 8.0)
        res = sup_norm(reconstruction_residual(exp, H, CORRUGATION, hybrid=True))
        checks.append(Check(f"hybrid_reconstruction_k{depth}", res <= 1e-11,
                            res, 1e-11))
        sups = []
        for lam in (8.0, 16.0, 32.0):
            e = ibp_expand(H, 2, depth, CORRUGATION, lam)
            sups.append(sup_norm(e.boundary))
        slope = float(np.polyfit(np.log([8.0, 16.0, 32.0]), np.log(sups), 1)[0])
        ok = abs(slope + (depth + 2)) <= 0.5
        checks.append(Check(f"boundary_scaling_k{depth}", ok, slope,
                            -(depth + 2), "~"))
    _, P = lp_operators(H, 2, 2)
    leak = max(float(np.max(np.abs(
        first_row_coefficients(Pi)[(slice(None),) + spec.domain_slices])))
        for Pi in P)
    checks.append(Check("sector_confinement", leak <= 1e-10, leak, 1e-10))
    return checks


def suite_kallen() -> list[Check]:
    checks = []
    spec = GridSpec.for_domain((0.0, 0.0), (1.0, 1.0), 257, 0.3)
    basis = PrimitiveBasis(2)
    center = SymmField.from_constant(spec, basis.center)
    res = absorb_decompose(center, 2.0, 6.0, 2)
    gap = res.reconstruct_gap(center, basis)
    checks.append(Check("center_exact", gap <= 1e-12, gap, 1e-12))
    rng = np.random.default_rng(5)
    coords = spec.coords()
    amp = basis.r0 / 2.0 / sum(np.abs(m).max() for m in basis.matrices)
    coeffs = np.stack([amp * np.sin(3.0 * coords[0] + 0.9 * coords[1]
                                    + rng.uniform(0, 2 * np.pi))
                       for _ in range(3)])
    H = center + basis.reconstruct_field(coeffs, spec, spec.margin)
    recon = absorb_decompose(H, 3.0, 6.0, 2).reconstruct_gap(H, basis)
    checks.append(Check("perturbed_reconstruction", recon <= 1e-12, recon, 1e-12))
    for sweeps in (1, 2):
        norms = [sup_norm(absorb_decompose(H, 3.0, s, sweeps).residual)
                 for s in (4.0, 8.0)]
        ratio = norms[0] / norms[1]
        target = 2.0 ** (2 * sweeps)
        ok = target / 2.0 <= ratio <= target * 2.0
        checks.append(Check(f"residual_sigma_ratio_n{sweeps}", ok, ratio,
                            target, "~"))
    out = absorb_decompose(H, 3.0, 6.0, 2)
    sq_vals = [np.concatenate([((a * a).data[spec.domain_slices]).ravel()
                               for a in out.amplitudes])]
    lo, hi = float(np.min(sq_vals)), float(np.max(sq_vals))
    ok = lo >= 0.5 - 1e-9 and hi <= 1.5 + 1e-9
    checks.append(Check("amplitude_window", ok, lo, 0.5, ">="))
    return checks


_SUITE_FNS = {
    "profiles": suite_profiles,
    "basis": suite_basis,
    "step": suite_step,
    "ibp": suite_ibp,
    "kallen": suite_kallen,
}


def run_suite(name: str) -> dict:
    """Run one suite (or 'all'); returns a JSON-ready result document."""
    if name not in SUITES:
        raise UnknownSuite(f"unknown suite '{name}'; choose from {SUITES}")
    names = list(_SUITE_FNS) if name == "all" else [name]
    out = {"suite": name, "checks": [], "passed": True}
    for suite_name in names:
        for check in _SUITE_FNS[suite_name]():
            entry = check.to_dict()
            entry["suite"] = suite_name
            out["checks"].append(entry)
            out["passed"] = out["passed"] and bool(check.passed)
    return out
