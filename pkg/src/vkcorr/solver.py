"""Outer iteration: repeat stages to drive the defect toward zero.

Each stage re-measures the C^2 bound of the current pair and reuses a fixed
relative frequency sigma.  The loop terminates on the target tolerance, the
stage budget, or a guard (resolution, margin, positivity); guard stops are
recorded as termination reasons, never raised to the caller.  Empirical
Hoelder quotients of the gradient are tracked per stage for a list of
diagnostic exponents.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .algebra import defect
from .errors import (ConfigError, GuardExceeded, MarginExhausted,
                     NonPositiveCoefficient, ResolutionGuard)
from .fields import VectorField, SymmField, gradient, holder_seminorm, sup_norm
from .stage import StageConfig, StageReport, c1_norm, run_stage


def alpha_window(d: int, steps: int, reduction: int, reg_r: int,
                 reg_beta: float) -> float:
    """Largest Hoelder exponent the iteration can certify.

    The corrugation budget gives KN / (KN + 2 (dK + N)); the data regularity
    caps it at (r + beta) / 2.
    """
    if steps < 1 or reduction < 1:
        raise ConfigError("K and N must be at least 1")
    kn = steps * reduction
    growth = d * steps + reduction
    return min((reg_r + reg_beta) / 2.0, kn / (kn + 2.0 * growth))


def interpolation_exponent(alpha: float, d: int, steps: int, reduction: int) -> float:
    """Per-stage sigma-exponent of the C^{1,alpha} increment.

    Negative below the window (Cauchy iteration), positive above it.
    """
    kn = steps * reduction
    return alpha * (d * steps + reduction + kn / 2.0) - kn / 2.0


@dataclass
class SolveConfig:
    stage: StageConfig
    max_stages: int = 1
    target_defect: float = 0.0
    alphas: tuple[float, ...] | None = None
    holder_budget: int = 2_000_000
    holder_seed: int = 0

    def diagnostics(self, d: int) -> tuple[float, ...]:
        if self.alphas is not None:
            return self.alphas
        window = alpha_window(d, self.stage.steps, self.stage.reduction,
                              self.stage.reg_r, self.stage.reg_beta)
        return (0.5 * window, 0.9 * window, 2.0 * window)


@dataclass
class StageSummary:
    index: int
    defect_norm: float
    c1_step_distance: float
    c2_norm: float
    bound_m: float
    holder_quotients: dict[str, float]
    interpolation_bounds: dict[str, float]
    report: StageReport

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "report"}
        out["report"] = self.report.to_dict()
        return out


@dataclass
class SolveReport:
    sigma: float
    steps: int
    reduction: int
    max_stages: int
    target_defect: float
    alphas: tuple[float, ...]
    alpha_window: float
    holder_budget: int
    holder_seed: int
    initial_defect: float = 0.0
    initial_holder_quotients: dict = dc_field(default_factory=dict)
    stages: list[StageSummary] = dc_field(default_factory=list)
    termination: str = ""
    termination_detail: str = ""
    decay_slope: float | None = None
    interpolation_exponents: dict = dc_field(default_factory=dict)

    def defect_history(self) -> list[float]:
        return [self.initial_defect] + [s.defect_norm for s in self.stages]

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "stages"}
        out["alphas"] = list(self.alphas)
        out["stages"] = [s.to_dict() for s in self.stages]
        out["defect_history"] = self.defect_history()
        return out


def gradient_holder_quotient(v: VectorField, alpha: float, budget: int,
                             seed: int, order: int) -> float:
    """Max over components of the measured Hoelder quotient of grad v."""
    best = 0.0
    for n in range(v.ncomp):
        g = gradient(v.component(n), order)
        best = max(best, holder_seminorm(g, alpha, budget, seed))
    return best


# stage failures recorded as termination reasons, never raised mid-loop
_GUARDS = (ResolutionGuard, MarginExhausted, NonPositiveCoefficient,
           GuardExceeded, ConfigError)


def run_solve(v: VectorField, w: VectorField, A: SymmField,
              config: SolveConfig) -> tuple[VectorField, VectorField, SolveReport]:
    d = v.spec.dim
    order = config.stage.fd_order
    alphas = config.diagnostics(d)
    window = alpha_window(d, config.stage.steps, config.stage.reduction,
                          config.stage.reg_r, config.stage.reg_beta)

    report = SolveReport(
        sigma=config.stage.sigma, steps=config.stage.steps,
        reduction=config.stage.reduction, max_stages=config.max_stages,
        target_defect=config.target_defect, alphas=tuple(alphas),
        alpha_window=window, holder_budget=config.holder_budget,
        holder_seed=config.holder_seed,
        interpolation_exponents={
            f"{a:.6g}": interpolation_exponent(a, d, config.stage.steps,
                                               config.stage.reduction)
            for a in alphas})

    delta = sup_norm(defect(A, v, w, order))
    if not 0.0 < delta <= 1.0 + 1e-12:
        raise ConfigError(
            f"initial defect norm {delta:.4g} violates the precondition 0 < |D| <= 1")
    report.initial_defect = delta
    report.initial_holder_quotients = {
        f"{a:.6g}": gradient_holder_quotient(v, a, config.holder_budget,
                                             config.holder_seed, order)
        for a in alphas}

    cur_v, cur_w = v, w
    for n in range(1, config.max_stages + 1):
        if delta <= config.target_defect:
            report.termination = "target_reached"
            report.termination_detail = f"defect {delta:.6g} at stage {n - 1}"
            break
        try:
            new_v, new_w, stage_report = run_stage(cur_v, cur_w, A, config.stage)
        except _GUARDS as err:
            report.termination = type(err).__name__
            report.termination_detail = str(err)
            break
        step_dist = c1_norm(new_v - cur_v, order)
        cur_v, cur_w = new_v, new_w
        delta = stage_report.final_defect_tracked
        quotients = {
            f"{a:.6g}": gradient_holder_quotient(cur_v, a, config.holder_budget,
                                                 config.holder_seed, order)
            for a in alphas}
        c2 = max(stage_report.v_c2_norm, stage_report.w_c2_norm)
        interp = {
            f"{a:.6g}": step_dist ** (1.0 - a) * max(c2, step_dist) ** a
            for a in alphas}
        report.stages.append(StageSummary(
            index=n, defect_norm=delta, c1_step_distance=step_dist,
            c2_norm=c2, bound_m=stage_report.bound_m,
            holder_quotients=quotients, interpolation_bounds=interp,
            report=stage_report))
    else:
        report.termination = "max_stages"
        report.termination_detail = f"completed {config.max_stages} stages"

    history = report.defect_history()
    if len(history) >= 3:
        ns = np.arange(len(history))
        report.decay_slope = float(np.polyfit(ns, np.log(history), 1)[0])
    return cur_v, cur_w, report
