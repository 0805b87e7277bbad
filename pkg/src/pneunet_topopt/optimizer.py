"""Robust min-max optimization loop driven by MMA.

The three realization objectives are bounded by the MMA auxiliary variable
``z``: each becomes a constraint ``f0_m - z <= 0`` and ``z`` is minimized,
which makes the worst realization the objective without ever switching
between gradients.  The fourth constraint caps the dilated volume.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, fields

import numpy as np

from ._validation import NumericalError, ValidationError
from .elasticity import MaterialLaw
from .fields import REALIZATIONS, FilterOperator, RobustTriplet, make_triplet
from .flow import FlowParams, flow_params
from .mma import MMA
from .model import ProblemModel, RunConfig, build_model
from .sensitivity import (ConstraintReport, ObjectiveReport, discreteness, evaluate, full_objective,
                          volume_and_gradient, volume_fraction)

log = logging.getLogger(__name__)

GRADIENT_CHECK_MAX_ELEMENTS = (12, 12)
GRADIENT_TOLERANCE = 1e-3
RECIPROCITY_TOLERANCE = 1e-10
CHANGE_TOLERANCE = 1e-3

# MMA constants of the bound formulation: a0 = 1 and a_i = 1 on the three
# objective rows make z the worst-case objective; the volume row does not
# involve z.  Large c keeps the elastic slack y at zero at any KKT point.
_A_BOUND = np.array([1.0, 1.0, 1.0, 0.0])
_C_SLACK = 1000.0


@dataclass(frozen=True)
class ContinuationSchedule:
    beta_start: float = 1.0
    beta_max: float = 128.0
    beta_period: int = 50
    volume_update_period: int = 25
    max_iters: int = 400

    def __post_init__(self):
        if self.beta_period < 1 or self.volume_update_period < 1 or self.max_iters < 1:
            raise ValidationError("schedule periods and the iteration budget must be positive")
        if not 0 < self.beta_start < self.beta_max:
            raise ValidationError("need 0 < beta_start < beta_max")

    @classmethod
    def from_config(cls, config: RunConfig) -> "ContinuationSchedule":
        return cls(config.beta_start, config.beta_max, int(config.beta_period),
                   int(config.volume_update_period), int(config.max_iters))

    def beta(self, k: int) -> float:
        """Projection slope at 0-based iteration ``k``: doubles every period, then holds."""
        return float(min(self.beta_max, self.beta_start * 2.0 ** (k // self.beta_period)))

    def updates_volume(self, k: int) -> bool:
        return k % self.volume_update_period == 0


@dataclass(frozen=True)
class MinMaxProblem:
    """Constraint data for one MMA step in the bound formulation.

    Rows are (eroded, intermediate, dilated, volume).  The objective rows are
    shifted by ``z_ref`` so the bound variable stays non-negative, then divided
    by ``scale`` so they stay O(10) however far the objective has moved.
    """

    fval: np.ndarray
    dfdx: np.ndarray = field(repr=False)
    z_ref: float
    scale: float = 1.0

    @property
    def n_constraints(self) -> int:
        return self.fval.size


def minmax_reformulate(f0: dict[str, float], gradients: dict[str, np.ndarray],
                       volume: ConstraintReport, design: np.ndarray | None = None) -> MinMaxProblem:
    """Build the four MMA constraints ``f0_m - z <= 0`` and ``V_d / V_d* - 1 <= 0``.

    ``design`` selects the optimizable entries of the full-length gradients.
    """
    worst = max(f0[name] for name in REALIZATIONS)
    # Shift so the bound variable at the optimum of the subproblem is well
    # inside z >= 0; the shift is a constant and does not change the argmin.
    scale = max(1.0, abs(worst))
    z_ref = worst - 10.0 * scale
    # Dividing by the current magnitude keeps the objective rows comparable to
    # the volume row; otherwise the slack penalty c becomes cheaper than
    # satisfying the volume cap once |f0| grows by orders of magnitude.
    idx = slice(None) if design is None else design
    rows = [(f0[name] - z_ref) / scale for name in REALIZATIONS]
    grads = [np.asarray(gradients[name])[idx] / scale for name in REALIZATIONS]
    rows.append(volume.volume / volume.target - 1.0)
    grads.append(np.asarray(volume.gradient)[idx] / volume.target)
    return MinMaxProblem(np.array(rows), np.vstack(grads), z_ref, scale)


def make_mma(n: int, move: float) -> MMA:
    return MMA(n, 4, xmin=0.0, xmax=1.0, move=move, a0=1.0, a=_A_BOUND,
               c=np.full(4, _C_SLACK), d=np.ones(4))


def mma_update(mma: MMA, x: np.ndarray, problem: MinMaxProblem) -> np.ndarray:
    """One MMA step on the bound formulation (the x-objective is identically zero)."""
    return mma.update(x, 0.0, np.zeros_like(x), problem.fval, problem.dfdx)


def update_dilated_target(v_star: float, rho_bar_i, rho_bar_d) -> float:
    """Scale the dilated volume cap so the intermediate design trends to ``v_star``.

    Accepts either projected fields or their volume fractions.
    """
    v_i = volume_fraction(rho_bar_i) if np.ndim(rho_bar_i) else float(rho_bar_i)
    v_d = volume_fraction(rho_bar_d) if np.ndim(rho_bar_d) else float(rho_bar_d)
    if not v_i > 0.0:
        raise NumericalError("intermediate design is all void; cannot rescale the dilated volume target")
    return float(v_star) * v_d / v_i


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    f0_eroded: float
    f0_intermediate: float
    f0_dilated: float
    mse_intermediate: float
    se_intermediate: float
    volume_eroded: float
    volume_intermediate: float
    volume_dilated: float
    volume_target_dilated: float
    discreteness_intermediate: float
    beta: float
    max_change: float
    wall_ms: float

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass(frozen=True)
class SolveCheck:
    """Per-iteration health data: reciprocity error and pressure-bound excursions."""

    iteration: int
    reciprocity_error: float
    pressure_violation: float
    p_min: float
    p_max: float
    subproblem_residual: float


@dataclass
class OptimizationResult:
    config: RunConfig
    rho: np.ndarray = field(repr=False)
    triplet: RobustTriplet = field(repr=False)
    report: ObjectiveReport = field(repr=False)
    history: list[IterationRecord] = field(default_factory=list, repr=False)
    checks: list[SolveCheck] = field(default_factory=list, repr=False)
    volume_target_dilated: float = 0.0
    converged_early: bool = False

    @property
    def iterations(self) -> int:
        return len(self.history)

    @property
    def objective(self) -> float:
        """Worst-case objective of the final design, recomputed from scratch."""
        return max(self.report.f0.values())

    @property
    def volumes(self) -> dict[str, float]:
        return {name: volume_fraction(self.triplet.field(name)) for name in REALIZATIONS}

    @property
    def discreteness(self) -> dict[str, float]:
        return {name: discreteness(self.triplet.field(name)) for name in REALIZATIONS}

    @property
    def output_displacement(self) -> dict[str, float]:
        return {name: r.output_displacement for name, r in self.report.realizations.items()}


class OptimizationAborted(RuntimeError):
    """Raised from :func:`run` with the records gathered before the failure."""

    def __init__(self, message: str, history: list[IterationRecord], checks: list[SolveCheck],
                 rho: np.ndarray):
        super().__init__(message)
        self.history = history
        self.checks = checks
        self.rho = rho


def initial_design(model: ProblemModel) -> np.ndarray:
    rho = np.full(model.n_elements, model.config.volume_target)
    rho[model.passive_mask] = 0.0
    return rho


def _solve_check(k: int, report: ObjectiveReport, p_in: float, residual: float) -> SolveCheck:
    rec, viol, pmin, pmax = 0.0, 0.0, np.inf, -np.inf
    for r in report.realizations.values():
        e = r.elastic
        fd_u = float(e.F_d @ e.u)
        rec = max(rec, abs(r.mse - fd_u) / max(abs(r.mse), abs(fd_u), np.finfo(float).tiny))
        viol = max(viol, r.pressure.bounds_violation(p_in))
        pmin, pmax = min(pmin, r.pressure.p.min()), max(pmax, r.pressure.p.max())
    return SolveCheck(k, rec, viol, float(pmin), float(pmax), residual)


_SELF_CHECK_PASSED: set[tuple] = set()


def _self_check(config: RunConfig) -> None:
    """Run the gradient check once per process on a small copy of ``config``."""
    small = config.replace(nex=6, ney=9, lx=config.lx, ly=config.ly)
    key = tuple(sorted(vars(small).items()))
    if key in _SELF_CHECK_PASSED:
        return
    report = check_gradients(small, seed=0, n_designs=1)
    if not report.passed:
        raise NumericalError(f"gradient self-check failed: max relative error {report.max_error:.3e}")
    _SELF_CHECK_PASSED.add(key)


def run(model: ProblemModel, config: RunConfig | None = None, *, verify_gradients: bool = True,
        early_exit: bool = False, callback=None) -> OptimizationResult:
    """Optimize the robust min-max problem on ``model``.

    ``callback(record, check)`` is invoked after every iteration.  Early exit
    (design change below 1e-3 with beta at its maximum) is off by default.
    """
    config = config or model.config
    if model.design_elements.size == 0:
        raise ValidationError("no optimizable elements")
    if verify_gradients:
        _self_check(config)

    schedule = ContinuationSchedule.from_config(config)
    F = FilterOperator.from_model(model)
    params: FlowParams = flow_params(config)
    law = MaterialLaw.from_config(config)
    design, passive = model.design_elements, model.passive_mask
    mma = make_mma(design.size, config.move_limit)

    rho = initial_design(model)
    s = None
    vd_target = config.volume_target
    history: list[IterationRecord] = []
    checks: list[SolveCheck] = []
    converged = False
    beta = schedule.beta(0)

    try:
        for k in range(schedule.max_iters):
            t0 = time.perf_counter()
            beta = schedule.beta(k)
            triplet = make_triplet(rho, F, beta, config.delta_eta, passive)
            if schedule.updates_volume(k):
                vd_target = update_dilated_target(config.volume_target, triplet.intermediate,
                                                  triplet.dilated)
                log.info("iteration %d: dilated volume target %.6f", k, vd_target)
            report = evaluate(model, triplet, F, params, law, s=s)
            s = report.s
            volume = volume_and_gradient(triplet.dilated, triplet, F, vd_target, passive)
            problem = minmax_reformulate(report.f0, report.gradients, volume, design)
            x = rho[design]
            xnew = mma_update(mma, x, problem)
            change = float(np.max(np.abs(xnew - x)))

            check = _solve_check(k, report, config.pressure, mma.state.subproblem_residual)
            checks.append(check)
            inter = report.realizations["intermediate"]
            record = IterationRecord(
                iteration=k,
                f0_eroded=report.f0["eroded"],
                f0_intermediate=report.f0["intermediate"],
                f0_dilated=report.f0["dilated"],
                mse_intermediate=inter.mse,
                se_intermediate=inter.se,
                volume_eroded=volume_fraction(triplet.eroded),
                volume_intermediate=volume_fraction(triplet.intermediate),
                volume_dilated=volume.volume,
                volume_target_dilated=vd_target,
                discreteness_intermediate=discreteness(triplet.intermediate),
                beta=beta,
                max_change=change,
                wall_ms=1e3 * (time.perf_counter() - t0),
            )
            history.append(record)
            if callback is not None:
                callback(record, check)
            log.debug("it %3d  f0=(%.4f, %.4f, %.4f)  V=%.4f  beta=%g  change=%.3e", k,
                      record.f0_eroded, record.f0_intermediate, record.f0_dilated,
                      record.volume_intermediate, beta, change)
            rho = rho.copy()
            rho[design] = xnew
            if early_exit and beta >= schedule.beta_max and change < CHANGE_TOLERANCE:
                converged = True
                break
    except (NumericalError, ValidationError) as exc:
        raise OptimizationAborted(str(exc), history, checks, rho) from exc

    triplet = make_triplet(rho, F, beta, config.delta_eta, passive)
    final = evaluate(model, triplet, F, params, law, s=s, gradients=False)
    return OptimizationResult(config, rho, triplet, final, history, checks, vd_target, converged)


@dataclass
class GradientReport:
    """Adjoint versus central-difference comparison on a few random designs."""

    rows: list[tuple[int, int, str, float, float, float]] = field(repr=False)
    max_error: float
    per_design: list[float]
    tolerance: float = GRADIENT_TOLERANCE

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_error) and self.max_error <= self.tolerance)


def check_gradients(config: RunConfig, seed: int = 42, n_designs: int = 3, beta: float = 4.0,
                    step: float = 1e-6) -> GradientReport:
    """Compare adjoint gradients of all three objectives with central differences.

    The error of one design is ``max|g_adj - g_fd| / max|g_fd|`` over every
    element and realization.  Only small meshes are accepted.
    """
    max_ex, max_ey = GRADIENT_CHECK_MAX_ELEMENTS
    if config.nex > max_ex or config.ney > max_ey:
        raise ValidationError(
            f"gradient check needs a mesh of at most {max_ex}x{max_ey} elements, got "
            f"{config.nex}x{config.ney}; set mesh.nex and mesh.ney accordingly (e.g. 6 and 9)")
    model = build_model(config)
    F = FilterOperator.from_model(model)
    params = flow_params(config)
    law = MaterialLaw.from_config(config)
    passive = model.passive_mask
    rng = np.random.default_rng(seed)

    rows, per_design = [], []
    for d in range(n_designs):
        rho = rng.uniform(0.05, 0.95, model.n_elements)
        rho[passive] = 0.0
        triplet = make_triplet(rho, F, beta, config.delta_eta, passive)
        report = evaluate(model, triplet, F, params, law)
        fd = {name: np.zeros(model.n_elements) for name in REALIZATIONS}
        for e in model.design_elements:
            hi, lo = rho.copy(), rho.copy()
            hi[e] += step
            lo[e] -= step
            f_hi = full_objective(model, hi, F, beta, config.delta_eta, params, law, report.s)
            f_lo = full_objective(model, lo, F, beta, config.delta_eta, params, law, report.s)
            for name in REALIZATIONS:
                fd[name][e] = (f_hi[name] - f_lo[name]) / (2.0 * step)
        err = 0.0
        for name in REALIZATIONS:
            g, ref = report.gradients[name], fd[name]
            scale = max(np.abs(ref).max(), np.finfo(float).tiny)
            for e in model.design_elements:
                rows.append((d, int(e), name, float(g[e]), float(ref[e]), abs(g[e] - ref[e]) / scale))
            err = max(err, float(np.abs(g - ref).max() / scale))
        per_design.append(err)
    return GradientReport(rows, max(per_design), per_design)
