"""
Minimization engine shared by both estimation stages.

Parameters are optimized in a transformed space (log for positive values,
arctanh for correlations). The default method is the derivative-free
quadratic-model trust region of Py-BOBYQA; L-BFGS-B with central-difference
gradients is available as a faster alternative.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
import pybobyqa
import structlog
from scipy import optimize as sp_optimize

from .errors import CovarianceError, InfeasibleParametersError
from ..config.settings import OptimizerSettings

logger = structlog.get_logger(__name__)

TRANSFORMS = {
    "log": (np.log, np.exp),
    "arctanh": (np.arctanh, np.tanh),
    "identity": (lambda v: v, lambda v: v),
}

# Box in transformed space: exp(-15)..exp(10) and |rho| <= tanh(4)
DEFAULT_BOUNDS = {
    "log": (-15.0, 10.0),
    "arctanh": (-4.0, 4.0),
    "identity": (-1e20, 1e20),
}

STATUS_CONVERGED = "converged"
STATUS_MAX_ITER = "max-iter"
STATUS_STALLED = "stalled"


@dataclass
class OptimizerOptions:
    """
    Optimizer controls; see ``OptimizerSettings`` for the configuration surface.

    ``max_iter`` caps objective evaluations for ``bobyqa`` (its ``maxfun``) and
    iterations for ``lbfgs``, where each iteration also spends 2n evaluations on
    the central-difference gradient.
    """
    method: str = "bobyqa"
    max_iter: int = 500
    ftol: float = 1e-8
    rho_begin: float = 0.5
    rho_end: float = 1e-8
    grad_step: float = 1e-5

    @classmethod
    def from_settings(cls, settings: OptimizerSettings) -> "OptimizerOptions":
        return cls(**settings.model_dump())


@dataclass
class OptProblem:
    """Objective over natural parameters plus a per-coordinate transform."""
    objective: Callable[[np.ndarray], float]
    transforms: Sequence[str]
    names: Optional[Sequence[str]] = None
    lower: Optional[Sequence[float]] = None
    upper: Optional[Sequence[float]] = None
    label: str = "problem"

    def __post_init__(self):
        unknown = set(self.transforms) - set(TRANSFORMS)
        if unknown:
            raise ValueError(f"Unknown transforms: {sorted(unknown)}")

    @property
    def dimension(self) -> int:
        return len(self.transforms)

    def to_internal(self, x: Sequence[float]) -> np.ndarray:
        return np.array([TRANSFORMS[t][0](v) for t, v in zip(self.transforms, x)], dtype=float)

    def from_internal(self, y: Sequence[float]) -> np.ndarray:
        return np.array([TRANSFORMS[t][1](v) for t, v in zip(self.transforms, y)], dtype=float)

    def internal_bounds(self):
        lower = np.array([DEFAULT_BOUNDS[t][0] for t in self.transforms])
        upper = np.array([DEFAULT_BOUNDS[t][1] for t in self.transforms])
        if self.lower is not None:
            lower = np.asarray(self.lower, dtype=float)
        if self.upper is not None:
            upper = np.asarray(self.upper, dtype=float)
        return lower, upper


@dataclass
class OptResult:
    """Outcome of a minimization; ``x`` is in natural parameters."""
    x: np.ndarray
    fun: float
    iterations: int
    evaluations: int
    status: str
    message: str = ""
    history: List[float] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == STATUS_CONVERGED

    def to_dict(self) -> dict:
        return {
            "fun": self.fun,
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "status": self.status,
            "message": self.message,
        }


class _TrackedObjective:
    """Objective in transformed space that remembers the best point seen."""

    def __init__(self, problem: OptProblem):
        self.problem = problem
        self.evaluations = 0
        self.best_y: Optional[np.ndarray] = None
        self.best_f = np.inf
        self.history: List[float] = []
        self.penalty = np.inf

    def __call__(self, y: np.ndarray) -> float:
        self.evaluations += 1
        try:
            value = float(self.problem.objective(self.problem.from_internal(y)))
        except (InfeasibleParametersError, CovarianceError, ValueError, FloatingPointError) as e:
            logger.debug("Infeasible evaluation", problem=self.problem.label, error=str(e))
            value = np.nan
        if not np.isfinite(value):
            return self.penalty
        if value < self.best_f:
            self.best_f = value
            self.best_y = np.array(y, dtype=float)
            self.history.append(value)
        return value

    def set_penalty(self, reference: float) -> None:
        self.penalty = reference + 1e6 * (1.0 + abs(reference))


def numeric_gradient(objective: Callable[[np.ndarray], float], x: Sequence[float],
                     h: float = 1e-5) -> np.ndarray:
    """
    Central-difference gradient.

    Args:
        objective: Scalar function of a vector
        x: Evaluation point
        h: Step size, must be positive

    Returns:
        Gradient vector of the same length as ``x``
    """
    if h <= 0:
        raise ValueError("step size h must be positive")
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = h
        grad[i] = (objective(x + step) - objective(x - step)) / (2.0 * h)
    return grad


def _solve_bobyqa(tracked: _TrackedObjective, y0: np.ndarray, bounds, opts: OptimizerOptions):
    lower, upper = bounds
    rhobeg = min(opts.rho_begin, 0.49 * float(np.min(upper - lower)))
    soln = pybobyqa.solve(
        tracked,
        x0=y0,
        bounds=(lower, upper),
        maxfun=opts.max_iter,
        rhobeg=rhobeg,
        rhoend=min(opts.rho_end, 0.1 * rhobeg),
        user_params={"init.random_initial_directions": False},
        scaling_within_bounds=False,
        objfun_has_noise=False,
        seek_global_minimum=False,
        do_logging=False,
        print_progress=False,
    )
    if soln.flag == soln.EXIT_SUCCESS:
        status = STATUS_CONVERGED
    elif soln.flag == soln.EXIT_MAXFUN_WARNING:
        status = STATUS_MAX_ITER
    else:
        status = STATUS_STALLED
    return status, str(soln.msg)


def _solve_lbfgs(tracked: _TrackedObjective, y0: np.ndarray, bounds, opts: OptimizerOptions):
    lower, upper = bounds
    res = sp_optimize.minimize(
        tracked,
        y0,
        jac=lambda y: numeric_gradient(tracked, y, opts.grad_step),
        method="L-BFGS-B",
        bounds=list(zip(lower, upper)),
        options={"maxiter": opts.max_iter, "ftol": opts.ftol, "gtol": 1e-10},
    )
    if res.success:
        status = STATUS_CONVERGED
    elif res.nit >= opts.max_iter:
        status = STATUS_MAX_ITER
    else:
        status = STATUS_STALLED
    return status, str(res.message)


_METHODS = {"bobyqa": _solve_bobyqa, "lbfgs": _solve_lbfgs}


def minimize(problem: OptProblem, init: Sequence[float],
             opts: Optional[OptimizerOptions] = None) -> OptResult:
    """
    Minimize ``problem.objective`` starting from natural parameters ``init``.

    The returned point is the best evaluated point, so its objective never
    exceeds the objective at ``init``.

    Raises:
        InfeasibleParametersError: if the objective is not finite at ``init``
    """
    opts = opts or OptimizerOptions()
    if opts.method not in _METHODS:
        raise ValueError(f"Unknown optimizer method '{opts.method}'")

    tracked = _TrackedObjective(problem)
    lower, upper = problem.internal_bounds()
    y0 = np.clip(problem.to_internal(init), lower, upper)

    f0 = tracked(y0)
    if not np.isfinite(f0) or tracked.best_y is None:
        raise InfeasibleParametersError(f"{problem.label}: objective is not finite at the initial point")
    tracked.set_penalty(f0)

    status, message = _METHODS[opts.method](tracked, y0, (lower, upper), opts)

    result = OptResult(
        x=problem.from_internal(tracked.best_y),
        fun=tracked.best_f,
        iterations=len(tracked.history) - 1,
        evaluations=tracked.evaluations,
        status=status,
        message=message,
        history=list(tracked.history),
    )
    logger.debug("Optimization finished", problem=problem.label, method=opts.method,
                 status=status, fun=result.fun, evaluations=result.evaluations)
    return result
