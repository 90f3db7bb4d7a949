"""Two-stage optimization hierarchy on an analytic expensive objective.

A request is a start point; the answer is a local minimizer.  Stage 2
descends on the true objective (every call counted, optionally delayed to
stand in for an expensive simulation) and its descent samples train a
scalar kernel-ridge surrogate.  Stage 1 descends on the surrogate; its
candidate is certified by the gradient norm of the TRUE objective at the
candidate, i.e. the acceptance criterion consults the expensive model.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .hierarchy import REFERENCE, ModelLevel, ModelOutput, ParameterBox
from .mlsurrogate import TrainingSet, fit

OPT_RIDGE_DEFAULT = 1e-12  # interpolation sharpness the gradient check needs
OPT_MIN_SEPARATION = 1e-5


def himmelblau(x) -> float:
    """Smooth multimodal test objective with four global minima at J = 0."""
    a = x[0] ** 2 + x[1] - 11.0
    b = x[0] + x[1] ** 2 - 7.0
    return float(a * a + b * b)


class ObjectiveOracle:
    """Counted (and optionally delayed) access to the full objective."""

    def __init__(self, fn=himmelblau, delay_s: float = 0.002):
        if delay_s < 0:
            raise ConfigurationError("delay must be nonnegative")
        self.fn = fn
        self.delay_s = delay_s
        self.eval_counter = 0

    def __call__(self, x) -> float:
        self.eval_counter += 1
        if self.delay_s:
            time.sleep(self.delay_s)
        return float(self.fn(x))


@dataclass
class OptAnswer:
    x: np.ndarray
    j: float
    grad_norm: float            # final gradient norm seen by the producer
    descent_calls: int = 0      # objective calls charged to the descent


@dataclass
class DescentSamples:
    """Adaptation payload: (point, value) pairs along a true-objective descent."""

    samples: list = field(default_factory=list)


@dataclass
class DescentResult:
    x: np.ndarray
    j: float
    grad_norm: float
    n_iters: int
    converged: bool
    samples: list = field(default_factory=list)  # iterate (x, J(x)) pairs


def fd_gradient(objective, x, box: ParameterBox, h_fd: float = 1e-5) -> np.ndarray:
    """Finite-difference gradient, 2 objective calls per dimension.

    Central differences in the interior; one-sided at a box face (still two
    calls per dimension so the charge is constant).
    """
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(len(x)):
        lo, hi = box.lows[i], box.highs[i]
        if x[i] - h_fd >= lo and x[i] + h_fd <= hi:
            xp, xm = x.copy(), x.copy()
            xp[i] += h_fd
            xm[i] -= h_fd
            grad[i] = (objective(xp) - objective(xm)) / (2.0 * h_fd)
        elif x[i] + h_fd <= hi:
            xp = x.copy()
            xp[i] += h_fd
            grad[i] = (objective(xp) - objective(x)) / h_fd
        else:
            xm = x.copy()
            xm[i] -= h_fd
            grad[i] = (objective(x) - objective(xm)) / h_fd
    return grad


def descend(objective, x0, box: ParameterBox, max_iters: int = 500,
            gtol: float = 1e-8, h_fd: float = 1e-5, armijo_c: float = 1e-4,
            max_halvings: int = 30) -> DescentResult:
    """Projected gradient descent with backtracking line search.

    Gradients are central finite differences; steps are halved until the
    Armijo condition holds (at most ``max_halvings`` times) and iterates are
    clamped to the box.  Always returns the best iterate seen.  The iterate
    (x, J(x)) pairs are recorded as reusable samples.
    """
    x = box.clip(np.asarray(x0, dtype=float))
    j = objective(x)
    samples = [(x.copy(), j)]
    best_x, best_j = x.copy(), j
    n_iters = 0
    converged = False
    grad_norm = np.inf
    for n_iters in range(max_iters + 1):
        grad = fd_gradient(objective, x, box, h_fd)
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= gtol:
            converged = True
            break
        if n_iters == max_iters:
            break
        step = 1.0
        accepted = False
        for _ in range(max_halvings + 1):
            trial = box.clip(x - step * grad)
            j_trial = objective(trial)
            if j_trial <= j - armijo_c * step * grad_norm**2:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        x, j = trial, j_trial
        samples.append((x.copy(), j))
        if j < best_j:
            best_x, best_j = x.copy(), j
    return DescentResult(x=best_x, j=best_j, grad_norm=grad_norm,
                         n_iters=n_iters, converged=converged, samples=samples)


class FullObjectiveLevel(ModelLevel):
    """Reference stage: descend on the true objective; emit descent samples."""

    name = "opt-full"

    def __init__(self, oracle: ObjectiveOracle, box: ParameterBox,
                 max_iters: int = 500):
        self.oracle = oracle
        self.box = box
        self.max_iters = max_iters

    def evaluate(self, x0) -> ModelOutput:
        calls_before = self.oracle.eval_counter
        result = descend(self.oracle, x0, self.box, max_iters=self.max_iters)
        payload = OptAnswer(x=result.x, j=result.j, grad_norm=result.grad_norm,
                            descent_calls=self.oracle.eval_counter - calls_before)
        return ModelOutput(payload=payload,
                           adaptation=DescentSamples(result.samples))

    def estimate_error(self, output, mu, next_level=None):
        return REFERENCE

    def absorb(self, payload):
        return None

    def is_ready(self) -> bool:
        return True


class SurrogateObjectiveLevel(ModelLevel):
    """Cheap stage: descend on a learned objective, certify with true gradient.

    Training data are the iterate samples of true-objective descents;
    near-coincident points (closer than ``min_separation`` in scaled
    coordinates) are skipped to keep the kernel system well conditioned.
    The error estimate is ||grad J(x*)|| computed on the NEXT level's
    oracle with 2*dim calls, plus one call to report the true J(x*).
    """

    name = "opt-surrogate"

    #: true-objective calls charged per attempt: 2*dim for the gradient
    #: certificate plus one for the reported value.
    CRITERION_CALLS = 5

    def __init__(self, oracle: ObjectiveOracle, box: ParameterBox,
                 n_min: int = 10, lengthscale=0.12,
                 ridge: float = OPT_RIDGE_DEFAULT, max_iters: int = 500,
                 min_separation: float = OPT_MIN_SEPARATION):
        self.oracle = oracle
        self.box = box
        self.n_min = n_min
        self.lengthscale = lengthscale
        self.ridge = ridge
        self.max_iters = max_iters
        self.min_separation = min_separation
        self.training = TrainingSet()
        self.regressor = None

    def evaluate(self, x0) -> ModelOutput:
        regressor = self.regressor

        def surrogate(x):
            return float(regressor.predict(self.box.scale01(x))[0])

        result = descend(surrogate, x0, self.box, max_iters=self.max_iters)
        j_true = self.oracle(result.x)
        payload = OptAnswer(x=result.x, j=j_true, grad_norm=result.grad_norm,
                            descent_calls=0)
        return ModelOutput(payload=payload)

    def estimate_error(self, output, mu, next_level=None):
        oracle = next_level.oracle if next_level is not None else self.oracle
        grad = fd_gradient(oracle, output.payload.x, self.box)
        g = float(np.linalg.norm(grad))
        output.payload.grad_norm = g
        return g

    def absorb(self, payload):
        if not isinstance(payload, DescentSamples):
            return None
        needs_refit = self.regressor is None or isinstance(self.lengthscale, str)
        for x, j in payload.samples:
            scaled = self.box.scale01(x)
            stored = self.training.input_matrix()
            too_close = (stored.size > 0 and not self.training.has_input(x) and
                         float(np.min(np.linalg.norm(stored - scaled, axis=1)))
                         < self.min_separation)
            if too_close:
                continue  # near-coincident with a different stored point
            if self.training.has_input(x):
                needs_refit = True  # replaced pair invalidates the factor
            self.training.add(x, scaled, np.array([j]))
            if not needs_refit:
                try:
                    self.regressor.append(scaled, np.array([j]))
                except ConfigurationError:
                    # accumulated round-off broke the incremental factor;
                    # rebuild from scratch at the end of the batch
                    needs_refit = True
        if self.training.n >= self.n_min and needs_refit:
            self.regressor = fit(self.training, self.lengthscale, self.ridge,
                                 n_min=self.n_min)
        return []

    def is_ready(self) -> bool:
        return self.regressor is not None
