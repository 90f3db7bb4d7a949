"""Learned coefficient stage: kernel ridge regression of reduced trajectories.

The cheapest stage regresses parameter -> reduced coefficient trajectory in
the SAME reduced space as the reduced-basis stage, trains exclusively on
reduced-basis solutions, and is certified by the shared residual estimator.
A Gaussian kernel on box-scaled inputs (constant lengthscale, or the
median-pairwise-distance heuristic) keeps the regressor deterministic and
cheap to update after every absorbed solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.spatial.distance

from .errors import ConfigurationError, NotReadyError, StaleGenerationError
from .fom import ParabolicResult
from .hierarchy import ModelLevel, ModelOutput, ParameterBox
from .rb import BasisChanged, ReducedTrajectory, error_estimate, solve_rb


@dataclass
class TrainingSet:
    """Input/output pairs; inputs box-scaled to [0,1]^Q, outputs flattened.

    Duplicate inputs replace the stored pair, so inputs stay pairwise
    distinct.  ``generation`` is the basis generation the outputs are
    expressed in.
    """

    generation: int = 0
    raw_inputs: list = field(default_factory=list)      # unscaled parameters
    inputs: list = field(default_factory=list)          # scaled to [0,1]^Q
    outputs: list = field(default_factory=list)         # flat float vectors
    _index: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.inputs)

    def has_input(self, mu_raw) -> bool:
        return tuple(np.asarray(mu_raw, dtype=float)) in self._index

    def add(self, mu_raw, mu_scaled, output) -> None:
        key = tuple(np.asarray(mu_raw, dtype=float))
        output = np.asarray(output, dtype=float).ravel()
        if key in self._index:
            self.outputs[self._index[key]] = output
            return
        self._index[key] = self.n
        self.raw_inputs.append(np.asarray(mu_raw, dtype=float))
        self.inputs.append(np.asarray(mu_scaled, dtype=float))
        self.outputs.append(output)

    def input_matrix(self) -> np.ndarray:
        return np.array(self.inputs) if self.inputs else np.zeros((0, 0))

    def output_matrix(self) -> np.ndarray:
        return np.array(self.outputs) if self.outputs else np.zeros((0, 0))


def median_lengthscale(inputs: np.ndarray) -> float:
    """Median pairwise distance of the scaled inputs; 0.5 if degenerate."""
    if len(inputs) < 2:
        return 0.5
    med = float(np.median(scipy.spatial.distance.pdist(inputs)))
    return med if med > 0 else 0.5


class KernelRegressor:
    """Gaussian-kernel ridge regression, vector-valued outputs.

    Stores the lower Cholesky factor of (K_mat + ridge*I) and the targets
    in preallocated growing buffers, so that absorbing one more training
    pair is an exact O(n^2) factor extension (``append``) instead of a
    from-scratch refit, and the prediction matvec always streams the same
    warm memory.  The dual weight matrix solving (K_mat + ridge*I) W = Y
    is exposed as a lazily computed property; prediction never needs it
    (k_row @ W == solve(K_mat + ridge*I, k_row) @ Y by symmetry).
    """

    def __init__(self, inputs: np.ndarray, targets: np.ndarray,
                 lengthscale: float, ridge: float, generation: int = 0):
        if ridge <= 0 or lengthscale <= 0:
            raise ConfigurationError("ridge and lengthscale must be positive")
        inputs = np.asarray(inputs, dtype=float)
        targets = np.asarray(targets, dtype=float)
        self.lengthscale = float(lengthscale)
        self.ridge = float(ridge)
        self.generation = generation
        self._n = inputs.shape[0]
        self._dim = inputs.shape[1]
        self._m = targets.shape[1]
        capacity = max(64, 2 * self._n)
        self._inputs = np.zeros((capacity, self._dim))
        self._inputs[:self._n] = inputs
        # (m, capacity) C-order float32: the prediction matvec streams the
        # same warm, cache-sized buffer; the induced ~1e-7 relative noise is
        # far below the regression error this surrogate can reach
        self._targets_t = np.zeros((self._m, capacity), dtype=np.float32)
        self._targets_t[:, :self._n] = targets.T
        gram = self._kernel(inputs, inputs)
        gram[np.diag_indices_from(gram)] += self.ridge
        # positive definite for ridge > 0; exact-size Fortran order so the
        # LAPACK triangular solves run without copying the factor
        self._L = np.asfortranarray(np.linalg.cholesky(gram))
        self._trtrs = scipy.linalg.get_lapack_funcs(("trtrs",), (self._L,))[0]
        self._weights = None

    def _kernel(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        sq = scipy.spatial.distance.cdist(a, b, "sqeuclidean")
        return np.exp(-sq / (2.0 * self.lengthscale**2))

    def _grow(self, capacity: int) -> None:
        inputs = np.zeros((capacity, self._dim))
        inputs[:self._n] = self._inputs[:self._n]
        targets_t = np.zeros((self._m, capacity), dtype=np.float32)
        targets_t[:, :self._n] = self._targets_t[:, :self._n]
        self._inputs, self._targets_t = inputs, targets_t

    @property
    def n_train(self) -> int:
        return self._n

    @property
    def inputs(self) -> np.ndarray:
        return self._inputs[:self._n]

    @property
    def targets(self) -> np.ndarray:
        return self._targets_t[:, :self._n].T.astype(float)

    @property
    def factor_lower(self) -> np.ndarray:
        return self._L

    @property
    def weights(self) -> np.ndarray:
        if self._weights is None:
            self._weights = self._solve(np.ascontiguousarray(self.targets))
        return self._weights

    def _solve(self, rhs: np.ndarray) -> np.ndarray:
        """(K_mat + ridge I)^{-1} rhs via the two triangular solves."""
        L = self.factor_lower
        half, info = self._trtrs(L, rhs, lower=1, trans=0)
        if info == 0:
            out, info = self._trtrs(L, half, lower=1, trans=1)
        if info != 0:
            raise ConfigurationError(f"triangular solve failed (info={info})")
        return out

    def append(self, x_scaled, y_flat) -> None:
        """Extend the factorization by one training pair, exactly.

        Valid because the kernel of the existing pairs is unchanged; the
        new Cholesky row is the standard bordering update.  Requires the
        new input to be distinct from every stored one.
        """
        x = np.asarray(x_scaled, dtype=float)
        y = np.asarray(y_flat, dtype=float).ravel()
        if y.shape[0] != self._m:
            raise ConfigurationError("output width changed; refit instead")
        n = self._n
        if n + 1 > self._inputs.shape[0]:
            self._grow(2 * self._inputs.shape[0])
        if n:
            k_col = self._kernel(self.inputs, x[None, :])[:, 0]
            l_row, info = self._trtrs(self._L, k_col, lower=1, trans=0)
            if info != 0:
                raise ConfigurationError(f"triangular solve failed (info={info})")
        else:
            l_row = np.zeros(0)
        pivot_sq = 1.0 + self.ridge - float(l_row @ l_row)
        if pivot_sq <= 0:  # cannot happen for ridge > 0 barring degeneracy
            raise ConfigurationError("kernel system lost positive definiteness")
        grown = np.zeros((n + 1, n + 1), order="F")
        grown[:n, :n] = self._L
        grown[n, :n] = l_row
        grown[n, n] = np.sqrt(pivot_sq)
        self._inputs[n] = x
        self._targets_t[:, n] = y
        self._L = grown
        self._n = n + 1
        self._weights = None

    def predict(self, x_scaled) -> np.ndarray:
        """Flat output vector for one scaled input point."""
        x = np.atleast_2d(np.asarray(x_scaled, dtype=float))
        k_row = self._kernel(self.inputs, x)[:, 0]
        c = self._solve(k_row)
        flat = self._targets_t[:, :self._n] @ c.astype(np.float32, copy=False)
        return flat.astype(float)


def fit(training_set: TrainingSet, lengthscale="median",
        ridge: float = 1e-8, n_min: int = 10) -> KernelRegressor:
    """Fit a regressor on the training set; deterministic.

    Raises :class:`NotReadyError` below ``n_min`` pairs.  ``lengthscale``
    is either the string "median" or a positive constant.
    """
    if training_set.n < n_min:
        raise NotReadyError(
            f"{training_set.n} training pairs, need at least {n_min}")
    inputs = training_set.input_matrix()
    if lengthscale == "median":
        ell = median_lengthscale(inputs)
    else:
        ell = float(lengthscale)
    return KernelRegressor(inputs, training_set.output_matrix(), ell, ridge,
                           generation=training_set.generation)


def predict_trajectory(regressor: KernelRegressor, box: ParameterBox, mu,
                       n_steps: int) -> ReducedTrajectory:
    """Predict and unflatten coefficients a^0..a^K for one parameter."""
    mu = np.asarray(mu, dtype=float)
    flat = regressor.predict(box.scale01(mu))
    coefficients = flat.reshape(n_steps + 1, -1)
    return ReducedTrajectory(coefficients=coefficients, mu=mu,
                             generation=regressor.generation, producer="ml")


def rebase(training_set: TrainingSet, new_generation: int,
           rb_solve) -> TrainingSet:
    """Re-express stored outputs in a new basis generation.

    Discards the stored outputs and re-solves the (cheap) reduced model at
    every stored input; a no-op when the generation already matches.
    """
    if new_generation == training_set.generation:
        return training_set
    training_set.generation = new_generation
    training_set.outputs = [
        np.asarray(rb_solve(mu).coefficients, dtype=float).ravel()
        for mu in training_set.raw_inputs]
    return training_set


def dump_training_set(training_set: TrainingSet, path) -> None:
    """CSV dump: one row per pair, parameter components then coefficients."""
    with open(path, "w", encoding="utf-8") as fh:
        for mu, out in zip(training_set.raw_inputs, training_set.outputs):
            row = np.concatenate([mu, out])
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


class MLCoefficientLevel(ModelLevel):
    """Cheapest stage: learned reduced coefficients, certified by stage 2.

    Absorbs reduced-basis solutions as training pairs (full-order
    trajectories are ignored, the regressor learns only from the reduced
    model) and rebases on basis-change notifications.  Error estimation
    consults the next level's reduced system, which is exactly the
    "criterion may use the next model" pathway of the hierarchy.
    """

    name = "ml"

    def __init__(self, box: ParameterBox, rb_level, n_min: int = 10,
                 lengthscale="median", ridge: float = 1e-8):
        self.box = box
        self.rb_level = rb_level
        self.n_min = n_min
        self.lengthscale = lengthscale
        self.ridge = ridge
        self.training = TrainingSet(generation=rb_level.generation)
        self.regressor: KernelRegressor | None = None

    def _refit(self) -> None:
        if self.training.n >= self.n_min:
            self.regressor = fit(self.training, self.lengthscale, self.ridge,
                                 n_min=self.n_min)
        else:
            self.regressor = None

    def evaluate(self, mu) -> ModelOutput:
        reduced_system = self.rb_level.reduced_system
        if (self.regressor is None
                or self.regressor.generation != reduced_system.generation):
            raise StaleGenerationError("regressor does not match the current "
                                       "reduced space")
        trajectory = predict_trajectory(self.regressor, self.box, mu,
                                        reduced_system.K)
        u_final = self.rb_level.basis.V @ trajectory.coefficients[-1]
        payload = ParabolicResult(
            qoi=float(self.rb_level.system.qoi_vector @ u_final),
            mu=trajectory.mu, producer="ml",
            u_final=u_final, reduced=trajectory)
        return ModelOutput(payload=payload)

    def estimate_error(self, output, mu, next_level=None):
        if next_level is None:
            raise ConfigurationError("the learned stage certifies against the "
                                     "reduced-basis stage and needs it as next level")
        return error_estimate(next_level.reduced_system, mu,
                              output.payload.reduced)

    def absorb(self, payload):
        if isinstance(payload, ReducedTrajectory) and payload.producer == "rb":
            if payload.generation != self.training.generation:
                # outputs are stale anyway; sync before storing
                rebase(self.training, payload.generation, self._rb_solve)
            scaled = self.box.scale01(payload.mu)
            is_new = not self.training.has_input(payload.mu)
            self.training.add(payload.mu, scaled, payload.coefficients)
            if (is_new and self.regressor is not None
                    and self.regressor.generation == self.training.generation
                    and not isinstance(self.lengthscale, str)):
                try:
                    # constant lengthscale: exact O(n^2) factor extension
                    self.regressor.append(
                        scaled, np.asarray(payload.coefficients).ravel())
                except ConfigurationError:
                    self._refit()  # round-off broke the incremental factor
            else:
                self._refit()
            return []
        if isinstance(payload, BasisChanged):
            rebase(self.training, payload.generation, self._rb_solve)
            self._refit()
            return []
        return None

    def _rb_solve(self, mu):
        return solve_rb(self.rb_level.reduced_system, mu)

    def is_ready(self) -> bool:
        return (self.regressor is not None
                and self.regressor.generation == self.rb_level.generation)
