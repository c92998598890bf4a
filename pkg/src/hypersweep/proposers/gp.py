"""Gaussian-process surrogate with Expected Improvement proposals.

All modeling happens in normalized feature space ([0,1] per numeric
dimension, one-hot per choice dimension) with scores standardized to zero
mean / unit variance, so a single set of hyperparameter bounds is sane for
any experiment.  The anisotropic squared-exponential kernel's
hyperparameters are fit by maximizing log marginal likelihood with a
multi-start bounded L-BFGS-B search using the analytic gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import optimize
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.special import ndtr
from scipy.stats import qmc

from ..errors import GpFitError
from ..space import ExperimentConfig
from . import Draft, Proposer
from .encoding import from_unit, onehot_row, sample_uniform, to_unit

LENGTH_SCALE_BOUNDS = (1e-2, 10.0)
SIGNAL_VAR_BOUNDS = (1e-3, 1e3)
NOISE_VAR_BOUNDS = (1e-8, 1.0)
JITTER_START = 1e-10
JITTER_MAX = 1e-4

DEFAULT_N_CANDIDATES = 1000
DEFAULT_N_RESTARTS = 8
N_LOCAL_PERTURBATIONS = 16
LOCAL_PERTURBATION_STD = 0.05

_LOG2PI = math.log(2.0 * math.pi)


def kernel_matrix(
    xa: np.ndarray, xb: np.ndarray, signal_var: float, length_scales: np.ndarray
) -> np.ndarray:
    """Anisotropic squared-exponential: sv * exp(-0.5 * sum_i d_i^2 / l_i^2)."""
    diff = xa[:, None, :] - xb[None, :, :]
    sq = np.sum((diff / length_scales) ** 2, axis=-1)
    return signal_var * np.exp(-0.5 * sq)


def _chol_with_jitter(k: np.ndarray) -> tuple[tuple[np.ndarray, bool], float]:
    """Cholesky of k (+ escalating jitter); raises GpFitError past the cap."""
    jitter = 0.0
    while True:
        try:
            return cho_factor(k + jitter * np.eye(len(k)), lower=True), jitter
        except np.linalg.LinAlgError:
            jitter = JITTER_START if jitter == 0.0 else jitter * 2.0
            if jitter > JITTER_MAX:
                diag = np.diag(k)
                raise GpFitError(
                    "kernel matrix not positive definite after maximum jitter",
                    diagnostics={
                        "jitter_cap": JITTER_MAX,
                        "diag_min": float(diag.min()),
                        "diag_max": float(diag.max()),
                        "n": len(k),
                    },
                ) from None


class GpSurrogate:
    """GP over normalized features with standardized targets.

    ``theta`` is the log-hyperparameter vector
    [log signal_var, log l_1 .. log l_D, log noise_var].
    """

    def __init__(self, x: np.ndarray, y: np.ndarray):
        if len(x) < 1:
            raise ValueError("GP fit requires at least one observation")
        self.x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        self.y_mean = float(y.mean())
        self.y_std = float(y.std())
        if self.y_std < 1e-12:
            self.y_std = 1.0
        self.y = (y - self.y_mean) / self.y_std
        self.n, self.dim = self.x.shape
        self.signal_var = 1.0
        self.length_scales = np.full(self.dim, 0.5)
        self.noise_var = 1e-6
        self._factor = None
        self._alpha = None
        self.jitter = 0.0

    # -- likelihood ----------------------------------------------------------

    def _theta_to_params(self, theta: np.ndarray):
        sv = math.exp(theta[0])
        ls = np.exp(theta[1 : 1 + self.dim])
        nv = math.exp(theta[-1])
        return sv, ls, nv

    def log_marginal(self, theta: np.ndarray) -> float:
        sv, ls, nv = self._theta_to_params(np.asarray(theta, dtype=float))
        k = kernel_matrix(self.x, self.x, sv, ls) + nv * np.eye(self.n)
        (low, lower), _ = _chol_with_jitter(k)
        alpha = cho_solve((low, lower), self.y)
        return float(
            -0.5 * self.y @ alpha - np.sum(np.log(np.diag(low))) - 0.5 * self.n * _LOG2PI
        )

    def log_marginal_grad(self, theta: np.ndarray) -> np.ndarray:
        """Analytic gradient of log marginal likelihood w.r.t. log-params."""
        theta = np.asarray(theta, dtype=float)
        sv, ls, nv = self._theta_to_params(theta)
        m = kernel_matrix(self.x, self.x, 1.0, ls)
        k = sv * m + nv * np.eye(self.n)
        (low, lower), _ = _chol_with_jitter(k)
        alpha = cho_solve((low, lower), self.y)
        kinv = cho_solve((low, lower), np.eye(self.n))
        w = np.outer(alpha, alpha) - kinv
        grad = np.empty_like(theta)
        grad[0] = 0.5 * np.sum(w * (sv * m))
        for i in range(self.dim):
            di = (self.x[:, None, i] - self.x[None, :, i]) ** 2
            dk = sv * m * (di / ls[i] ** 2)
            grad[1 + i] = 0.5 * np.sum(w * dk)
        grad[-1] = 0.5 * nv * np.trace(w)
        return grad

    # -- fitting ---------------------------------------------------------------

    def fit(
        self,
        rng: np.random.Generator | None = None,
        n_restarts: int = DEFAULT_N_RESTARTS,
        noise_var: float | None = None,
    ) -> "GpSurrogate":
        """Maximize log marginal likelihood; ``noise_var`` pins the noise if given."""
        rng = rng or np.random.default_rng(0)
        lo = np.array(
            [math.log(SIGNAL_VAR_BOUNDS[0])]
            + [math.log(LENGTH_SCALE_BOUNDS[0])] * self.dim
            + [math.log(NOISE_VAR_BOUNDS[0])]
        )
        hi = np.array(
            [math.log(SIGNAL_VAR_BOUNDS[1])]
            + [math.log(LENGTH_SCALE_BOUNDS[1])] * self.dim
            + [math.log(NOISE_VAR_BOUNDS[1])]
        )
        if noise_var is not None:
            lo[-1] = hi[-1] = math.log(noise_var)

        def objective(theta):
            try:
                return -self.log_marginal(theta), -self.log_marginal_grad(theta)
            except GpFitError:
                return 1e25, np.zeros_like(theta)

        starts = [
            np.clip(
                np.array([0.0] + [math.log(0.5)] * self.dim + [math.log(1e-6)]), lo, hi
            )
        ]
        for _ in range(max(0, n_restarts - 1)):
            starts.append(rng.uniform(lo, hi))
        best_theta, best_val = None, math.inf
        for x0 in starts:
            res = optimize.minimize(
                objective, x0, jac=True, method="L-BFGS-B", bounds=list(zip(lo, hi))
            )
            if res.fun < best_val:
                best_val, best_theta = res.fun, res.x
        if best_theta is None:
            raise GpFitError("all likelihood optimizations failed")
        sv, ls, nv = self._theta_to_params(best_theta)
        return self.set_hyperparams(sv, ls, nv)

    def set_hyperparams(
        self, signal_var: float, length_scales, noise_var: float
    ) -> "GpSurrogate":
        self.signal_var = float(signal_var)
        self.length_scales = np.broadcast_to(
            np.asarray(length_scales, dtype=float), (self.dim,)
        ).copy()
        self.noise_var = float(noise_var)
        k = kernel_matrix(self.x, self.x, self.signal_var, self.length_scales)
        k += self.noise_var * np.eye(self.n)
        self._factor, self.jitter = _chol_with_jitter(k)
        self._alpha = cho_solve(self._factor, self.y)
        return self

    # -- prediction ------------------------------------------------------------

    def predict(self, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and latent variance (standardized units) at rows of xs."""
        if self._factor is None:
            raise GpFitError("predict() before fit()/set_hyperparams()")
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        ks = kernel_matrix(xs, self.x, self.signal_var, self.length_scales)
        mu = ks @ self._alpha
        low = self._factor[0]
        v = solve_triangular(low, ks.T, lower=True)
        var = self.signal_var - np.sum(v**2, axis=0)
        return mu, np.maximum(var, 0.0)

    def best_observed(self) -> float:
        """Lowest standardized target (every proposer minimizes)."""
        return float(self.y.min())


def expected_improvement(
    mu: np.ndarray, sigma: np.ndarray, f_best: float
) -> np.ndarray:
    """Minimization-form EI; zero-variance points fall back to max(f_best-mu, 0)."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    imp = f_best - mu
    out = np.maximum(imp, 0.0)
    pos = sigma > 0
    if np.any(pos):
        z = imp[pos] / sigma[pos]
        pdf = np.exp(-0.5 * z**2) / math.sqrt(2.0 * math.pi)
        out[pos] = imp[pos] * ndtr(z) + sigma[pos] * pdf
    return np.maximum(out, 0.0)


class GpEiProposer(Proposer):
    """Fit a GP on completed history, propose the EI argmax over a candidate set.

    Candidates are quasi-random (Sobol) points across the space plus local
    perturbations of the incumbent; maximizing over candidates instead of
    gradient ascent stays robust for mixed int/choice spaces.
    """

    def __init__(self, config: ExperimentConfig, seed: int | None = None):
        super().__init__(config, seed)
        self.n_candidates = int(self.options.get("n_candidates", DEFAULT_N_CANDIDATES))
        self.n_restarts = int(self.options.get("n_restarts", DEFAULT_N_RESTARTS))

    def _next(self) -> Draft | None:
        if self.issued >= self.n_samples:
            return None
        if not self.history:
            return Draft(sample_uniform(self.space, self.rng))
        return Draft(self._propose_ei())

    def _propose_ei(self) -> dict[str, Any]:
        x = np.array([onehot_row(self.space, cfg.values) for cfg, _ in self.history])
        y = np.array([score for _, score in self.history])
        surrogate = GpSurrogate(x, y).fit(rng=self.rng, n_restarts=self.n_restarts)
        candidates = self._candidates()
        feats = np.array([onehot_row(self.space, v) for v in candidates])
        mu, var = surrogate.predict(feats)
        ei = expected_improvement(mu, np.sqrt(var), surrogate.best_observed())
        return candidates[int(np.argmax(ei))]

    def _candidates(self) -> list[dict[str, Any]]:
        d = len(self.space)
        sampler = qmc.Sobol(d, scramble=True, seed=self.rng)
        m = 1 << max(0, (self.n_candidates - 1).bit_length())
        u = sampler.random(m)[: self.n_candidates]
        candidates = [self._decode(row) for row in u]
        candidates.extend(self._perturbed_incumbents())
        return candidates

    def _decode(self, row: np.ndarray) -> dict[str, Any]:
        values: dict[str, Any] = {}
        for i, p in enumerate(self.space):
            if p.kind == "choice":
                values[p.name] = p.choices[
                    min(len(p.choices) - 1, int(row[i] * len(p.choices)))
                ]
            elif p.kind == "int":
                span = int(p.high) - int(p.low) + 1
                values[p.name] = int(p.low) + min(span - 1, int(row[i] * span))
            else:
                values[p.name] = float(p.low + row[i] * (p.high - p.low))
        return values

    def _perturbed_incumbents(self) -> list[dict[str, Any]]:
        incumbent = min(self.history, key=lambda pair: pair[1])[0].values
        out = []
        for _ in range(N_LOCAL_PERTURBATIONS):
            values: dict[str, Any] = {}
            for p in self.space:
                if p.kind == "choice":
                    values[p.name] = incumbent[p.name]
                else:
                    u = to_unit(p, incumbent[p.name]) + self.rng.normal(
                        0.0, LOCAL_PERTURBATION_STD
                    )
                    values[p.name] = from_unit(p, u)
            out.append(values)
        return out
