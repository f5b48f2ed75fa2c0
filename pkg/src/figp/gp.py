"""Fitting, prediction, cross-validation and kernel selection.

The surrogate is a Gaussian process over functional inputs with a
constant mean.  Both the mean and the variance are profiled out of the
likelihood, so optimization only searches the correlation parameters:
the lengthscale(s) of the linear kernel or the distance-decay rate of
the nonlinear kernel, always on the log scale.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .domain import FunctionalInput, _check_same_grid
from .errors import FigpError, FitError, GramFactorizationError
from .kernels import (
    LINEAR,
    NONLINEAR,
    GramFactorization,
    KernelSpec,
    MaternParams,
    gram,
    kernel_matrix,
    kernel_value,
)

LOG_THETA_BOUNDS = (-3.0, 3.0)
LOG_GAMMA_BOUNDS = (-5.0, 2.0)

# Relative slack allowed when clamping a slightly negative posterior
# variance to zero; anything more negative signals a broken factorization.
VARIANCE_CLAMP_REL = 1e-8


@dataclass(frozen=True)
class FitConfig:
    """Settings for the multistart likelihood optimization.

    `anisotropic` frees one lengthscale per dimension for the linear
    kernel; the default ties them to a single value, which is much
    better behaved on small designs.
    """

    multistarts: int = 8
    max_iters: int = 200
    seed: int = 0
    anisotropic: bool = False
    nu: float = 2.5
    log_theta_bounds: Tuple[float, float] = LOG_THETA_BOUNDS
    log_gamma_bounds: Tuple[float, float] = LOG_GAMMA_BOUNDS

    def __post_init__(self):
        if self.multistarts < 1:
            raise FigpError("multistarts must be at least 1")
        for lo, hi in (self.log_theta_bounds, self.log_gamma_bounds):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise FigpError("bounds must be finite with lo < hi")


@dataclass(frozen=True)
class GPModel:
    """A fitted surrogate; immutable once constructed."""

    spec: KernelSpec  # carries the fitted sigma2
    inputs: Tuple[FunctionalInput, ...]
    y: np.ndarray
    mu_hat: float
    factorization: GramFactorization
    alpha: np.ndarray  # (K_n + nugget I)^{-1} (y - mu_hat 1)
    log_likelihood: float = float("nan")

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=float)
        y.setflags(write=False)
        object.__setattr__(self, "y", y)
        a = np.ascontiguousarray(self.alpha, dtype=float)
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "inputs", tuple(self.inputs))

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def sigma2_hat(self) -> float:
        return self.spec.base.sigma2


def _profile(fact: GramFactorization, y: np.ndarray):
    """Profiled mean and variance given a factorized correlation matrix.

    Treats `fact` as the unit-variance Gram R; returns (mu, s2, loglik)
    where loglik is the profiled log marginal likelihood.
    """
    n = y.size
    one = np.ones(n)
    Ri_y = fact.solve(y)
    Ri_1 = fact.solve(one)
    denom = float(one @ Ri_1)
    if denom <= 0:
        raise GramFactorizationError("degenerate correlation matrix")
    mu = float(one @ Ri_y) / denom
    r = y - mu
    s2 = float(r @ fact.solve(r)) / n
    # floor keeps the degenerate constant-y case finite
    s2 = max(s2, 1e-12 * max(1.0, float(np.mean(y * y))))
    ll = -0.5 * n * math.log(s2) - 0.5 * fact.log_det \
        - 0.5 * n * (1.0 + math.log(2.0 * math.pi))
    return mu, s2, ll


def log_marginal_likelihood(spec: KernelSpec, inputs: Sequence[FunctionalInput],
                            y) -> float:
    """Profiled log marginal likelihood of the data under `spec`.

    The constant mean and the variance are profiled out, so the value
    depends only on the correlation parameters of `spec`.
    """
    y = np.asarray(y, dtype=float)
    if y.size < 2:
        raise FigpError("likelihood needs at least two observations")
    fact = gram(list(inputs), spec.with_sigma2(1.0))
    return _profile(fact, y)[2]


def build_model(spec: KernelSpec, inputs: Sequence[FunctionalInput], y,
                mu: Optional[float] = None) -> GPModel:
    """Assemble a GPModel from a fully specified kernel.

    With `mu` given (e.g. 0 for a centered process) it is used as-is,
    otherwise the generalized-least-squares mean is plugged in.  The
    spec's sigma2 is taken at face value; no fitting happens here.
    """
    inputs = list(inputs)
    y = np.asarray(y, dtype=float)
    if y.size != len(inputs):
        raise FigpError("output length does not match the number of inputs")
    if not np.all(np.isfinite(y)):
        raise FigpError("outputs must be finite")
    fact = gram(inputs, spec)
    if mu is None:
        one = np.ones(y.size)
        mu = float(one @ fact.solve(y)) / float(one @ fact.solve(one))
    alpha = fact.solve_refined(y - mu)
    return GPModel(spec, inputs, y, float(mu), fact, alpha)


def _make_spec(family: str, params_log: np.ndarray, config: FitConfig,
               dim: int, sigma2: float, premap, nugget) -> KernelSpec:
    if family == LINEAR:
        theta = np.exp(params_log)
        if theta.size == 1:
            theta = np.repeat(theta, dim)
        return KernelSpec(LINEAR, MaternParams(config.nu, sigma2, tuple(theta)),
                          premap=premap, nugget=nugget)
    return KernelSpec(NONLINEAR, MaternParams(config.nu, sigma2),
                      gamma=float(np.exp(params_log[0])), nugget=nugget)


def fit(inputs: Sequence[FunctionalInput], y, family: str,
        config: Optional[FitConfig] = None, premap: Optional[str] = None,
        nugget: Optional[float] = None) -> GPModel:
    """Fit a surrogate of the given kernel family by maximum likelihood.

    Runs L-BFGS-B from the center of the log-parameter box plus
    Latin-hypercube starts drawn with `config.seed`, and keeps the best
    likelihood.  Deterministic for a fixed config.
    """
    if config is None:
        config = FitConfig()
    inputs = list(inputs)
    if len(inputs) < 2:
        raise FigpError("fitting needs at least two training points")
    for g in inputs[1:]:
        _check_same_grid(inputs[0], g)
    y = np.asarray(y, dtype=float)
    if y.size != len(inputs):
        raise FigpError("output length does not match the number of inputs")
    if not np.all(np.isfinite(y)):
        raise FigpError("outputs must be finite")

    dim = inputs[0].grid.domain.dim
    if family == LINEAR:
        n_free = dim if config.anisotropic else 1
        box = [config.log_theta_bounds] * n_free
    elif family == NONLINEAR:
        n_free = 1
        box = [config.log_gamma_bounds]
    else:
        raise FigpError(f"unknown kernel family {family!r}")
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])

    def objective(p):
        spec = _make_spec(family, np.asarray(p), config, dim, 1.0,
                          premap, nugget)
        try:
            fact = gram(inputs, spec)
            return -_profile(fact, y)[2]
        except (GramFactorizationError, FloatingPointError):
            return 1e10

    starts = [0.5 * (lo + hi)]
    if config.multistarts > 1:
        sampler = qmc.LatinHypercube(d=n_free, seed=config.seed)
        extra = qmc.scale(sampler.random(config.multistarts - 1), lo, hi)
        starts.extend(np.asarray(extra))

    best = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # nugget escalation during search
        for p0 in starts:
            res = minimize(objective, np.asarray(p0), method="L-BFGS-B",
                           bounds=box, options={"maxiter": config.max_iters})
            if not np.isfinite(res.fun):
                continue
            if best is None or res.fun < best.fun - 1e-12:
                best = res
    if best is None or best.fun >= 1e10:
        raise FitError(f"all {len(starts)} starts failed for the {family} kernel")

    unit_spec = _make_spec(family, best.x, config, dim, 1.0, premap, nugget)
    fact_unit = gram(inputs, unit_spec)
    mu, s2, ll = _profile(fact_unit, y)
    spec = unit_spec.with_sigma2(s2)
    model = build_model(spec, inputs, y, mu=mu)
    return GPModel(model.spec, model.inputs, model.y, model.mu_hat,
                   model.factorization, model.alpha, log_likelihood=ll)


def _cross_vector(model: GPModel, g: FunctionalInput) -> np.ndarray:
    return kernel_matrix(list(model.inputs), [g], model.spec)[:, 0]


def predict(model: GPModel, g: FunctionalInput) -> Tuple[float, float]:
    """Posterior predictive mean and variance at a new input."""
    _check_same_grid(model.inputs[0], g)
    k = _cross_vector(model, g)
    mean = model.mu_hat + float(k @ model.alpha)
    kgg = kernel_value(g, g, model.spec)
    var = kgg - float(k @ model.factorization.solve(k))
    var = _clamp_variance(var, model.sigma2_hat, kgg)
    return mean, var


def _clamp_variance(var: float, sigma2: float, kgg: float) -> float:
    if var >= 0:
        return var
    tol = VARIANCE_CLAMP_REL * max(sigma2, abs(kgg))
    if var > -tol:
        return 0.0
    raise FigpError(
        f"posterior variance {var:.3e} is negative beyond round-off; "
        "the factorization looks broken"
    )


def predict_many(model: GPModel, inputs: Sequence[FunctionalInput]):
    """Vectorized predict over a list of inputs sharing the training grid."""
    inputs = list(inputs)
    for g in inputs:
        _check_same_grid(model.inputs[0], g)
    K_cross = kernel_matrix(list(model.inputs), inputs, model.spec)
    means = model.mu_hat + K_cross.T @ model.alpha
    kgg = np.array([kernel_value(g, g, model.spec) for g in inputs])
    quad = np.einsum("ij,ij->j", K_cross, model.factorization.solve(K_cross))
    raw = kgg - quad
    variances = np.array([
        _clamp_variance(float(v), model.sigma2_hat, float(kg))
        for v, kg in zip(raw, kgg)
    ])
    return means, variances


def loocv_error(model: GPModel) -> float:
    """Closed-form leave-one-out mean squared error.

    Uses the identity that the fold-i residual equals
    [K^{-1}(y - mu 1)]_i / (K^{-1})_{ii} with the mean and all
    hyperparameters frozen across folds; no refitting happens.
    """
    if model.n < 2:
        raise FigpError("LOOCV needs at least two training points")
    Kinv = model.factorization.solve_refined(np.eye(model.n))
    resid = model.alpha / np.diag(Kinv)
    return float(np.mean(resid ** 2))


def select_kernel(inputs: Sequence[FunctionalInput], y,
                  families: Sequence[str] = (LINEAR, NONLINEAR),
                  config: Optional[FitConfig] = None,
                  premap: Optional[str] = None,
                  nugget: Optional[float] = None):
    """Fit each candidate family and pick the one with the smallest
    leave-one-out error.

    Returns (best_model, report) where the report lists one entry per
    family.  Ties go to the linear kernel, the simpler model.  A family
    whose fit fails is skipped with a warning unless every family fails.
    """
    if len(families) < 1:
        raise FigpError("select_kernel needs at least one candidate family")
    report = []
    models = {}
    for family in families:
        try:
            model = fit(inputs, y, family, config=config, premap=premap,
                        nugget=nugget)
        except (FitError, GramFactorizationError, FigpError) as exc:
            warnings.warn(f"{family} kernel fit failed: {exc}", stacklevel=2)
            continue
        models[family] = model
        entry = {
            "family": family,
            "loocv": loocv_error(model),
            "log_likelihood": model.log_likelihood,
            "mu_hat": model.mu_hat,
            "sigma2_hat": model.sigma2_hat,
        }
        if family == LINEAR:
            entry["lengthscales"] = list(model.spec.base.lengthscales)
        else:
            entry["gamma"] = model.spec.gamma
        report.append(entry)
    if not models:
        raise FitError("every candidate kernel family failed to fit")
    order = {LINEAR: 0, NONLINEAR: 1}
    best_entry = min(report, key=lambda e: (e["loocv"], order.get(e["family"], 9)))
    for e in report:
        e["selected"] = e is best_entry
    return models[best_entry["family"]], report
