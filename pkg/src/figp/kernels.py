"""Matern base kernel and the two functional covariance kernels.

The linear functional kernel integrates g1(x) g2(x') against a Matern
base kernel on the domain, which makes it bilinear in its arguments and
positive semi-definite (strictly positive definite on linearly
independent inputs).  The nonlinear functional kernel applies the
Matern radial profile to the scaled L2 distance between inputs and is
strictly positive definite on distinct inputs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.linalg import cho_solve, cholesky
from scipy.spatial.distance import cdist
from scipy.special import gamma as gamma_fn
from scipy.special import kv

from .domain import (
    FunctionalInput,
    _check_same_grid,
    apply_pointwise_map,
    l2_norm,
)
from .errors import FigpError, GramFactorizationError

LINEAR = "linear"
NONLINEAR = "nonlinear"

# Named pointwise pre-maps for the linear kernel (serialization-friendly).
PREMAPS: Dict[str, Callable] = {
    "identity": lambda v: v,
    "square": lambda v: v * v,
    "sin": np.sin,
    "exp": np.exp,
    "abs": np.abs,
}

# Automatic nugget policy: start at 1e-8 * sigma2, escalate by 10x on
# Cholesky failure, give up past 1e-4 * sigma2.
NUGGET_START = 1e-8
NUGGET_CEIL = 1e-4


@dataclass(frozen=True)
class MaternParams:
    """Hyperparameters of the Matern family.

    `lengthscales` holds the d positive diagonal entries of the scale
    matrix applied to coordinate differences.  When the params describe
    the radial profile of the nonlinear kernel the lengthscales are
    unused (the L2 distance is scaled by gamma instead).
    """

    nu: float
    sigma2: float
    lengthscales: Tuple[float, ...] = (1.0,)

    def __post_init__(self):
        object.__setattr__(self, "nu", float(self.nu))
        object.__setattr__(self, "sigma2", float(self.sigma2))
        if np.isscalar(self.lengthscales):
            ls = (float(self.lengthscales),)
        else:
            ls = tuple(float(t) for t in self.lengthscales)
        object.__setattr__(self, "lengthscales", ls)
        if not self.nu > 0:
            raise FigpError("nu must be positive")
        if not self.sigma2 > 0:
            raise FigpError("sigma2 must be positive")
        if any(t <= 0 for t in ls):
            raise FigpError("all lengthscales must be positive")


@dataclass(frozen=True)
class KernelSpec:
    """Tagged choice of functional kernel.

    family "linear": `base` is the Matern kernel on the domain and
    `premap` optionally names a pointwise transform applied to both
    inputs first.  family "nonlinear": `base` is the radial profile and
    `gamma` scales the L2 distance.  `nugget` of None selects the
    automatic escalation policy; an explicit value is used as-is.
    """

    family: str
    base: MaternParams
    gamma: Optional[float] = None
    premap: Optional[str] = None
    nugget: Optional[float] = None

    def __post_init__(self):
        if self.family not in (LINEAR, NONLINEAR):
            raise FigpError(f"unknown kernel family {self.family!r}")
        if self.family == NONLINEAR:
            if self.gamma is None or not self.gamma > 0:
                raise FigpError("nonlinear kernel requires gamma > 0")
            if self.premap is not None:
                raise FigpError("premap applies to the linear kernel only")
        else:
            if self.gamma is not None:
                raise FigpError("gamma applies to the nonlinear kernel only")
            if self.premap is not None and self.premap not in PREMAPS:
                raise FigpError(
                    f"unknown premap {self.premap!r}; known: {sorted(PREMAPS)}"
                )
        if self.nugget is not None and self.nugget < 0:
            raise FigpError("nugget must be non-negative")

    def with_sigma2(self, sigma2: float) -> "KernelSpec":
        return replace(self, base=replace(self.base, sigma2=sigma2))


def matern_psi(r, params: MaternParams):
    """Matern radial profile at distance r >= 0.

    Closed forms are used for nu in {1/2, 3/2, 5/2}; any other nu goes
    through the modified Bessel function of the second kind.  Returns
    sigma2 at r = 0.  Accepts scalars or arrays.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise FigpError("distances must be non-negative")
    nu, s2 = params.nu, params.sigma2
    z = 2.0 * math.sqrt(nu) * r
    if abs(nu - 0.5) < 1e-12:
        out = s2 * np.exp(-z)
    elif abs(nu - 1.5) < 1e-12:
        out = s2 * (1.0 + z) * np.exp(-z)
    elif abs(nu - 2.5) < 1e-12:
        out = s2 * (1.0 + z + z * z / 3.0) * np.exp(-z)
    else:
        zero = z == 0
        zz = np.where(zero, 1.0, z)
        with np.errstate(invalid="ignore", over="ignore"):
            out = s2 * (2.0 ** (1.0 - nu) / gamma_fn(nu)) * zz ** nu * kv(nu, zz)
        out = np.where(zero, s2, out)
        # kv underflows to 0 for large z, which is the correct limit
        out = np.where(np.isfinite(out), out, 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def matern52_exp5(r):
    """Alternate smoothness-5/2 profile with an exp(-5 r) tail.

    Computes (1 + sqrt(5) r + 5 r^2 / 3) exp(-5 r).  Some sources print
    this variant for nu = 5/2; it decays faster than matern_psi at
    nu = 5/2 (tail exp(-sqrt(10) r)) and is kept as a compatibility
    option, not used by the fitting code.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise FigpError("distances must be non-negative")
    out = (1.0 + math.sqrt(5.0) * r + (5.0 / 3.0) * r * r) * np.exp(-5.0 * r)
    if out.ndim == 0:
        return float(out)
    return out


def base_kernel(x, xp, params: MaternParams) -> float:
    """Base kernel between two domain points: the Matern profile of the
    lengthscale-weighted Euclidean distance."""
    x = np.asarray(x, dtype=float).ravel()
    xp = np.asarray(xp, dtype=float).ravel()
    theta = np.asarray(params.lengthscales, dtype=float)
    if x.size != xp.size or x.size != theta.size:
        raise FigpError(
            f"point dims {x.size}/{xp.size} do not match "
            f"{theta.size} lengthscale(s)"
        )
    r = float(np.linalg.norm(theta * (x - xp)))
    return float(matern_psi(r, params))


def base_kernel_matrix(points_a, points_b, params: MaternParams) -> np.ndarray:
    """Matern base kernel evaluated on all pairs of rows."""
    a = np.atleast_2d(np.asarray(points_a, dtype=float))
    b = np.atleast_2d(np.asarray(points_b, dtype=float))
    theta = np.asarray(params.lengthscales, dtype=float)
    if a.shape[1] != theta.size or b.shape[1] != theta.size:
        raise FigpError("point dimension does not match lengthscales")
    dist = cdist(a * theta, b * theta)
    return matern_psi(dist, params)


def _premap_fn(name: Optional[str]) -> Optional[Callable]:
    if name is None or name == "identity":
        return None
    return PREMAPS[name]


def _apply_premap(g: FunctionalInput, name: Optional[str]) -> FunctionalInput:
    fn = _premap_fn(name)
    if fn is None:
        return g
    return apply_pointwise_map(g, fn)


def linear_kernel(g1: FunctionalInput, g2: FunctionalInput,
                  params: MaternParams, premap: Optional[str] = None) -> float:
    """Double quadrature integral of g1(x) g2(x') against the base kernel."""
    _check_same_grid(g1, g2)
    g1 = _apply_premap(g1, premap)
    g2 = _apply_premap(g2, premap)
    grid = g1.grid
    psi = base_kernel_matrix(grid.nodes, grid.nodes, params)
    a = grid.weights * g1.values
    b = grid.weights * g2.values
    return float(a @ psi @ b)


def nonlinear_kernel(g1: FunctionalInput, g2: FunctionalInput,
                     outer: MaternParams, gamma: float) -> float:
    """Radial kernel in the scaled L2 distance between the two inputs."""
    _check_same_grid(g1, g2)
    if not gamma > 0:
        raise FigpError("gamma must be positive")
    return float(matern_psi(gamma * l2_norm(g1 - g2), outer))


def kernel_value(g1: FunctionalInput, g2: FunctionalInput,
                 spec: KernelSpec) -> float:
    if spec.family == LINEAR:
        return linear_kernel(g1, g2, spec.base, spec.premap)
    return nonlinear_kernel(g1, g2, spec.base, spec.gamma)


def _values_matrix(inputs: List[FunctionalInput],
                   premap: Optional[str]) -> np.ndarray:
    cols = [_apply_premap(g, premap).values for g in inputs]
    return np.column_stack(cols)


def kernel_matrix(inputs_a: List[FunctionalInput],
                  inputs_b: List[FunctionalInput],
                  spec: KernelSpec) -> np.ndarray:
    """Cross-kernel matrix K[i, j] = K(a_i, b_j), without any nugget.

    All inputs must share one grid.  The linear kernel reuses a single
    base-kernel matrix for every pair, so the cost is one n_q x n_q
    evaluation plus matrix products.
    """
    for g in list(inputs_a[1:]) + list(inputs_b):
        _check_same_grid(inputs_a[0], g)
    grid = inputs_a[0].grid
    if spec.family == LINEAR:
        A = _values_matrix(inputs_a, spec.premap) * grid.weights[:, None]
        B = _values_matrix(inputs_b, spec.premap) * grid.weights[:, None]
        psi = base_kernel_matrix(grid.nodes, grid.nodes, spec.base)
        return A.T @ psi @ B
    VA = _values_matrix(inputs_a, None)
    VB = _values_matrix(inputs_b, None)
    # pairwise L2 distances via the weighted Gram of values
    w = grid.weights
    na = np.einsum("ij,ij->j", VA, w[:, None] * VA)
    nb = np.einsum("ij,ij->j", VB, w[:, None] * VB)
    d2 = na[:, None] + nb[None, :] - 2.0 * (VA.T @ (w[:, None] * VB))
    dist = np.sqrt(np.clip(d2, 0.0, None))
    return matern_psi(spec.gamma * dist, spec.base)


@dataclass(frozen=True)
class GramFactorization:
    """Cholesky factorization of the training Gram plus nugget."""

    gram: np.ndarray  # K_n + nugget * I, exactly symmetric
    chol: np.ndarray  # lower triangular
    log_det: float
    nugget: float  # the nugget actually applied

    @property
    def n(self) -> int:
        return self.gram.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        return cho_solve((self.chol, True), np.asarray(b, dtype=float))

    def solve_refined(self, b: np.ndarray, steps: int = 1) -> np.ndarray:
        """Solve with `steps` rounds of iterative refinement.

        Cuts the forward error on ill-conditioned Grams (short
        lengthscales push the condition number past 1e8, where a single
        Cholesky solve keeps only half the digits).
        """
        b = np.asarray(b, dtype=float)
        x = cho_solve((self.chol, True), b)
        for _ in range(steps):
            x = x + cho_solve((self.chol, True), b - self.gram @ x)
        return x


def _try_cholesky(K: np.ndarray) -> Optional[np.ndarray]:
    try:
        return cholesky(K, lower=True)
    except np.linalg.LinAlgError:
        return None
    except Exception:
        return None


def gram(inputs: List[FunctionalInput], spec: KernelSpec) -> GramFactorization:
    """Assemble and factorize the training Gram matrix.

    The matrix is made exactly symmetric by mirroring the upper
    triangle.  With `spec.nugget` unset, the automatic policy starts at
    1e-8 * sigma2 and escalates tenfold until Cholesky succeeds or the
    1e-4 * sigma2 ceiling is passed, at which point the inputs are
    reported as degenerate.
    """
    if len(inputs) < 1:
        raise FigpError("gram requires at least one input")
    K = kernel_matrix(inputs, inputs, spec)
    K = np.triu(K) + np.triu(K, 1).T
    n = K.shape[0]
    eye = np.eye(n)

    if spec.nugget is not None:
        nuggets = [spec.nugget]
        escalate = False
    else:
        s2 = spec.base.sigma2
        nuggets = [NUGGET_START * s2]
        while nuggets[-1] < NUGGET_CEIL * s2 * (1 - 1e-12):
            nuggets.append(nuggets[-1] * 10.0)
        escalate = True

    for k, nug in enumerate(nuggets):
        Kn = K + nug * eye
        L = _try_cholesky(Kn)
        if L is not None:
            if escalate and k > 0:
                warnings.warn(
                    f"nugget escalated to {nug:.3e} to factorize the Gram",
                    stacklevel=2,
                )
            log_det = float(2.0 * np.sum(np.log(np.diag(L))))
            return GramFactorization(Kn, L, log_det, float(nug))
    raise GramFactorizationError(
        "Cholesky failed at every nugget level; the inputs are degenerate "
        "(duplicated, or linearly dependent under the linear kernel)"
    )
