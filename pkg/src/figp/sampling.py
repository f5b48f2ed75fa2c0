"""Prior sample paths and the quadrature eigendecomposition.

Two sampling routes are provided.  The Gram route factorizes the joint
covariance of the requested inputs and is exact for any kernel.  The
truncated series route applies to the linear kernel only: it expands
the process over the base kernel's eigenpairs, which are obtained by
solving the symmetric eigenproblem of W^{1/2} Psi W^{1/2} on the
quadrature nodes and rescaling the vectors by W^{-1/2} so they are
orthonormal in the weighted inner product.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .domain import FunctionalInput, QuadratureGrid, _check_same_grid
from .errors import FigpError
from .kernels import KernelSpec, MaternParams, base_kernel_matrix, gram

DEFAULT_TRUNCATION = 100


@dataclass(frozen=True)
class EigenSystem:
    """Top-m eigenpairs of the base kernel under the quadrature measure.

    `eigenfunctions` has one column per eigenfunction, evaluated at the
    grid nodes; columns are orthonormal under the grid weights to about
    1e-6.  `tail_mass` is the summed spectrum beyond the truncation and
    bounds the covariance bias of truncated sampling.
    """

    grid: QuadratureGrid
    eigenvalues: np.ndarray  # (m,), descending, positive
    eigenfunctions: np.ndarray  # (n_q, m)
    tail_mass: float

    def __post_init__(self):
        ev = np.ascontiguousarray(self.eigenvalues, dtype=float)
        ef = np.ascontiguousarray(self.eigenfunctions, dtype=float)
        ev.setflags(write=False)
        ef.setflags(write=False)
        object.__setattr__(self, "eigenvalues", ev)
        object.__setattr__(self, "eigenfunctions", ef)
        if ev.ndim != 1 or ef.shape != (self.grid.n_points, ev.size):
            raise FigpError("eigensystem shapes are inconsistent")
        if np.any(np.diff(ev) > 0) or np.any(ev <= 0):
            raise FigpError("eigenvalues must be positive and descending")

    @property
    def truncation(self) -> int:
        return self.eigenvalues.size

    def coefficients(self, g: FunctionalInput) -> np.ndarray:
        """Weighted projections <phi_j, g> for all retained j."""
        _check_same_grid_obj(self.grid, g)
        return (self.grid.weights * g.values) @ self.eigenfunctions


def _check_same_grid_obj(grid: QuadratureGrid, g: FunctionalInput):
    if grid != g.grid:
        raise FigpError("input grid does not match the eigensystem grid")


def nystrom_eig(params: MaternParams, grid: QuadratureGrid,
                m: Optional[int] = None) -> EigenSystem:
    """Quadrature eigendecomposition of the base kernel, truncated to m.

    Eigenvalues at or below numerical zero (relative 1e-14 of the
    largest) are dropped, so the returned truncation can be smaller
    than requested when the trailing spectrum has underflowed.
    """
    if m is None:
        m = min(grid.n_points, DEFAULT_TRUNCATION)
    if not 1 <= m <= grid.n_points:
        raise FigpError(f"truncation m={m} must lie in [1, {grid.n_points}]")
    psi = base_kernel_matrix(grid.nodes, grid.nodes, params)
    sw = np.sqrt(grid.weights)
    B = sw[:, None] * psi * sw[None, :]
    B = 0.5 * (B + B.T)
    evals, evecs = np.linalg.eigh(B)
    evals = evals[::-1]
    evecs = evecs[:, ::-1]
    floor = 1e-14 * max(evals[0], 0.0)
    keep = min(m, int(np.sum(evals > floor)))
    if keep < 1:
        raise FigpError("base kernel matrix is numerically rank zero")
    total = float(np.sum(np.clip(evals, 0.0, None)))
    tail = total - float(np.sum(evals[:keep]))
    phi = evecs[:, :keep] / sw[:, None]
    return EigenSystem(grid, evals[:keep], phi, max(tail, 0.0))


@dataclass(frozen=True)
class PathFamily:
    """Sampled process values over an indexed family of inputs."""

    index_values: np.ndarray  # (n_inputs,)
    inputs: Tuple[FunctionalInput, ...]
    draws: np.ndarray  # (n_paths, n_inputs)
    seed: int
    params: dict  # parameter set recorded for the CSV header

    def __post_init__(self):
        iv = np.ascontiguousarray(self.index_values, dtype=float)
        dr = np.ascontiguousarray(self.draws, dtype=float)
        iv.setflags(write=False)
        dr.setflags(write=False)
        object.__setattr__(self, "index_values", iv)
        object.__setattr__(self, "draws", dr)
        object.__setattr__(self, "inputs", tuple(self.inputs))
        if dr.shape[1] != iv.size or iv.size != len(self.inputs):
            raise FigpError("path family shapes are inconsistent")
        if not np.all(np.isfinite(dr)):
            raise FigpError("path draws contain non-finite values")

    @property
    def n_paths(self) -> int:
        return self.draws.shape[0]


def _resolve_index(inputs, index_values):
    if index_values is None:
        return np.arange(len(inputs), dtype=float)
    iv = np.asarray(index_values, dtype=float)
    if iv.size != len(inputs):
        raise FigpError("index_values length must match the inputs")
    return iv


def sample_paths_gram(inputs: Sequence[FunctionalInput], spec: KernelSpec,
                      n_paths: int, seed: int,
                      index_values=None) -> PathFamily:
    """Draw joint sample paths through the Gram factorization.

    Draw matrix rows are Z L^T with Z standard normal from
    numpy's default generator seeded with `seed`; the draw covariance
    targets the kernel matrix of the inputs (plus the nugget diagonal).
    """
    inputs = list(inputs)
    if n_paths < 1:
        raise FigpError("n_paths must be positive")
    fact = gram(inputs, spec)
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n_paths, len(inputs)))
    draws = Z @ fact.chol.T
    params = _spec_params(spec, seed)
    return PathFamily(_resolve_index(inputs, index_values), inputs, draws,
                      int(seed), params)


def sample_paths_kl(eigensystem: EigenSystem,
                    inputs: Sequence[FunctionalInput], n_paths: int,
                    seed: int, index_values=None) -> PathFamily:
    """Draw sample paths from the truncated eigen-expansion.

    Each draw is sum_j sqrt(lambda_j) <phi_j, g> Z_j over the retained
    eigenpairs; valid for the linear kernel, whose covariance the
    expansion reproduces up to the recorded tail mass.
    """
    inputs = list(inputs)
    if eigensystem.truncation < 1:
        raise FigpError("eigensystem has no retained terms")
    if n_paths < 1:
        raise FigpError("n_paths must be positive")
    coeff = np.column_stack([eigensystem.coefficients(g) for g in inputs])
    C = np.sqrt(eigensystem.eigenvalues)[:, None] * coeff  # (m, n_inputs)
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n_paths, eigensystem.truncation))
    draws = Z @ C
    params = {"truncation": eigensystem.truncation,
              "tail_mass": eigensystem.tail_mass, "seed": int(seed)}
    return PathFamily(_resolve_index(inputs, index_values), inputs, draws,
                      int(seed), params)


def _spec_params(spec: KernelSpec, seed) -> dict:
    params = {"family": spec.family, "nu": spec.base.nu,
              "sigma2": spec.base.sigma2, "seed": int(seed)}
    if spec.family == "linear":
        params["theta"] = ",".join(f"{t:g}" for t in spec.base.lengthscales)
    else:
        params["gamma"] = spec.gamma
    return params


def sine_frequency_family(grid: QuadratureGrid, alphas) -> List[FunctionalInput]:
    """The sin(alpha x) family on a 1-d grid, one input per frequency."""
    if grid.domain.dim != 1:
        raise FigpError("the sine frequency family is one-dimensional")
    alphas = np.asarray(alphas, dtype=float)
    x = grid.nodes[:, 0]
    return [
        FunctionalInput(grid, np.sin(a * x), label=f"sin({a:g}*x1)")
        for a in alphas
    ]
