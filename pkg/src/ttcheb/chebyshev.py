"""Tensorized Chebyshev interpolation on hyperrectangles, with the
coefficient tensor held in TT format.

Grid nodes are ``cos(pi * k / n)`` for ``k = 0..n`` (so the first node is the
upper end of the interval), mapped affinely onto each parameter interval.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.fft import dct

from .tt_core import TTTensor, inner_product, load_ttc, mode_multiply, rank_one, save_ttc

__all__ = [
    "Domain",
    "ChebyshevGrid",
    "Interpolant",
    "ExtrapolationError",
    "chebyshev_nodes",
    "grid_point",
    "build_coeff_matrix",
    "apply_coeff_transform",
    "coeffs_from_values",
    "chebyshev_values",
    "basis_rank_one",
    "evaluate",
    "evaluate_batch",
    "evaluate_dense_oracle",
    "save_interpolant",
    "load_interpolant",
]

DENSE_ORACLE_LIMIT = 10**6


class ExtrapolationError(ValueError):
    """Raised when a parameter point lies outside the interpolation domain."""


@dataclass(frozen=True)
class Domain:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        if len(lower) != len(upper) or not lower:
            raise ValueError("lower and upper bounds must be nonempty and of equal length")
        for i, (a, b) in enumerate(zip(lower, upper)):
            if not a < b:
                raise ValueError(f"interval {i + 1} is empty or reversed: [{a}, {b}]")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def from_intervals(cls, intervals: Sequence[Sequence[float]]) -> "Domain":
        return cls(tuple(a for a, _ in intervals), tuple(b for _, b in intervals))

    @classmethod
    def cube(cls, lower: float, upper: float, d: int) -> "Domain":
        return cls((lower,) * d, (upper,) * d)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def intervals(self) -> list[list[float]]:
        return [[a, b] for a, b in zip(self.lower, self.upper)]

    def to_reference(self, p: np.ndarray) -> np.ndarray:
        """Affine pullback onto ``[-1, 1]^d`` (works on the last axis)."""
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return (2.0 * np.asarray(p, dtype=float) - (lo + hi)) / (hi - lo)

    def from_reference(self, q: np.ndarray) -> np.ndarray:
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return lo + (np.asarray(q, dtype=float) + 1.0) / 2.0 * (hi - lo)


def chebyshev_nodes(n: int) -> np.ndarray:
    """Reference nodes ``cos(pi k / n)``, ``k = 0..n``; ``n = 0`` gives ``[1]``."""
    if n < 0:
        raise ValueError("interpolation order must be nonnegative")
    if n == 0:
        return np.ones(1)
    return np.cos(np.pi * np.arange(n + 1) / n)


@dataclass(frozen=True)
class ChebyshevGrid:
    orders: tuple
    domain: Domain

    def __post_init__(self):
        orders = tuple(int(n) for n in self.orders)
        if any(n < 0 for n in orders):
            raise ValueError(f"orders must be nonnegative, got {orders}")
        if len(orders) != self.domain.dim:
            raise ValueError(f"{len(orders)} orders given for a {self.domain.dim}-dimensional domain")
        object.__setattr__(self, "orders", orders)

    @property
    def dim(self) -> int:
        return len(self.orders)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(n + 1 for n in self.orders)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=object))

    def nodes(self, i: int) -> np.ndarray:
        """Nodes of dimension ``i`` (0-based) mapped into the domain."""
        lo, hi = self.domain.lower[i], self.domain.upper[i]
        return lo + (chebyshev_nodes(self.orders[i]) + 1.0) / 2.0 * (hi - lo)

    def points(self, indices: np.ndarray) -> np.ndarray:
        """Parameter points for an ``(m, d)`` array of 1-based grid indices."""
        indices = np.asarray(indices, dtype=np.intp).reshape(-1, self.dim)
        if indices.size and (np.any(indices < 1) or np.any(indices > np.asarray(self.shape))):
            raise IndexError("grid index out of bounds")
        out = np.empty(indices.shape)
        for i in range(self.dim):
            out[:, i] = self.nodes(i)[indices[:, i] - 1]
        return out


def grid_point(grid: ChebyshevGrid, idx: Sequence[int]) -> np.ndarray:
    """Parameter vector at the 1-based grid multi-index ``idx``."""
    idx = tuple(int(i) for i in idx)
    if len(idx) != grid.dim:
        raise IndexError(f"multi-index has length {len(idx)}, grid has dimension {grid.dim}")
    if any(not 1 <= i <= m for i, m in zip(idx, grid.shape)):
        raise IndexError(f"multi-index {idx} out of bounds for grid shape {grid.shape}")
    return grid.points(np.array([idx]))[0]


def build_coeff_matrix(n: int) -> np.ndarray:
    """Dense ``(n+1) x (n+1)`` matrix mapping node values to Chebyshev coefficients."""
    if n < 0:
        raise ValueError("interpolation order must be nonnegative")
    if n == 0:
        return np.ones((1, 1))
    w = np.ones(n + 1)
    w[0] = w[-1] = 0.5
    j = np.arange(n + 1)
    return (2.0 / n) * np.outer(w, w) * np.cos(np.pi * np.outer(j, j) / n)


def _dct_coeffs(values: np.ndarray, n: int, axis: int) -> np.ndarray:
    """Same map as ``build_coeff_matrix(n)`` along ``axis``, via DCT-I.

    ``dct(type=1)`` returns ``v_0 + (-1)^j v_n + 2 * sum_interior``, i.e. twice
    the halved-endpoint cosine sum, so only the row weights remain.
    """
    if n == 0:
        return np.array(values, dtype=float)
    w = np.ones(n + 1)
    w[0] = w[-1] = 0.5
    shape = [1] * values.ndim
    shape[axis] = n + 1
    return dct(values, type=1, axis=axis) * (w / n).reshape(shape)


def apply_coeff_transform(values: TTTensor, orders: Sequence[int], method: str = "fft") -> TTTensor:
    """Mode-wise coefficient transform of a TT value tensor.

    ``method="fft"`` uses a DCT-I per core, ``method="dense"`` multiplies by
    :func:`build_coeff_matrix`. Matrices are built once per distinct order.
    """
    orders = [int(n) for n in orders]
    if values.dims != tuple(n + 1 for n in orders):
        raise ValueError(f"value tensor dims {values.dims} do not match orders {tuple(orders)}")
    if method == "dense":
        cache: dict[int, np.ndarray] = {}
        out = values
        for mu, n in enumerate(orders, start=1):
            if n not in cache:
                cache[n] = build_coeff_matrix(n)
            out = mode_multiply(out, mu, cache[n])
        return out
    if method == "fft":
        return TTTensor([_dct_coeffs(c, n, axis=1) for c, n in zip(values.cores, orders)])
    raise ValueError(f"unknown transform method {method!r}")


@dataclass(frozen=True)
class Interpolant:
    """Chebyshev coefficient tensor in TT format bound to its grid."""

    coeffs: TTTensor
    grid: ChebyshevGrid

    def __post_init__(self):
        if self.coeffs.dims != self.grid.shape:
            raise ValueError(f"coefficient dims {self.coeffs.dims} do not match grid shape {self.grid.shape}")

    def __call__(self, p, allow_extrapolation: bool = False) -> float:
        return evaluate(self, p, allow_extrapolation=allow_extrapolation)


def coeffs_from_values(values: TTTensor, grid: ChebyshevGrid, method: str = "fft") -> Interpolant:
    """Interpolant from the tensor of values on the Chebyshev grid."""
    if values.dims != grid.shape:
        raise ValueError(f"value tensor dims {values.dims} do not match grid shape {grid.shape}")
    return Interpolant(apply_coeff_transform(values, grid.orders, method=method), grid)


def chebyshev_values(x: np.ndarray, n: int) -> np.ndarray:
    """``T_0(x), ..., T_n(x)`` along a new last axis (three-term recurrence)."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (n + 1,))
    out[..., 0] = 1.0
    if n >= 1:
        out[..., 1] = x
    for j in range(1, n):
        out[..., j + 1] = 2.0 * x * out[..., j] - out[..., j - 1]
    return out


def _reference_point(grid: ChebyshevGrid, p, allow_extrapolation: bool) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != grid.dim:
        raise ValueError(f"parameter has dimension {p.shape[-1]}, interpolant expects {grid.dim}")
    q = grid.domain.to_reference(p)
    # small tolerance so that grid points mapped back and forth stay inside
    if not allow_extrapolation and np.any(np.abs(q) > 1.0 + 1e-12):
        raise ExtrapolationError(f"point {p.tolist()} lies outside the domain {grid.domain.intervals}")
    if not allow_extrapolation:
        q = np.clip(q, -1.0, 1.0)
    return q


def basis_rank_one(grid: ChebyshevGrid, p, allow_extrapolation: bool = False) -> TTTensor:
    """Rank-one TT tensor of Chebyshev basis values at the parameter ``p``."""
    q = _reference_point(grid, np.asarray(p, dtype=float).reshape(-1), allow_extrapolation)
    return rank_one([chebyshev_values(qi, n) for qi, n in zip(q, grid.orders)])


def evaluate(interp: Interpolant, p, allow_extrapolation: bool = False) -> float:
    """Interpolated value at ``p``: inner product of coefficients and basis tensor."""
    return inner_product(interp.coeffs, basis_rank_one(interp.grid, p, allow_extrapolation))


def evaluate_batch(interp: Interpolant, points: np.ndarray, allow_extrapolation: bool = False) -> np.ndarray:
    """Vectorized :func:`evaluate` over an ``(m, d)`` array of points."""
    points = np.asarray(points, dtype=float).reshape(-1, interp.grid.dim)
    q = _reference_point(interp.grid, points, allow_extrapolation)
    v = np.ones((points.shape[0], 1))
    for mu, (core, n) in enumerate(zip(interp.coeffs.cores, interp.grid.orders)):
        t = chebyshev_values(q[:, mu], n)  # (m, n+1)
        v = np.einsum("ma,mn,anb->mb", v, t, core, optimize=True)
    return v[:, 0]


def evaluate_dense_oracle(values: np.ndarray, grid: ChebyshevGrid, p) -> float:
    """Interpolated value computed literally from the coefficient and
    interpolation formulas (halved-endpoint sums, ``cos(j arccos x)``).
    Only for small grids; used to cross-check the TT route."""
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise ValueError(f"values of shape {values.shape} do not match grid shape {grid.shape}")
    if values.size > DENSE_ORACLE_LIMIT:
        raise ValueError(f"dense oracle refused for {values.size} > {DENSE_ORACLE_LIMIT} entries")
    q = _reference_point(grid, np.asarray(p, dtype=float).reshape(-1), False)
    d = grid.dim
    # precompute per-dimension weighted cosine tables
    tables = []
    for n in grid.orders:
        if n == 0:
            tables.append(np.ones((1, 1)))
            continue
        tab = np.empty((n + 1, n + 1))
        for j in range(n + 1):
            scale = (2.0 if 0 < j < n else 1.0) / n
            for k in range(n + 1):
                halve = 0.5 if k in (0, n) else 1.0
                tab[j, k] = scale * halve * np.cos(j * np.pi * k / n)
        tables.append(tab)
    letters = "abcdefghijklm"
    if d > len(letters):
        raise ValueError("dense oracle supports at most 13 dimensions")
    j_sub, k_sub = letters[:d], letters[:d].upper()
    # full multilinear sum over all grid nodes at once
    spec = ",".join(f"{j}{k}" for j, k in zip(j_sub, k_sub)) + f",{k_sub}->{j_sub}"
    coeffs = np.einsum(spec, *tables, values)
    basis = [np.cos(np.arange(n + 1) * np.arccos(qi)) for qi, n in zip(q, grid.orders)]
    spec = f"{j_sub}," + ",".join(j_sub) + "->"
    result = np.einsum(spec, coeffs, *basis)
    return float(result)


def save_interpolant(interp: Interpolant, path: str | Path) -> Path:
    extra = {"orders": list(interp.grid.orders), "domain": interp.grid.domain.intervals}
    return save_ttc(interp.coeffs, path, extra=extra)


def load_interpolant(path: str | Path) -> Interpolant:
    path = Path(path)
    meta = json.loads(path.with_name(path.name + ".json").read_text())
    grid = ChebyshevGrid(tuple(meta["orders"]), Domain.from_intervals(meta["domain"]))
    return Interpolant(load_ttc(path), grid)
