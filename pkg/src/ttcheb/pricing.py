"""Reference evaluators: basket options under multivariate Black-Scholes
priced by Monte Carlo with a geometric-basket control variate, analytic test
functions, and the two-asset price-surface rank study.

The Monte Carlo pricer is split in two stages. :func:`simulate_gbm_matrix`
draws the lognormal growth factors once; :func:`basket_price_cv` then prices
any initial-value vector against that frozen sample, which makes the price a
deterministic function of ``s0``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import lapack
from scipy.special import ndtr, ndtri

__all__ = [
    "BasketModel",
    "GbmSampleMatrix",
    "CholeskyError",
    "cholesky_factor",
    "make_random_correlation",
    "standard_normals",
    "simulate_gbm_matrix",
    "geometric_cv_mean",
    "basket_price_cv",
    "basket_price_plain",
    "BasketPricer",
    "test_oracle_exp_norm",
    "single_path_surface",
    "singular_values",
    "numerical_rank",
    "RANK_TOL",
]

RANK_TOL = 1e-10


class CholeskyError(np.linalg.LinAlgError):
    """Correlation matrix is not positive definite."""

    def __init__(self, pivot: int):
        super().__init__(f"matrix is not positive definite: leading minor of order {pivot} fails")
        self.pivot = pivot


def cholesky_factor(corr) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == corr``."""
    corr = np.asarray(corr, dtype=float)
    if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
        raise ValueError(f"correlation matrix must be square, got shape {corr.shape}")
    if not np.allclose(corr, corr.T, rtol=0, atol=1e-12):
        raise ValueError("correlation matrix must be symmetric")
    if not np.allclose(np.diag(corr), 1.0, rtol=0, atol=1e-12):
        raise ValueError("correlation matrix must have unit diagonal")
    c, info = lapack.dpotrf(corr, lower=1, clean=1)
    if info > 0:
        raise CholeskyError(int(info))
    if info < 0:
        raise ValueError(f"dpotrf: illegal argument {-info}")
    return c


def make_random_correlation(d: int, seed: int) -> np.ndarray:
    """Random correlation matrix: Gram matrix of ``d`` unit-normalized
    Gaussian vectors in dimension ``d + 2``."""
    if d < 1:
        raise ValueError("d must be positive")
    rng = np.random.Generator(np.random.Philox(seed))
    v = rng.standard_normal((d, d + 2))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    corr = v @ v.T
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    return corr


@dataclass(frozen=True)
class BasketModel:
    rate: float
    sigmas: tuple
    correlation: tuple
    weights: tuple
    strike: float
    maturity: float

    def __post_init__(self):
        sigmas = tuple(float(s) for s in self.sigmas)
        weights = tuple(float(w) for w in self.weights)
        corr = np.asarray(self.correlation, dtype=float)
        d = len(sigmas)
        if d < 1:
            raise ValueError("basket needs at least one asset")
        if len(weights) != d or corr.shape != (d, d):
            raise ValueError("sigmas, weights and correlation disagree on the number of assets")
        if any(s < 0 for s in sigmas):
            raise ValueError("volatilities must be nonnegative")
        if abs(sum(weights) - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {sum(weights)!r}")
        if not self.strike > 0:
            raise ValueError("strike must be positive")
        if not self.maturity > 0:
            raise ValueError("maturity must be positive")
        cholesky_factor(corr)
        object.__setattr__(self, "sigmas", sigmas)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "correlation", tuple(tuple(row) for row in corr.tolist()))
        object.__setattr__(self, "rate", float(self.rate))
        object.__setattr__(self, "strike", float(self.strike))
        object.__setattr__(self, "maturity", float(self.maturity))

    @property
    def d(self) -> int:
        return len(self.sigmas)

    @classmethod
    def equal_weights(cls, d: int, rate: float, sigma: float, strike: float, maturity: float,
                      correlation=None) -> "BasketModel":
        corr = np.eye(d) if correlation is None else correlation
        return cls(rate, (sigma,) * d, corr, (1.0 / d,) * d, strike, maturity)

    @classmethod
    def from_dict(cls, spec: dict) -> "BasketModel":
        """Build from the JSON model description used by the CLI."""
        d = int(spec["d"])
        sigmas = spec["sigmas"]
        if np.isscalar(sigmas):
            sigmas = [sigmas] * d
        if "correlation" in spec:
            corr = spec["correlation"]
            if corr == "identity":
                corr = np.eye(d)
        elif "correlation_seed" in spec:
            corr = make_random_correlation(d, int(spec["correlation_seed"]))
        else:
            corr = np.eye(d)
        weights = spec.get("weights", [1.0 / d] * d)
        return cls(spec.get("r", spec.get("rate", 0.0)), tuple(sigmas), corr, tuple(weights),
                   spec.get("K", spec.get("strike")), spec.get("T", spec.get("maturity")))

    def fingerprint(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class GbmSampleMatrix:
    """Frozen ``(number_sim, d)`` matrix of simulated growth factors."""

    values: np.ndarray = field(repr=False)
    model_hash: str
    seed: int

    @property
    def number_sim(self) -> int:
        return self.values.shape[0]

    def save(self, path: str | Path) -> Path:
        """Raw little-endian float64 (row-major) plus a ``.json`` provenance header."""
        path = Path(path)
        path.write_bytes(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        header = {"model_hash": self.model_hash, "seed": self.seed,
                  "number_sim": self.number_sim, "d": self.values.shape[1], "dtype": "<f8", "order": "C"}
        path.with_name(path.name + ".json").write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "GbmSampleMatrix":
        path = Path(path)
        header = json.loads(path.with_name(path.name + ".json").read_text())
        vals = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(header["number_sim"], header["d"])
        return cls(vals.astype(float), header["model_hash"], int(header["seed"]))


def standard_normals(shape, seed: int) -> np.ndarray:
    """Standard normal variates from a Philox stream via the inverse CDF."""
    rng = np.random.Generator(np.random.Philox(seed))
    u = rng.random(shape)
    # random() can return exactly 0
    u = np.where(u == 0.0, np.finfo(float).tiny, u)
    return ndtri(u)


def simulate_gbm_matrix(model: BasketModel, number_sim: int, seed: int) -> GbmSampleMatrix:
    """``M[i, j] = exp((r - sigma_j^2 / 2) T + sigma_j x_j sqrt(T))`` with ``x = L eps``."""
    if number_sim < 1:
        raise ValueError("number_sim must be positive")
    chol = cholesky_factor(model.correlation)
    eps = standard_normals((number_sim, model.d), seed)
    x = eps @ chol.T
    sig = np.asarray(model.sigmas)
    T = model.maturity
    m = np.exp((model.rate - 0.5 * sig**2) * T + sig * x * np.sqrt(T))
    return GbmSampleMatrix(m, model.fingerprint(), int(seed))


def _log_geometric_moments(model: BasketModel, s0: np.ndarray):
    w = np.asarray(model.weights)
    sig = np.asarray(model.sigmas)
    corr = np.asarray(model.correlation)
    T = model.maturity
    mean = np.log(s0) @ w + np.sum(w * (model.rate - 0.5 * sig**2)) * T
    ws = w * sig
    var = T * float(ws @ corr @ ws)
    return mean, var


def geometric_cv_mean(model: BasketModel, s0) -> float | np.ndarray:
    """Closed-form ``E[(G - K)^+]`` for the geometric basket ``G`` (undiscounted).

    ``s0`` may be one vector or an ``(m, d)`` batch.
    """
    s0 = np.asarray(s0, dtype=float)
    if s0.shape[-1] != model.d:
        raise ValueError(f"s0 has dimension {s0.shape[-1]}, model has {model.d} assets")
    if np.any(s0 <= 0):
        raise ValueError("initial prices must be positive")
    K = model.strike
    m, var = _log_geometric_moments(model, s0)
    if var <= 0.0:
        out = np.maximum(np.exp(m) - K, 0.0)
    else:
        s = np.sqrt(var)
        d1 = (m - np.log(K) + var) / s
        d2 = d1 - s
        out = np.exp(m + 0.5 * var) * ndtr(d1) - K * ndtr(d2)
    return float(out) if np.ndim(out) == 0 else out


def _path_payoffs(model: BasketModel, values: np.ndarray, s0: np.ndarray):
    """Arithmetic and geometric payoffs, shape ``(batch, number_sim)``."""
    w = np.asarray(model.weights)
    K = model.strike
    arith = (values * w) @ s0.T  # (N, B): sum_j w_j s0_j M_ij
    log_geo = np.log(values) @ w  # (N,)
    log_geo = log_geo[:, None] + np.log(s0) @ w  # (N, B)
    payoff = np.maximum(arith - K, 0.0)
    control = np.maximum(np.exp(log_geo) - K, 0.0)
    return payoff.T, control.T


def _check_batch(model: BasketModel, m: GbmSampleMatrix, s0) -> tuple[np.ndarray, bool]:
    s0 = np.asarray(s0, dtype=float)
    single = s0.ndim == 1
    s0 = np.atleast_2d(s0)
    if s0.shape[1] != model.d or m.values.shape[1] != model.d:
        raise ValueError(f"dimension mismatch: s0 has {s0.shape[1]}, sample matrix {m.values.shape[1]}, "
                         f"model {model.d}")
    if np.any(s0 <= 0):
        raise ValueError("initial prices must be positive")
    return s0, single


def basket_price_cv(model: BasketModel, m: GbmSampleMatrix, s0, return_stderr: bool = False):
    """Basket call price with the geometric control variate (coefficient 1).

    Accepts a single ``s0`` or an ``(B, d)`` batch. With ``return_stderr`` the
    standard error of the estimator is returned as well.
    """
    s0, single = _check_batch(model, m, s0)
    payoff, control = _path_payoffs(model, m.values, s0)
    mu_y = np.atleast_1d(geometric_cv_mean(model, s0))
    samples = payoff - (control - mu_y[:, None])
    disc = np.exp(-model.rate * model.maturity)
    price = disc * samples.mean(axis=1)
    if single:
        price = float(price[0])
    if not return_stderr:
        return price
    n = samples.shape[1]
    stderr = disc * samples.std(axis=1, ddof=1) / np.sqrt(n) if n > 1 else np.full(len(s0), np.nan)
    return price, (float(stderr[0]) if single else stderr)


def basket_price_plain(model: BasketModel, m: GbmSampleMatrix, s0, return_stderr: bool = False):
    """Plain Monte Carlo basket call price on the same frozen sample."""
    s0, single = _check_batch(model, m, s0)
    payoff, _ = _path_payoffs(model, m.values, s0)
    disc = np.exp(-model.rate * model.maturity)
    price = disc * payoff.mean(axis=1)
    if single:
        price = float(price[0])
    if not return_stderr:
        return price
    n = payoff.shape[1]
    stderr = disc * payoff.std(axis=1, ddof=1) / np.sqrt(n)
    return price, (float(stderr[0]) if single else stderr)


class BasketPricer:
    """Deterministic ``s0 -> price`` map bound to one frozen sample matrix.

    ``batch`` prices an ``(B, d)`` array in chunks of about two million
    path payoffs so memory stays bounded.
    """

    def __init__(self, model: BasketModel, number_sim: int, seed: int):
        self.model = model
        self.samples = simulate_gbm_matrix(model, number_sim, seed)
        self.chunk = max(1, 2_000_000 // number_sim)

    def __call__(self, s0) -> float:
        return basket_price_cv(self.model, self.samples, np.asarray(s0, dtype=float).reshape(-1))

    def batch(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, self.model.d)
        out = np.empty(len(points))
        for start in range(0, len(points), self.chunk):
            sl = slice(start, start + self.chunk)
            out[sl] = basket_price_cv(self.model, self.samples, points[sl])
        return out


def test_oracle_exp_norm(x) -> float | np.ndarray:
    """``exp(-||x||_2)`` along the last axis."""
    x = np.asarray(x, dtype=float)
    out = np.exp(-np.linalg.norm(x, axis=-1))
    return float(out) if np.ndim(out) == 0 else out


# keep pytest from collecting the oracle as a test
test_oracle_exp_norm.__test__ = False


def single_path_surface(alphas: Sequence[float], strike: float, rate: float, maturity: float,
                        domain=((1.0, 1.5), (1.0, 1.5)), resolution: int = 50) -> np.ndarray:
    """``exp(-rT) (a1 x + a2 y - K)^+`` on an equispaced ``resolution^2`` grid.

    Rows follow the first coordinate, columns the second.
    """
    a1, a2 = (float(a) for a in alphas)
    (x0, x1), (y0, y1) = domain
    x = np.linspace(x0, x1, resolution)
    y = np.linspace(y0, y1, resolution)
    surface = np.maximum(a1 * x[:, None] + a2 * y[None, :] - strike, 0.0)
    return np.exp(-rate * maturity) * surface


def singular_values(matrix) -> np.ndarray:
    return np.linalg.svd(np.asarray(matrix, dtype=float), compute_uv=False)


def numerical_rank(sv: np.ndarray, rel_tol: float = RANK_TOL) -> int:
    """Count of singular values above ``rel_tol`` times the largest; 0 for a zero matrix."""
    sv = np.asarray(sv)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.count_nonzero(sv > rel_tol * sv[0]))
