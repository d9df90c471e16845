"""Low-rank TT completion from sampled entries, with adaptive ranks and
adaptive sampling.

The fixed-rank problem (least squares on the sampled entries over tensors of
prescribed TT ranks) is solved by alternating least squares over the cores.
:func:`adaptive_rank` grows the ranks one position at a time while the error
on a held-out test set keeps improving, and :func:`adaptive_sampling` grows
the training set by folding in successive test sets.
"""

from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .seeding import derive_rng
from .tt_core import TTTensor, _entries0, orthogonalize, storage_bytes, tt_norm, tt_round

__all__ = [
    "SampleSet",
    "CompletionConfig",
    "CompletionResult",
    "StopReason",
    "OracleError",
    "ZeroReferenceError",
    "relative_error_on_set",
    "solve_fixed_rank",
    "increase_rank",
    "adaptive_rank",
    "adaptive_sampling",
    "evaluate_oracle",
    "tt_dof",
    "PERTURBATION_SCALE",
]

log = logging.getLogger(__name__)

PERTURBATION_SCALE = 1e-4
EntryOracle = Callable[[tuple], float]


class OracleError(RuntimeError):
    """The entry oracle failed; ``index`` is the 1-based multi-index involved."""

    def __init__(self, index, cause: BaseException | str):
        super().__init__(f"oracle failed at index {index}: {cause}")
        self.index = index
        self.cause = cause


class ZeroReferenceError(ZeroDivisionError):
    """Relative error requested on a set whose reference values are all zero."""


class StopReason(str, enum.Enum):
    TOLERANCE_MET = "tolerance_met"
    ERROR_STAGNATED = "error_stagnated"
    RANK_CAP_HIT = "rank_cap_hit"
    SAMPLING_BUDGET_EXHAUSTED = "sampling_budget_exhausted"


@dataclass(eq=False)
class SampleSet:
    """Sampled entries: an ``(m, d)`` array of 1-based indices and their values."""

    indices: np.ndarray
    values: np.ndarray
    role: str = "training"

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.intp)
        if self.indices.ndim == 1:
            self.indices = self.indices.reshape(-1, 1) if self.indices.size else self.indices.reshape(0, 0)
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if len(self.indices) != len(self.values):
            raise ValueError("indices and values differ in length")
        if len(self.indices) and len(np.unique(self.indices, axis=0)) != len(self.indices):
            raise ValueError("multi-indices in a sample set must be unique")

    def __len__(self) -> int:
        return len(self.values)

    def keys(self) -> set:
        return set(map(tuple, self.indices.tolist()))

    def union(self, other: "SampleSet", role: str | None = None) -> "SampleSet":
        if len(self) == 0:
            return SampleSet(other.indices.copy(), other.values.copy(), role or self.role)
        if len(other) == 0:
            return SampleSet(self.indices.copy(), self.values.copy(), role or self.role)
        return SampleSet(np.vstack([self.indices, other.indices]),
                         np.concatenate([self.values, other.values]), role or self.role)

    def isdisjoint(self, other: "SampleSet") -> bool:
        return self.keys().isdisjoint(other.keys())


@dataclass(frozen=True)
class CompletionConfig:
    """Parameters of the adaptive completion.

    ``tol`` or ``tol_prime`` set to ``None`` disables that stopping
    criterion; ``stop_on_rank_cap=False`` disables the rank-cap criterion.
    """

    delta: float = 1e-4
    rho: float = 0.0
    tol: float | None = 1e-2
    tol_prime: float | None = 1e-8
    r_max: int = 5
    p: float = 0.1
    initial_size: int = 100
    test_set_size: int = 100
    gamma_size: int = 0
    strategy: int = 1
    max_inner_iterations: int = 250
    rng_seed: int = 0
    stop_on_rank_cap: bool = True
    ridge: float = 1e-10
    workers: int = 1

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.rho < 0:
            raise ValueError("rho must be nonnegative")
        for name in ("tol", "tol_prime"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive or None")
        if self.r_max < 1:
            raise ValueError("r_max must be a positive integer")
        if not 0 < self.p <= 1:
            raise ValueError("p must lie in (0, 1]")
        if self.initial_size < 1 or self.test_set_size < 1:
            raise ValueError("initial_size and test_set_size must be positive")
        if self.gamma_size < 0:
            raise ValueError("gamma_size must be nonnegative")
        if self.strategy not in (1, 2):
            raise ValueError("strategy must be 1 or 2")
        if self.strategy == 2 and self.gamma_size < 1:
            raise ValueError("strategy 2 needs gamma_size > 0")
        if self.max_inner_iterations < 1:
            raise ValueError("max_inner_iterations must be positive")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")

    @classmethod
    def from_dict(cls, d: dict) -> "CompletionConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown completion settings: {sorted(unknown)}")
        return cls(**d)


@dataclass
class CompletionResult:
    tensor: TTTensor
    final_training_set: SampleSet
    error_history: list
    rank_history: list
    stop_reason: StopReason
    test_set: SampleSet | None = None
    gamma_set: SampleSet | None = None
    warnings: list = field(default_factory=list)
    rounds: list = field(default_factory=list)

    def report(self) -> dict:
        tt_b, full_b = storage_bytes(self.tensor)
        return {
            "stop_reason": self.stop_reason.value,
            "final_training_size": len(self.final_training_set),
            "final_error": self.error_history[-1][1],
            "error_history": [[int(n), float(e)] for n, e in self.error_history],
            "rank_history": [list(r) for r in self.rank_history],
            "final_ranks": list(self.tensor.ranks),
            "max_rank": self.tensor.max_rank,
            "storage_bytes": {"tt": tt_b, "full": full_b},
            "warnings": list(self.warnings),
            "rounds": self.rounds,
        }


def tt_dof(dims: Sequence[int], ranks: Sequence[int]) -> int:
    """Dimension of the manifold of tensors with the given TT ranks."""
    d = len(dims)
    return sum(ranks[mu] * dims[mu] * ranks[mu + 1] for mu in range(d)) - sum(r * r for r in ranks[1:d])


def relative_error_on_set(x: TTTensor, s: SampleSet) -> float:
    """``||(A - x) on s|| / ||A on s||`` in the 2-norm."""
    if len(s) == 0:
        raise ValueError("relative error on an empty set")
    ref = np.linalg.norm(s.values)
    if ref == 0.0:
        raise ZeroReferenceError("reference values on the set are all zero")
    approx = _entries0(x, s.indices - 1)
    return float(np.linalg.norm(s.values - approx) / ref)


# ----------------------------------------------------------------------
# Fixed-rank solver (ALS)
# ----------------------------------------------------------------------

def _slice_groups(idx0: np.ndarray, dims: Sequence[int]) -> list[list[np.ndarray]]:
    """Per mode, the sample rows belonging to each slice index."""
    groups = []
    for mu, n in enumerate(dims):
        col = idx0[:, mu]
        order = np.argsort(col, kind="stable")
        bounds = np.searchsorted(col[order], np.arange(n + 1))
        groups.append([order[bounds[k]:bounds[k + 1]] for k in range(n)])
    return groups


def _solve_core(core: np.ndarray, left: np.ndarray, right: np.ndarray, values: np.ndarray,
                rows_by_slice: list[np.ndarray], ridge: float) -> np.ndarray:
    """Least-squares update of one core, slice by slice."""
    r0, n, r1 = core.shape
    p = r0 * r1
    feats = (left[:, :, None] * right[:, None, :]).reshape(len(values), p)
    gram = np.zeros((n, p, p))
    rhs = np.zeros((n, p))
    has_data = np.zeros(n, dtype=bool)
    for k, rows in enumerate(rows_by_slice):
        if rows.size == 0:
            continue
        a = feats[rows]
        gram[k] = a.T @ a
        rhs[k] = a.T @ values[rows]
        has_data[k] = True
    new = core.copy()
    if not has_data.any():
        return new
    g = gram[has_data]
    scale = np.trace(g, axis1=1, axis2=2) / p
    scale = np.where(scale > 0, scale, 1.0)
    g = g + (ridge * scale)[:, None, None] * np.eye(p)
    try:
        sol = np.linalg.solve(g, rhs[has_data][:, :, None])[:, :, 0]
    except np.linalg.LinAlgError:
        sol = np.stack([np.linalg.lstsq(gi, bi, rcond=None)[0] for gi, bi in zip(g, rhs[has_data])])
    new[:, has_data, :] = sol.reshape(-1, r0, r1).transpose(1, 0, 2)
    return new


def _gathered(core: np.ndarray, col: np.ndarray) -> np.ndarray:
    return core[:, col, :]  # (r0, m, r1)


def _als_sweep(cores: list[np.ndarray], idx0: np.ndarray, values: np.ndarray,
               groups: list, ridge: float) -> list[np.ndarray]:
    """One left-to-right plus right-to-left ALS sweep.

    Expects ``cores[1:]`` right-orthogonal on entry; leaves ``cores[1:]``
    right-orthogonal on exit, so sweeps can be chained.
    """
    d = len(cores)
    m = len(values)
    cores = list(cores)
    right = [None] * (d + 1)
    right[d] = np.ones((m, 1))
    for mu in range(d - 1, 0, -1):
        right[mu] = np.einsum("amb,mb->ma", _gathered(cores[mu], idx0[:, mu]), right[mu + 1])
    left = [None] * (d + 1)
    left[0] = np.ones((m, 1))

    order = list(range(d)) + list(range(d - 2, -1, -1))
    for step, mu in enumerate(order):
        forward = step < d
        cores[mu] = _solve_core(cores[mu], left[mu], right[mu + 1], values, groups[mu], ridge)
        r0, n, r1 = cores[mu].shape
        if forward and mu < d - 1:
            q, r = np.linalg.qr(cores[mu].reshape(r0 * n, r1, order="F"))
            if q.shape[1] < r1:
                # keep the rank chain: pad Q and R with zero columns/rows
                q = np.hstack([q, np.zeros((q.shape[0], r1 - q.shape[1]))])
                r = np.vstack([r, np.zeros((r1 - r.shape[0], r1))])
            cores[mu] = q.reshape(r0, n, r1, order="F")
            cores[mu + 1] = np.einsum("ab,bnc->anc", r, cores[mu + 1])
            left[mu + 1] = np.einsum("ma,amb->mb", left[mu], _gathered(cores[mu], idx0[:, mu]))
        elif not forward and mu > 0 or (forward and mu == d - 1 and d > 1):
            q, r = np.linalg.qr(cores[mu].reshape(r0, n * r1, order="F").T)
            if q.shape[1] < r0:
                q = np.hstack([q, np.zeros((q.shape[0], r0 - q.shape[1]))])
                r = np.vstack([r, np.zeros((r0 - r.shape[0], r0))])
            cores[mu] = q.T.reshape(r0, n, r1, order="F")
            cores[mu - 1] = np.einsum("anb,bc->anc", cores[mu - 1], r.T)
            right[mu] = np.einsum("amb,mb->ma", _gathered(cores[mu], idx0[:, mu]), right[mu + 1])
    return cores


def _rel_change(old: float, new: float) -> float:
    if old == 0.0:
        return 0.0 if new == 0.0 else math.inf
    return abs(old - new) / abs(old)


def solve_fixed_rank(train: SampleSet, test: SampleSet | None, start: TTTensor,
                     cfg: CompletionConfig, trace: list | None = None) -> TTTensor:
    """Fit a tensor with the TT ranks of ``start`` to the training entries.

    Alternating least squares sweeps, stopped once the relative changes of
    both the training and the test error drop below ``cfg.delta`` or after
    ``cfg.max_inner_iterations`` sweeps. A sweep that would increase the
    training error is discarded, so the result never fits worse than
    ``start``. If ``trace`` is given, ``(train_err, test_err)`` pairs are
    appended to it per accepted sweep.
    """
    if len(train) == 0:
        raise ValueError("training set is empty")
    if train.indices.shape[1] != start.order:
        raise ValueError("training indices do not match the tensor order")
    idx0 = train.indices - 1
    groups = _slice_groups(idx0, start.dims)
    use_test = test is not None and len(test) > 0

    def errors(x: TTTensor) -> tuple[float, float]:
        e_tr = relative_error_on_set(x, train)
        e_te = relative_error_on_set(x, test) if use_test else 0.0
        return e_tr, e_te

    x = start
    e_tr, e_te = errors(x)
    if trace is not None:
        trace.append((e_tr, e_te))
    if e_tr == 0.0:
        return x
    cores = orthogonalize(x, 0)
    if tuple(c.shape[2] for c in cores) != tuple(x.ranks[1:]):
        # rank-deficient shapes collapse under QR; keep the original chain
        cores = list(x.cores)
    for _ in range(cfg.max_inner_iterations):
        new_cores = _als_sweep(cores, idx0, train.values, groups, cfg.ridge)
        x_new = TTTensor(new_cores)
        n_tr, n_te = errors(x_new)
        if not np.isfinite(n_tr) or n_tr > e_tr * (1.0 + 1e-12) + 1e-300:
            break
        stalled = _rel_change(e_tr, n_tr) < cfg.delta and (not use_test or _rel_change(e_te, n_te) < cfg.delta)
        x, cores, e_tr, e_te = x_new, new_cores, n_tr, n_te
        if trace is not None:
            trace.append((e_tr, e_te))
        if stalled or e_tr == 0.0:
            break
    return x


# ----------------------------------------------------------------------
# Rank adaptivity
# ----------------------------------------------------------------------

def increase_rank(x: TTTensor, mu: int, rng: np.random.Generator | None = None) -> TTTensor:
    """Return ``x`` with the ``mu``-th rank (1-based, interior) raised by one.

    The tensor is first orthogonalized around core ``mu``; a new column of
    uniform noise with Frobenius norm ``PERTURBATION_SCALE * ||x||`` is
    appended to core ``mu`` and a new row of norm ``5e-3`` to core ``mu + 1``.
    The reconstruction moves by ``5e-7 * ||x||`` in the 2-norm.
    """
    d = x.order
    if not 1 <= mu <= d - 1:
        raise ValueError(f"rank position must lie in [1, {d - 1}], got {mu}")
    rng = np.random.default_rng() if rng is None else rng
    ranks = x.ranks
    dims = x.dims
    new_r = ranks[mu] + 1
    left_cap = int(np.prod(dims[:mu], dtype=object))
    right_cap = int(np.prod(dims[mu:], dtype=object))
    local_cap = min(ranks[mu - 1] * dims[mu - 1], dims[mu] * ranks[mu + 1])
    if new_r > min(left_cap, right_cap, local_cap):
        raise ValueError(f"rank {new_r} at position {mu} is infeasible for dims {dims} and ranks {ranks}")

    cores = orthogonalize(x, mu - 1)
    if tuple(c.shape[2] for c in cores) != tuple(ranks[1:]):
        cores = [c.copy() for c in x.cores]
    norm = float(np.linalg.norm(cores[mu - 1])) or 1.0

    a = cores[mu - 1]
    col = rng.uniform(-1.0, 1.0, size=(a.shape[0], a.shape[1], 1))
    col *= PERTURBATION_SCALE * norm / np.linalg.norm(col)
    cores[mu - 1] = np.concatenate([a, col], axis=2)

    b = cores[mu]
    row = rng.uniform(-1.0, 1.0, size=(1, b.shape[1], b.shape[2]))
    row *= 5e-3 / np.linalg.norm(row)
    cores[mu] = np.concatenate([b, row], axis=0)
    return TTTensor(cores)


def adaptive_rank(train: SampleSet, test: SampleSet, cfg: CompletionConfig, start: TTTensor,
                  rng: np.random.Generator | None = None, log_steps: list | None = None) -> TTTensor:
    """Greedy cyclic rank increase, keeping a step only if the test error
    drops by more than ``cfg.rho``.

    Stops when ``d - 1`` consecutive increases were rejected or some rank
    reaches ``cfg.r_max``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    d = start.order
    x = solve_fixed_rank(train, test, start, cfg)
    err = relative_error_on_set(x, test)
    locked = 0
    mu = 1
    while d > 1 and locked < d - 1 and max(x.ranks) < cfg.r_max:
        if err == 0.0:
            break
        try:
            x_new = increase_rank(x, mu, rng)
        except ValueError:
            locked += 1
            mu = 1 + (mu % (d - 1))
            continue
        x_new = solve_fixed_rank(train, test, x_new, cfg)
        err_new = relative_error_on_set(x_new, test)
        accepted = not (err_new - err > -cfg.rho)
        if log_steps is not None:
            log_steps.append({"mu": mu, "ranks": list(x_new.ranks), "test_error": err_new, "accepted": accepted})
        if accepted:
            locked = 0
            x, err = x_new, err_new
        else:
            locked += 1
        mu = 1 + (mu % (d - 1))
    return x


# ----------------------------------------------------------------------
# Adaptive sampling
# ----------------------------------------------------------------------

_ENUMERATE_LIMIT = 10**7


def _draw_indices(rng: np.random.Generator, dims: Sequence[int], k: int, used: set) -> np.ndarray:
    """``k`` distinct 1-based multi-indices, uniformly from those not in ``used``."""
    d = len(dims)
    total = math.prod(dims)
    if k > total - len(used):
        raise ValueError(f"cannot draw {k} new indices: only {total - len(used)} of {total} remain")
    if k == 0:
        return np.zeros((0, d), dtype=np.intp)
    if total <= _ENUMERATE_LIMIT:
        strides = np.cumprod([1] + list(dims[:-1]))
        if used:
            used_arr = np.array(sorted(used), dtype=np.int64) - 1
            used_lin = np.sort(used_arr @ strides)
            # free linear positions; colex linearization
            free = np.setdiff1d(np.arange(total, dtype=np.int64), used_lin, assume_unique=True)
        else:
            free = np.arange(total, dtype=np.int64)
        pick = np.sort(rng.choice(free, size=k, replace=False))
        pick = rng.permutation(pick)
        out = np.empty((k, d), dtype=np.intp)
        rem = pick
        for mu, n in enumerate(dims):
            out[:, mu] = rem % n
            rem = rem // n
        return out + 1
    out = []
    seen = set(used)
    while len(out) < k:
        cand = tuple(int(rng.integers(1, n + 1)) for n in dims)
        if cand not in seen:
            seen.add(cand)
            out.append(cand)
    return np.array(out, dtype=np.intp)


def evaluate_oracle(oracle, indices: np.ndarray, workers: int = 1) -> np.ndarray:
    """Oracle values at an ``(m, d)`` array of 1-based indices, in input order.

    Uses ``oracle.batch(indices)`` when available; otherwise calls the oracle
    once per index, optionally on a thread pool.
    """
    indices = np.asarray(indices, dtype=np.intp)
    if len(indices) == 0:
        return np.zeros(0)
    batch = getattr(oracle, "batch", None)
    if batch is not None:
        try:
            vals = np.asarray(batch(indices), dtype=float).reshape(-1)
        except Exception as exc:  # locate the failing index
            log.debug("batch oracle failed (%s); retrying entry by entry", exc)
            vals = None
        if vals is not None:
            if vals.shape != (len(indices),):
                raise OracleError(None, f"batch oracle returned {vals.shape[0]} values for {len(indices)} indices")
            bad = np.flatnonzero(~np.isfinite(vals))
            if bad.size:
                raise OracleError(tuple(indices[bad[0]].tolist()), "non-finite value")
            return vals

    def one(idx):
        key = tuple(int(i) for i in idx)
        try:
            v = float(oracle(key))
        except OracleError:
            raise
        except Exception as exc:
            raise OracleError(key, exc) from exc
        if not math.isfinite(v):
            raise OracleError(key, "non-finite value")
        return v

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return np.fromiter(pool.map(one, indices), dtype=float, count=len(indices))
    return np.fromiter((one(i) for i in indices), dtype=float, count=len(indices))


def _sample(oracle, rng, dims, k, used: set, role: str, workers: int) -> SampleSet:
    idx = _draw_indices(rng, dims, k, used)
    used.update(map(tuple, idx.tolist()))
    return SampleSet(idx, evaluate_oracle(oracle, idx, workers), role)


def adaptive_sampling(oracle, dims: Sequence[int], cfg: CompletionConfig,
                      progress: Callable[[dict], None] | None = None) -> CompletionResult:
    """Complete the tensor behind ``oracle`` with adaptive ranks and sampling.

    Each round folds the current test set into the training set, draws a
    fresh disjoint test set, and reruns :func:`adaptive_rank` from a
    rank-one truncation of the previous result. With ``cfg.strategy == 2``
    the error driving the stopping criteria is measured on a fixed set drawn
    once at the start.
    """
    dims = tuple(int(n) for n in dims)
    d = len(dims)
    total = math.prod(dims)
    needed = cfg.initial_size + cfg.test_set_size + (cfg.gamma_size if cfg.strategy == 2 else 0)
    if needed > total:
        raise ValueError(f"requested {needed} samples but the grid has only {total} entries")
    if cfg.initial_size > cfg.p * total or cfg.test_set_size > cfg.p * total:
        raise ValueError("initial training and test sets must not exceed the sampling budget p * size")

    rng_sets = derive_rng(cfg.rng_seed, "sampling")
    rng_start = derive_rng(cfg.rng_seed, "start")
    rng_rank = derive_rng(cfg.rng_seed, "rank-increase")

    used: set = set()
    gamma = None
    if cfg.strategy == 2:
        gamma = _sample(oracle, rng_sets, dims, cfg.gamma_size, used, "fixed-reference", cfg.workers)
    omega = _sample(oracle, rng_sets, dims, cfg.initial_size, used, "training", cfg.workers)
    test = _sample(oracle, rng_sets, dims, cfg.test_set_size, used, "test", cfg.workers)

    def measure(x: TTTensor, test_set: SampleSet) -> float:
        return relative_error_on_set(x, gamma if cfg.strategy == 2 else test_set)

    error_history: list = []
    rank_history: list = []
    warnings: list = []
    rounds: list = []

    def record(x: TTTensor, err: float, test_set: SampleSet, steps: list):
        error_history.append((len(omega), err))
        rank_history.append(tuple(x.ranks))
        dof = tt_dof(dims, x.ranks)
        if len(omega) < dof:
            msg = f"|Omega|={len(omega)} below {dof} degrees of freedom at ranks {x.ranks}"
            warnings.append(msg)
            log.warning(msg)
        info = {"round": len(rounds) + 1, "training_size": len(omega), "error": err,
                "test_error": relative_error_on_set(x, test_set),
                "training_error": relative_error_on_set(x, omega),
                "ranks": list(x.ranks), "rank_steps": steps}
        rounds.append(info)
        if progress is not None:
            progress(info)

    # a sign-definite start avoids the spurious rank-one minima that a
    # signed Gaussian start can fall into; the free scale still lets ALS
    # fit data of either sign
    start = TTTensor([rng_start.uniform(0.5, 1.5, size=(1, n, 1)) for n in dims])
    steps: list = []
    x_c = adaptive_rank(omega, test, cfg, start, rng_rank, steps)
    err_new = measure(x_c, test)
    record(x_c, err_new, test, steps)

    def rank_capped(x: TTTensor) -> bool:
        return cfg.stop_on_rank_cap and max(x.ranks) >= cfg.r_max

    stop = None
    if cfg.tol is not None and err_new < cfg.tol:
        stop = StopReason.TOLERANCE_MET
    elif rank_capped(x_c):
        stop = StopReason.RANK_CAP_HIT

    while stop is None:
        if len(omega) / total >= cfg.p:
            stop = StopReason.SAMPLING_BUDGET_EXHAUSTED
            break
        if cfg.test_set_size > total - len(used):
            log.info("grid exhausted; no room for a fresh test set")
            stop = StopReason.SAMPLING_BUDGET_EXHAUSTED
            break
        err_old = err_new
        x_tilde = tt_round(x_c, (1,) * (d + 1))
        test_old = test
        test = _sample(oracle, rng_sets, dims, cfg.test_set_size, used, "test", cfg.workers)
        omega = omega.union(test_old, role="training")
        steps = []
        x_c = adaptive_rank(omega, test, cfg, x_tilde, rng_rank, steps)
        err_new = measure(x_c, test)
        record(x_c, err_new, test, steps)
        if cfg.tol is not None and err_new < cfg.tol:
            stop = StopReason.TOLERANCE_MET
        elif cfg.tol_prime is not None and abs(err_new - err_old) < cfg.tol_prime:
            stop = StopReason.ERROR_STAGNATED
        elif rank_capped(x_c):
            stop = StopReason.RANK_CAP_HIT

    return CompletionResult(
        tensor=x_c,
        final_training_set=omega,
        error_history=error_history,
        rank_history=rank_history,
        stop_reason=stop,
        test_set=test,
        gamma_set=gamma,
        warnings=warnings,
        rounds=rounds,
    )
