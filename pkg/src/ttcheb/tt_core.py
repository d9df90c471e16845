"""Tensor-train (TT) data structure and the dense/TT kernels used throughout.

Dense tensors are plain ``numpy`` arrays. Whenever a dense tensor is
flattened (unfoldings, ``vec``, the binary file format) the first index runs
fastest, i.e. Fortran / colexicographic order.

Public single-entry accessors take 1-based multi-indices. Vectorized
helpers prefixed with an underscore work on 0-based index arrays.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "TTTensor",
    "unfold",
    "tt_svd",
    "tt_round",
    "tt_entry",
    "tt_entries",
    "inner_product",
    "tt_norm",
    "mode_multiply",
    "storage_bytes",
    "rank_one",
    "zeros",
    "save_ttc",
    "load_ttc",
]

MAGIC = b"TTC1"


class TTTensor:
    """Tensor in TT format.

    Core ``mu`` (0-based here) has shape ``(r_mu, n_mu, r_{mu+1})``;
    the rank chain starts and ends with 1.
    """

    __slots__ = ("cores",)

    def __init__(self, cores: Sequence[np.ndarray]):
        cores = tuple(np.array(c, dtype=np.float64) for c in cores)
        if len(cores) == 0:
            raise ValueError("a TT tensor needs at least one core")
        for c in cores:
            if c.ndim != 3:
                raise ValueError(f"TT cores must be order-3 arrays, got shape {c.shape}")
            if min(c.shape) < 1:
                raise ValueError(f"empty core shape {c.shape}")
            c.setflags(write=False)
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValueError("rank chain must start and end with 1")
        for mu in range(len(cores) - 1):
            if cores[mu].shape[2] != cores[mu + 1].shape[0]:
                raise ValueError(
                    f"rank mismatch between cores {mu + 1} and {mu + 2}: "
                    f"{cores[mu].shape[2]} != {cores[mu + 1].shape[0]}"
                )
        self.cores = cores

    @property
    def order(self) -> int:
        return len(self.cores)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        return (1,) + tuple(c.shape[2] for c in self.cores)

    @property
    def max_rank(self) -> int:
        return max(self.ranks)

    def full(self) -> np.ndarray:
        """Dense reconstruction; only sensible for small tensors."""
        out = self.cores[0].reshape(self.cores[0].shape[1], -1)
        for c in self.cores[1:]:
            r0, n, r1 = c.shape
            out = out @ c.reshape(r0, n * r1)
            out = out.reshape(-1, r1)
        # rows of ``out`` enumerate (i_1, ..., i_d) with i_d fastest
        return out.reshape(self.dims)

    def __getitem__(self, idx) -> float:
        return tt_entry(self, idx)

    def __repr__(self) -> str:
        return f"TTTensor(dims={self.dims}, ranks={self.ranks})"


def _check_rank_chain(ranks: Sequence[int], d: int) -> tuple[int, ...]:
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != d + 1:
        raise ValueError(f"rank chain must have length {d + 1}, got {len(ranks)}")
    if ranks[0] != 1 or ranks[-1] != 1:
        raise ValueError(f"rank chain must start and end with 1, got {ranks}")
    if any(r < 1 for r in ranks):
        raise ValueError(f"ranks must be positive, got {ranks}")
    return ranks


def unfold(t: np.ndarray, mu: int) -> np.ndarray:
    """The ``mu``-th unfolding: first ``mu`` indices as rows, the rest as columns.

    Both row and column indices use the first-index-fastest linearization.
    """
    t = np.asarray(t)
    d = t.ndim
    if not 1 <= mu <= d - 1:
        raise ValueError(f"unfolding index must lie in [1, {d - 1}], got {mu}")
    rows = int(np.prod(t.shape[:mu]))
    return t.reshape(rows, -1, order="F")


def rank_one(vectors: Sequence[np.ndarray]) -> TTTensor:
    """Rank-(1,...,1) TT tensor of the outer product of ``vectors``."""
    return TTTensor([np.asarray(v, dtype=float).reshape(1, -1, 1) for v in vectors])


def zeros(dims: Sequence[int]) -> TTTensor:
    return TTTensor([np.zeros((1, n, 1)) for n in dims])


def _truncation_rank(s: np.ndarray, rel_tol: float, cap: int) -> int:
    if s.size == 0 or s[0] == 0.0:
        return 1
    keep = int(np.count_nonzero(s > rel_tol * s[0]))
    return max(1, min(cap, keep))


def tt_svd(t: np.ndarray, max_ranks: Sequence[int] | None = None, rel_tol: float = 0.0) -> TTTensor:
    """TT decomposition of a dense tensor by a left-to-right SVD sweep.

    Each rank is the number of singular values of the current unfolding above
    ``rel_tol`` times the largest one, capped by ``max_ranks``. With
    ``rel_tol=0`` the numerical rank is used (threshold ``max(shape) * eps``,
    as in ``numpy.linalg.matrix_rank``).
    """
    t = np.asarray(t, dtype=np.float64)
    d = t.ndim
    dims = t.shape
    if max_ranks is None:
        max_ranks = (1,) + (np.iinfo(np.int64).max,) * (d - 1) + (1,)
    max_ranks = _check_rank_chain(max_ranks, d)
    if rel_tol < 0:
        raise ValueError("rel_tol must be nonnegative")

    cores = []
    r_prev = 1
    rest = t.reshape(-1, order="F")
    for mu in range(d - 1):
        mat = rest.reshape(r_prev * dims[mu], -1, order="F")
        u, s, vt = np.linalg.svd(mat, full_matrices=False)
        tol = rel_tol if rel_tol > 0 else max(mat.shape) * np.finfo(float).eps
        r = _truncation_rank(s, tol, max_ranks[mu + 1])
        cores.append(u[:, :r].reshape(r_prev, dims[mu], r, order="F"))
        rest = (s[:r, None] * vt[:r]).reshape(-1, order="F")
        r_prev = r
    cores.append(rest.reshape(r_prev, dims[-1], 1, order="F"))
    return TTTensor(cores)


def _qr_left(core: np.ndarray):
    r0, n, r1 = core.shape
    q, r = np.linalg.qr(core.reshape(r0 * n, r1, order="F"))
    return q.reshape(r0, n, q.shape[1], order="F"), r


def _qr_right(core: np.ndarray):
    r0, n, r1 = core.shape
    q, r = np.linalg.qr(core.reshape(r0, n * r1, order="F").T)
    return q.T.reshape(q.shape[1], n, r1, order="F"), r.T


def orthogonalize(x: TTTensor, center: int) -> list[np.ndarray]:
    """Cores of ``x`` with left-orthogonal cores before ``center`` (0-based)
    and right-orthogonal cores after it. The represented tensor is unchanged,
    though ranks may shrink where a core is rank deficient in shape."""
    cores = [c.copy() for c in x.cores]
    d = len(cores)
    for mu in range(center):
        q, r = _qr_left(cores[mu])
        cores[mu] = q
        cores[mu + 1] = np.einsum("ab,bnc->anc", r, cores[mu + 1])
    for mu in range(d - 1, center, -1):
        q, r = _qr_right(cores[mu])
        cores[mu] = q
        cores[mu - 1] = np.einsum("anb,bc->anc", cores[mu - 1], r)
    return cores


def tt_round(x: TTTensor, target_ranks: Sequence[int], rel_tol: float = 0.0) -> TTTensor:
    """Quasi-optimal truncation of ``x`` to at most ``target_ranks``.

    Right-to-left orthogonalization followed by a left-to-right truncated SVD
    sweep. Ranks already below the target are kept; with ``rel_tol=0`` no
    singular value is discarded beyond the target.
    """
    d = x.order
    target = _check_rank_chain(target_ranks, d)
    cores = orthogonalize(x, 0)
    for mu in range(d - 1):
        r0, n, r1 = cores[mu].shape
        u, s, vt = np.linalg.svd(cores[mu].reshape(r0 * n, r1, order="F"), full_matrices=False)
        r = _truncation_rank(s, rel_tol, target[mu + 1]) if rel_tol > 0 else min(s.size, target[mu + 1])
        cores[mu] = u[:, :r].reshape(r0, n, r, order="F")
        cores[mu + 1] = np.einsum("ab,bnc->anc", s[:r, None] * vt[:r], cores[mu + 1])
    return TTTensor(cores)


def _check_index(dims: Sequence[int], idx: Sequence[int]) -> tuple[int, ...]:
    idx = tuple(int(i) for i in idx)
    if len(idx) != len(dims):
        raise IndexError(f"multi-index has length {len(idx)}, tensor has order {len(dims)}")
    for i, n in zip(idx, dims):
        if not 1 <= i <= n:
            raise IndexError(f"multi-index {idx} out of bounds for dims {tuple(dims)}")
    return idx


def tt_entry(x: TTTensor, idx: Sequence[int]) -> float:
    """Entry ``x(i_1, ..., i_d)`` for a 1-based multi-index."""
    idx = _check_index(x.dims, idx)
    v = x.cores[0][:, idx[0] - 1, :]
    for c, i in zip(x.cores[1:], idx[1:]):
        v = v @ c[:, i - 1, :]
    return float(v[0, 0])


def _entries0(x: TTTensor, idx0: np.ndarray) -> np.ndarray:
    """Entries at many 0-based multi-indices, shape ``(m, d)``."""
    idx0 = np.asarray(idx0, dtype=np.intp)
    m = idx0.shape[0]
    v = np.ones((m, 1))
    for mu, c in enumerate(x.cores):
        # c[:, idx, :] -> (r0, m, r1)
        v = np.einsum("ma,amb->mb", v, c[:, idx0[:, mu], :])
    return v[:, 0]


def tt_entries(x: TTTensor, indices: np.ndarray) -> np.ndarray:
    """Vectorized :func:`tt_entry` for an ``(m, d)`` array of 1-based indices."""
    indices = np.asarray(indices, dtype=np.intp).reshape(-1, x.order)
    if indices.size and (np.any(indices < 1) or np.any(indices > np.asarray(x.dims))):
        raise IndexError("multi-index out of bounds")
    return _entries0(x, indices - 1)


def inner_product(x: TTTensor, y: TTTensor) -> float:
    """Sum over all entries of ``x * y``, by left-to-right core contraction."""
    if x.dims != y.dims:
        raise ValueError(f"dimension mismatch: {x.dims} vs {y.dims}")
    w = np.ones((1, 1))
    for a, b in zip(x.cores, y.cores):
        # w: (rx, ry); contract over left ranks and the mode index
        w = np.einsum("ab,anc,bnd->cd", w, a, b, optimize=True)
    return float(w[0, 0])


def tt_norm(x: TTTensor) -> float:
    """2-norm of ``x``; computed via an orthogonal sweep so it does not
    lose accuracy the way ``sqrt(<x, x>)`` does for tiny values."""
    cores = orthogonalize(x, 0)
    return float(np.linalg.norm(cores[0]))


def mode_multiply(x: TTTensor, mu: int, m: np.ndarray) -> TTTensor:
    """Mode-``mu`` product ``x ×_mu M`` for 1-based ``mu``; ranks are unchanged."""
    m = np.asarray(m, dtype=np.float64)
    if not 1 <= mu <= x.order:
        raise ValueError(f"mode must lie in [1, {x.order}], got {mu}")
    if m.ndim != 2 or m.shape[1] != x.dims[mu - 1]:
        raise ValueError(f"matrix of shape {m.shape} cannot act on mode of size {x.dims[mu - 1]}")
    cores = list(x.cores)
    cores[mu - 1] = np.einsum("jn,anb->ajb", m, cores[mu - 1])
    return TTTensor(cores)


def storage_bytes(x: TTTensor) -> tuple[int, int]:
    """Bytes for storing ``x`` in TT format and as a full array (8 bytes per double)."""
    r = x.ranks
    tt = 8 * sum(r[mu] * n * r[mu + 1] for mu, n in enumerate(x.dims))
    full = 8 * int(np.prod([int(n) for n in x.dims], dtype=object))
    return int(tt), int(full)


def _header(x: TTTensor) -> bytes:
    ints = [x.order, *x.dims, *x.ranks]
    return MAGIC + struct.pack(f"<{len(ints)}q", *ints)


def to_bytes(x: TTTensor) -> bytes:
    body = b"".join(c.reshape(-1, order="F").astype("<f8").tobytes() for c in x.cores)
    return _header(x) + body


def from_bytes(data: bytes) -> TTTensor:
    if data[:4] != MAGIC:
        raise ValueError("not a TTC1 file (bad magic)")
    if len(data) < 12:
        raise ValueError("truncated TTC1 header")
    pos = 4
    (d,) = struct.unpack_from("<q", data, pos)
    pos += 8
    if d < 1:
        raise ValueError(f"invalid order {d}")
    if len(data) < pos + 8 * (2 * d + 1):
        raise ValueError("truncated TTC1 header")
    dims = struct.unpack_from(f"<{d}q", data, pos)
    pos += 8 * d
    ranks = struct.unpack_from(f"<{d + 1}q", data, pos)
    pos += 8 * (d + 1)
    if min(dims) < 1 or min(ranks) < 1:
        raise ValueError("TTC1 header has nonpositive dims or ranks")
    cores = []
    for mu in range(d):
        shape = (ranks[mu], dims[mu], ranks[mu + 1])
        size = int(np.prod(shape))
        if pos + 8 * size > len(data):
            raise ValueError("truncated TTC1 file")
        vals = np.frombuffer(data, dtype="<f8", count=size, offset=pos)
        cores.append(vals.reshape(shape, order="F"))
        pos += 8 * size
    if pos != len(data):
        raise ValueError("trailing bytes after TTC1 payload")
    return TTTensor(cores)


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_ttc(x: TTTensor, path: str | Path, extra: dict | None = None) -> Path:
    """Write ``x`` in TTC1 binary format plus a ``<path>.json`` sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(to_bytes(x))
    tt_b, full_b = storage_bytes(x)
    meta = {"format": "TTC1", "dims": list(x.dims), "ranks": list(x.ranks),
            "storage_bytes": {"tt": tt_b, "full": full_b}}
    if extra:
        meta.update(extra)
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_ttc(path: str | Path) -> TTTensor:
    return from_bytes(Path(path).read_bytes())
