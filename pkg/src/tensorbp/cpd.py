"""Rank-R CP decomposition of a sparse three-mode tensor by alternating least squares."""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .tensor import SparseTensor

logger = logging.getLogger(__name__)

# Bounds the size of the gathered (nnz x R) blocks inside mttkrp.
_CHUNK = 1 << 18


class DecompositionError(ValueError):
    pass


class SingularGramWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class CpConfig:
    rank: int = 10
    max_iters: int = 100
    tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if not 1 <= int(self.rank) <= 50:
            raise DecompositionError(f"rank must lie in [1, 50], got {self.rank}")
        if self.tol <= 0:
            raise DecompositionError("tol must be positive")
        if self.max_iters < 1:
            raise DecompositionError("max_iters must be at least 1")


@dataclass
class FactorMatrices:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    weights: np.ndarray

    @property
    def rank(self) -> int:
        return self.A.shape[1]

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.A.shape[0], self.B.shape[0], self.C.shape[0])

    def factors(self):
        return [self.A, self.B, self.C]

    def to_dense(self) -> np.ndarray:
        return np.einsum("r,ir,jr,kr->ijk", self.weights, self.A, self.B, self.C)


def _check_dims(tensor: SparseTensor, factors: FactorMatrices):
    if tuple(tensor.shape) != factors.shape:
        raise DecompositionError(
            f"factor shapes {factors.shape} do not match tensor shape {tuple(tensor.shape)}"
        )
    if not (factors.A.shape[1] == factors.B.shape[1] == factors.C.shape[1] == factors.weights.size):
        raise DecompositionError("factor matrices disagree on the rank")


class _MttkrpPlan:
    """Sparsity structure for one mode, reused across ALS sweeps.

    With ``m`` the output mode and ``o1, o2`` the others, the product is
    formed as ``R @ ((S @ F_o2) * F_o1[pair_o1])`` where ``S`` has one row per
    distinct ``(m, o1)`` coordinate pair and ``R`` sums those rows into ``m``.
    """

    def __init__(self, tensor: SparseTensor, mode: int):
        coords = (tensor.i, tensor.j, tensor.k)
        shape = tensor.shape
        self.o1, self.o2 = [m for m in range(3) if m != mode]
        key = coords[mode] * shape[self.o1] + coords[self.o1]
        pairs, row = np.unique(key, return_inverse=True)
        row = row.ravel()
        order = sp.csr_matrix(
            (np.arange(tensor.nnz, dtype=np.float64), (row, coords[self.o2])),
            shape=(pairs.size, shape[self.o2]),
        )
        self.perm = order.data.astype(np.int64)
        self.pattern = order
        self.pair_o1 = pairs % shape[self.o1]
        self.reduce = sp.csr_matrix(
            (np.ones(pairs.size), (pairs // shape[self.o1], np.arange(pairs.size))),
            shape=(shape[mode], pairs.size),
        )

    def __call__(self, values: np.ndarray, mats) -> np.ndarray:
        s = self.pattern.copy()
        s.data = values[self.perm]
        partial = s @ mats[self.o2]
        partial *= mats[self.o1][self.pair_o1]
        return np.asarray(self.reduce @ partial)


def _mttkrp(tensor: SparseTensor, mats, mode: int) -> np.ndarray:
    plans = tensor.__dict__.setdefault("_mttkrp_plans", {})
    if mode not in plans:
        plans[mode] = _MttkrpPlan(tensor, mode)
    return plans[mode](tensor.values, mats)


def _mttkrp_direct(tensor: SparseTensor, mats, mode: int) -> np.ndarray:
    # Straight accumulation over nonzeros; kept as a cross-check for the planned kernel.
    coords = (tensor.i, tensor.j, tensor.k)
    others = [m for m in range(3) if m != mode]
    rank = mats[0].shape[1]
    out = np.zeros((tensor.shape[mode], rank))
    for start in range(0, tensor.nnz, _CHUNK):
        sl = slice(start, start + _CHUNK)
        rows = mats[others[0]][coords[others[0]][sl]] * mats[others[1]][coords[others[1]][sl]]
        rows *= tensor.values[sl, None]
        target = coords[mode][sl]
        for r in range(rank):
            out[:, r] += np.bincount(target, weights=rows[:, r], minlength=out.shape[0])
    return out


def mttkrp(tensor: SparseTensor, factors: FactorMatrices, mode: int) -> np.ndarray:
    """Matricized tensor times Khatri-Rao product for ``mode`` in {1, 2, 3}.

    For mode 1 this is ``X_(1) (C kr B)``, computed directly from the nonzeros:
    ``out[i, r] = sum over entries (i, j, k, x) of x * B[j, r] * C[k, r]``.
    Component weights are not applied.
    """
    if mode not in (1, 2, 3):
        raise DecompositionError(f"mode must be 1, 2 or 3, got {mode}")
    _check_dims(tensor, factors)
    return _mttkrp(tensor, factors.factors(), mode - 1)


def _entries(tensor: SparseTensor, factors: FactorMatrices) -> np.ndarray:
    """Model values at the tensor's nonzero coordinates."""
    out = np.empty(tensor.nnz)
    for start in range(0, tensor.nnz, _CHUNK):
        sl = slice(start, start + _CHUNK)
        rows = factors.A[tensor.i[sl]] * factors.B[tensor.j[sl]] * factors.C[tensor.k[sl]]
        out[sl] = rows @ factors.weights
    return out


def reconstruction_residual(tensor: SparseTensor, factors: FactorMatrices) -> float:
    """Frobenius norm of ``X - [[weights; A, B, C]]`` without forming the dense tensor.

    Splits ``|X - M|^2`` into the squared error on the support of ``X`` plus
    ``|M|^2 - sum of M^2 on the support``. The first part has no cancellation;
    the second is accumulated in extended precision, so the residual of an
    exact model stays near rounding level instead of ``sqrt(eps) * |X|``.
    """
    _check_dims(tensor, factors)
    m = _entries(tensor, factors)
    on_support = float(np.sum((tensor.values - m) ** 2))
    ld = np.longdouble
    mats = [f.astype(ld) for f in factors.factors()]
    w = factors.weights.astype(ld)
    prod = (mats[0].T @ mats[0]) * (mats[1].T @ mats[1]) * (mats[2].T @ mats[2])
    off_support = w @ prod @ w - np.sum(m.astype(ld) ** 2)
    sq = on_support + float(max(off_support, ld(0)))
    return float(np.sqrt(sq))


def _sweep_residual(tensor, mats, weights, grams, rhs_c, norm_x) -> float:
    """Residual from the cheap expansion, or the exact split form once cancellation bites.

    The expansion's absolute error in the squared residual is about ``eps``
    times the magnitude of its terms; while the squared residual stays above
    ``1e-6`` of that magnitude the error in the residual is negligible.
    """
    prod = grams[0] * grams[1] * grams[2]
    inner = float(np.sum(rhs_c * mats[2] * weights))
    sq = norm_x**2 - 2.0 * inner + float(weights @ prod @ weights)
    magnitude = norm_x**2 + float(np.abs(weights) @ np.abs(prod) @ np.abs(weights))
    if sq > 1e-6 * magnitude:
        return float(np.sqrt(sq))
    return reconstruction_residual(tensor, FactorMatrices(*mats, weights))


def _solve_gram(rhs: np.ndarray, gram: np.ndarray) -> np.ndarray:
    """Solve ``X gram = rhs`` for symmetric PSD ``gram``, with a ridge when near singular."""
    rank = gram.shape[0]
    try:
        chol = np.linalg.cholesky(gram)
        ok = np.min(np.diag(chol)) > 1e-7 * np.sqrt(np.max(np.diag(gram)))
    except np.linalg.LinAlgError:
        ok = False
    if not ok:
        ridge = 1e-12 * max(np.trace(gram), np.finfo(float).tiny)
        warnings.warn(
            f"singular normal equations in CP-ALS; adding ridge {ridge:.3g}",
            SingularGramWarning,
            stacklevel=3,
        )
        gram = gram + ridge * np.eye(rank)
    return np.linalg.solve(gram, rhs.T).T


def _normalize(mat: np.ndarray):
    norms = np.linalg.norm(mat, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    return mat / safe, norms


def init_factors(shape, rank: int, seed: int):
    rng = np.random.default_rng(seed)
    return [_normalize(rng.uniform(0.0, 1.0, size=(dim, rank)))[0] for dim in shape]


def cp_als(tensor: SparseTensor, config: CpConfig | None = None):
    """Fit a rank-``config.rank`` CP model by alternating least squares.

    Parameters
    ----------
    tensor : SparseTensor
        Must have at least one nonzero entry.
    config : CpConfig

    Returns
    -------
    factors : FactorMatrices
        Unit-norm columns in ``A``, ``B``, ``C``; scale lives in ``weights``.
    history : list of float
        Residual norm of the initial guess followed by the residual after
        each accepted sweep. A sweep that would raise the residual (possible
        when a ridge-regularized solve replaces an exact one) is discarded
        and iteration stops, so the history never increases.
    """
    config = config or CpConfig()
    if tensor.nnz == 0 or not np.any(tensor.values):
        raise DecompositionError("cannot decompose an empty (all-zero) tensor")
    rank = int(config.rank)
    mats = init_factors(tensor.shape, rank, config.seed)
    weights = np.ones(rank)
    norm_x = tensor.norm()

    grams = [m.T @ m for m in mats]
    history = [reconstruction_residual(tensor, FactorMatrices(*mats, weights))]
    fit_prev = 1.0 - history[0] / norm_x
    status = "max_iters"

    for it in range(config.max_iters):
        saved = (list(mats), weights, list(grams))
        for mode in range(3):
            a, b = [g for m, g in enumerate(grams) if m != mode]
            rhs = _mttkrp(tensor, mats, mode)
            new = _solve_gram(rhs, a * b)
            mats[mode], weights = _normalize(new)
            grams[mode] = mats[mode].T @ mats[mode]
        # rhs still holds the mode-3 product for the current A and B
        residual = _sweep_residual(tensor, mats, weights, grams, rhs, norm_x)
        if residual > history[-1]:
            mats, weights, grams = saved
            status = "rejected sweep"
            break
        history.append(residual)
        fit = 1.0 - residual / norm_x
        if abs(fit_prev - fit) < config.tol:
            status = "converged"
            break
        fit_prev = fit

    logger.debug("cp_als: %d sweeps, residual %.6g, stop: %s", len(history) - 1, history[-1], status)
    return FactorMatrices(mats[0], mats[1], mats[2], weights), history


def save_factors(factors: FactorMatrices, outdir, manifest: dict | None = None) -> list[Path]:
    """Write ``A.txt``, ``B.txt``, ``C.txt`` (row-major, space separated) and ``weights.txt``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, mat in (("A", factors.A), ("B", factors.B), ("C", factors.C)):
        p = outdir / f"{name}.txt"
        np.savetxt(p, mat, fmt="%.17g", delimiter=" ")
        paths.append(p)
    p = outdir / "weights.txt"
    np.savetxt(p, factors.weights[None, :], fmt="%.17g", delimiter=" ")
    paths.append(p)
    if manifest is not None:
        p = outdir / "cp_manifest.json"
        p.write_text(json.dumps(manifest, indent=2, sort_keys=True))
        paths.append(p)
    return paths


def load_factors(outdir) -> FactorMatrices:
    outdir = Path(outdir)
    mats = [np.loadtxt(outdir / f"{n}.txt", ndmin=2) for n in "ABC"]
    weights = np.loadtxt(outdir / "weights.txt", ndmin=1)
    return FactorMatrices(*mats, weights)
