"""Linear operators: degradations ``A`` and analysis operators ``D``.

All operators act on the two spatial axes of an image and broadcast over
trailing channel axes. ``in_shape`` is the spatial grid used for norm
estimation; analysis operators append one axis of length ``k_dirs`` to
their output.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .imgcore import ConfigError, DimensionError

POWER_ITERS = 50
NORM_INFLATION = 1.05


def _expand(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    return a.reshape(a.shape + (1,) * (x.ndim - a.ndim))


class LinearMap:
    """Base class; subclasses define ``in_shape``, ``apply`` and ``adjoint``."""

    in_shape: tuple
    _norm_sq = None

    def apply(self, x):
        raise NotImplementedError

    def adjoint(self, y):
        raise NotImplementedError

    def _check(self, x):
        if tuple(x.shape[: len(self.in_shape)]) != tuple(self.in_shape):
            raise DimensionError(
                f"{type(self).__name__} expects leading shape {self.in_shape}, got {x.shape}"
            )

    def norm_sq(self) -> float:
        """Cached inflated estimate of the squared spectral norm."""
        if self._norm_sq is None:
            self._norm_sq = op_norm_sq(self)
        return self._norm_sq


class Identity(LinearMap):
    def __init__(self, shape):
        self.in_shape = tuple(shape)

    def apply(self, x):
        self._check(x)
        return np.array(x, dtype=np.float64, copy=True)

    adjoint = apply


class MatrixMap(LinearMap):
    """Dense matrix acting on the row-major flattening of a grid."""

    def __init__(self, matrix, in_shape=None):
        self.matrix = np.asarray(matrix, dtype=np.float64)
        self.in_shape = tuple(in_shape) if in_shape else (self.matrix.shape[1],)
        self.out_shape = (self.matrix.shape[0],)

    def apply(self, x):
        self._check(x)
        return self.matrix @ np.reshape(x, -1)

    def adjoint(self, y):
        return np.reshape(self.matrix.T @ np.reshape(y, -1), self.in_shape)


def gaussian_psf(dim: int, sigma: float) -> np.ndarray:
    """Centred, unit-sum samples of ``exp(-i^2 / 2 sigma^2)``."""
    if dim < 1:
        raise ConfigError("PSF dimension must be >= 1")
    if sigma <= 0:
        raise ValueError("PSF sigma must be positive")
    i = np.arange(dim) - (dim - 1) / 2.0
    k = np.exp(-(i**2) / (2.0 * sigma**2))
    return k / k.sum()


def _reflect_index(j: int, n: int) -> int:
    # half-sample symmetric extension: ... b a | a b c ... c b | b a ...
    period = 2 * n
    j %= period
    return j if j < n else period - 1 - j


def blur_factor(psf, n: int) -> np.ndarray:
    """``n x n`` correlation matrix of a 1-D kernel with reflexive boundaries."""
    psf = np.asarray(psf, dtype=np.float64)
    c = (len(psf) - 1) // 2
    mat = np.zeros((n, n))
    for i in range(n):
        for k, pk in enumerate(psf):
            mat[i, _reflect_index(i + k - c, n)] += pk
    return mat


class SeparableBlur(LinearMap):
    """Kronecker blur ``A = A_r (x) A_c``, i.e. ``Y = A_c X A_r^T`` per channel.

    ``row_factor`` (cols x cols) acts along image rows, ``col_factor``
    (rows x rows) along image columns.
    """

    def __init__(self, row_factor, col_factor):
        self.row_factor = np.asarray(row_factor, dtype=np.float64)
        self.col_factor = np.asarray(col_factor, dtype=np.float64)
        for f in (self.row_factor, self.col_factor):
            if f.ndim != 2 or f.shape[0] != f.shape[1]:
                raise DimensionError("blur factors must be square matrices")
        self.in_shape = (self.col_factor.shape[0], self.row_factor.shape[0])

    @classmethod
    def gaussian(cls, shape, dim: int, sigma: float) -> "SeparableBlur":
        psf = gaussian_psf(dim, sigma)
        return cls(blur_factor(psf, shape[1]), blur_factor(psf, shape[0]))

    def _mul(self, x, left, right):
        self._check(x)
        xm = np.moveaxis(x, (0, 1), (-2, -1))
        y = left @ xm @ right
        return np.moveaxis(y, (-2, -1), (0, 1))

    def apply(self, x):
        return self._mul(x, self.col_factor, self.row_factor.T)

    def adjoint(self, y):
        return self._mul(y, self.col_factor.T, self.row_factor)


class InpaintMask(LinearMap):
    """Diagonal 0/1 sampling operator; ``kept`` marks observed pixels."""

    def __init__(self, kept):
        self.kept = np.asarray(kept, dtype=bool)
        if self.kept.ndim != 2:
            raise DimensionError("mask must be a 2-D boolean grid")
        self.in_shape = self.kept.shape
        self._w = self.kept.astype(np.float64)

    @classmethod
    def bernoulli(cls, shape, keep_prob: float, seed) -> "InpaintMask":
        if not 0.0 <= keep_prob <= 1.0:
            raise ConfigError("keep probability must lie in [0, 1]")
        rng = np.random.default_rng(seed)
        return cls(rng.random(shape) < keep_prob)

    def apply(self, x):
        self._check(x)
        return x * _expand(self._w, x)

    adjoint = apply


class TvOperator(LinearMap):
    """Finite differences ``[x_i - x_right, x_i - x_down]``.

    Differences across the last column / last row are zero (replicate
    boundary), so ``||D||^2 <= 8``.
    """

    k_dirs = 2

    def __init__(self, rows: int, cols: int):
        self.rows, self.cols = rows, cols
        self.in_shape = (rows, cols)

    def apply(self, x):
        self._check(x)
        # stored direction-major so that each direction slice is contiguous
        out = np.empty((2,) + x.shape)
        np.subtract(x[:, :-1], x[:, 1:], out=out[0, :, :-1])
        out[0, :, -1] = 0.0
        np.subtract(x[:-1], x[1:], out=out[1, :-1])
        out[1, -1] = 0.0
        return np.moveaxis(out, 0, -1)

    def adjoint(self, p):
        self._check(p)
        ph = p[..., 0]
        pv = p[..., 1]
        if self.rows > 2 and self.cols > 2:
            # one pass per interior slab instead of four scatter-adds
            out = np.empty(p.shape[:-1])
            out[:, 0] = ph[:, 0]
            np.subtract(ph[:, 1:-1], ph[:, :-2], out=out[:, 1:-1])
            out[:, -1] = -ph[:, -2]
            out[0] += pv[0]
            out[1:-1] += pv[1:-1]
            out[1:-1] -= pv[:-2]
            out[-1] -= pv[-2]
            return out
        out = np.zeros(p.shape[:-1])
        out[:, :-1] += ph[:, :-1]
        out[:, 1:] -= ph[:, :-1]
        out[:-1] += pv[:-1]
        out[1:] -= pv[:-1]
        return out


class NltvOperator(LinearMap):
    """Weighted non-local differences ``w_ij (x_i - x_j)`` over a neighbour table.

    ``neighbors`` and ``weights`` are ``(rows*cols, K)`` arrays indexed by
    row-major pixel number. ``params`` keeps the construction settings so
    coarse levels can be rebuilt with the same hyper-parameters.
    """

    def __init__(self, neighbors, weights, rows: int, cols: int, params=None, reference=None):
        self.neighbors = np.asarray(neighbors, dtype=np.int64)
        self.weights = np.asarray(weights, dtype=np.float64)
        n = rows * cols
        if self.neighbors.shape != self.weights.shape or self.neighbors.shape[0] != n:
            raise DimensionError("neighbour table and weights must both be (rows*cols, K)")
        if np.any(self.weights < 0):
            raise ValueError("NLTV weights must be nonnegative")
        self.rows, self.cols = rows, cols
        self.in_shape = (rows, cols)
        self.k_dirs = self.neighbors.shape[1]
        self.params = params or {}
        self.reference = reference
        k = self.k_dirs
        # sparse rows ordered direction-major: row t*n + i holds w_it (x_i - x_j)
        row_idx = np.arange(n * k)
        self_idx = np.tile(np.arange(n), k)
        w = self.weights.T.ravel()
        self._mat = sp.csr_matrix(
            (np.concatenate([w, -w]), (np.concatenate([row_idx, row_idx]),
                                       np.concatenate([self_idx, self.neighbors.T.ravel()]))),
            shape=(n * k, n),
        )
        self._mat_t = self._mat.T.tocsr()

    def apply(self, x):
        self._check(x)
        rest = x.shape[2:]
        n = self.rows * self.cols
        y = (self._mat @ x.reshape(n, -1)).reshape((self.k_dirs,) + self.in_shape + rest)
        return np.moveaxis(y, 0, -1)

    def adjoint(self, p):
        self._check(p)
        rest = p.shape[2:-1]
        n = self.rows * self.cols
        pf = np.moveaxis(p, -1, 0).reshape(n * self.k_dirs, -1)
        return (self._mat_t @ pf).reshape(self.in_shape + rest)


def _box_sum(a: np.ndarray, size: int) -> np.ndarray:
    # sum over size x size windows, output shrinks by size-1 along both axes
    c = np.cumsum(np.cumsum(a, axis=0), axis=1)
    c = np.pad(c, ((1, 0), (1, 0)))
    return c[size:, size:] - c[:-size, size:] - c[size:, :-size] + c[:-size, :-size]


def nltv_build(reference, patch_radius: int = 2, window_radius: int = 5,
               k_max: int = 10, sigma_w: float = 0.1) -> NltvOperator:
    """Build NLTV neighbours/weights from patch similarity in ``reference``.

    For each pixel the ``k_max`` window candidates with the smallest patch
    distance are kept (ties broken by smallest row-major index) and
    weighted by ``exp(-d / (2 sigma_w^2))`` where ``d`` is the squared
    patch distance summed over channels. Patches use symmetric padding.
    """
    ref = np.asarray(reference, dtype=np.float64)
    if ref.ndim == 2:
        ref = ref[:, :, None]
    if k_max < 1:
        raise ConfigError("k_max must be >= 1")
    if window_radius < patch_radius:
        raise ConfigError("search window must not be smaller than the patch")
    if sigma_w <= 0:
        raise ConfigError("sigma_w must be positive")
    rows, cols, _ = ref.shape
    n = rows * cols
    P, W = patch_radius, window_radius
    pad = np.pad(ref, ((P + W, P + W), (P + W, P + W), (0, 0)), mode="symmetric")
    size = 2 * P + 1
    hr, hc = rows + 2 * P, cols + 2 * P
    base = pad[W:W + hr, W:W + hc]

    offsets = [(dy, dx) for dy in range(-W, W + 1) for dx in range(-W, W + 1) if (dy, dx) != (0, 0)]
    ii, jj = np.mgrid[0:rows, 0:cols]
    dist = np.full((n, len(offsets)), np.inf)
    cand = np.zeros((n, len(offsets)), dtype=np.int64)
    for t, (dy, dx) in enumerate(offsets):
        shifted = pad[W + dy:W + dy + hr, W + dx:W + dx + hc]
        d2 = np.sum((base - shifted) ** 2, axis=2)
        d = _box_sum(d2, size)
        ti, tj = ii + dy, jj + dx
        valid = (ti >= 0) & (ti < rows) & (tj >= 0) & (tj < cols)
        target = np.where(valid, ti * cols + tj, n)
        dist[:, t] = np.where(valid, d, np.inf).ravel()
        cand[:, t] = target.ravel()

    order = np.lexsort((cand, dist), axis=-1)[:, :k_max]
    nbr = np.take_along_axis(cand, order, axis=1)
    dsel = np.take_along_axis(dist, order, axis=1)
    weights = np.exp(-dsel / (2.0 * sigma_w**2))
    missing = ~np.isfinite(dsel)
    if missing.any():
        # tiny grids: fewer candidates than k_max, pad with inert zero-weight entries
        first = np.where(np.isfinite(dsel[:, :1]), nbr[:, :1], np.arange(n)[:, None])
        nbr = np.where(missing, first, nbr)
        weights = np.where(missing, 0.0, weights)
    if nbr.shape[1] < k_max:
        extra = k_max - nbr.shape[1]
        nbr = np.hstack([nbr, np.repeat(nbr[:, :1], extra, axis=1)])
        weights = np.hstack([weights, np.zeros((n, extra))])
    params = dict(patch_radius=P, window_radius=W, k_max=k_max, sigma_w=sigma_w)
    return NltvOperator(nbr, weights, rows, cols, params=params, reference=np.squeeze(ref, axis=2) if ref.shape[2] == 1 else ref)


def op_norm_sq(op: LinearMap, iters: int = POWER_ITERS, seed: int = 0) -> float:
    """Power-iteration estimate of ``||op||^2``, inflated by 5%."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.in_shape)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        av = op.apply(v)
        est = float(np.vdot(av, av))
        w = op.adjoint(av)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
    av = op.apply(v)
    est = max(est, float(np.vdot(av, av)))
    return NORM_INFLATION * est
