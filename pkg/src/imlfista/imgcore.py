"""Image arrays, objective evaluation, quality metrics and Netpbm I/O.

Images are plain ``float64`` arrays of shape ``(rows, cols)`` or
``(rows, cols, channels)``. Every operator in the package acts on the two
leading (spatial) axes and broadcasts over any trailing channel axis, so
channels are processed independently.

Fields produced by analysis operators (``D x``) keep the image shape and
append one trailing axis holding the per-pixel group of differences.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np


class DimensionError(ValueError):
    """Array shapes do not match the operator or level they are used with."""


class ConfigError(ValueError):
    """Invalid parameters for an operator, hierarchy or scenario."""


def as_image(data, rows=None, cols=None, channels=None) -> np.ndarray:
    """Validate and return ``data`` as a float64 image array.

    A flat array is reshaped (row-major) when ``rows`` and ``cols`` are
    given.
    """
    arr = np.asarray(data, dtype=np.float64)
    if rows is not None and cols is not None:
        shape = (rows, cols) if not channels or channels == 1 else (rows, cols, channels)
        if arr.size != math.prod(shape):
            raise DimensionError(f"data length {arr.size} does not match shape {shape}")
        arr = arr.reshape(shape)
    if arr.ndim not in (2, 3):
        raise DimensionError(f"image must be 2-D or 3-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    return arr


def check_shape(x: np.ndarray, shape: tuple, what: str = "image") -> None:
    if tuple(x.shape) != tuple(shape):
        raise DimensionError(f"{what} has shape {x.shape}, expected {tuple(shape)}")


def group_norms(u: np.ndarray) -> np.ndarray:
    """Euclidean norm of every group (last axis) of a difference field."""
    # loop over the (short) group axis: cheaper than a strided reduction
    acc = u[..., 0] * u[..., 0]
    for k in range(1, u.shape[-1]):
        acc += u[..., k] * u[..., k]
    return np.sqrt(acc, out=acc)


def l21(u: np.ndarray) -> float:
    return float(np.sum(group_norms(u)))


def objective(problem, x: np.ndarray) -> float:
    """Nonsmooth objective ``1/2 ||A x - z||^2 + lam * sum_i ||(D x)^i||_2``.

    ``problem`` is anything exposing ``A``, ``D``, ``z`` and ``lam``
    (normally a :class:`imlfista.mlevel.LevelProblem`).
    """
    check_shape(x, problem.shape)
    r = problem.A.apply(x) - problem.z
    val = 0.5 * float(np.vdot(r, r))
    if problem.lam != 0.0:
        val += problem.lam * l21(problem.D.apply(x))
    return val


def snr(reference: np.ndarray, estimate: np.ndarray) -> float:
    """Signal-to-noise ratio in dB; ``inf`` when the estimate is exact."""
    reference = np.asarray(reference, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    check_shape(estimate, reference.shape, "estimate")
    sig = float(np.vdot(reference, reference))
    if sig == 0.0:
        raise ValueError("SNR undefined for an all-zero reference")
    err = reference - estimate
    noise = float(np.vdot(err, err))
    if noise == 0.0:
        return math.inf
    return 10.0 * math.log10(sig / noise)


def normalize(img: np.ndarray) -> np.ndarray:
    """Scale so that the maximum over all channels is 1."""
    img = np.asarray(img, dtype=np.float64)
    peak = img.max()
    if peak <= 0:
        raise ValueError("cannot normalize an image with non-positive maximum")
    return img / peak


# --------------------------------------------------------------------------
# Netpbm (PGM/PPM), 8 and 16 bit, binary and ASCII variants.

def _tokens(buf: bytes, count: int, pos: int):
    out = []
    n = len(buf)
    while len(out) < count:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        out.append(buf[start:pos])
    return out, pos


def read_netpbm(path) -> np.ndarray:
    """Read a P2/P3/P5/P6 file into a float image in [0, 1]."""
    buf = Path(path).read_bytes()
    magic = buf[:2]
    if magic not in (b"P2", b"P3", b"P5", b"P6"):
        raise ValueError(f"{path}: not a PGM/PPM file (magic {magic!r})")
    (w, h, maxval), pos = _tokens(buf, 3, 2)
    w, h, maxval = int(w), int(h), int(maxval)
    if not 0 < maxval < 65536:
        raise ValueError(f"{path}: bad maxval {maxval}")
    channels = 3 if magic in (b"P3", b"P6") else 1
    count = w * h * channels
    if magic in (b"P5", b"P6"):
        pos += 1  # single whitespace after maxval
        dtype = ">u2" if maxval > 255 else "u1"
        data = np.frombuffer(buf, dtype=dtype, count=count, offset=pos)
    else:
        vals, _ = _tokens(buf, count, pos)
        data = np.array([int(v) for v in vals])
    img = data.astype(np.float64).reshape((h, w, channels) if channels == 3 else (h, w))
    return img / maxval


def write_netpbm(path, img: np.ndarray, bits: int = 8) -> None:
    """Write a [0, 1] image as binary PGM (2-D) or PPM (3 channels)."""
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise DimensionError(f"cannot store shape {img.shape} as PGM/PPM")
    maxval = 255 if bits == 8 else 65535
    q = np.clip(np.rint(img * maxval), 0, maxval)
    raw = q.astype("u1" if bits == 8 else ">u2").tobytes()
    h, w = img.shape[:2]
    header = magic + f"\n{w} {h}\n{maxval}\n".encode()
    Path(path).write_bytes(header + raw)


def read_image(path) -> np.ndarray:
    """Read PGM/PPM natively, anything else (PNG, ...) through Pillow."""
    path = Path(path)
    if path.suffix.lower() in (".pgm", ".ppm", ".pnm"):
        return read_netpbm(path)
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.dtype == np.uint16:
        scale = 65535.0
    elif arr.dtype == np.uint8:
        scale = 255.0
    else:
        scale = float(arr.max()) or 1.0
    arr = arr.astype(np.float64) / scale
    if arr.ndim == 3 and arr.shape[2] == 4:
        arr = arr[:, :, :3]
    return arr


def write_image(path, img: np.ndarray) -> None:
    path = Path(path)
    if path.suffix.lower() in (".pgm", ".ppm", ".pnm"):
        write_netpbm(path, img)
        return
    from PIL import Image

    arr = np.clip(np.rint(np.asarray(img) * 255), 0, 255).astype(np.uint8)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    Image.fromarray(arr).save(path)
