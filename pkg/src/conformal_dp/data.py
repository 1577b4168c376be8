"""Synthetic sphere data, image readers, and region covariance descriptors.

Raw tensor format (``.cdpraw``): the 8-byte magic ``b"CDPRAW1\\0"``, a
little-endian uint32 ``ndim``, ``ndim`` little-endian uint32 dimensions, then
the data as little-endian float32 in C order.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateImage, DomainError
from .rng import make_rng

RAW_MAGIC = b"CDPRAW1\0"
MAX_REJECTIONS = 10**6


@dataclass(frozen=True)
class VMFParams:
    mu: np.ndarray
    kappa: float

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if abs(np.linalg.norm(mu) - 1.0) > 1e-12:
            raise DomainError("vMF mean direction must be a unit vector")
        if not self.kappa >= 0:
            raise DomainError("vMF concentration must be nonnegative")
        object.__setattr__(self, "mu", mu)

    @classmethod
    def from_std(cls, mu, std: float) -> "VMFParams":
        """κ = 1/std²."""
        if not std > 0:
            raise DomainError("std must be positive")
        return cls(mu=mu, kappa=1.0 / std**2)


def _wood_cosines(kappa: float, d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Component along μ for n vMF draws on S^{d-1} (Wood's rejection scheme)."""
    m = d - 1
    # b = (-2κ + √(4κ² + m²))/m, in a cancellation-free form
    b = m / (2.0 * kappa + math.sqrt(4.0 * kappa**2 + m**2))
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + m * math.log(1.0 - x0**2)
    out = np.empty(n)
    filled, tries = 0, 0
    while filled < n:
        k = n - filled
        z = rng.beta(m / 2.0, m / 2.0, size=k)
        w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.random(size=k)
        ok = kappa * w + m * np.log(1.0 - x0 * w) - c >= np.log(u)
        acc = w[ok]
        out[filled:filled + len(acc)] = acc
        filled += len(acc)
        tries += k
        if tries > MAX_REJECTIONS + n:
            raise DomainError("vMF rejection sampler exceeded its iteration cap")
    return out


def sample_vmf(params: VMFParams, n: int, d: int, seed: int, radius: float = 1.0) -> np.ndarray:
    """n i.i.d. von Mises–Fisher draws on the radius-R sphere in R^d."""
    if d < 2:
        raise DomainError("ambient dimension must be at least 2")
    mu = params.mu
    if mu.shape != (d,):
        raise DomainError("mean direction has the wrong dimension")
    rng = make_rng(seed)
    w = _wood_cosines(params.kappa, d, n, rng)
    v = rng.standard_normal((n, d))
    v -= np.outer(v @ mu, mu)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    x = w[:, None] * mu + np.sqrt(np.clip(1.0 - w**2, 0.0, None))[:, None] * v
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return radius * x


# ---------------------------------------------------------------- images

def to_gray(image) -> np.ndarray:
    img = np.asarray(image, dtype=float)
    if img.ndim == 2:
        return img
    if img.ndim != 3:
        raise DomainError("image must be h×w or h×w×c")
    if img.shape[2] == 3:
        return img @ np.array([0.299, 0.587, 0.114])
    return img.mean(axis=2)


def pixel_features(image) -> np.ndarray:
    """Per-interior-pixel features [x, y, I, |Ix|, |Iy|, |Ixx|, |Iyy|, |∇I|, atan(|Ix|/|Iy|)]."""
    I = to_gray(image)
    h, w = I.shape
    if h < 3 or w < 3:
        raise DomainError("image must be at least 3×3")
    c = I[1:-1, 1:-1]
    ix = (I[1:-1, 2:] - I[1:-1, :-2]) / 2.0
    iy = (I[2:, 1:-1] - I[:-2, 1:-1]) / 2.0
    ixx = I[1:-1, 2:] - 2.0 * c + I[1:-1, :-2]
    iyy = I[2:, 1:-1] - 2.0 * c + I[:-2, 1:-1]
    yy, xx = np.mgrid[1:h - 1, 1:w - 1].astype(float)
    feats = [xx, yy, c, np.abs(ix), np.abs(iy), np.abs(ixx), np.abs(iyy),
             np.sqrt(ix**2 + iy**2), np.arctan(np.abs(ix) / (np.abs(iy) + 1e-12))]
    return np.stack([f.ravel() for f in feats], axis=1)


def image_to_spd(image, iota: float = 1e-3) -> np.ndarray:
    """9×9 region covariance descriptor plus ι·I."""
    if not iota > 0:
        raise DomainError("iota must be positive")
    f = pixel_features(image)
    cov = np.cov(f, rowvar=False)
    if not np.all(np.isfinite(cov)):
        raise DegenerateImage("covariance has non-finite entries")
    out = (cov + cov.T) / 2.0 + iota * np.eye(9)
    if np.linalg.eigvalsh(out).min() <= 0:
        raise DegenerateImage("descriptor is not positive definite")
    return out


def synthetic_gradient_images(n: int, size: int = 16, seed: int = 0, noise: float = 0.05,
                              angle: float = 0.6, angle_jitter: float = 0.2,
                              slope_range=(0.6, 0.9)) -> np.ndarray:
    """Noisy linear-ramp grayscale images in [0, 1], one "class" per base angle.

    Each image is a ramp at ``angle ± angle_jitter`` (radians) with slope drawn
    from ``slope_range``, plus i.i.d. Gaussian pixel noise, clipped to [0, 1].
    """
    rng = make_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(float) / (size - 1)
    out = np.empty((n, size, size))
    for i in range(n):
        theta = angle + rng.uniform(-angle_jitter, angle_jitter)
        slope = rng.uniform(*slope_range)
        ramp = slope * (np.cos(theta) * (xx - 0.5) + np.sin(theta) * (yy - 0.5)) + 0.5
        out[i] = np.clip(ramp + noise * rng.standard_normal((size, size)), 0.0, 1.0)
    return out


def _pnm_tokens(data: bytes, count: int, pos: int):
    tokens = []
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ValueError("truncated PNM header")
        tokens.append(data[start:pos])
    return tokens, pos


def read_pnm(path) -> np.ndarray:
    """Read PGM/PPM (P2, P3, P5, P6); returns floats scaled to [0, 1]."""
    data = Path(path).read_bytes()
    magic = data[:2]
    if magic not in (b"P2", b"P3", b"P5", b"P6"):
        raise ValueError(f"{path}: not a PGM/PPM file")
    (w, h, maxval), pos = _pnm_tokens(data, 3, 2)
    w, h, maxval = int(w), int(h), int(maxval)
    channels = 3 if magic in (b"P3", b"P6") else 1
    count = w * h * channels
    if magic in (b"P2", b"P3"):
        vals, _ = _pnm_tokens(data, count, pos)
        arr = np.array([int(v) for v in vals], dtype=float)
    else:
        pos += 1  # single whitespace byte after maxval
        dtype = ">u2" if maxval > 255 else "u1"
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos).astype(float)
    arr = arr.reshape((h, w, channels) if channels == 3 else (h, w))
    return arr / maxval


def write_pgm(path, image, maxval: int = 255) -> None:
    """Binary (P5) PGM from a grayscale image in [0, 1]."""
    img = np.clip(np.asarray(image, dtype=float), 0.0, 1.0)
    q = np.round(img * maxval).astype(np.uint8 if maxval <= 255 else ">u2")
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n{maxval}\n".encode() + q.tobytes())


def write_raw(path, array) -> None:
    arr = np.ascontiguousarray(array, dtype="<f4")
    header = RAW_MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + arr.tobytes())


def read_raw(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:8] != RAW_MAGIC:
        raise ValueError(f"{path}: bad raw-tensor magic")
    (ndim,) = struct.unpack_from("<I", data, 8)
    shape = struct.unpack_from(f"<{ndim}I", data, 12)
    off = 12 + 4 * ndim
    count = int(np.prod(shape)) if ndim else 1
    if len(data) - off != 4 * count:
        raise ValueError(f"{path}: payload size does not match shape {shape}")
    return np.frombuffer(data, dtype="<f4", count=count, offset=off).astype(float).reshape(shape)


def read_image(path) -> np.ndarray:
    """Dispatch on the file header: PNM or raw tensor."""
    head = Path(path).read_bytes()[:8]
    if head == RAW_MAGIC:
        return read_raw(path)
    return read_pnm(path)


def load_image_dir(directory, limit=None):
    """All readable images in a directory, sorted by file name."""
    paths = sorted(p for p in Path(directory).iterdir()
                   if p.suffix.lower() in (".pgm", ".ppm", ".pnm", ".cdpraw"))
    if limit is not None:
        paths = paths[:limit]
    return [read_image(p) for p in paths], paths


def spd_is_valid(x, tol: float = 0.0) -> bool:
    x = np.asarray(x, dtype=float)
    return bool(np.allclose(x, x.T, atol=1e-12) and np.linalg.eigvalsh(x).min() > tol)
