"""Bloch-sphere vectors and uniformly random orthonormal frames.

Vectors are plain ``numpy`` arrays with a trailing axis of length 3.  A frame
(the hidden triplet lambda, mu, nu) is an array of shape ``(..., 3, 3)`` whose
rows are the three vectors, in that order.
"""

from __future__ import annotations

import numpy as np

ATOL = 1e-9


def as_unit(v, atol: float = 1e-6) -> np.ndarray:
    """Return ``v`` as a float array of unit norm.

    Inputs whose norm is within ``atol`` of one are renormalized; anything
    else (including zero and non-finite vectors) raises ``ValueError``.
    """
    v = np.asarray(v, dtype=float)
    if v.shape[-1:] != (3,):
        raise ValueError(f"expected 3-vector(s), got shape {v.shape}")
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if not np.all(np.isfinite(norm)) or np.any(np.abs(norm - 1.0) > atol):
        raise ValueError(f"not a unit vector (norm {np.squeeze(norm)})")
    return v / norm


def normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if not np.all(np.isfinite(norm)) or np.any(norm == 0):
        raise ValueError("cannot normalize a zero or non-finite vector")
    return v / norm


def is_unit(v, atol: float = ATOL) -> bool:
    v = np.asarray(v, dtype=float)
    return bool(np.all(np.abs(np.linalg.norm(v, axis=-1) - 1.0) <= atol))


def dot(a, b):
    """Euclidean inner product over the last axis (broadcasting)."""
    out = np.einsum("...i,...i->...", np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def sample_unit_vector(rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw uniformly distributed points on the unit sphere.

    Normalizes isotropic Gaussian draws; the (floating point) zero vector is
    rejected and redrawn.
    """
    n = 1 if size is None else int(size)
    out = rng.standard_normal((n, 3))
    norm = np.linalg.norm(out, axis=1)
    bad = norm == 0
    while np.any(bad):
        out[bad] = rng.standard_normal((int(bad.sum()), 3))
        norm[bad] = np.linalg.norm(out[bad], axis=1)
        bad = norm == 0
    out /= norm[:, None]
    return out[0] if size is None else out


def quaternion_from_uniforms(u1, u2, u3) -> np.ndarray:
    """Map three uniforms on [0, 1) to a uniform unit quaternion (w, x, y, z).

    This is Shoemake's subgroup construction: the result is uniform on the
    3-sphere, hence the associated rotation is Haar distributed.
    """
    u1, u2, u3 = (np.asarray(x, dtype=float) for x in (u1, u2, u3))
    r1 = np.sqrt(1.0 - u1)
    r2 = np.sqrt(u1)
    t1 = 2.0 * np.pi * u2
    t2 = 2.0 * np.pi * u3
    return np.stack([r2 * np.cos(t2), r1 * np.sin(t1), r1 * np.cos(t1), r2 * np.sin(t2)], axis=-1)


def frame_from_quaternion(q) -> np.ndarray:
    """Rows are the images of the canonical basis under the rotation ``q``."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = np.moveaxis(q, -1, 0)
    # columns of the rotation matrix, i.e. R @ e_x, R @ e_y, R @ e_z
    ex = np.stack([1 - 2 * (y * y + z * z), 2 * (x * y + w * z), 2 * (x * z - w * y)], axis=-1)
    ey = np.stack([2 * (x * y - w * z), 1 - 2 * (x * x + z * z), 2 * (y * z + w * x)], axis=-1)
    ez = np.stack([2 * (x * z + w * y), 2 * (y * z - w * x), 1 - 2 * (x * x + y * y)], axis=-1)
    return np.stack([ex, ey, ez], axis=-2)


def frame_from_uniforms(u1, u2, u3) -> np.ndarray:
    return frame_from_quaternion(quaternion_from_uniforms(u1, u2, u3))


def sample_triplet(rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw Haar-random right-handed orthonormal frames (rows lambda, mu, nu)."""
    n = 1 if size is None else int(size)
    u = rng.random((3, n))
    frames = frame_from_uniforms(u[0], u[1], u[2])
    return frames[0] if size is None else frames


def is_orthonormal_frame(frame, atol: float = ATOL) -> bool:
    """Unit rows, pairwise orthogonal, determinant +1 (all within ``atol``)."""
    frame = np.asarray(frame, dtype=float)
    gram = frame @ np.swapaxes(frame, -1, -2)
    if np.any(np.abs(gram - np.eye(3)) > atol):
        return False
    return bool(np.all(np.abs(np.linalg.det(frame) - 1.0) <= atol))
