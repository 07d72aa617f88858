"""Seeded Gaussian sketching.

A sketch is an s-by-n matrix with i.i.d. N(0, 1/s) entries that restricts
the ambient problem to a random s-dimensional subspace. Sampling is driven
by numpy's Philox bit generator, which is counter based: stream ``seed``
jumped by draw index ``k`` regenerates the same matrix bit for bit on any
platform, which is what makes solver traces reproducible.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidConfig, ParseError
from .operators import Objective

_MAGIC = b"SKCH"
_HEADER = struct.Struct("<4sII4x")  # magic, u32 s, u32 n, 4 reserved bytes


def stream_generator(seed: int, k: int) -> np.random.Generator:
    """Generator for draw index k of the Philox stream keyed by seed.

    Jumps are 2**128 steps apart, so distinct k never overlap.
    """
    return np.random.Generator(np.random.Philox(key=seed).jumped(k))


@dataclass(frozen=True)
class Sketch:
    """Dense s-by-n sketching matrix with forward/adjoint application."""

    matrix: np.ndarray
    seed: Optional[int] = None
    draw_index: Optional[int] = None

    def __post_init__(self):
        m = np.ascontiguousarray(self.matrix, dtype=np.float64)
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2:
            raise InvalidConfig("sketch matrix must be 2-dimensional")

    @property
    def s(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    def apply(self, x: np.ndarray) -> np.ndarray:
        """P x, mapping an ambient vector into the subspace."""
        if x.shape != (self.n,):
            raise InvalidConfig(f"apply expects length-{self.n} vector, got {x.shape}")
        return self.matrix @ x

    def apply_transpose(self, y: np.ndarray) -> np.ndarray:
        """P^T y, lifting a subspace vector back to ambient space."""
        if y.shape != (self.s,):
            raise InvalidConfig(f"apply_transpose expects length-{self.s} vector, got {y.shape}")
        return self.matrix.T @ y


class IdentitySketch:
    """Trivial full-space embedding, used by the full-space baseline."""

    def __init__(self, n: int):
        self.s = n
        self.n = n

    def apply(self, x):
        return x

    def apply_transpose(self, y):
        return y


def sample_sketch_from(rng: np.random.Generator, s: int, n: int,
                       seed=None, draw_index=None) -> Sketch:
    """Draw an s-by-n Gaussian sketch from an already positioned generator."""
    if not 1 <= s <= n:
        raise InvalidConfig(f"need 1 <= s <= n, got s={s}, n={n}")
    entries = rng.standard_normal((s, n)) / np.sqrt(s)
    return Sketch(entries, seed=seed, draw_index=draw_index)


def sample_sketch(seed: int, s: int, n: int, k: int) -> Sketch:
    """Fresh i.i.d. N(0, 1/s) sketch for iteration k of the stream ``seed``.

    Regeneration from the same (seed, k) is bit-identical; distinct k give
    statistically independent matrices.
    """
    return sample_sketch_from(stream_generator(seed, k), s, n, seed=seed, draw_index=k)


def restricted_hvp(obj: Objective, x: np.ndarray, sketch, u: np.ndarray) -> np.ndarray:
    """Apply the subspace Hessian P H(x) P^T to u via one ambient
    Hessian-vector product, without forming any s-by-s matrix."""
    return sketch.apply(obj.eval_hvp(x, sketch.apply_transpose(u)))


def dump_sketch(sketch: Sketch, path) -> None:
    """Binary dump (16-byte header + row-major little-endian float64) for
    cross-implementation diffing."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, sketch.s, sketch.n))
        fh.write(np.ascontiguousarray(sketch.matrix, dtype="<f8").tobytes())


def load_sketch(path) -> Sketch:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise ParseError("sketch file truncated before end of header")
        magic, s, n = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise ParseError(f"bad sketch magic {magic!r}")
        data = np.frombuffer(fh.read(8 * s * n), dtype="<f8")
        if data.size != s * n:
            raise ParseError("sketch file truncated before end of data")
        return Sketch(data.reshape(s, n).astype(np.float64))
