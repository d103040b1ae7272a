"""Parameter spaces, Latin Hypercube designs, region grids and seed derivation.

All randomness in the toolkit flows through numpy's Philox generator (a
counter-based generator) keyed by 64-bit seeds produced with
:func:`derive_seed`.  Distinct (master seed, stream index) pairs map to
distinct keys by construction, so per-region streams never collide and any
region can be regenerated in isolation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, RegionIndexError

_MASK64 = (1 << 64) - 1

# Fixed stream tags so the different consumers of a master seed never share
# a random stream.  Values are arbitrary but frozen: changing them changes
# every emitted design.
STREAM_GLOBAL_DESIGN = 0x01
STREAM_REGION_DESIGN = 0x02
STREAM_MORRIS = 0x03
STREAM_SOBOL_A = 0x04
STREAM_SOBOL_B = 0x05
STREAM_SURROGATE_TRAIN = 0x06
STREAM_SURROGATE_TEST = 0x07
STREAM_TRUE_PARAMS = 0x08
STREAM_CHAIN_NOISE = 0x09
STREAM_REGION_SUBSAMPLE = 0x0A
STREAM_LOCAL_SUBSPACE = 0x0B


def derive_seed(master_seed: int, stream_index: int) -> int:
    """Mix (master_seed, stream_index) into a 64-bit stream seed.

    Uses the SplitMix64 finalizer on ``master + (index+1) * golden``.  The
    finalizer is a bijection on 64-bit integers and the pre-mix is a
    bijection of the index for fixed master, so distinct indices always get
    distinct seeds under the same master.
    """
    z = (int(master_seed) + (int(stream_index) + 1) * 0x9E3779B97F4A7C15) & _MASK64
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK64
    z ^= z >> 31
    return z


def derive_seeds(master_seed: int, stream_indices) -> np.ndarray:
    """Vectorized :func:`derive_seed` over an array of stream indices."""
    idx = np.asarray(stream_indices, dtype=np.uint64)
    z = (np.uint64(master_seed) + (idx + np.uint64(1)) * np.uint64(0x9E3779B97F4A7C15))
    z ^= z >> np.uint64(30)
    z *= np.uint64(0xBF58476D1CE4E5B9)
    z ^= z >> np.uint64(27)
    z *= np.uint64(0x94D049BB133111EB)
    z ^= z >> np.uint64(31)
    return z


def rng_from_seed(seed: int) -> np.random.Generator:
    """Generator backed by Philox, keyed directly by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


@dataclass(frozen=True)
class ParameterSpace:
    """Axis-aligned box with named axes; the uniform density lives on it."""

    names: tuple
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        if not (len(self.names) == self.lower.size == self.upper.size):
            raise DimensionMismatchError(
                "names/lower/upper lengths disagree: "
                f"{len(self.names)}/{self.lower.size}/{self.upper.size}"
            )
        if np.any(self.lower >= self.upper):
            bad = [self.names[i] for i in np.nonzero(self.lower >= self.upper)[0]]
            raise DimensionMismatchError(f"lower >= upper on axes {bad}")

    @property
    def dim(self) -> int:
        return len(self.names)

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def volume(self) -> float:
        return float(np.prod(self.widths))

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)

    def with_bounds(self, overrides: dict) -> "ParameterSpace":
        """New space with some axes' bounds replaced, keyed by axis name."""
        lo = self.lower.copy()
        hi = self.upper.copy()
        for name, (a, b) in overrides.items():
            if name not in self.names:
                raise DimensionMismatchError(f"unknown axis {name!r}")
            i = self.names.index(name)
            lo[i], hi[i] = a, b
        return ParameterSpace(self.names, lo, hi)

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParameterSpace":
        return cls(tuple(d["names"]), d["lower"], d["upper"])

    @classmethod
    def unit(cls, names) -> "ParameterSpace":
        n = len(names)
        return cls(tuple(names), np.zeros(n), np.ones(n))


@dataclass(frozen=True)
class RegionGrid:
    """Partition of a space into k^m axis-aligned bins.

    Region indices are mixed-radix over the per-axis bin indices, with the
    first declared axis as the most significant digit.  Bins are half-open
    [lo, hi) except the last bin on each axis, which is closed, so every
    point of the space belongs to exactly one region.
    """

    space: ParameterSpace
    bins_per_dim: int

    def __post_init__(self):
        if self.bins_per_dim < 1:
            raise DimensionMismatchError("bins_per_dim must be >= 1")

    @property
    def total_regions(self) -> int:
        return self.bins_per_dim ** self.space.dim

    def multi_index(self, index: int) -> tuple:
        """Decode a region index into per-axis bin indices."""
        if not 0 <= index < self.total_regions:
            raise RegionIndexError(
                f"region index {index} outside [0, {self.total_regions})"
            )
        k = self.bins_per_dim
        digits = []
        rem = int(index)
        for _ in range(self.space.dim):
            digits.append(rem % k)
            rem //= k
        return tuple(reversed(digits))

    def flat_index(self, multi: tuple) -> int:
        k = self.bins_per_dim
        idx = 0
        for d in multi:
            if not 0 <= d < k:
                raise RegionIndexError(f"bin index {d} outside [0, {k})")
            idx = idx * k + int(d)
        return idx

    def region_bounds(self, index: int) -> ParameterSpace:
        """Sub-box of the region with the given flat index."""
        multi = np.array(self.multi_index(index), dtype=float)
        k = self.bins_per_dim
        w = self.space.widths / k
        lo = self.space.lower + multi * w
        hi = self.space.lower + (multi + 1.0) * w
        return ParameterSpace(self.space.names, lo, hi)

    def multi_indices(self, indices) -> np.ndarray:
        """Vectorized multi-index decode, shape (len(indices), m)."""
        k = self.bins_per_dim
        rem = np.asarray(indices, dtype=np.int64)
        out = np.empty((rem.size, self.space.dim), dtype=np.int64)
        for axis in range(self.space.dim - 1, -1, -1):
            out[:, axis] = rem % k
            rem = rem // k
        return out


def grid_partition(space: ParameterSpace, k: int) -> RegionGrid:
    return RegionGrid(space, int(k))


def region_bounds(grid: RegionGrid, index: int) -> ParameterSpace:
    return grid.region_bounds(index)


def lhs(M: int, box: ParameterSpace, seed: int) -> np.ndarray:
    """Latin Hypercube design of M points over the box.

    One point per equal-width stratum on each axis; stratum placement is
    uniform on the open interior (offsets in (0,1)), so points never land
    exactly on stratum or box boundaries.  Axis permutations and offsets are
    drawn per axis in declaration order from a Philox stream keyed by
    ``seed``; the same (M, box, seed) triple always reproduces the same
    design.
    """
    if M < 1:
        raise DimensionMismatchError("M must be >= 1")
    rng = rng_from_seed(seed)
    m = box.dim
    pts = np.empty((M, m), dtype=float)
    for j in range(m):
        perm = rng.permutation(M)
        u = rng.random(M)
        u[u == 0.0] = 0.5  # keep offsets in the open interval
        frac = (perm + u) / M
        pts[:, j] = box.lower[j] + box.widths[j] * frac
    return pts


@dataclass(frozen=True)
class SamplingPlan:
    """Per-region design size plus the master seed that keys every stream."""

    M: int
    master_seed: int
    design: str = "lhs"

    def region_seed(self, region_index: int) -> int:
        region_stream = derive_seed(self.master_seed, STREAM_REGION_DESIGN)
        return derive_seed(region_stream, region_index)

    def region_points(self, grid: RegionGrid, region_index: int) -> np.ndarray:
        return lhs(self.M, grid.region_bounds(region_index), self.region_seed(region_index))

    def to_json(self, space: ParameterSpace, k: int) -> str:
        return json.dumps(
            {
                "space": space.to_dict(),
                "bins_per_dim": k,
                "M": self.M,
                "master_seed": self.master_seed,
                "design": self.design,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str):
        d = json.loads(text)
        plan = cls(M=d["M"], master_seed=d["master_seed"], design=d.get("design", "lhs"))
        space = ParameterSpace.from_dict(d["space"])
        return plan, space, d["bins_per_dim"]
