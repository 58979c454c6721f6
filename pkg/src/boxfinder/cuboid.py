"""Oriented boxes: containment, surface/interior sampling, JSON and OBJ export."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

MIN_THICKNESS = 0.01

# face k: axis k // 2, outward sign + for even k
_FACE_AXIS = np.array([0, 0, 1, 1, 2, 2])
_FACE_SIGN = np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0])


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(eq=False)
class Cuboid:
    """Box with frame rows ``R`` (u, v, w), ``center`` and ``half_extents``."""

    R: np.ndarray
    center: np.ndarray
    half_extents: np.ndarray
    provenance: str = "Given"
    sources: tuple = ()
    id: int | None = field(default=None)

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        self.center = np.asarray(self.center, dtype=np.float64).reshape(3)
        self.half_extents = np.asarray(self.half_extents, dtype=np.float64).reshape(3)
        self.sources = tuple(int(s) for s in self.sources)

    @classmethod
    def axis_aligned(cls, lo, hi, **kw) -> "Cuboid":
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        return cls(np.eye(3), (lo + hi) / 2, (hi - lo) / 2, **kw)

    @property
    def volume(self) -> float:
        return float(8.0 * np.prod(self.half_extents))

    def face_areas(self) -> np.ndarray:
        hu, hv, hw = self.half_extents
        a = np.array([4 * hv * hw, 4 * hu * hw, 4 * hu * hv])
        return np.repeat(a, 2)

    @property
    def area(self) -> float:
        return float(self.face_areas().sum())

    def corners(self) -> np.ndarray:
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=np.float64)
        return self.center + (signs * self.half_extents) @ self.R

    def to_local(self, p) -> np.ndarray:
        return (np.asarray(p, dtype=np.float64).reshape(-1, 3) - self.center) @ self.R.T

    def contains(self, p) -> np.ndarray | bool:
        """Closed-box membership; vectorised over rows of ``p``."""
        p = np.asarray(p, dtype=np.float64)
        inside = np.all(np.abs(self.to_local(p)) <= self.half_extents, axis=1)
        return bool(inside[0]) if p.ndim == 1 else inside

    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        r = np.abs(self.R).T @ self.half_extents
        return self.center - r, self.center + r

    def key(self) -> bytes:
        """Content digest; identical geometry gives an identical key."""
        h = hashlib.sha256()
        for a in (self.R, self.center, self.half_extents):
            h.update(np.ascontiguousarray(a, dtype="<f8").tobytes())
        return h.digest()

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "provenance": self.provenance,
            "sources": list(self.sources),
            "center": [float(x) for x in self.center],
            "axes": [[float(x) for x in row] for row in self.R],
            "half_extents": [float(x) for x in self.half_extents],
        }

    @classmethod
    def from_json(cls, d: dict) -> "Cuboid":
        return cls(
            np.array(d["axes"]),
            np.array(d["center"]),
            np.array(d["half_extents"]),
            provenance=d.get("provenance", "Given"),
            sources=tuple(d.get("sources", ())),
            id=d.get("id"),
        )


def contains(c: Cuboid, p) -> bool:
    return c.contains(p)


def largest_remainder(weights, n: int) -> np.ndarray:
    """Integer allocation of ``n`` proportional to ``weights``; exact total."""
    w = np.asarray(weights, dtype=np.float64)
    if n <= 0:
        return np.zeros(len(w), dtype=np.int64)
    quota = n * w / w.sum()
    base = np.floor(quota).astype(np.int64)
    left = n - int(base.sum())
    if left:
        # stable sort: equal remainders go to the lower index
        order = np.argsort(-(quota - base), kind="stable")
        base[order[:left]] += 1
    return base


def sample_surface(c: Cuboid, n: int, seed=None) -> tuple[np.ndarray, np.ndarray]:
    """``n`` points uniform over the six faces, with outward face normals."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _rng(seed)
    counts = largest_remainder(c.face_areas(), n)
    face = np.repeat(np.arange(6), counts)
    axis = _FACE_AXIS[face]
    sign = _FACE_SIGN[face]
    local = rng.uniform(-1.0, 1.0, size=(n, 3)) * c.half_extents
    rows = np.arange(n)
    local[rows, axis] = sign * c.half_extents[axis]
    pts = c.center + local @ c.R
    normals = sign[:, None] * c.R[axis]
    return pts, normals


def sample_interior(c: Cuboid, n: int, seed=None) -> np.ndarray:
    rng = _rng(seed)
    local = rng.uniform(-1.0, 1.0, size=(n, 3)) * c.half_extents
    return c.center + local @ c.R


# (corner index pairs follow Cuboid.corners ordering: bit 2 = x, bit 1 = y, bit 0 = z)
_OBJ_FACES = [
    (0, 1, 3), (0, 3, 2),  # -x
    (4, 6, 7), (4, 7, 5),  # +x
    (0, 4, 5), (0, 5, 1),  # -y
    (2, 3, 7), (2, 7, 6),  # +y
    (0, 2, 6), (0, 6, 4),  # -z
    (1, 5, 7), (1, 7, 3),  # +z
]


def write_obj(path, cuboids) -> None:
    """8 vertices and 12 triangles per cuboid, one ``o`` group each."""
    lines = []
    base = 0
    for k, c in enumerate(cuboids):
        lines.append(f"o cuboid_{c.id if c.id is not None else k}")
        for v in c.corners():
            lines.append("v {:.9g} {:.9g} {:.9g}".format(*v))
        for tri in _OBJ_FACES:
            lines.append("f {} {} {}".format(*(base + t + 1 for t in tri)))
        base += 8
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def dump_cuboids(path, cuboids) -> None:
    with open(path, "w", newline="\n") as f:
        json.dump([c.to_json() for c in cuboids], f, indent=1)
        f.write("\n")


def load_cuboids(path) -> list[Cuboid]:
    with open(path) as f:
        return [Cuboid.from_json(d) for d in json.load(f)]
