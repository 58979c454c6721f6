"""Monte-Carlo intersection-over-min-volume and the pairwise compatibility matrix."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from boxfinder.cuboid import Cuboid
from boxfinder.seeding import substream

DEFAULT_ETA = 0.10
DEFAULT_SAMPLES = 5000


def intersection_over_volume(s1: Cuboid, s2: Cuboid, n_samples: int = DEFAULT_SAMPLES, seed=0) -> float:
    """Estimated vol(s1 & s2) / min(vol(s1), vol(s2)).

    ``n_samples`` points are drawn inside each box; the fraction of each set
    falling inside the other box, scaled by its own box volume, gives two
    estimates of the intersection volume which are averaged.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    v1, v2 = s1.volume, s2.volume
    u1 = rng.uniform(-1.0, 1.0, size=(n_samples, 3)) * s1.half_extents
    u2 = rng.uniform(-1.0, 1.0, size=(n_samples, 3)) * s2.half_extents
    n_1in2 = _count_inside(u1, s1, s2)
    n_2in1 = _count_inside(u2, s2, s1)
    inter = (v1 * n_1in2 + v2 * n_2in1) / (2 * n_samples)
    return inter / min(v1, v2)


def _count_inside(local, src: Cuboid, dst: Cuboid) -> int:
    """Points given in ``src``'s frame that fall inside the closed box ``dst``."""
    M = src.R @ dst.R.T
    off = (src.center - dst.center) @ dst.R.T
    q = np.abs(local @ M + off)
    return int(np.count_nonzero(np.all(q <= dst.half_extents, axis=1)))


def is_compatible(s1: Cuboid, s2: Cuboid, eta: float = DEFAULT_ETA, n_samples: int = DEFAULT_SAMPLES, seed=0) -> bool:
    return intersection_over_volume(s1, s2, n_samples, seed) <= eta


def pair_rng(seed: int, i: int, j: int) -> np.random.Generator:
    a, b = (i, j) if i <= j else (j, i)
    return substream(seed, "iov", a, b)


def boxes_separated(a: Cuboid, b: Cuboid) -> bool:
    """True when a separating axis exists (the closed boxes are disjoint)."""
    lo_a, hi_a = a.aabb()
    lo_b, hi_b = b.aabb()
    if np.any(hi_a < lo_b) or np.any(hi_b < lo_a):
        return True
    t = b.center - a.center
    cross = np.cross(a.R[:, None, :], b.R[None, :, :]).reshape(9, 3)
    norms = np.linalg.norm(cross, axis=1)
    keep = norms > 1e-9
    axes = np.vstack([a.R, b.R, cross[keep] / norms[keep, None]])
    ra = np.abs(axes @ a.R.T) @ a.half_extents
    rb = np.abs(axes @ b.R.T) @ b.half_extents
    return bool(np.any(np.abs(axes @ t) > ra + rb))


def _frames(proposals):
    R = np.stack([c.R for c in proposals])
    C = np.stack([c.center for c in proposals])
    H = np.stack([c.half_extents for c in proposals])
    return R, C, H


def _separated_many(R, C, H, I, J) -> np.ndarray:
    """Vectorised separating-axis test for box pairs (I[k], J[k])."""
    Ra, Rb = R[I], R[J]
    cross = np.cross(Ra[:, :, None, :], Rb[:, None, :, :]).reshape(len(I), 9, 3)
    norms = np.linalg.norm(cross, axis=2, keepdims=True)
    # parallel edge pairs give no new axis; reuse a face axis instead
    cross = np.where(norms > 1e-9, cross / np.maximum(norms, 1e-300), Ra[:, :1, :])
    axes = np.concatenate([Ra, Rb, cross], axis=1)
    t = C[J] - C[I]
    ra = np.einsum("kaj,kj->ka", np.abs(np.einsum("kad,kjd->kaj", axes, Ra)), H[I])
    rb = np.einsum("kaj,kj->ka", np.abs(np.einsum("kad,kjd->kaj", axes, Rb)), H[J])
    return np.any(np.abs(np.einsum("kad,kd->ka", axes, t)) > ra + rb, axis=1)


def _outer_overlap(R, C, H, I, J) -> np.ndarray:
    """Volume of box I intersected with box J's bounding box in I's frame;
    an upper bound on the true intersection."""
    A = np.abs(np.einsum("kid,kjd->kij", R[I], R[J]))
    hb = np.einsum("kij,kj->ki", A, H[J])
    t = np.einsum("kid,kd->ki", R[I], C[J] - C[I])
    ha = H[I]
    side = np.minimum(ha, t + hb) - np.maximum(-ha, t - hb)
    return np.prod(np.maximum(side, 0.0), axis=1)


_GRID = 6
_CORNERS = np.stack(np.meshgrid(*[np.linspace(-1, 1, _GRID + 1)] * 3, indexing="ij"), -1).reshape(-1, 3)


def _inner_overlap(R, C, H, I, J, chunk: int = 1024) -> np.ndarray:
    """Volume of the grid cells of box I lying wholly inside box J; a lower
    bound on the true intersection."""
    out = np.empty(len(I))
    g = _GRID + 1
    for s in range(0, len(I), chunk):
        i, j = I[s : s + chunk], J[s : s + chunk]
        local = _CORNERS[None] * H[i][:, None, :]
        world = np.einsum("kpa,kad->kpd", local, R[i]) + C[i][:, None, :]
        q = np.einsum("kpd,kad->kpa", world - C[j][:, None, :], R[j])
        inside = np.all(np.abs(q) <= H[j][:, None, :], axis=2).reshape(-1, g, g, g)
        cells = (
            inside[:, :-1, :-1, :-1] & inside[:, 1:, :-1, :-1] & inside[:, :-1, 1:, :-1] & inside[:, :-1, :-1, 1:]
            & inside[:, 1:, 1:, :-1] & inside[:, 1:, :-1, 1:] & inside[:, :-1, 1:, 1:] & inside[:, 1:, 1:, 1:]
        )
        vol = 8 * np.prod(H[i], axis=1)
        out[s : s + chunk] = cells.reshape(len(i), -1).sum(axis=1) / _GRID**3 * vol
    return out


def _iov_std(ratio, va, vb, n_samples: int):
    """Standard error of the sampled estimate for pairs with true ``ratio``."""
    m = np.minimum(va, vb)
    inter = ratio * m
    var = 0.0
    for v in (va, vb):
        p = np.minimum(inter / v, 1.0)
        var = var + (v / m) ** 2 * p * (1 - p) / n_samples
    return 0.5 * np.sqrt(var)


# how many standard errors a bound must clear before sampling is skipped
_MARGIN_SE = 6.0


def pool_hash(proposals) -> str:
    h = hashlib.sha256()
    for c in proposals:
        h.update(c.key())
    return h.hexdigest()


@dataclass
class CompatibilityMatrix:
    bits: np.ndarray
    eta: float
    n_samples: int
    seed: int
    pool_hash: str = ""

    @property
    def n(self) -> int:
        return len(self.bits)

    def __getitem__(self, ij):
        return self.bits[ij]

    def compatible_with_all(self, i: int, chosen) -> bool:
        chosen = list(chosen)
        return bool(np.all(self.bits[i, chosen])) if chosen else True

    def is_valid_solution(self, ids) -> bool:
        ids = list(ids)
        if len(set(ids)) != len(ids):
            return False
        sub = self.bits[np.ix_(ids, ids)]
        off = ~np.eye(len(ids), dtype=bool)
        return bool(np.all(sub[off]))

    def save(self, path) -> None:
        header = {
            "n": self.n,
            "eta": self.eta,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "pool_hash": self.pool_hash,
        }
        with open(path, "wb") as f:
            f.write(json.dumps(header, sort_keys=True).encode() + b"\n")
            f.write(np.packbits(self.bits.reshape(-1)).tobytes())

    @classmethod
    def load(cls, path, proposals=None) -> "CompatibilityMatrix":
        with open(path, "rb") as f:
            header = json.loads(f.readline())
            raw = np.frombuffer(f.read(), dtype=np.uint8)
        n = header["n"]
        if proposals is not None:
            if len(proposals) != n or pool_hash(proposals) != header["pool_hash"]:
                raise ValueError("compatibility cache does not match the proposal pool")
        bits = np.unpackbits(raw)[: n * n].astype(bool).reshape(n, n)
        return cls(bits, header["eta"], header["n_samples"], header["seed"], header["pool_hash"])


def compatibility_matrix(
    proposals,
    eta: float = DEFAULT_ETA,
    n_samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    prefilter: bool = True,
) -> CompatibilityMatrix:
    """Pairwise compatibility with per-pair seeds, so entry (i, j) does not
    depend on which other pairs were computed.

    With ``prefilter`` pairs are first screened by exact geometry: disjoint
    boxes are compatible, and pairs whose overlap bounds sit more than six
    standard errors of the sampled estimate away from ``eta`` are settled
    without sampling. Only the remaining pairs are sampled.
    """
    n = len(proposals)
    if n == 0:
        raise ValueError("empty proposal pool")
    bits = np.ones((n, n), dtype=bool)
    np.fill_diagonal(bits, False)
    I, J = np.triu_indices(n, k=1)
    if prefilter and len(I):
        R, C, H = _frames(proposals)
        boxes = np.array([np.concatenate(c.aabb()) for c in proposals])
        lo, hi = boxes[:, :3], boxes[:, 3:]
        keep = np.all((lo[I] <= hi[J]) & (lo[J] <= hi[I]), axis=1)
        I, J = I[keep], J[keep]
        sep = _separated_many(R, C, H, I, J)
        I, J = I[~sep], J[~sep]
        va = 8 * np.prod(H[I], axis=1)
        vb = 8 * np.prod(H[J], axis=1)
        m = np.minimum(va, vb)
        upper = np.minimum(np.minimum(_outer_overlap(R, C, H, I, J), _outer_overlap(R, C, H, J, I)) / m, 1.0)
        surely_ok = upper + _MARGIN_SE * _iov_std(upper, va, vb, n_samples) < eta
        small_first = va <= vb
        Is, Js = np.where(small_first, I, J), np.where(small_first, J, I)
        lower = _inner_overlap(R, C, H, Is, Js) / m
        # worst standard error over the feasible interval
        worst = np.max([_iov_std(lower + f * (upper - lower), va, vb, n_samples) for f in np.linspace(0, 1, 11)], axis=0)
        surely_bad = (lower - _MARGIN_SE * worst > eta) & ~surely_ok
        bits[I[surely_bad], J[surely_bad]] = False
        bits[J[surely_bad], I[surely_bad]] = False
        rest = ~(surely_ok | surely_bad)
        I, J = I[rest], J[rest]
    for i, j in zip(I.tolist(), J.tolist()):
        ok = is_compatible(proposals[i], proposals[j], eta, n_samples, pair_rng(seed, i, j))
        bits[i, j] = bits[j, i] = ok
    return CompatibilityMatrix(bits, eta, n_samples, seed, pool_hash(proposals))
