"""Fitness of a cuboid set against the scan: truncated Chamfer distance
weighted by an exponential normal-disagreement term."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from boxfinder.cuboid import _FACE_AXIS, _FACE_SIGN, Cuboid, largest_remainder
from boxfinder.geometry import NNIndex, PointCloud
from boxfinder.seeding import substream


@dataclass
class ObjectiveConfig:
    tau_trunc: float = 0.1
    normal_weight: float = 0.25
    # total surface samples per evaluated solution, split by area
    samples_per_solution: int = 10000
    seed: int = 0

    def __post_init__(self):
        if self.tau_trunc <= 0:
            raise ValueError("tau_trunc must be > 0")
        if self.samples_per_solution < 1:
            raise ValueError("samples_per_solution must be >= 1")


def empty_loss(cfg: ObjectiveConfig | None = None) -> float:
    """Loss of the empty set: both terms saturated at 2."""
    w = (cfg or ObjectiveConfig()).normal_weight
    return 2.0 * (1.0 + w * math.exp(2.0))


def combine(l_c: float, l_n: float, normal_weight: float = 0.25) -> float:
    return l_c * (1.0 + normal_weight * math.exp(l_n))


def face_sequence(areas, n: int) -> np.ndarray:
    """Face id of each of the first ``n`` stream samples. Every prefix has
    per-face counts within one of the area-proportional share."""
    w = np.asarray(areas, dtype=np.float64)
    w = w / w.sum()
    faces, times = [], []
    for f in range(len(w)):
        if w[f] <= 0:
            continue
        m = np.arange(int(math.ceil(w[f] * n)) + 1)
        faces.append(np.full(len(m), f))
        times.append((m + 0.5) / w[f])
    faces = np.concatenate(faces)
    times = np.concatenate(times)
    return faces[np.lexsort((faces, times))][:n]


def surface_stream(c: Cuboid, n: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """First ``n`` samples of the cuboid's fixed sample stream: a shorter
    request returns a prefix of a longer one."""
    if n < 1:
        raise ValueError("n must be >= 1")
    face = face_sequence(c.face_areas(), n)
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    local = rng.uniform(-1.0, 1.0, size=(n, 3)) * c.half_extents
    axis = _FACE_AXIS[face]
    sign = _FACE_SIGN[face]
    local[np.arange(n), axis] = sign * c.half_extents[axis]
    return c.center + local @ c.R, sign[:, None] * c.R[axis]


def cuboid_samples(c: Cuboid, n: int, cfg: ObjectiveConfig) -> tuple[np.ndarray, np.ndarray]:
    return surface_stream(c, n, substream(cfg.seed, "surface", c.key()))


def allocate(cuboids, n: int) -> np.ndarray:
    """Samples per cuboid, proportional to surface area (largest remainder)."""
    return largest_remainder([c.area for c in cuboids], n)


def decimate(cloud: PointCloud, max_points: int, seed: int = 0) -> PointCloud:
    """Seeded uniform subset of at most ``max_points`` points, original order kept."""
    if max_points < 1:
        raise ValueError("max_points must be >= 1")
    if len(cloud) <= max_points:
        return cloud
    idx = np.sort(substream(seed, "decimate").choice(len(cloud), size=max_points, replace=False))
    return cloud.subset(idx)


def _nn(points, index):
    return index if index is not None else NNIndex(points)


def chamfer_matches(X, Y, nn_Y: NNIndex | None = None, nn_X: NNIndex | None = None):
    """Nearest-neighbour distances and ids in both directions."""
    d_xy, i_xy = _nn(Y, nn_Y).query(X)
    d_yx, i_yx = _nn(X, nn_X).query(Y)
    return d_xy, i_xy, d_yx, i_yx


def truncated_chamfer(X, Y, tau: float = 0.1, nn_Y=None, nn_X=None, matches=None) -> float:
    """Sum over both directions of mean(min(d, tau) / tau); lies in [0, 2]."""
    d_xy, _, d_yx, _ = matches if matches is not None else chamfer_matches(X, Y, nn_Y, nn_X)
    return float(np.mean(np.minimum(d_xy, tau) / tau) + np.mean(np.minimum(d_yx, tau) / tau))


def cosine_dissimilarity(NX, NY, matches) -> float:
    """Sum over both directions of mean(1 - |n . n_match|); sign-agnostic."""
    _, i_xy, _, i_yx = matches
    NX = np.asarray(NX, dtype=np.float64)
    NY = np.asarray(NY, dtype=np.float64)
    a = 1.0 - np.abs(np.einsum("ij,ij->i", NX, NY[i_xy]))
    b = 1.0 - np.abs(np.einsum("ij,ij->i", NY, NX[i_yx]))
    return float(np.mean(a) + np.mean(b))


def eval_obj_func(S, Y: PointCloud, cfg: ObjectiveConfig | None = None) -> float:
    """Reference evaluation: sample the cuboids, match both ways, combine.

    Cuboids are processed in content-key order so the result only depends on
    the set.
    """
    cfg = cfg or ObjectiveConfig()
    Y.require_normals()
    S = sorted(S, key=lambda c: c.key())
    if not S:
        return empty_loss(cfg)
    counts = allocate(S, cfg.samples_per_solution)
    parts = [cuboid_samples(c, int(k), cfg) for c, k in zip(S, counts) if k > 0]
    X = np.vstack([p[0] for p in parts])
    NX = np.vstack([p[1] for p in parts])
    m = chamfer_matches(X, Y.points)
    l_c = truncated_chamfer(X, Y.points, cfg.tau_trunc, matches=m)
    l_n = cosine_dissimilarity(NX, Y.normals, m)
    return combine(l_c, l_n, cfg.normal_weight)


class Objective:
    """Counting, memoising objective over a fixed proposal pool.

    A solution draws a prefix of each member's sample stream, so the
    samples-to-scan sums are prefix sums computed once per proposal. The
    scan-to-samples direction is matched per distinct subset.
    """

    def __init__(self, pool, target: PointCloud, cfg: ObjectiveConfig | None = None):
        self.cfg = cfg or ObjectiveConfig()
        target.require_normals()
        self.pool = list(pool)
        self.target = target
        tau = self.cfg.tau_trunc
        N = self.cfg.samples_per_solution
        NY = target.normals
        nn_Y = NNIndex(target.points)
        self._rank = np.empty(len(self.pool), dtype=np.int64)
        self._rank[sorted(range(len(self.pool)), key=lambda i: self.pool[i].key())] = np.arange(len(self.pool))
        self._areas = np.array([c.area for c in self.pool])
        self._samples = []
        self._cum_t = []
        self._cum_c = []
        for c in self.pool:
            pts, nrm = cuboid_samples(c, N, self.cfg)
            self._samples.append((pts, nrm))
            d, i = nn_Y.query(pts)
            t = np.minimum(d, tau) / tau
            cs = 1.0 - np.abs(np.einsum("ij,ij->i", nrm, NY[i]))
            self._cum_t.append(np.concatenate([[0.0], np.cumsum(t)]))
            self._cum_c.append(np.concatenate([[0.0], np.cumsum(cs)]))
        self.n_evals = 0
        self._memo: dict[tuple, float] = {}
        self.empty = empty_loss(self.cfg)

    def __len__(self) -> int:
        return len(self.pool)

    def __call__(self, ids) -> float:
        self.n_evals += 1
        return self.loss(ids)

    def loss(self, ids) -> float:
        """Uncounted evaluation."""
        key = tuple(sorted(set(int(i) for i in ids)))
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        val = self._compute(key)
        self._memo[key] = val
        return val

    def _allocation(self, ids):
        ids = sorted(set(int(i) for i in ids), key=lambda i: self._rank[i])
        counts = largest_remainder(self._areas[ids], self.cfg.samples_per_solution)
        return ids, counts

    def terms(self, ids) -> tuple[float, float]:
        ids, counts = self._allocation(ids)
        if not ids:
            return 2.0, 2.0
        tau = self.cfg.tau_trunc
        N = self.cfg.samples_per_solution
        xy_t = sum(self._cum_t[i][k] for i, k in zip(ids, counts)) / N
        xy_c = sum(self._cum_c[i][k] for i, k in zip(ids, counts)) / N
        X = np.vstack([self._samples[i][0][:k] for i, k in zip(ids, counts) if k > 0])
        NX = np.vstack([self._samples[i][1][:k] for i, k in zip(ids, counts) if k > 0])
        d, j = NNIndex(X).query(self.target.points)
        yx_t = np.mean(np.minimum(d, tau) / tau)
        yx_c = np.mean(1.0 - np.abs(np.einsum("ij,ij->i", self.target.normals, NX[j])))
        return float(xy_t + yx_t), float(xy_c + yx_c)

    def _compute(self, key) -> float:
        if not key:
            return self.empty
        l_c, l_n = self.terms(key)
        return combine(l_c, l_n, self.cfg.normal_weight)

    def solution_points(self, ids) -> tuple[np.ndarray, np.ndarray]:
        """The samples a solution is scored with."""
        ids, counts = self._allocation(ids)
        if not ids:
            return np.zeros((0, 3)), np.zeros((0, 3))
        return (
            np.vstack([self._samples[i][0][:k] for i, k in zip(ids, counts)]),
            np.vstack([self._samples[i][1][:k] for i, k in zip(ids, counts)]),
        )
