"""Planar segment extraction by greedy sequential RANSAC with connectivity splitting."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _cc
from scipy.spatial import cKDTree

from boxfinder.geometry import PointCloud
from boxfinder.seeding import substream


@dataclass
class RansacParams:
    dist_eps: float = 0.02
    normal_cos_min: float = 0.85
    conn_radius: float = 0.05
    min_points: int = 200
    max_candidates: int = 100
    seed: int = 0
    # neighbourhood used to draw the 2nd and 3rd sample point
    sample_neighbors: int = 48

    def __post_init__(self):
        if self.dist_eps <= 0:
            raise ValueError("dist_eps must be > 0")
        if not 0 < self.normal_cos_min < 1:
            raise ValueError("normal_cos_min must lie in (0, 1)")
        if self.conn_radius <= 0:
            raise ValueError("conn_radius must be > 0")
        if self.min_points < 3:
            raise ValueError("min_points must be >= 3")
        if self.max_candidates < 1:
            raise ValueError("max_candidates must be >= 1")


@dataclass
class PlaneSegment:
    inlier_indices: np.ndarray
    X: np.ndarray
    N: np.ndarray
    d: float
    id: int | None = None

    def __len__(self) -> int:
        return len(self.inlier_indices)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "normal": [float(x) for x in self.N],
            "offset": float(self.d),
            "inlier_count": int(len(self.inlier_indices)),
            "inlier_indices": [int(i) for i in self.inlier_indices],
        }


def make_segment(X, N=None, inlier_indices=None, id=None) -> PlaneSegment:
    """Segment from a point set; the plane is refit unless ``N`` is given."""
    X = np.asarray(X, dtype=np.float64).reshape(-1, 3)
    if N is None:
        N, d = fit_plane(X)
    else:
        N = np.asarray(N, dtype=np.float64)
        N = N / np.linalg.norm(N)
        d = float(np.mean(X @ N))
    if inlier_indices is None:
        inlier_indices = np.arange(len(X))
    return PlaneSegment(np.asarray(inlier_indices, dtype=np.int64), X, N, d, id)


def fit_plane(X) -> tuple[np.ndarray, float]:
    """Least-squares plane through ``X``: smallest-eigenvalue direction of the covariance."""
    c = X.mean(axis=0)
    cov = (X - c).T @ (X - c)
    _, vecs = np.linalg.eigh(cov)
    n = vecs[:, 0]
    # canonical sign: dominant component positive
    if n[np.argmax(np.abs(n))] < 0:
        n = -n
    return n, float(c @ n)


def connected_components(points, radius: float) -> list[np.ndarray]:
    """Components of the graph linking points at distance <= ``radius``.

    Components come back largest first (ties: smallest member id first).
    """
    if radius <= 0:
        raise ValueError("radius must be > 0")
    P = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(P)
    if n == 0:
        return []
    pairs = cKDTree(P).query_pairs(radius, output_type="ndarray")
    g = coo_matrix((np.ones(len(pairs), dtype=np.int8), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = _cc(g, directed=False)
    comps = [np.flatnonzero(labels == k) for k in range(labels.max() + 1)]
    comps.sort(key=lambda m: (-len(m), int(m[0])))
    return comps


def _candidates(P, Nrm, avail_ids, tree_ids, nbrs, rng, params):
    """Plane candidates from 3 nearby points; rows (normal, offset)."""
    m = len(avail_ids)
    out_n, out_d = [], []
    first = rng.integers(0, m, size=params.max_candidates)
    for f in first:
        seed_pt = avail_ids[f]
        local = nbrs[seed_pt]
        local = local[tree_ids[local] & (local != seed_pt)]
        if len(local) < 3:
            continue
        pick = rng.choice(len(local), size=2, replace=False)
        a, b, c = P[seed_pt], P[local[pick[0]]], P[local[pick[1]]]
        n = np.cross(b - a, c - a)
        norm = np.linalg.norm(n)
        if norm < 1e-12:
            continue
        n = n / norm
        # the three samples must agree with the candidate normal
        if np.min(np.abs(Nrm[[seed_pt, local[pick[0]], local[pick[1]]]] @ n)) < params.normal_cos_min:
            continue
        out_n.append(n)
        out_d.append(float(n @ a))
    if not out_n:
        return np.zeros((0, 3)), np.zeros(0)
    return np.array(out_n), np.array(out_d)


def _inlier_mask(P, Nrm, n, d, params):
    return (np.abs(P @ n - d) <= params.dist_eps) & (np.abs(Nrm @ n) >= params.normal_cos_min)


def _refine(P, Nrm, members, params):
    """Refit on ``members`` and keep only points consistent with the refit plane."""
    keep = members
    n, d = fit_plane(P[keep])
    for _ in range(3):
        mask = _inlier_mask(P[members], Nrm[members], n, d, params)
        new = members[mask]
        if len(new) < 3:
            return new, n, d
        if np.array_equal(new, keep):
            break
        keep = new
        n, d = fit_plane(P[keep])
    mask = _inlier_mask(P[keep], Nrm[keep], n, d, params)
    return keep[mask], n, d


def extract_planes(cloud: PointCloud, params: RansacParams | None = None) -> list[PlaneSegment]:
    """Greedy sequential plane detection.

    Each round scores ``max_candidates`` locally sampled planes by inlier count
    (distance and normal agreement), splits the best one's inliers into
    connected components and emits every component of at least
    ``min_points`` points. Points of the winning candidate that end up in no
    emitted segment are retired so the loop always makes progress.
    """
    params = params or RansacParams()
    if cloud.normals is None:
        raise ValueError("extract_planes needs normals; run estimate_normals on the cloud first")
    P, Nrm = cloud.points, cloud.normals
    if len(P) < params.min_points:
        return []
    rng = substream(params.seed, "ransac")
    tree = cKDTree(P)
    k = min(params.sample_neighbors, len(P))
    _, nbr = tree.query(P, k=k)
    nbr = np.asarray(nbr).reshape(len(P), k)

    avail = np.ones(len(P), dtype=bool)
    segments: list[PlaneSegment] = []
    misses = 0
    while avail.sum() >= params.min_points:
        ids = np.flatnonzero(avail)
        cn, cd = _candidates(P, Nrm, ids, avail, nbr, rng, params)
        if len(cn) == 0:
            misses += 1
            if misses >= 3:
                break
            continue
        Pa, Na = P[ids], Nrm[ids]
        dist_ok = np.abs(Pa @ cn.T - cd) <= params.dist_eps
        norm_ok = np.abs(Na @ cn.T) >= params.normal_cos_min
        score = np.count_nonzero(dist_ok & norm_ok, axis=0)
        best = int(np.argmax(score))  # first max: lowest candidate id
        if score[best] < params.min_points:
            misses += 1
            if misses >= 3:
                break
            continue
        misses = 0
        inl = ids[dist_ok[:, best] & norm_ok[:, best]]
        # a plane through three close samples is slightly tilted; refit and
        # recollect so the whole surface is captured, not a band of it
        for _ in range(3):
            n, d = fit_plane(P[inl])
            grown = ids[_inlier_mask(Pa, Na, n, d, params)]
            if len(grown) < params.min_points or np.array_equal(grown, inl):
                break
            inl = grown
        emitted = False
        for comp in connected_components(P[inl], params.conn_radius):
            if len(comp) < params.min_points:
                continue
            members, n, d = _refine(P, Nrm, inl[comp], params)
            if len(members) < params.min_points:
                continue
            members = np.sort(members)
            segments.append(PlaneSegment(members, P[members].copy(), n, d))
            avail[members] = False
            emitted = True
        if not emitted:
            avail[inl] = False
    for i, s in enumerate(segments):
        s.id = i
    return segments


def dump_segments(path, segments) -> None:
    with open(path, "w", newline="\n") as f:
        json.dump([s.to_json() for s in segments], f)
        f.write("\n")
