"""Cuboid proposals built around single plane segments and adjacent segment pairs."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

from boxfinder.cuboid import MIN_THICKNESS, Cuboid
from boxfinder.planes import PlaneSegment

log = logging.getLogger(__name__)


class DegenerateFrameError(ValueError):
    pass


class Adjacency(enum.Enum):
    ORTHOGONAL = "Orthogonal"
    COLINEAR = "Colinear"
    NOT_ADJACENT = "NotAdjacent"


@dataclass
class AdjacencyParams:
    alpha: float = 0.3
    beta: float = 0.7
    gamma: float = 0.025

    def __post_init__(self):
        if not 0 < self.alpha < self.beta < 1:
            raise ValueError("need 0 < alpha < beta < 1")
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")


def min_pair_distance(XA, XB) -> float:
    d, _ = cKDTree(XB).query(XA, k=1)
    return float(np.min(d))


def check_adjacency(A: PlaneSegment, B: PlaneSegment, p: AdjacencyParams | None = None) -> Adjacency:
    """Alignment (near-orthogonal or near-parallel normals) and proximity.

    Proximity compares the smallest *squared* point-to-point distance between
    the two segments against ``gamma``.
    """
    p = p or AdjacencyParams()
    c = abs(float(A.N @ B.N))
    if c < p.alpha:
        kind = Adjacency.ORTHOGONAL
    elif c > p.beta:
        kind = Adjacency.COLINEAR
    else:
        return Adjacency.NOT_ADJACENT
    # bounding-box gap is a lower bound on the point gap
    gap = np.maximum(0.0, np.maximum(B.X.min(axis=0) - A.X.max(axis=0), A.X.min(axis=0) - B.X.max(axis=0)))
    if gap @ gap >= p.gamma:
        return Adjacency.NOT_ADJACENT
    if min_pair_distance(A.X, B.X) ** 2 >= p.gamma:
        return Adjacency.NOT_ADJACENT
    return kind


def _gs(first, second):
    u = first / np.linalg.norm(first)
    b = second / np.linalg.norm(second)
    v = b - (u @ b) * u
    v = v / np.linalg.norm(v)
    w = np.cross(u, v)
    return np.stack([u, v, w])


def gram_schmidt_frames(NA, NB) -> tuple[np.ndarray, np.ndarray]:
    """Two right-handed frames, each starting from one of the normals."""
    NA = np.asarray(NA, dtype=np.float64)
    NB = np.asarray(NB, dtype=np.float64)
    c = abs(NA @ NB) / (np.linalg.norm(NA) * np.linalg.norm(NB))
    if c >= 1 - 1e-6:
        raise DegenerateFrameError(f"normals are parallel (|cos| = {c:.9f})")
    return _gs(NA, NB), _gs(NB, NA)


def box_from_basis(basis, X, min_thickness: float = MIN_THICKNESS, **kw) -> Cuboid:
    """Tightest box in ``basis`` around ``X``; each full extent is at least ``min_thickness``."""
    B = np.array(basis, dtype=np.float64).reshape(3, 3)
    if np.linalg.det(B) < 0:
        B[2] = -B[2]
    proj = np.asarray(X, dtype=np.float64).reshape(-1, 3) @ B.T
    lo, hi = proj.min(axis=0), proj.max(axis=0)
    half = np.maximum((hi - lo) / 2, min_thickness / 2)
    center = ((lo + hi) / 2) @ B
    return Cuboid(B, center, half, **kw)


def pair_cuboids(A: PlaneSegment, B: PlaneSegment, min_thickness: float = MIN_THICKNESS) -> tuple[Cuboid, Cuboid]:
    fa, fb = gram_schmidt_frames(A.N, B.N)
    X = np.vstack([A.X, B.X])
    src = (A.id if A.id is not None else -1, B.id if B.id is not None else -1)
    return (
        box_from_basis(fa, X, min_thickness, provenance="PairA", sources=src),
        box_from_basis(fb, X, min_thickness, provenance="PairB", sources=src),
    )


def _in_plane_axes(n):
    helper = np.eye(3)[np.argmin(np.abs(n))]
    e1 = np.cross(n, helper)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(n, e1)


def min_area_angle(pts2d) -> float:
    """Rotation in [0, pi/2) of the minimum-area enclosing rectangle.

    The optimal rectangle has one side collinear with a convex-hull edge, so
    only hull edge directions are tried.
    """
    try:
        hull = ConvexHull(pts2d)
    except QhullError as e:
        raise DegenerateFrameError("points are collinear") from e
    H = pts2d[hull.vertices]
    E = np.roll(H, -1, axis=0) - H
    angles = np.unique(np.mod(np.arctan2(E[:, 1], E[:, 0]), np.pi / 2))
    best, best_area = 0.0, np.inf
    for t in angles:
        c, s = math.cos(t), math.sin(t)
        r = H @ np.array([[c, -s], [s, c]])
        area = np.prod(r.max(axis=0) - r.min(axis=0))
        if area < best_area * (1 - 1e-12):
            best, best_area = float(t), area
    return best


def thin_cuboid(A: PlaneSegment, min_thickness: float = MIN_THICKNESS) -> Cuboid:
    """Oriented box of a single segment: first axis is the normal, the other
    two minimise the in-plane rectangle area."""
    X = np.asarray(A.X, dtype=np.float64)
    if len(X) < 3:
        raise DegenerateFrameError("need at least 3 points")
    u = A.N / np.linalg.norm(A.N)
    e1, e2 = _in_plane_axes(u)
    pts2d = np.stack([X @ e1, X @ e2], axis=1)
    t = min_area_angle(pts2d - pts2d.mean(axis=0))
    v = math.cos(t) * e1 + math.sin(t) * e2
    w = np.cross(u, v)
    src = (A.id if A.id is not None else -1,)
    return box_from_basis(np.stack([u, v, w]), X, min_thickness, provenance="Thin", sources=src)


def same_box(a: Cuboid, b: Cuboid, angle_deg: float = 1.0, tol: float = 0.01) -> bool:
    """Equal up to axis permutation/sign: frames within ``angle_deg``,
    centers and matching extents within ``tol``."""
    if np.linalg.norm(a.center - b.center) > tol:
        return False
    M = np.abs(a.R @ b.R.T)
    perm = np.argmax(M, axis=1)
    if len(set(perm.tolist())) != 3:
        return False
    if np.min(M[np.arange(3), perm]) < math.cos(math.radians(angle_deg)):
        return False
    return bool(np.all(np.abs(a.half_extents - b.half_extents[perm]) <= tol))


def deduplicate(cuboids: list[Cuboid], angle_deg: float = 1.0, tol: float = 0.01) -> list[Cuboid]:
    if len(cuboids) < 2:
        return list(cuboids)
    centers = np.array([c.center for c in cuboids])
    pairs = cKDTree(centers).query_pairs(tol, output_type="ndarray")
    earlier: dict[int, list[int]] = {}
    for i, j in pairs:
        i, j = (int(i), int(j)) if i < j else (int(j), int(i))
        earlier.setdefault(j, []).append(i)
    keep = np.ones(len(cuboids), dtype=bool)
    for j in sorted(earlier):
        for i in sorted(earlier[j]):
            if keep[i] and same_box(cuboids[i], cuboids[j], angle_deg, tol):
                keep[j] = False
                break
    return [c for c, k in zip(cuboids, keep) if k]


_PROV_ORDER = {"PairA": 0, "PairB": 1, "Thin": 2}


def generate_proposals(
    cloud,
    segments: list[PlaneSegment],
    params: AdjacencyParams | None = None,
    min_thickness: float = MIN_THICKNESS,
    dedup: bool = True,
    stats: dict | None = None,
) -> list[Cuboid]:
    """Both pair boxes for every adjacent segment pair plus one thin box per
    segment, ordered by provenance then source ids, duplicates dropped.

    ``cloud`` is accepted for interface symmetry; the segments carry their points.
    """
    params = params or AdjacencyParams()
    for k, s in enumerate(segments):
        if s.id is None:
            s.id = k
    out: list[Cuboid] = []
    n_adj = n_degenerate = n_thin_fail = 0
    for a in range(len(segments)):
        for b in range(a + 1, len(segments)):
            A, B = segments[a], segments[b]
            if check_adjacency(A, B, params) is Adjacency.NOT_ADJACENT:
                continue
            n_adj += 1
            try:
                out.extend(pair_cuboids(A, B, min_thickness))
            except DegenerateFrameError:
                n_degenerate += 1
    for s in segments:
        try:
            out.append(thin_cuboid(s, min_thickness))
        except DegenerateFrameError:
            n_thin_fail += 1
    out.sort(key=lambda c: (_PROV_ORDER[c.provenance], c.sources))
    n_raw = len(out)
    if dedup:
        out = deduplicate(out)
    for k, c in enumerate(out):
        c.id = k
    if n_degenerate or n_thin_fail:
        log.info("skipped %d degenerate pairs and %d degenerate segments", n_degenerate, n_thin_fail)
    if stats is not None:
        stats.update(
            adjacent_pairs=n_adj,
            degenerate_pairs=n_degenerate,
            degenerate_segments=n_thin_fail,
            raw=n_raw,
            kept=len(out),
        )
    return out
