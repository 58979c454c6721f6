"""Synthetic scans of known cuboid arrangements, used where no real scan exists."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.spatial import cKDTree

from boxfinder.compatibility import compatibility_matrix, intersection_over_volume
from boxfinder.cuboid import _FACE_AXIS, _FACE_SIGN, Cuboid
from boxfinder.geometry import PointCloud
from boxfinder.seeding import substream


class SceneError(ValueError):
    pass


@dataclass
class SceneSpec:
    gt_cuboids: list
    points_per_m2: float = 800.0
    noise_sigma: float = 0.0
    dropout_frac: float = 0.0
    clutter_frac: float = 0.0
    seed: int = 0
    dropout_radius: float = 0.2
    name: str = ""
    ransac: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.points_per_m2 <= 0 or self.noise_sigma < 0 or self.dropout_radius <= 0:
            raise SceneError("density and radii must be positive, noise non-negative")
        for f in ("dropout_frac", "clutter_frac"):
            if not 0 <= getattr(self, f) < 1:
                raise SceneError(f"{f} must lie in [0, 1)")
        if not self.gt_cuboids:
            raise SceneError("scene needs at least one cuboid")

    @classmethod
    def from_json(cls, d: dict) -> "SceneSpec":
        known = {"points_per_m2", "noise_sigma", "dropout_frac", "clutter_frac", "seed", "dropout_radius", "name", "ransac"}
        unknown = set(d) - known - {"gt_cuboids"}
        if unknown:
            raise SceneError(f"unknown scene fields: {sorted(unknown)}")
        if "gt_cuboids" not in d or not isinstance(d["gt_cuboids"], list):
            raise SceneError("scene spec needs a 'gt_cuboids' list")
        gt = [_cuboid_from_spec(c, k) for k, c in enumerate(d["gt_cuboids"])]
        return cls(gt_cuboids=gt, **{k: v for k, v in d.items() if k in known})

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "points_per_m2": self.points_per_m2,
            "noise_sigma": self.noise_sigma,
            "dropout_frac": self.dropout_frac,
            "clutter_frac": self.clutter_frac,
            "dropout_radius": self.dropout_radius,
            "seed": self.seed,
            "ransac": self.ransac,
            "gt_cuboids": [c.to_json() for c in self.gt_cuboids],
        }


def _cuboid_from_spec(d: dict, k: int) -> Cuboid:
    try:
        if "lo" in d:
            c = Cuboid.axis_aligned(d["lo"], d["hi"], provenance="GT")
            yaw = d.get("yaw_deg", 0.0)
            if yaw:
                t = math.radians(yaw)
                R = np.array([[math.cos(t), math.sin(t), 0.0], [-math.sin(t), math.cos(t), 0.0], [0.0, 0.0, 1.0]])
                c = Cuboid(R, c.center, c.half_extents, provenance="GT")
        else:
            c = Cuboid.from_json({**d, "provenance": "GT"})
    except (KeyError, TypeError, ValueError) as e:
        raise SceneError(f"bad cuboid #{k}: {e}") from None
    if np.any(c.half_extents <= 0):
        raise SceneError(f"cuboid #{k} has a non-positive extent")
    c.id = k
    c.provenance = "GT"
    return c


def preset_names() -> list[str]:
    root = resources.files("boxfinder") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_preset(name: str, seed: int | None = None) -> SceneSpec:
    names = preset_names()
    if name not in names:
        raise SceneError(f"unknown preset {name!r}; available: {', '.join(names)}")
    text = (resources.files("boxfinder") / "presets" / f"{name}.json").read_text()
    spec = SceneSpec.from_json(json.loads(text))
    spec.name = name
    if seed is not None:
        spec.seed = seed
    return spec


def load_scene_spec(path_or_name: str, seed: int | None = None) -> SceneSpec:
    if path_or_name in preset_names():
        return load_preset(path_or_name, seed)
    if path_or_name.endswith(".json"):
        try:
            with open(path_or_name) as f:
                spec = SceneSpec.from_json(json.load(f))
        except FileNotFoundError:
            raise SceneError(f"no such scene file {path_or_name!r}") from None
        except json.JSONDecodeError as e:
            raise SceneError(f"{path_or_name}: invalid JSON: {e}") from None
        if seed is not None:
            spec.seed = seed
        return spec
    raise SceneError(f"unknown preset {path_or_name!r}; available: {', '.join(preset_names())}")


def _face_grid(c: Cuboid, face: int, density: float, rng):
    """Jittered-grid samples on one face (one point per cell)."""
    axis = _FACE_AXIS[face]
    sign = _FACE_SIGN[face]
    a, b = [k for k in range(3) if k != axis]
    ha, hb = c.half_extents[a], c.half_extents[b]
    step = 1.0 / math.sqrt(density)
    na = max(1, int(round(2 * ha / step)))
    nb = max(1, int(round(2 * hb / step)))
    ia, ib = np.meshgrid(np.arange(na), np.arange(nb), indexing="ij")
    ua = (ia.ravel() + rng.random(ia.size)) / na
    ub = (ib.ravel() + rng.random(ib.size)) / nb
    local = np.zeros((ia.size, 3))
    local[:, axis] = sign * c.half_extents[axis]
    local[:, a] = (2 * ua - 1) * ha
    local[:, b] = (2 * ub - 1) * hb
    pts = c.center + local @ c.R
    nrm = np.tile(sign * c.R[axis], (len(pts), 1))
    return pts, nrm


def sample_scene_surface(cuboids, density: float, rng):
    pts, nrm = [], []
    for c in cuboids:
        for face in range(6):
            p, n = _face_grid(c, face, density, rng)
            pts.append(p)
            nrm.append(n)
    return np.vstack(pts), np.vstack(nrm)


def _dropout(P, frac, radius, rng):
    """Keep mask after removing spherical patches; exactly
    ``n - ceil((1 - frac) n)`` points go."""
    n = len(P)
    target = n - math.ceil((1 - frac) * n)
    keep = np.ones(n, dtype=bool)
    if target <= 0:
        return keep
    tree = cKDTree(P)
    removed = 0
    while removed < target:
        alive = np.flatnonzero(keep)
        c = P[alive[rng.integers(len(alive))]]
        hit = np.array(tree.query_ball_point(c, radius), dtype=np.int64)
        hit = hit[keep[hit]]
        need = target - removed
        if len(hit) > need:
            d = np.linalg.norm(P[hit] - c, axis=1)
            hit = hit[np.argsort(d, kind="stable")[:need]]
        keep[hit] = False
        removed += len(hit)
    return keep


def generate_scene(spec: SceneSpec) -> tuple[PointCloud, list[Cuboid]]:
    gt = spec.gt_cuboids
    if len(gt) > 1:
        cm = compatibility_matrix(gt, eta=0.1, n_samples=5000, seed=spec.seed)
        off = ~np.eye(len(gt), dtype=bool)
        if not np.all(cm.bits[off]):
            i, j = np.argwhere(~cm.bits & off)[0]
            raise SceneError(f"ground-truth cuboids {i} and {j} overlap by more than 10%")
    P, N = sample_scene_surface(gt, spec.points_per_m2, substream(spec.seed, "scene", "surface"))
    if spec.noise_sigma > 0:
        P = P + substream(spec.seed, "scene", "noise").normal(0.0, spec.noise_sigma, size=P.shape)
    if spec.dropout_frac > 0:
        keep = _dropout(P, spec.dropout_frac, spec.dropout_radius, substream(spec.seed, "scene", "dropout"))
        P, N = P[keep], N[keep]
    if spec.clutter_frac > 0:
        rng = substream(spec.seed, "scene", "clutter")
        m = int(round(spec.clutter_frac * len(P)))
        lo, hi = P.min(axis=0), P.max(axis=0)
        C = rng.uniform(lo, hi, size=(m, 3))
        CN = rng.normal(size=(m, 3))
        CN /= np.linalg.norm(CN, axis=1, keepdims=True)
        P, N = np.vstack([P, C]), np.vstack([N, CN])
    return PointCloud(P, N), list(gt)


def match_solutions(found, gt, n_samples: int = 5000, seed: int = 0, min_iov: float = 0.5) -> dict:
    """Greedy one-to-one matching of found boxes to ground truth by IoV."""
    found, gt = list(found), list(gt)
    if not found or not gt:
        return {"matched_fraction": 0.0, "matched": 0, "spurious": len(found), "pairs": []}
    M = np.zeros((len(found), len(gt)))
    for i, f in enumerate(found):
        for j, g in enumerate(gt):
            M[i, j] = intersection_over_volume(f, g, n_samples, substream(seed, "match", i, j))
    pairs = []
    used_f, used_g = set(), set()
    order = sorted(((-M[i, j], i, j) for i in range(len(found)) for j in range(len(gt))))
    for neg, i, j in order:
        if -neg < min_iov:
            break
        if i in used_f or j in used_g:
            continue
        used_f.add(i)
        used_g.add(j)
        pairs.append((i, j))
    return {
        "matched_fraction": len(pairs) / len(gt),
        "matched": len(pairs),
        "spurious": len(found) - len(pairs),
        "pairs": pairs,
    }
