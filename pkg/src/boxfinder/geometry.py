"""Point clouds, PLY I/O, normal estimation and exact nearest-neighbour queries."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

log = logging.getLogger(__name__)


class PlyError(ValueError):
    """Base class for PLY parse errors; ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int | None = None, path=None):
        self.offset = offset
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte {offset}")
        super().__init__(f"{': '.join(where)}: {message}" if where else message)


class PlyHeaderError(PlyError):
    pass


class PlyPropertyError(PlyError):
    pass


class PlyEmptyError(PlyError):
    pass


class PlyDataError(PlyError):
    pass


class DegenerateNeighborhoodError(ValueError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"degenerate neighbourhood around point {index}: rank < 2")


class MissingNormalsError(ValueError):
    pass


@dataclass
class PointCloud:
    points: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64).reshape(-1, 3))
        if self.normals is not None:
            self.normals = np.ascontiguousarray(np.asarray(self.normals, dtype=np.float64).reshape(-1, 3))
            if self.normals.shape != self.points.shape:
                raise ValueError("normals must have the same shape as points")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def has_normals(self) -> bool:
        return self.normals is not None

    def require_normals(self) -> None:
        if self.normals is None:
            raise MissingNormalsError("point cloud has no normals; run estimate_normals first")

    def subset(self, idx) -> "PointCloud":
        idx = np.asarray(idx)
        return PointCloud(self.points[idx], None if self.normals is None else self.normals[idx])


class NNIndex:
    """Exact nearest-neighbour index over a fixed point set.

    Immutable after construction. Ties are broken by the smallest point id.
    """

    _TIE_K = 8

    def __init__(self, points):
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        if len(pts) == 0:
            raise ValueError("cannot build a nearest-neighbour index over an empty set")
        pts.setflags(write=False)
        self.points = pts
        self._tree = cKDTree(pts, balanced_tree=False)

    def __len__(self) -> int:
        return len(self.points)

    def query(self, q) -> tuple[np.ndarray, np.ndarray]:
        """Distances and ids of the nearest indexed point for each row of ``q``."""
        q = np.asarray(q, dtype=np.float64).reshape(-1, 3)
        if len(self.points) == 1:
            d, i = self._tree.query(q, k=1)
            return np.asarray(d, dtype=np.float64), np.asarray(i, dtype=np.int64)
        d, i = self._tree.query(q, k=2)
        dist = np.ascontiguousarray(d[:, 0])
        idx = i[:, 0].astype(np.int64)
        # cKDTree does not order equidistant neighbours by id
        tied = np.flatnonzero(d[:, 1] == dist)
        for r in tied:
            k = min(self._TIE_K, len(self.points))
            while True:
                dd, ii = self._tree.query(q[r], k=k)
                if dd[-1] != dist[r] or k == len(self.points):
                    break
                k = min(2 * k, len(self.points))
            idx[r] = int(ii[dd == dist[r]].min())
        return dist, idx

    def query_radius(self, q, r: float):
        return self._tree.query_ball_point(q, r)


def nearest_distance(index: NNIndex, q) -> tuple[float, int]:
    d, i = index.query(np.asarray(q, dtype=np.float64).reshape(1, 3))
    return float(d[0]), int(i[0])


def estimate_normals(cloud: PointCloud, k: int = 10, viewpoint=(0.0, 0.0, 0.0)) -> PointCloud:
    """PCA normals from the ``k`` nearest neighbours (the point itself included).

    Normals are oriented to point away from ``viewpoint``.
    """
    if k < 3:
        raise ValueError("k must be at least 3")
    pts = cloud.points
    if len(pts) < k:
        raise ValueError(f"need at least k={k} points, got {len(pts)}")
    _, nbr = cKDTree(pts).query(pts, k=k)
    nb = pts[nbr]
    centered = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    evals, evecs = np.linalg.eigh(cov)
    scale = np.maximum(evals[:, 2], np.finfo(float).tiny)
    bad = evals[:, 1] <= 1e-12 * scale
    bad |= evals[:, 2] <= 1e-300
    if np.any(bad):
        raise DegenerateNeighborhoodError(int(np.flatnonzero(bad)[0]))
    normals = evecs[:, :, 0]
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)

    side = np.einsum("ij,ij->i", normals, pts - np.asarray(viewpoint, dtype=np.float64))
    # points seen edge-on from the viewpoint: fall back to a positive dominant component
    flat = np.abs(side) <= 1e-12
    dom = normals[np.arange(len(normals)), np.argmax(np.abs(normals), axis=1)]
    sign = np.where(flat, np.sign(dom), np.sign(side))
    sign[sign == 0] = 1.0
    return PointCloud(pts.copy(), normals * sign[:, None])


# --- PLY -------------------------------------------------------------------

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}
_GEOM = ("x", "y", "z", "nx", "ny", "nz")


@dataclass
class _Element:
    name: str
    count: int
    props: list  # (name, dtype code) or (name, ("list", count_code, item_code))
    offset: int


def _read_header(f, path):
    first = f.readline()
    if first.rstrip(b"\r\n") != b"ply":
        raise PlyHeaderError("missing 'ply' magic", 0, path)
    fmt = None
    elements: list[_Element] = []
    while True:
        start = f.tell()
        raw = f.readline()
        if not raw:
            raise PlyHeaderError("unexpected end of file inside header", start, path)
        try:
            line = raw.decode("ascii").strip()
        except UnicodeDecodeError:
            raise PlyHeaderError("non-ascii bytes in header", start, path) from None
        if not line or line.startswith(("comment", "obj_info")):
            continue
        tok = line.split()
        if tok[0] == "format":
            if len(tok) != 3 or tok[1] not in ("ascii", "binary_little_endian", "binary_big_endian"):
                raise PlyHeaderError(f"bad format line {line!r}", start, path)
            if tok[1] == "binary_big_endian":
                raise PlyHeaderError("binary_big_endian is not supported", start, path)
            fmt = tok[1]
        elif tok[0] == "element":
            if len(tok) != 3:
                raise PlyHeaderError(f"bad element line {line!r}", start, path)
            try:
                count = int(tok[2])
            except ValueError:
                raise PlyHeaderError(f"bad element count {tok[2]!r}", start, path) from None
            if count < 0:
                raise PlyHeaderError("negative element count", start, path)
            elements.append(_Element(tok[1], count, [], start))
        elif tok[0] == "property":
            if not elements:
                raise PlyHeaderError("property before any element", start, path)
            if len(tok) == 5 and tok[1] == "list":
                if tok[2] not in _PLY_TYPES or tok[3] not in _PLY_TYPES:
                    raise PlyPropertyError(f"unknown list types in {line!r}", start, path)
                elements[-1].props.append((tok[4], ("list", _PLY_TYPES[tok[2]], _PLY_TYPES[tok[3]])))
            elif len(tok) == 3:
                if tok[1] not in _PLY_TYPES:
                    raise PlyPropertyError(f"unknown property type {tok[1]!r}", start, path)
                elements[-1].props.append((tok[2], _PLY_TYPES[tok[1]]))
            else:
                raise PlyHeaderError(f"bad property line {line!r}", start, path)
        elif tok[0] == "end_header":
            break
        else:
            raise PlyHeaderError(f"unexpected header keyword {tok[0]!r}", start, path)
    if fmt is None:
        raise PlyHeaderError("missing format line", 0, path)
    return fmt, elements


def _check_vertex(el: _Element, path):
    names = [p[0] for p in el.props]
    for axis in "xyz":
        if axis not in names:
            raise PlyPropertyError(f"vertex element lacks property {axis!r}", el.offset, path)
    for name, kind in el.props:
        if isinstance(kind, tuple):
            if name in _GEOM:
                raise PlyPropertyError(f"list property {name!r} is not supported", el.offset, path)
        elif name in _GEOM and kind not in ("f4", "f8"):
            raise PlyPropertyError(f"property {name!r} must be float or double", el.offset, path)
    ignored = [n for n, _ in el.props if n not in _GEOM]
    if ignored:
        log.warning("ignoring vertex properties %s", ", ".join(ignored))
    has_n = all(n in names for n in ("nx", "ny", "nz"))
    return has_n


def load_ply(path) -> PointCloud:
    """Read vertex positions (and normals when present) from an ASCII or
    binary little-endian PLY file."""
    with open(path, "rb") as f:
        fmt, elements = _read_header(f, path)
        data_start = f.tell()
        vi = next((i for i, e in enumerate(elements) if e.name == "vertex"), None)
        if vi is None:
            raise PlyHeaderError("no vertex element", 0, path)
        vert = elements[vi]
        has_n = _check_vertex(vert, path)
        if vert.count == 0:
            raise PlyEmptyError("file has zero vertices", vert.offset, path)
        if fmt == "ascii":
            rows = _read_ascii(f, elements, vi, path)
        else:
            rows = _read_binary(f, elements, vi, data_start, path)
    names = [p[0] for p in vert.props]
    pts = np.stack([rows[:, names.index(a)] for a in "xyz"], axis=1).astype(np.float64)
    normals = None
    if has_n:
        normals = np.stack([rows[:, names.index(a)] for a in ("nx", "ny", "nz")], axis=1).astype(np.float64)
    return PointCloud(pts, normals)


def _read_ascii(f, elements, vi, path):
    for el in elements[:vi]:
        for _ in range(el.count):
            if not f.readline():
                raise PlyDataError(f"truncated data in element {el.name!r}", f.tell(), path)
    vert = elements[vi]
    if any(isinstance(k, tuple) for _, k in vert.props):
        raise PlyPropertyError("list properties in vertex element are not supported", vert.offset, path)
    nprop = len(vert.props)
    out = np.empty((vert.count, nprop), dtype=np.float64)
    for r in range(vert.count):
        pos = f.tell()
        line = f.readline()
        if not line:
            raise PlyDataError(f"expected {vert.count} vertices, found {r}", pos, path)
        tok = line.split()
        if len(tok) < nprop:
            raise PlyDataError(f"vertex {r} has {len(tok)} values, expected {nprop}", pos, path)
        try:
            out[r] = [float(t) for t in tok[:nprop]]
        except ValueError:
            raise PlyDataError(f"non-numeric value in vertex {r}", pos, path) from None
    return out


def _scalar_dtype(el: _Element):
    if any(isinstance(k, tuple) for _, k in el.props):
        return None
    return np.dtype([(f"p{i}", "<" + k) for i, (_, k) in enumerate(el.props)])


def _read_binary(f, elements, vi, data_start, path):
    pos = data_start
    f.seek(pos)
    for el in elements[:vi]:
        dt = _scalar_dtype(el)
        if dt is not None:
            pos += dt.itemsize * el.count
            continue
        # variable-size element: walk it
        for _ in range(el.count):
            for _, kind in el.props:
                if isinstance(kind, tuple):
                    cdt = np.dtype("<" + kind[1])
                    raw = f.read(cdt.itemsize)
                    if len(raw) < cdt.itemsize:
                        raise PlyDataError(f"truncated data in element {el.name!r}", f.tell(), path)
                    n = int(np.frombuffer(raw, cdt)[0])
                    f.seek(n * np.dtype(kind[2]).itemsize, os.SEEK_CUR)
                else:
                    f.seek(np.dtype(kind).itemsize, os.SEEK_CUR)
        pos = f.tell()
    vert = elements[vi]
    dt = _scalar_dtype(vert)
    if dt is None:
        raise PlyPropertyError("list properties in vertex element are not supported", vert.offset, path)
    f.seek(pos)
    need = dt.itemsize * vert.count
    buf = f.read(need)
    if len(buf) < need:
        raise PlyDataError(
            f"expected {vert.count} vertices ({need} bytes), file ends after {len(buf)} bytes", pos + len(buf), path
        )
    arr = np.frombuffer(buf, dtype=dt)
    return np.stack([arr[n].astype(np.float64) for n in dt.names], axis=1)


def save_ply(path, cloud: PointCloud) -> None:
    """Write an ASCII PLY; 17 significant digits make doubles round-trip exactly."""
    cols = [cloud.points]
    props = ["x", "y", "z"]
    if cloud.normals is not None:
        cols.append(cloud.normals)
        props += ["nx", "ny", "nz"]
    data = np.hstack(cols)
    lines = ["ply", "format ascii 1.0", f"element vertex {len(data)}"]
    lines += [f"property double {p}" for p in props]
    lines.append("end_header")
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write("\n".join(lines) + "\n")
        for row in data:
            f.write(" ".join(f"{v:.17g}" for v in row) + "\n")
