"""S-rep data model and its fixed-topology volumetric graph.

Skeletal points live on a polar grid: one centre point followed by ``rings``
rings of ``angular_samples`` points each, ring-major and angle-minor.  Every
skeletal point carries an up and a down spoke; the outermost (fold) ring also
carries crest spokes.

Graph nodes are ordered in four blocks::

    [0, N)          skeletal points          N = 1 + rings * angular_samples
    [N, 2N)         up-spoke tips
    [2N, 3N)        down-spoke tips
    [3N, 3N + T)    crest-spoke tips
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp


class SrepError(ValueError):
    """An s-rep (or one of its derived objects) violates a structural invariant."""


class DegenerateMeshError(SrepError):
    def __init__(self, faces):
        self.faces = list(faces)
        super().__init__(f"zero-area boundary faces: {self.faces}")


def num_skeletal_points(rings: int, angular_samples: int) -> int:
    return 1 + rings * angular_samples


def num_graph_nodes(rings: int, angular_samples: int) -> int:
    return 3 * num_skeletal_points(rings, angular_samples) + angular_samples


def check_grid(rings: int, angular_samples: int) -> None:
    if int(rings) != rings or int(angular_samples) != angular_samples:
        raise SrepError(f"grid dims must be integers, got ({rings}, {angular_samples})")
    if rings < 1:
        raise SrepError(f"rings must be >= 1, got {rings}")
    if angular_samples < 3:
        raise SrepError(f"angular_samples must be >= 3, got {angular_samples}")


def ring_index(ring: int, angle: int, angular_samples: int) -> int:
    """Skeletal index of (ring, angle); rings count from 1, angles wrap."""
    return 1 + (ring - 1) * angular_samples + angle % angular_samples


def ring_latitudes(rings: int) -> np.ndarray:
    """Boundary latitudes of rings 1..R, equal-area spaced: sin(phi_j) = (R + 1 - j)/(R + 1)."""
    j = np.arange(1, rings + 1)
    return np.arcsin((rings + 1 - j) / (rings + 1))


@dataclass(frozen=True, eq=False)
class Srep:
    rings: int
    angular_samples: int
    skeletal_points: np.ndarray
    up_spokes: np.ndarray
    down_spokes: np.ndarray
    crest_spokes: np.ndarray

    def __post_init__(self):
        for name in ("skeletal_points", "up_spokes", "down_spokes", "crest_spokes"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        self.validate()

    def validate(self) -> None:
        check_grid(self.rings, self.angular_samples)
        n = self.num_points
        expected = {"skeletal_points": n, "up_spokes": n, "down_spokes": n,
                    "crest_spokes": self.angular_samples}
        for name, count in expected.items():
            arr = getattr(self, name)
            if arr.shape != (count, 3):
                raise SrepError(f"{name} has shape {arr.shape}, expected ({count}, 3)")
            if not np.all(np.isfinite(arr)):
                raise SrepError(f"{name} contains non-finite values")
        for name in ("up_spokes", "down_spokes", "crest_spokes"):
            lengths = np.linalg.norm(getattr(self, name), axis=1)
            bad = np.flatnonzero(~(lengths > 0))
            if bad.size:
                raise SrepError(f"{name} has non-positive length at indices {bad.tolist()}")

    @property
    def num_points(self) -> int:
        return num_skeletal_points(self.rings, self.angular_samples)

    @property
    def fold_indices(self) -> np.ndarray:
        T = self.angular_samples
        return np.array([ring_index(self.rings, i, T) for i in range(T)])

    @property
    def up_tips(self) -> np.ndarray:
        return self.skeletal_points + self.up_spokes

    @property
    def down_tips(self) -> np.ndarray:
        return self.skeletal_points + self.down_spokes

    @property
    def crest_tips(self) -> np.ndarray:
        return self.skeletal_points[self.fold_indices] + self.crest_spokes

    def spoke_bases(self) -> np.ndarray:
        """Base points of all spokes in (up, down, crest) order."""
        return np.concatenate([self.skeletal_points, self.skeletal_points,
                               self.skeletal_points[self.fold_indices]])

    def all_spokes(self) -> np.ndarray:
        """All spoke vectors in (up, down, crest) order; matches mesh vertex order."""
        return np.concatenate([self.up_spokes, self.down_spokes, self.crest_spokes])

    def node_coords(self) -> np.ndarray:
        return np.concatenate([self.skeletal_points, self.up_tips, self.down_tips, self.crest_tips])

    @classmethod
    def from_node_coords(cls, rings: int, angular_samples: int, coords) -> "Srep":
        """Inverse of :meth:`node_coords`: spokes are tip blocks minus skeletal block."""
        check_grid(rings, angular_samples)
        coords = np.asarray(coords, dtype=np.float64)
        n = num_skeletal_points(rings, angular_samples)
        if coords.shape != (num_graph_nodes(rings, angular_samples), 3):
            raise SrepError(f"coords shape {coords.shape} does not match grid ({rings}, {angular_samples})")
        skel = coords[:n]
        fold = np.array([ring_index(rings, i, angular_samples) for i in range(angular_samples)])
        return cls(rings, angular_samples, skel, coords[n:2 * n] - skel, coords[2 * n:3 * n] - skel,
                   coords[3 * n:] - skel[fold])

    def transformed(self, matrix, offset=(0.0, 0.0, 0.0)) -> "Srep":
        """Apply ``x -> matrix @ x + offset`` to points and ``matrix`` to spokes."""
        M = np.asarray(matrix, dtype=np.float64)
        return Srep(self.rings, self.angular_samples,
                    self.skeletal_points @ M.T + np.asarray(offset, dtype=np.float64),
                    self.up_spokes @ M.T, self.down_spokes @ M.T, self.crest_spokes @ M.T)

    def equals(self, other: "Srep") -> bool:
        return (self.rings == other.rings and self.angular_samples == other.angular_samples
                and all(np.array_equal(getattr(self, f), getattr(other, f))
                        for f in ("skeletal_points", "up_spokes", "down_spokes", "crest_spokes")))


@dataclass(frozen=True, eq=False)
class SrepGraph:
    rings: int
    angular_samples: int
    adjacency: sp.csr_matrix
    coords: np.ndarray
    tetrahedra: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.coords.shape[0]

    def edges(self) -> np.ndarray:
        upper = sp.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((upper.col, upper.row))
        return np.stack([upper.row[order], upper.col[order]], axis=1)

    def tet_volumes(self) -> np.ndarray:
        return signed_tet_volumes(self.coords, self.tetrahedra)


@dataclass(frozen=True, eq=False)
class BoundaryMesh:
    vertices: np.ndarray
    faces: np.ndarray
    vertex_normals: np.ndarray

    def edge_face_counts(self) -> dict[tuple[int, int], int]:
        counts: dict[tuple[int, int], int] = {}
        for f in self.faces:
            for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
                key = (min(a, b), max(a, b))
                counts[key] = counts.get(key, 0) + 1
        return counts

    def is_closed(self) -> bool:
        return all(c == 2 for c in self.edge_face_counts().values())


# ------------------------------------------------------------------ topology

def _grid_edges(rings: int, T: int) -> list[tuple[int, int]]:
    """Skeletal-grid edges in local (block) indices."""
    edges = [(0, ring_index(1, i, T)) for i in range(T)]
    for j in range(1, rings):
        edges += [(ring_index(j, i, T), ring_index(j + 1, i, T)) for i in range(T)]
    for j in range(1, rings + 1):
        edges += [(ring_index(j, i, T), ring_index(j, i + 1, T)) for i in range(T)]
    return edges


def edge_list(rings: int, angular_samples: int) -> list[tuple[int, int]]:
    """All graph edges by construction rule: grid, replicated grid, spokes, crest."""
    check_grid(rings, angular_samples)
    T = angular_samples
    n = num_skeletal_points(rings, T)
    up, down, crest = n, 2 * n, 3 * n
    grid = _grid_edges(rings, T)
    edges = list(grid)
    edges += [(u + up, v + up) for u, v in grid]
    edges += [(u + down, v + down) for u, v in grid]
    edges += [(s, s + up) for s in range(n)] + [(s, s + down) for s in range(n)]
    for i in range(T):
        fold = ring_index(rings, i, T)
        edges += [(fold, crest + i), (crest + i, crest + (i + 1) % T),
                  (crest + i, fold + up), (crest + i, fold + down)]
    return edges


def expected_edge_count(rings: int, angular_samples: int) -> int:
    R, T = rings, angular_samples
    grid = T + (R - 1) * T + R * T
    return 3 * grid + 2 * num_skeletal_points(R, T) + 4 * T


@lru_cache(maxsize=64)
def _adjacency_cached(rings: int, angular_samples: int) -> sp.csr_matrix:
    e = np.array(edge_list(rings, angular_samples))
    nv = num_graph_nodes(rings, angular_samples)
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    A = sp.csr_matrix((np.ones(rows.size, dtype=bool), (rows, cols)), shape=(nv, nv))
    A.sum_duplicates()
    A.sort_indices()
    return A


def template_adjacency(rings: int, angular_samples: int) -> sp.csr_matrix:
    """Symmetric boolean adjacency of the template s-rep graph (coordinate free)."""
    check_grid(rings, angular_samples)
    return _adjacency_cached(int(rings), int(angular_samples)).copy()


def _prism_tets(bottom, top) -> list[tuple[int, int, int, int]]:
    """Split a triangular prism into 3 tets, quad diagonals from each quad's lowest index."""
    verts = list(bottom) + list(top)
    k = int(np.argmin(verts))
    if k >= 3:
        bottom, top = top, bottom
        k -= 3
    b = [bottom[(k + r) % 3] for r in range(3)]
    t = [top[(k + r) % 3] for r in range(3)]
    v0, v1, v2, v3, v4, v5 = b + t
    if min(v1, v5) < min(v2, v4):
        return [(v0, v1, v2, v5), (v0, v1, v5, v4), (v0, v4, v5, v3)]
    return [(v0, v1, v2, v4), (v0, v4, v2, v5), (v0, v4, v5, v3)]


def _hex_tets(s, t) -> list[tuple[int, int, int, int]]:
    """Hexahedron between skeletal quad ``s`` and boundary quad ``t`` as two prisms (6 tets)."""
    if int(np.argmin(s)) in (0, 2):
        halves = [(0, 1, 2), (0, 2, 3)]
    else:
        halves = [(0, 1, 3), (1, 2, 3)]
    tets = []
    for h in halves:
        tets += _prism_tets([s[i] for i in h], [t[i] for i in h])
    return tets


def signed_tet_volumes(coords: np.ndarray, tets: np.ndarray) -> np.ndarray:
    p = coords[tets]
    return np.einsum("ij,ij->i", p[:, 1] - p[:, 0], np.cross(p[:, 2] - p[:, 0], p[:, 3] - p[:, 0])) / 6.0


def _reference_coords(rings: int, T: int) -> np.ndarray:
    """Non-degenerate ellipsoid-like embedding used only to fix tet orientation."""
    a, b, c = 3.0, 2.0, 1.0
    theta = 2 * np.pi * np.arange(T) / T
    phi = ring_latitudes(rings)
    skel, up = [np.zeros(3)], [np.array([0.0, 0.0, c])]
    for ph in phi:
        for th in theta:
            skel.append([np.cos(ph) * np.cos(th) * (a * a - c * c) / a,
                         np.cos(ph) * np.sin(th) * (b * b - c * c) / b, 0.0])
            up.append([a * np.cos(ph) * np.cos(th), b * np.cos(ph) * np.sin(th), c * np.sin(ph)])
    skel, up = np.array(skel), np.array(up)
    down = up * np.array([1.0, 1.0, -1.0])
    crest = np.stack([a * np.cos(theta), b * np.sin(theta), np.zeros(T)], axis=1)
    return np.concatenate([skel, up, down, crest])


@lru_cache(maxsize=64)
def _tetrahedra_cached(rings: int, T: int) -> np.ndarray:
    n = num_skeletal_points(rings, T)
    tets: list[tuple[int, int, int, int]] = []
    for off in (n, 2 * n):
        for i in range(T):
            tri = [0, ring_index(1, i, T), ring_index(1, i + 1, T)]
            tets += _prism_tets(tri, [v + off for v in tri])
        for j in range(1, rings):
            for i in range(T):
                quad = [ring_index(j, i, T), ring_index(j, i + 1, T),
                        ring_index(j + 1, i + 1, T), ring_index(j + 1, i, T)]
                tets += _hex_tets(quad, [v + off for v in quad])
    for off in (n, 2 * n):
        for i in range(T):
            m0, m1 = ring_index(rings, i, T), ring_index(rings, i + 1, T)
            tets += _prism_tets([m0, m0 + off, 3 * n + i], [m1, m1 + off, 3 * n + (i + 1) % T])
    tets_arr = np.array(tets, dtype=np.int64)
    flip = signed_tet_volumes(_reference_coords(rings, T), tets_arr) < 0
    tets_arr[flip] = tets_arr[flip][:, [0, 2, 1, 3]]
    tets_arr.setflags(write=False)
    return tets_arr


def template_tetrahedra(rings: int, angular_samples: int) -> np.ndarray:
    """Tetrahedra (graph node indices) filling the s-rep volume, positively oriented on the template."""
    check_grid(rings, angular_samples)
    return _tetrahedra_cached(int(rings), int(angular_samples))


@lru_cache(maxsize=64)
def _boundary_faces_cached(rings: int, T: int) -> np.ndarray:
    """Outward-wound tet faces used exactly once, re-indexed to mesh vertices (tips only)."""
    tets = _tetrahedra_cached(rings, T)
    seen: dict[tuple[int, ...], tuple[int, int, int]] = {}
    counts: dict[tuple[int, ...], int] = {}
    for a, b, c, d in tets:
        # faces wound so the normal points away from the opposite vertex
        for face in ((b, c, d), (a, d, c), (a, b, d), (a, c, b)):
            key = tuple(sorted(face))
            counts[key] = counts.get(key, 0) + 1
            seen[key] = face
    n = num_skeletal_points(rings, T)
    faces = [seen[k] for k in sorted(counts) if counts[k] == 1]
    out = np.array(faces, dtype=np.int64) - n
    if out.min() < 0:
        raise AssertionError("skeletal node on the tet-complex boundary")
    out.setflags(write=False)
    return out


def build_graph(srep: Srep) -> SrepGraph:
    srep.validate()
    coords = srep.node_coords()
    coords.setflags(write=False)
    return SrepGraph(srep.rings, srep.angular_samples,
                     template_adjacency(srep.rings, srep.angular_samples),
                     coords, template_tetrahedra(srep.rings, srep.angular_samples))


def is_connected(adjacency) -> bool:
    n_comp, _ = sp.csgraph.connected_components(adjacency, directed=False)
    return n_comp == 1


def boundary_mesh(srep: Srep, area_tol: float = 1e-14) -> BoundaryMesh:
    """Closed triangle mesh through all spoke tips (up, down, crest order).

    Vertex normals are area-weighted face-normal averages, flipped where needed
    so each points away from its spoke's skeletal base.
    """
    srep.validate()
    faces = _boundary_faces_cached(srep.rings, srep.angular_samples)
    verts = np.concatenate([srep.up_tips, srep.down_tips, srep.crest_tips])
    p = verts[faces]
    area_vec = 0.5 * np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    area = np.linalg.norm(area_vec, axis=1)
    scale = max(float(np.ptp(verts, axis=0).max()), 1e-300)
    bad = np.flatnonzero(area <= area_tol * scale * scale)
    if bad.size:
        raise DegenerateMeshError(bad.tolist())
    normals = np.zeros_like(verts)
    for k in range(3):
        np.add.at(normals, faces[:, k], area_vec)
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    outward = np.einsum("ij,ij->i", normals, srep.all_spokes())
    normals[outward < 0] *= -1.0
    return BoundaryMesh(verts, np.array(faces), normals)
