import itertools

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from srepnet import srep as S
from srepnet.fileio import SrepFormatError, export_vtk, load_srep, save_srep
from srepnet.synth import EllipsoidSpec, analytic_srep


def decode(node, R, T):
    """(block, ring, angle) of a graph node; ring 0 is the centre."""
    n = 1 + R * T
    if node >= 3 * n:
        return "crest", R, node - 3 * n
    block, local = ("skel", "up", "down")[node // n], node % n
    if local == 0:
        return block, 0, None
    return block, (local - 1) // T + 1, (local - 1) % T


def brute_force_edges(R, T):
    """Classify every node pair directly with the construction rules."""
    nv = S.num_graph_nodes(R, T)
    edges = set()
    for u, v in itertools.combinations(range(nv), 2):
        bu, ru, au = decode(u, R, T)
        bv, rv, av = decode(v, R, T)
        grid = ("skel", "up", "down")
        if bu == bv and bu in grid:
            if {ru, rv} == {0, 1}:
                edges.add((u, v))
            elif ru >= 1 and rv >= 1 and au == av and abs(ru - rv) == 1:
                edges.add((u, v))
            elif ru == rv >= 1 and (au - av) % T in (1, T - 1):
                edges.add((u, v))
        elif bu == "skel" and bv in ("up", "down") and (ru, au) == (rv, av):
            edges.add((u, v))
        elif bv == "crest" and bu in grid and ru == R and au == av:
            edges.add((u, v))
        elif bu == bv == "crest" and (au - av) % T in (1, T - 1):
            edges.add((u, v))
    return edges


def adjacency_edges(A):
    upper = sp.triu(A, k=1).tocoo()
    return set(zip(upper.row.tolist(), upper.col.tolist()))


def test_node_count_r3_t8(srep38):
    g = S.build_graph(srep38)
    assert g.num_nodes == 83 == (1 + 24) * 3 + 8


@pytest.mark.parametrize("R,T", [(1, 3), (3, 8), (2, 5)])
def test_adjacency_matches_brute_force(R, T):
    A = S.template_adjacency(R, T)
    assert adjacency_edges(A) == brute_force_edges(R, T)


def test_edge_count_closed_form_r3_t8():
    # grid 2RT per block (x3), spokes 2(1+RT), crest 4T: 8RT + 4T + 2 = 226
    A = S.template_adjacency(3, 8)
    assert len(adjacency_edges(A)) == S.expected_edge_count(3, 8) == 226


def test_smallest_grid_symmetric_zero_diagonal_degree():
    A = S.template_adjacency(1, 3)
    assert (A != A.T).nnz == 0
    assert A.diagonal().sum() == 0
    assert np.asarray(A.sum(axis=1)).min() >= 2


def test_adjacency_coordinate_free(ellipsoid):
    a = S.build_graph(analytic_srep(ellipsoid, 3, 8)).adjacency
    b = S.build_graph(analytic_srep(EllipsoidSpec(5, 2, 0.5), 3, 8)).adjacency
    assert (a != b).nnz == 0
    assert (a != S.template_adjacency(3, 8)).nnz == 0


@pytest.mark.parametrize("R,T", [(1, 3), (3, 8), (6, 24)])
def test_graph_connected_bfs(R, T):
    A = S.template_adjacency(R, T).tolil()
    seen, frontier = {0}, [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in A.rows[u]:
                if v not in seen:
                    seen.add(v)
                    nxt.append(v)
        frontier = nxt
    assert len(seen) == S.num_graph_nodes(R, T)
    assert S.is_connected(S.template_adjacency(R, T))


@pytest.mark.parametrize("R,T", [(0, 8), (3, 2), (1.5, 8)])
def test_invalid_grid_rejected(R, T):
    with pytest.raises(S.SrepError):
        S.template_adjacency(R, T)


def test_srep_invariants_rejected(srep38):
    up = srep38.up_spokes.copy()
    up[3] = 0.0
    with pytest.raises(S.SrepError, match="non-positive"):
        S.Srep(3, 8, srep38.skeletal_points, up, srep38.down_spokes, srep38.crest_spokes)
    bad = srep38.skeletal_points.copy()
    bad[0, 0] = np.nan
    with pytest.raises(S.SrepError, match="non-finite"):
        S.Srep(3, 8, bad, srep38.up_spokes, srep38.down_spokes, srep38.crest_spokes)
    with pytest.raises(S.SrepError, match="crest_spokes"):
        S.Srep(3, 8, srep38.skeletal_points, srep38.up_spokes, srep38.down_spokes, np.zeros((0, 3)))


def test_node_coords_roundtrip(srep38):
    back = S.Srep.from_node_coords(3, 8, srep38.node_coords())
    np.testing.assert_allclose(back.up_spokes, srep38.up_spokes, atol=1e-15)
    np.testing.assert_allclose(back.crest_spokes, srep38.crest_spokes, atol=1e-15)


# ---------------------------------------------------------------- tetrahedra

@pytest.mark.parametrize("R,T", [(1, 3), (3, 8), (6, 24)])
def test_tetrahedra_positive_and_distinct(R, T):
    g = S.build_graph(analytic_srep(EllipsoidSpec(2, 1.5, 1), R, T))
    assert all(len(set(t)) == 4 for t in g.tetrahedra.tolist())
    assert g.tet_volumes().min() > 0
    # 2 sides x (T fan prisms + (R-1)T hexes + T crest prisms), 3 tets per prism
    assert len(g.tetrahedra) == 2 * 3 * (T + 2 * (R - 1) * T + T)


def test_tetrahedra_conforming(srep38):
    """Every interior triangle is shared by exactly two tets, the rest form the boundary mesh."""
    tets = S.build_graph(srep38).tetrahedra
    counts = {}
    for t in tets.tolist():
        for face in itertools.combinations(sorted(t), 3):
            counts[face] = counts.get(face, 0) + 1
    assert set(counts.values()) <= {1, 2}
    n = srep38.num_points
    boundary = {f for f, c in counts.items() if c == 1}
    mesh_faces = {tuple(sorted((np.asarray(f) + n).tolist())) for f in S.boundary_mesh(srep38).faces}
    assert boundary == mesh_faces


def test_tet_volume_converges_to_ellipsoid(ellipsoid):
    vol = S.build_graph(analytic_srep(ellipsoid, 6, 24)).tet_volumes().sum()
    assert abs(vol - ellipsoid.volume()) / ellipsoid.volume() < 0.10


# ------------------------------------------------------------- boundary mesh

def test_mesh_closed_and_unit_normals(srep38):
    mesh = S.boundary_mesh(srep38)
    assert mesh.is_closed()
    np.testing.assert_allclose(np.linalg.norm(mesh.vertex_normals, axis=1), 1.0, atol=1e-9)
    assert mesh.faces.min() >= 0 and mesh.faces.max() < len(mesh.vertices)
    n_verts = 2 * srep38.num_points + 8
    assert len(mesh.vertices) == n_verts
    # closed genus-0 triangle mesh: F = 2V - 4
    assert len(mesh.faces) == 2 * n_verts - 4


def test_mesh_normals_outward(srep38):
    mesh = S.boundary_mesh(srep38)
    assert np.all(np.einsum("ij,ij->i", mesh.vertex_normals, srep38.all_spokes()) > 0)


def test_sphere_pole_normals_radial():
    sphere = analytic_srep(EllipsoidSpec(1, 1, 1), 3, 8)
    mesh = S.boundary_mesh(sphere)
    n = sphere.num_points
    for pole in (0, n):
        radial = mesh.vertices[pole] / np.linalg.norm(mesh.vertices[pole])
        cross = np.linalg.norm(np.cross(mesh.vertex_normals[pole], radial))
        assert np.arctan2(cross, mesh.vertex_normals[pole] @ radial) < 1e-6


def test_sphere_normals_converge_with_resolution():
    def mean_err(R, T):
        mesh = S.boundary_mesh(analytic_srep(EllipsoidSpec(1, 1, 1), R, T))
        radial = mesh.vertices / np.linalg.norm(mesh.vertices, axis=1, keepdims=True)
        return np.mean(np.arccos(np.clip(np.einsum("ij,ij->i", mesh.vertex_normals, radial), -1, 1)))

    coarse, fine = mean_err(3, 8), mean_err(12, 48)
    assert fine < coarse / 2
    assert fine < 0.05


def test_ellipsoid_mesh_normals_close_to_analytic(ellipsoid):
    s = analytic_srep(ellipsoid, 6, 24)
    mesh = S.boundary_mesh(s)
    analytic = ellipsoid.normals(mesh.vertices)
    ang = np.arctan2(np.linalg.norm(np.cross(mesh.vertex_normals, analytic), axis=1),
                     np.einsum("ij,ij->i", mesh.vertex_normals, analytic))
    assert ang.mean() < 0.1


def test_degenerate_faces_reported(srep38):
    sk = srep38.skeletal_points
    up = srep38.up_spokes.copy()
    up[0:9] = sk[0] + np.array([0.0, 0.0, 1.0]) - sk[0:9]  # collapse centre and ring-1 up tips
    bad = S.Srep(3, 8, sk, up, srep38.down_spokes, srep38.crest_spokes)
    with pytest.raises(S.DegenerateMeshError) as err:
        S.boundary_mesh(bad)
    assert err.value.faces


# ----------------------------------------------------------- serialisation

def test_save_load_roundtrip_bit_exact(tmp_path, srep38):
    path = tmp_path / "a.srep"
    save_srep(srep38, path)
    back = load_srep(path)
    assert back.equals(srep38)
    g0, g1 = S.build_graph(srep38), S.build_graph(back)
    np.testing.assert_array_equal(g0.coords, g1.coords)
    assert (g0.adjacency != g1.adjacency).nnz == 0
    assert path.read_text().startswith("srep/1\n")


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(3, 9), st.integers(0, 2**32 - 1))
def test_roundtrip_random_sreps(tmp_path_factory, R, T, seed):
    rng = np.random.default_rng(seed)
    n = 1 + R * T
    s = S.Srep(R, T, rng.normal(size=(n, 3)) * 1e3, rng.normal(size=(n, 3)),
               rng.normal(size=(n, 3)) * 1e-7, rng.normal(size=(T, 3)))
    path = tmp_path_factory.mktemp("rt") / "x.srep"
    save_srep(s, path)
    assert load_srep(path).equals(s)


def _rewrite(path, old, new):
    text = path.read_text()
    assert old in text
    path.write_text(text.replace(old, new, 1))


def test_load_rejects_negative_length(tmp_path, srep38):
    path = tmp_path / "a.srep"
    save_srep(srep38, path)
    lines = path.read_text().split("\n")
    idx = lines.index("up_spokes 25") + 2
    parts = lines[idx].split()
    lines[idx] = " ".join(parts[:3] + ["-" + parts[3]])
    path.write_text("\n".join(lines))
    with pytest.raises(SrepFormatError, match="length must be positive") as err:
        load_srep(path)
    assert err.value.lineno == idx + 1


def test_load_rejects_zero_rings(tmp_path, srep38):
    path = tmp_path / "a.srep"
    save_srep(srep38, path)
    _rewrite(path, "rings 3", "rings 0")
    with pytest.raises(SrepFormatError, match="invalid grid"):
        load_srep(path)


@pytest.mark.parametrize("old,new,msg", [
    ("srep/1", "srep/2", "version header"),
    ("angular_samples 8", "angular_samples eight", "must be an integer"),
    ("skeletal_points 25", "skeletal_points 24", "count must be 25"),
    ("\nend", "\nfinish", "expected 'end'"),
])
def test_load_malformed_context(tmp_path, srep38, old, new, msg):
    path = tmp_path / "a.srep"
    save_srep(srep38, path)
    _rewrite(path, old, new)
    with pytest.raises(SrepFormatError, match=msg) as err:
        load_srep(path)
    assert str(path) in str(err.value) and err.value.lineno > 0


def test_load_truncated(tmp_path, srep38):
    path = tmp_path / "a.srep"
    save_srep(srep38, path)
    path.write_text("\n".join(path.read_text().split("\n")[:40]))
    with pytest.raises(SrepFormatError, match="unexpected end"):
        load_srep(path)


# ---------------------------------------------------------------------- VTK

def _vtk_sections(path):
    lines = path.read_text().split("\n")
    assert lines[0] == "# vtk DataFile Version 2.0" and lines[2] == "ASCII"
    return lines


def test_vtk_graph_points(tmp_path, srep38):
    path = tmp_path / "g.vtk"
    export_vtk(S.build_graph(srep38), path)
    lines = _vtk_sections(path)
    i = next(k for k, ln in enumerate(lines) if ln.startswith("POINTS"))
    assert lines[i] == "POINTS 83 double"
    j = next(k for k, ln in enumerate(lines) if ln.startswith("LINES"))
    assert j - i - 1 == 83
    assert lines[j].split()[1] == "226"


def test_vtk_tetra_cell_types(tmp_path, srep38):
    path = tmp_path / "t.vtk"
    g = S.build_graph(srep38)
    export_vtk(g, path, mode="tetra")
    lines = _vtk_sections(path)
    assert lines[3] == "DATASET UNSTRUCTURED_GRID"
    k = lines.index(f"CELL_TYPES {len(g.tetrahedra)}")
    assert set(lines[k + 1:k + 1 + len(g.tetrahedra)]) == {"10"}


def test_vtk_mesh_and_spokes(tmp_path, srep38):
    export_vtk(S.boundary_mesh(srep38), tmp_path / "m.vtk")
    text = (tmp_path / "m.vtk").read_text()
    assert "POLYGONS" in text and "NORMALS normals double" in text
    export_vtk(srep38, tmp_path / "s.vtk")
    text = (tmp_path / "s.vtk").read_text()
    assert f"LINES {2 * 25 + 8} " in text


def test_vtk_rejects_missing_crest(tmp_path, srep38):
    g = S.build_graph(srep38)
    truncated = S.SrepGraph(3, 8, g.adjacency, g.coords[:-8], g.tetrahedra)
    with pytest.raises(S.SrepError):
        export_vtk(truncated, tmp_path / "x.vtk")
    with pytest.raises(TypeError):
        export_vtk(object(), tmp_path / "x.vtk")
