"""S-rep text files and VTK legacy exports.

S-rep file grammar (``srep/1``), one record per line, ``#`` starts a comment::

    srep/1
    rings <R>
    angular_samples <T>
    skeletal_points <1 + R*T>
    <x> <y> <z>                          (repeated)
    up_spokes <1 + R*T>
    <dx> <dy> <dz> <length>              (repeated)
    down_spokes <1 + R*T>
    <dx> <dy> <dz> <length>
    crest_spokes <T>
    <dx> <dy> <dz> <length>
    end

Floats are written with ``repr`` so a save/load round trip is bit-exact.  The
length column is redundant and validated against the vector.
"""
from __future__ import annotations

import os

import numpy as np

from .srep import BoundaryMesh, Srep, SrepError, SrepGraph, build_graph

FORMAT_HEADER = "srep/1"
_SPOKE_SECTIONS = ("up_spokes", "down_spokes", "crest_spokes")


class SrepFormatError(SrepError):
    def __init__(self, path, lineno, message):
        self.path, self.lineno = str(path), lineno
        super().__init__(f"{path}:{lineno}: {message}")


def _fmt(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def save_srep(srep: Srep, path: str | os.PathLike) -> None:
    srep.validate()
    lines = [FORMAT_HEADER, f"rings {srep.rings}", f"angular_samples {srep.angular_samples}",
             f"skeletal_points {srep.num_points}"]
    lines += [_fmt(p) for p in srep.skeletal_points]
    for name in _SPOKE_SECTIONS:
        arr = getattr(srep, name)
        lines.append(f"{name} {len(arr)}")
        lines += [_fmt([*v, np.linalg.norm(v)]) for v in arr]
    lines.append("end")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_srep(path: str | os.PathLike) -> Srep:
    with open(path, encoding="ascii") as fh:
        raw = fh.read().split("\n")
    records = [(i + 1, ln.split("#", 1)[0].strip()) for i, ln in enumerate(raw)]
    records = [(i, ln) for i, ln in records if ln]
    pos = 0

    def next_record():
        nonlocal pos
        if pos >= len(records):
            raise SrepFormatError(path, len(raw), "unexpected end of file")
        rec = records[pos]
        pos += 1
        return rec

    def keyed_int(key):
        lineno, line = next_record()
        parts = line.split()
        if len(parts) != 2 or parts[0] != key:
            raise SrepFormatError(path, lineno, f"expected '{key} <int>', got {line!r}")
        try:
            return int(parts[1])
        except ValueError:
            raise SrepFormatError(path, lineno, f"{key} must be an integer, got {parts[1]!r}") from None

    def rows(count, width, section):
        out = np.empty((count, width))
        for r in range(count):
            lineno, line = next_record()
            parts = line.split()
            if len(parts) != width:
                raise SrepFormatError(path, lineno, f"{section}[{r}]: expected {width} numbers")
            try:
                out[r] = [float(v) for v in parts]
            except ValueError:
                raise SrepFormatError(path, lineno, f"{section}[{r}]: non-numeric value") from None
            if not np.all(np.isfinite(out[r])):
                raise SrepFormatError(path, lineno, f"{section}[{r}]: non-finite value")
        return out

    lineno, line = next_record()
    if line != FORMAT_HEADER:
        raise SrepFormatError(path, lineno, f"expected version header {FORMAT_HEADER!r}, got {line!r}")
    R = keyed_int("rings")
    T = keyed_int("angular_samples")
    if R < 1 or T < 3:
        raise SrepFormatError(path, records[pos - 1][0], f"invalid grid dims rings={R}, angular_samples={T}")
    n = 1 + R * T
    if keyed_int("skeletal_points") != n:
        raise SrepFormatError(path, records[pos - 1][0], f"skeletal_points count must be {n}")
    skel = rows(n, 3, "skeletal_points")
    spokes = {}
    for name, count in zip(_SPOKE_SECTIONS, (n, n, T)):
        start = pos
        if keyed_int(name) != count:
            raise SrepFormatError(path, records[start][0], f"{name} count must be {count}")
        data = rows(count, 4, name)
        for r, (vec, length) in enumerate(zip(data[:, :3], data[:, 3])):
            if not length > 0:
                raise SrepFormatError(path, records[start + 1 + r][0],
                                      f"{name}[{r}]: spoke length must be positive, got {length!r}")
            if abs(np.linalg.norm(vec) - length) > 1e-9 * max(1.0, length):
                raise SrepFormatError(path, records[start + 1 + r][0],
                                      f"{name}[{r}]: length column disagrees with vector norm")
        spokes[name] = data[:, :3]
    lineno, line = next_record()
    if line != "end":
        raise SrepFormatError(path, lineno, f"expected 'end', got {line!r}")
    return Srep(R, T, skel, spokes["up_spokes"], spokes["down_spokes"], spokes["crest_spokes"])


# ------------------------------------------------------------------------ VTK

def _points_block(points) -> list[str]:
    return [f"POINTS {len(points)} double"] + [_fmt(p) for p in points]


def _write(path, kind: str, title: str, body: list[str]) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(["# vtk DataFile Version 2.0", title, "ASCII", f"DATASET {kind}"] + body) + "\n")


def export_vtk(obj, path: str | os.PathLike, mode: str | None = None) -> None:
    """Write a VTK legacy ASCII file.

    * ``Srep``: POLYDATA, skeletal points and tips with one LINE per spoke.
    * ``SrepGraph``: POLYDATA with one LINE per edge (``mode="edges"``, default)
      or an UNSTRUCTURED_GRID of tetrahedra (``mode="tetra"``, cell type 10).
    * ``BoundaryMesh``: POLYDATA POLYGONS with point normals.
    """
    if isinstance(obj, Srep):
        obj.validate()
        g = build_graph(obj)
        n = obj.num_points
        pairs = [(s, s + n) for s in range(n)] + [(s, s + 2 * n) for s in range(n)]
        pairs += [(int(f), 3 * n + i) for i, f in enumerate(obj.fold_indices)]
        body = _points_block(g.coords)
        body += [f"LINES {len(pairs)} {3 * len(pairs)}"] + [f"2 {a} {b}" for a, b in pairs]
        _write(path, "POLYDATA", "s-rep spokes", body)
    elif isinstance(obj, SrepGraph):
        Srep.from_node_coords(obj.rings, obj.angular_samples, obj.coords)  # validates blocks
        if mode in (None, "edges"):
            edges = obj.edges()
            body = _points_block(obj.coords)
            body += [f"LINES {len(edges)} {3 * len(edges)}"] + [f"2 {a} {b}" for a, b in edges]
            _write(path, "POLYDATA", "s-rep graph", body)
        elif mode == "tetra":
            tets = obj.tetrahedra
            body = _points_block(obj.coords)
            body += [f"CELLS {len(tets)} {5 * len(tets)}"] + ["4 " + " ".join(map(str, t)) for t in tets]
            body += [f"CELL_TYPES {len(tets)}"] + ["10"] * len(tets)
            _write(path, "UNSTRUCTURED_GRID", "s-rep tetrahedra", body)
        else:
            raise ValueError(f"unknown graph export mode {mode!r}")
    elif isinstance(obj, BoundaryMesh):
        if len(obj.faces) == 0:
            raise SrepError("boundary mesh has no faces")
        faces = obj.faces
        body = _points_block(obj.vertices)
        body += [f"POLYGONS {len(faces)} {4 * len(faces)}"] + ["3 " + " ".join(map(str, f)) for f in faces]
        body += [f"POINT_DATA {len(obj.vertices)}", "NORMALS normals double"]
        body += [_fmt(v) for v in obj.vertex_normals]
        _write(path, "POLYDATA", "s-rep boundary mesh", body)
    else:
        raise TypeError(f"cannot export {type(obj).__name__} to VTK")
