"""S-rep prediction from binary 3D masks.

Submodules: ``srep`` (data model, graph, tetrahedra, boundary mesh),
``synth`` (analytic ellipsoid s-reps, deformations, datasets), ``autodiff``
(reverse-mode tensors), ``model`` (encoder, Chebyshev decoder, training),
``metrics`` and ``cli``.
"""
from .fileio import SrepFormatError, export_vtk, load_srep, save_srep
from .mask import NrrdError, VolumetricMask, read_nrrd, write_nrrd
from .metrics import MetricsReport, evaluate_dataset, evaluate_pair
from .srep import (BoundaryMesh, DegenerateMeshError, Srep, SrepError, SrepGraph, boundary_mesh,
                   build_graph, template_adjacency)

__version__ = "0.1.0"

__all__ = [
    "BoundaryMesh", "DegenerateMeshError", "MetricsReport", "NrrdError", "Srep", "SrepError",
    "SrepFormatError", "SrepGraph", "VolumetricMask", "boundary_mesh", "build_graph",
    "evaluate_dataset", "evaluate_pair", "export_vtk", "load_srep", "read_nrrd", "save_srep",
    "template_adjacency", "write_nrrd",
]
