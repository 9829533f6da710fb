"""Contour sources: the analytic benchmark, sliced meshes and Fourier models."""

from .contour import (
    BENCHMARK_BREAKS,
    ContourLayer,
    GeometryError,
    benchmark_contour,
    benchmark_xy,
    canonical_order,
    read_contour_csv,
    resample_closed,
    signed_area,
    write_contour_csv,
)
from .fourier import FitError, FourierContourModel, eval_fourier, fit_fourier, rms_residual
from .mesh import (
    MeshError,
    TriangleMesh,
    box_mesh,
    cylinder_mesh,
    extract_external_contour,
    extrude_polygon,
    preprocess_polyline,
    read_stl,
    regular_polygon,
    slice_mesh,
    torus_mesh,
    write_stl,
)

__all__ = [
    "BENCHMARK_BREAKS",
    "ContourLayer",
    "FitError",
    "FourierContourModel",
    "GeometryError",
    "MeshError",
    "TriangleMesh",
    "benchmark_contour",
    "benchmark_xy",
    "box_mesh",
    "canonical_order",
    "cylinder_mesh",
    "eval_fourier",
    "extract_external_contour",
    "extrude_polygon",
    "fit_fourier",
    "preprocess_polyline",
    "read_contour_csv",
    "read_stl",
    "regular_polygon",
    "resample_closed",
    "rms_residual",
    "signed_area",
    "slice_mesh",
    "torus_mesh",
    "write_contour_csv",
    "write_stl",
]
