"""Watertight remeshing and 3D training-data curation on sparse voxel grids."""

__version__ = "0.1.0"

from .bvh import TriangleBVH
from .grid import GridSpec, SparseGrid, dilate_mask, for_each_brick_parallel
from .mesh import (MeshError, NormalizationTransform, TriangleMesh, load_mesh,
                   normalize_to_unit_cube, save_mesh, weld_vertices)
from .voxelize import (FAR, DistanceField, OccupancyGrid, band_for, compute_udf,
                       voxelize_surface)
from .signs import (EXTERIOR, INTERIOR, OCCUPIED, UNKNOWN, OpenComponentSet,
                    SignField, WatershedParams, baseline_pseudo_sdf,
                    baseline_visibility_signs, flood_fill_exterior,
                    identify_open_components, resolve_signs,
                    thicken_open_components, watershed_assign)
from .extract import (ScalarSDF, WatertightReport, assemble_sdf,
                      fidelity_metrics, keep_largest_component, marching_cubes,
                      pseudo_corner_sdf, sdf_from_function, validate_watertight)
from .curation import (CurationMetrics, SampleSet, export_samples, load_samples,
                       sample_supervision, sample_surface, thin_shell_ratio)
from .pipeline import PipelineConfig, run_compare, run_sample, run_validate, run_watertight

__all__ = [
    "TriangleBVH", "GridSpec", "SparseGrid", "dilate_mask",
    "for_each_brick_parallel", "MeshError", "NormalizationTransform",
    "TriangleMesh", "load_mesh", "normalize_to_unit_cube", "save_mesh",
    "weld_vertices", "FAR", "DistanceField", "OccupancyGrid", "band_for",
    "compute_udf", "voxelize_surface", "EXTERIOR", "INTERIOR", "OCCUPIED",
    "UNKNOWN", "OpenComponentSet", "SignField", "WatershedParams",
    "baseline_pseudo_sdf", "baseline_visibility_signs", "flood_fill_exterior",
    "identify_open_components", "resolve_signs", "thicken_open_components",
    "watershed_assign", "ScalarSDF", "WatertightReport", "assemble_sdf",
    "fidelity_metrics", "keep_largest_component", "marching_cubes",
    "pseudo_corner_sdf", "sdf_from_function", "validate_watertight",
    "CurationMetrics", "SampleSet", "export_samples", "load_samples",
    "sample_supervision", "sample_surface", "thin_shell_ratio",
    "PipelineConfig", "run_compare", "run_sample", "run_validate",
    "run_watertight",
]
