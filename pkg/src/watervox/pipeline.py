"""Pipeline orchestration: configuration, per-mesh processing, batch runs.

Each mesh runs load -> normalize -> voxelize -> distances -> sign
resolution -> open-surface handling (watershed only) -> SDF assembly ->
marching cubes -> validation -> save, and produces exactly one report
entry whether it succeeds or fails. Batch runs process files independently
and keep going past per-file failures.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import curation, extract, signs
from .bvh import TriangleBVH
from .grid import GridSpec
from .mesh import TriangleMesh, load_mesh, normalize_to_unit_cube, save_mesh
from .voxelize import band_for, compute_udf, voxelize_surface

log = logging.getLogger("watervox")

METHODS = ("watershed", "floodfill", "pseudo-sdf", "visibility")
MESH_SUFFIXES = (".obj", ".ply", ".stl")
MAX_CLOSING = 16.0  # band capacity cap for tau/delta (keeps dilation bounded)


class ConfigError(ValueError):
    """Invalid pipeline configuration (CLI exit code 2)."""


@dataclass
class PipelineConfig:
    """All pipeline knobs; round-trips losslessly through JSON."""

    resolution: int = 512
    method: str = "watershed"
    tau_close: float = 2.0
    thicken_delta: float = 1.5
    epsilon: float = 1.0
    rays: int = 26
    margin: float = 0.03
    extract_res: int = 0          # 0 means: same as resolution
    keep_largest: bool = False
    n_uniform: int = 500_000
    n_sharp: int = 100_000
    sharp_angle: float = 30.0
    n_near: int = 800_000
    near_sigmas: list[float] = field(default_factory=list)  # empty: [h, 4h]
    n_free: int = 200_000
    probe_eps: float = 0.0        # 0 means: 2h of the extraction grid
    seed: int = 0
    threads: int = 0              # 0 means: all cores
    report: str = ""
    out_dir: str = "."

    def validate(self) -> None:
        try:
            GridSpec(self.resolution)
            GridSpec(self.effective_extract_res())
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 0 <= self.tau_close <= MAX_CLOSING:
            raise ConfigError(
                f"tau_close={self.tau_close} outside band capacity [0, {MAX_CLOSING}]")
        if not 0 <= self.thicken_delta <= MAX_CLOSING:
            raise ConfigError(
                f"thicken_delta={self.thicken_delta} outside band capacity [0, {MAX_CLOSING}]")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be > 0")
        if self.rays < 6:
            raise ConfigError("rays must be >= 6")
        if not 0 <= self.margin < 0.2:
            raise ConfigError("margin must be in [0, 0.2)")
        for name in ("n_uniform", "n_sharp", "n_near", "n_free"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if any(s <= 0 for s in self.near_sigmas):
            raise ConfigError("near_sigmas must be > 0")
        if self.probe_eps < 0:
            raise ConfigError("probe_eps must be >= 0")
        if self.threads < 0:
            raise ConfigError("threads must be >= 0")

    # resolved defaults ------------------------------------------------------

    def effective_extract_res(self) -> int:
        return self.extract_res or self.resolution

    def effective_threads(self) -> int:
        return self.threads or (os.cpu_count() or 1)

    def effective_near_sigmas(self) -> list[float]:
        h = 2.0 / self.effective_extract_res()
        return list(self.near_sigmas) or [h, 4.0 * h]

    def effective_probe_eps(self) -> float:
        return self.probe_eps or 2.0 * (2.0 / self.effective_extract_res())

    # serialization ----------------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data)


def apply_thread_limit(threads: int) -> None:
    """Cap numba's thread pool; silently clamps to what the host allows."""
    try:
        import numba

        numba.set_num_threads(max(1, min(threads, numba.config.NUMBA_NUM_THREADS)))
    except ImportError:  # pragma: no cover
        pass


class _StageClock:
    def __init__(self):
        self.timings_ms: dict[str, float] = {}
        self._last = time.perf_counter()

    def lap(self, name: str) -> None:
        now = time.perf_counter()
        self.timings_ms[name] = round((now - self._last) * 1000.0, 3)
        self._last = now


def watertighten(mesh: TriangleMesh, config: PipelineConfig,
                 method: str | None = None):
    """Run the volumetric stages on one loaded mesh.

    Returns (output mesh in normalized coordinates, normalization transform,
    diagnostics dict with stage timings and brick counts).
    """
    method = method or config.method
    clock = _StageClock()
    spec = GridSpec(config.resolution)
    ext_spec = GridSpec(config.effective_extract_res())

    norm_mesh, transform = normalize_to_unit_cube(mesh, config.margin)
    clock.lap("normalize")
    bvh = TriangleBVH(norm_mesh)
    clock.lap("bvh")
    occ = voxelize_surface(norm_mesh, spec)
    clock.lap("voxelize")
    band = band_for(config.tau_close, config.thicken_delta)
    dist = compute_udf(norm_mesh, occ, band, bvh=bvh)
    clock.lap("udf")

    bricks = {"occupancy": occ.mask.active_brick_count,
              "distance": dist.values.active_brick_count}

    if method == "pseudo-sdf":
        sdf = extract.pseudo_corner_sdf(dist, config.epsilon, bvh=bvh,
                                        extract_spec=ext_spec)
        clock.lap("signs")
        bricks["sign"] = 0
        bricks["sign_uniform"] = 0
    else:
        if method == "visibility":
            sign = signs.baseline_visibility_signs(bvh, occ, spec,
                                                   k=config.rays, band=band)
            open_set = None
            delta = 0.0
        else:
            tau = config.tau_close if method == "watershed" else 0.0
            partial = signs.flood_fill_exterior(dist, occ, tau)
            sign = signs.watershed_assign(dist, partial, tau)
            open_set = None
            delta = 0.0
            if method == "watershed" and config.thicken_delta >= 0.5:
                open_set = signs.identify_open_components(occ, sign)
                if open_set.n_open:
                    sign = signs.thicken_open_components(
                        dist, sign, open_set, config.thicken_delta)
                delta = config.thicken_delta
        clock.lap("signs")
        bricks["sign"] = sign.labels.active_brick_count
        bricks["sign_uniform"] = len(sign.uniform_keys)
        sdf = extract.assemble_sdf(dist, sign, open_set, delta, bvh=bvh,
                                   extract_spec=ext_spec)
    clock.lap("assemble")

    out = extract.marching_cubes(sdf)
    clock.lap("marching_cubes")
    if config.keep_largest and out.n_faces:
        out = extract.keep_largest_component(out)
        clock.lap("keep_largest")
    diagnostics = {"timings_ms": clock.timings_ms, "active_bricks": bricks,
                   "normalized_input": norm_mesh}
    return out, transform, diagnostics


def process_mesh(config: PipelineConfig, input_path, out_dir,
                 method: str | None = None, suffix: str = "") -> dict:
    """Full per-mesh run; returns the report entry (never raises)."""
    method = method or config.method
    input_path = Path(input_path)
    entry: dict = {"input": str(input_path), "method": method,
                   "config": config.to_dict(), "status": "ok"}
    t0 = time.perf_counter()
    try:
        mesh = load_mesh(input_path)
        out, transform, diag = watertighten(mesh, config, method=method)
        norm_input = diag.pop("normalized_input")
        entry.update(diag)

        report = extract.validate_watertight(out)
        entry["watertight"] = report.to_dict()

        out_suffix = ".ply" if input_path.suffix.lower() == ".ply" else ".obj"
        out_path = Path(out_dir) / f"{input_path.stem}{suffix or '_watertight'}{out_suffix}"
        if out.n_faces:
            save_mesh(out, out_path, transform)
            entry["output"] = str(out_path)
        else:
            entry["output"] = None

        if out.n_faces:
            entry["fidelity"] = extract.fidelity_metrics(
                norm_input, out, n=10000, seed=config.seed)
            if report.is_watertight:
                metrics = curation.thin_shell_ratio(
                    out, n_probe=2000, eps_n=config.effective_probe_eps(),
                    seed=config.seed)
                entry["curation"] = metrics.to_dict()
        entry["elapsed_s"] = round(time.perf_counter() - t0, 3)
    except Exception as exc:  # per-mesh isolation: record and continue
        entry["status"] = "error"
        entry["error"] = f"{type(exc).__name__}: {exc}"
        entry["traceback"] = traceback.format_exc(limit=8)
        entry["elapsed_s"] = round(time.perf_counter() - t0, 3)
        log.error("failed %s: %s", input_path, entry["error"])
    return entry


def collect_inputs(path) -> list[Path]:
    path = Path(path)
    if path.is_dir():
        files = [p for p in sorted(path.iterdir())
                 if p.suffix.lower() in MESH_SUFFIXES]
        return files
    return [path]


def run_watertight(config: PipelineConfig, input_path) -> tuple[int, list[dict]]:
    """The ``watertight`` command: single mesh or batch directory.

    Returns (exit code, report entries): 0 when everything succeeded and is
    watertight, 1 otherwise.
    """
    config.validate()
    apply_thread_limit(config.effective_threads())
    inputs = collect_inputs(input_path)
    if not inputs:
        raise ConfigError(f"no mesh files found under {input_path}")
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    workers = max(1, min(config.effective_threads(), len(inputs), 4))
    if workers == 1 or len(inputs) == 1:
        entries = [process_mesh(config, p, out_dir) for p in inputs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(lambda p: process_mesh(config, p, out_dir), inputs))

    _write_report(config, entries)
    ok = all(e["status"] == "ok" and e.get("watertight", {}).get("is_watertight")
             for e in entries)
    return (0 if ok else 1), entries


def run_compare(config: PipelineConfig, input_path) -> tuple[int, dict]:
    """The ``compare`` command: all four strategies on one mesh."""
    config.validate()
    apply_thread_limit(config.effective_threads())
    inputs = collect_inputs(input_path)
    if len(inputs) != 1:
        raise ConfigError("compare takes exactly one input mesh")
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    table: dict[str, dict] = {}
    entries = []
    for method in METHODS:
        entry = process_mesh(config, inputs[0], out_dir, method=method,
                             suffix=f"_{method}")
        entries.append(entry)
        wt = entry.get("watertight", {})
        table[method] = {
            "status": entry["status"],
            "watertight": wt.get("is_watertight"),
            "components": wt.get("components"),
            "chamfer": entry.get("fidelity", {}).get("chamfer"),
            "hausdorff": entry.get("fidelity", {}).get("hausdorff_est"),
            "interior_volume": wt.get("signed_volume"),
        }
    comparison_path = out_dir / f"{inputs[0].stem}_compare.json"
    with open(comparison_path, "w", encoding="utf-8") as fh:
        json.dump(table, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_report(config, entries)
    ok = all(e["status"] == "ok" for e in entries)
    return (0 if ok else 1), table


def run_sample(config: PipelineConfig, input_path) -> tuple[int, dict]:
    """The ``sample`` command: surface + supervision USMP files."""
    config.validate()
    apply_thread_limit(config.effective_threads())
    inputs = collect_inputs(input_path)
    if len(inputs) != 1:
        raise ConfigError("sample takes exactly one input mesh")
    path = inputs[0]
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    mesh = load_mesh(path)
    report = extract.validate_watertight(mesh)
    if not report.is_watertight:
        print(json.dumps({"input": str(path), "watertight": report.to_dict()},
                         indent=2, sort_keys=True))
        log.error("input is not watertight; refusing to sample")
        return 1, {}

    surface = curation.sample_surface(mesh, config.n_uniform, config.n_sharp,
                                      config.sharp_angle, seed=config.seed)
    supervision = curation.sample_supervision(
        mesh, config.n_near, config.effective_near_sigmas(), config.n_free,
        seed=config.seed + 1)
    surface_path = out_dir / f"{path.stem}_surface.usmp"
    supervision_path = out_dir / f"{path.stem}_supervision.usmp"
    curation.export_samples(surface, surface_path)
    curation.export_samples(supervision, supervision_path)
    info = {
        "surface": {"path": str(surface_path), "records": len(surface),
                    "counts": surface.kind_counts()},
        "supervision": {"path": str(supervision_path), "records": len(supervision),
                        "counts": supervision.kind_counts()},
    }
    return 0, info


def run_validate(config: PipelineConfig, input_path) -> tuple[int, dict]:
    """The ``validate`` command: watertight report + thin-shell metrics."""
    apply_thread_limit(config.effective_threads())
    try:
        mesh = load_mesh(input_path)
    except Exception as exc:
        print(json.dumps({"input": str(input_path),
                          "error": f"{type(exc).__name__}: {exc}"}))
        return 2, {}
    report = extract.validate_watertight(mesh)
    result = {"input": str(input_path), "watertight": report.to_dict()}
    if report.is_watertight and mesh.n_faces:
        eps = config.probe_eps or 0.02
        metrics = curation.thin_shell_ratio(mesh, n_probe=2000, eps_n=eps,
                                            seed=config.seed)
        result["curation"] = metrics.to_dict()
        result["thin_shell_flag"] = metrics.thin_shell_ratio < 0.5
    print(json.dumps(result, indent=2, sort_keys=True))
    return (0 if report.is_watertight else 1), result


def _write_report(config: PipelineConfig, entries: list[dict]) -> None:
    report_path = config.report or str(Path(config.out_dir) / "report.jsonl")
    with open(report_path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    log.info("report written to %s (%d entries)", report_path, len(entries))
