"""Frame persistence, run-configuration files and tabular result output.

Stack file layout (little endian)::

    magic   4s   b"TBFS"
    version u16  1
    kind    u8   0 = pdc_on, 1 = background
    flags   u8   reserved, 0
    rows    u32
    cols    u32
    count   u32
    digest  32s  SHA-256 of the JSON sidecar written next to the stack
    payload count * rows * cols u32 counts, row-major, frame-major

The JSON sidecar (``<stack>.json``) carries the full run configuration;
the digest ties the two files together.  Serialisation is canonical
(sorted keys), so identical inputs produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    CorruptHeaderError,
    DigestMismatchError,
    StackFormatError,
    TruncatedPayloadError,
)
from .estimate import (
    AreaScanPoint,
    CalibrationResult,
    RepeatSummary,
    SpatialMapResult,
)
from .model import (
    BackgroundModel,
    ChannelEfficiencies,
    FrameGeometry,
    ModeStructure,
    PulseModel,
    Region,
)
from .simulate import ExperimentConfig, Frame, KIND_BACKGROUND, KIND_PDC

_MAGIC = b"TBFS"
_VERSION = 1
_HEADER = struct.Struct("<4sHBBIII32s")
_KIND_TO_CODE = {KIND_PDC: 0, KIND_BACKGROUND: 1}
_CODE_TO_KIND = {v: k for k, v in _KIND_TO_CODE.items()}

_FMT = "{:.9g}"  # canonical table precision


def sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def config_bytes(config: dict) -> bytes:
    """Canonical serialisation of a configuration document."""
    return (json.dumps(config, sort_keys=True, indent=2) + "\n").encode()


def config_digest(config: dict) -> bytes:
    return hashlib.sha256(config_bytes(config)).digest()


# ---------------------------------------------------------------------------
# Stack files
# ---------------------------------------------------------------------------

def write_stack(path, frames, config: dict) -> None:
    """Write a frame stack and its JSON sidecar.

    Counts must already be integral (the simulator quantises) and fit in
    an unsigned 32-bit word.
    """
    frames = list(frames)
    if not frames:
        raise StackFormatError("cannot write an empty stack")
    kind = frames[0].kind
    rows, cols = frames[0].counts.shape
    if kind not in _KIND_TO_CODE:
        raise StackFormatError(f"unknown frame kind {kind!r}")
    payload = np.empty((len(frames), rows, cols), dtype=np.uint32)
    for k, frame in enumerate(frames):
        if frame.kind != kind or frame.counts.shape != (rows, cols):
            raise StackFormatError("frames disagree on kind or shape")
        counts = frame.counts
        if np.any(counts < 0) or np.any(counts > 0xFFFFFFFF):
            raise StackFormatError("counts outside the u32 range")
        if not np.array_equal(counts, np.rint(counts)):
            raise StackFormatError("counts must be integral")
        payload[k] = counts.astype(np.uint32)

    digest = config_digest(config)
    header = _HEADER.pack(_MAGIC, _VERSION, _KIND_TO_CODE[kind], 0,
                          rows, cols, len(frames), digest)
    path = Path(path)
    path.write_bytes(header + payload.tobytes())
    sidecar_path(path).write_bytes(config_bytes(config))


def read_stack(path) -> tuple[list[Frame], str]:
    """Read a frame stack; returns (frames, config digest hex).

    The sidecar, when present, is verified against the stored digest.
    Pulse energies are not persisted and come back as NaN.
    """
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CorruptHeaderError(f"{path}: file shorter than the header")
    magic, version, kind_code, _flags, rows, cols, count, digest = \
        _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise CorruptHeaderError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise CorruptHeaderError(f"{path}: unsupported version {version}")
    if kind_code not in _CODE_TO_KIND:
        raise CorruptHeaderError(f"{path}: unknown kind code {kind_code}")
    expected = count * rows * cols * 4
    body = raw[_HEADER.size:]
    if len(body) < expected:
        raise TruncatedPayloadError(
            f"{path}: payload holds {len(body)} bytes, header declares {expected}")
    if len(body) > expected:
        raise CorruptHeaderError(f"{path}: {len(body) - expected} trailing bytes")

    side = sidecar_path(path)
    if side.exists():
        if hashlib.sha256(side.read_bytes()).digest() != digest:
            raise DigestMismatchError(
                f"{path}: sidecar does not match the stored config digest")

    counts = np.frombuffer(body, dtype="<u4").reshape(count, rows, cols)
    kind = _CODE_TO_KIND[kind_code]
    frames = [Frame(counts=counts[k].astype(np.float64), pulse_index=k,
                    pulse_energy=math.nan, kind=kind)
              for k in range(count)]
    return frames, digest.hex()


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnalysisParams:
    """Measurement-side parameters accompanying an experiment config."""

    region_s: Region
    z_batches: int = 2
    frames_per_batch: int = 100
    background_frames_per_batch: int = 0
    cs_search_extent: tuple[int, int] = (3, 3)
    areas: tuple[tuple[int, int], ...] = ()
    cosmic_mad_k: float = 10.0
    variance_ddof: int = 1
    tau_s: float = 1.0
    tau_i: float = 1.0

    def __post_init__(self) -> None:
        if self.z_batches < 1:
            raise ConfigError("z_batches must be >= 1")
        if self.frames_per_batch < 2:
            raise ConfigError("frames_per_batch must be >= 2")
        if self.background_frames_per_batch < 0:
            raise ConfigError("background_frames_per_batch must be >= 0")
        if self.background_frames_per_batch == 1:
            raise ConfigError("background_frames_per_batch must be 0 or >= 2")
        if self.variance_ddof not in (0, 1):
            raise ConfigError("variance_ddof must be 0 or 1")
        if not 0.0 < self.tau_s <= 1.0 or not 0.0 < self.tau_i <= 1.0:
            raise ConfigError("transmittances must be in (0, 1]")


def experiment_to_dict(cfg: ExperimentConfig) -> dict:
    doc = asdict(cfg)
    doc["modes"]["grid"] = list(cfg.modes.grid)
    doc["geometry"]["cs"] = list(cfg.geometry.cs)
    doc["cs_offset"] = list(cfg.cs_offset)
    return doc


def experiment_from_dict(doc: dict) -> ExperimentConfig:
    try:
        modes = dict(doc["modes"], grid=tuple(doc["modes"]["grid"]))
        geometry = dict(doc["geometry"], cs=tuple(doc["geometry"]["cs"]))
        return ExperimentConfig(
            channel=ChannelEfficiencies(**doc["channel"]),
            modes=ModeStructure(**modes),
            pulse=PulseModel(**doc["pulse"]),
            background=BackgroundModel(**doc["background"]),
            geometry=FrameGeometry(**geometry),
            cs_offset=tuple(doc.get("cs_offset", (0.0, 0.0))),
            cosmic_ray_rate=doc.get("cosmic_ray_rate", 0.0),
            master_seed=doc.get("master_seed", 0),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"experiment section: {exc}") from exc


def analysis_to_dict(params: AnalysisParams) -> dict:
    doc = asdict(params)
    doc["region_s"] = {"origin": list(params.region_s.origin),
                       "extent": list(params.region_s.extent)}
    doc["cs_search_extent"] = list(params.cs_search_extent)
    doc["areas"] = [list(a) for a in params.areas]
    return doc


def analysis_from_dict(doc: dict) -> AnalysisParams:
    try:
        region = Region(origin=tuple(doc["region_s"]["origin"]),
                        extent=tuple(doc["region_s"]["extent"]))
        return AnalysisParams(
            region_s=region,
            z_batches=doc.get("z_batches", 2),
            frames_per_batch=doc.get("frames_per_batch", 100),
            background_frames_per_batch=doc.get("background_frames_per_batch", 0),
            cs_search_extent=tuple(doc.get("cs_search_extent", (3, 3))),
            areas=tuple(tuple(a) for a in doc.get("areas", ())),
            cosmic_mad_k=doc.get("cosmic_mad_k", 10.0),
            variance_ddof=doc.get("variance_ddof", 1),
            tau_s=doc.get("tau_s", 1.0),
            tau_i=doc.get("tau_i", 1.0),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"analysis section: {exc}") from exc


def run_config_to_dict(cfg: ExperimentConfig, params: AnalysisParams) -> dict:
    return {"experiment": experiment_to_dict(cfg),
            "analysis": analysis_to_dict(params)}


def run_config_from_dict(doc: dict) -> tuple[ExperimentConfig, AnalysisParams]:
    if "experiment" not in doc or "analysis" not in doc:
        raise ConfigError("run config needs 'experiment' and 'analysis' sections")
    return (experiment_from_dict(doc["experiment"]),
            analysis_from_dict(doc["analysis"]))


def save_run_config(path, cfg: ExperimentConfig, params: AnalysisParams) -> None:
    Path(path).write_bytes(config_bytes(run_config_to_dict(cfg, params)))


def load_run_config(path) -> tuple[ExperimentConfig, AnalysisParams]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return run_config_from_dict(doc)


# ---------------------------------------------------------------------------
# Result tables (CSV, RFC-4180 style: comma separated, dot decimal)
# ---------------------------------------------------------------------------

def _row(values) -> str:
    cells = []
    for v in values:
        if isinstance(v, str):
            cells.append(v)
        elif isinstance(v, (int, np.integer)):
            cells.append(str(int(v)))
        elif v is None:
            cells.append("nan")
        else:
            cells.append(_FMT.format(float(v)))
    return ",".join(cells) + "\n"


def write_calibration_csv(path, result: CalibrationResult) -> None:
    header = ("eta_s,u_eta_s,eta_i,alpha_b,u_alpha_b,sigma_ab,u_sigma_ab,"
              "E,discarded\n")
    discarded = (result.diagnostics.discarded_pdc
                 + result.diagnostics.discarded_background)
    row = _row([result.eta_s, result.u_eta_s, result.eta_i, result.alpha_b,
                result.u_alpha_b, result.sigma_ab, result.u_sigma_ab,
                result.diagnostics.excess_noise_ratio, discarded])
    Path(path).write_text(header + row)


def write_area_scan_csv(path, points: list[AreaScanPoint]) -> None:
    header = "height,width,coherence_cells,sigma_alpha,sigma_alpha_b\n"
    rows = [_row([p.extent[0], p.extent[1], p.coherence_cells,
                  p.sigma_alpha, p.sigma_alpha_b]) for p in points]
    Path(path).write_text(header + "".join(rows))


def write_cs_map_csv(path, result: SpatialMapResult) -> None:
    # Bare matrix: one row per row displacement, one column per column
    # displacement, so the CSV dimensions equal the search grid.
    rows = [_row(row) for row in result.values]
    Path(path).write_text("".join(rows))


def write_batches_csv(path, summary: RepeatSummary) -> None:
    header = "batch,alpha_b,sigma_ab,eta_s\n"
    rows = [_row([k, a, s, e]) for k, (a, s, e) in enumerate(
        zip(summary.per_batch_alpha, summary.per_batch_sigma,
            summary.per_batch_eta))]
    Path(path).write_text(header + "".join(rows))


def emit_tables(out_dir, calibration: CalibrationResult | None = None,
                batches: RepeatSummary | None = None,
                area_points: list[AreaScanPoint] | None = None,
                cs_map: SpatialMapResult | None = None) -> list[Path]:
    """Write whichever result tables are supplied; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if calibration is not None:
        path = out / "calibration.csv"
        write_calibration_csv(path, calibration)
        written.append(path)
    if batches is not None:
        path = out / "batches.csv"
        write_batches_csv(path, batches)
        written.append(path)
    if area_points is not None:
        path = out / "area_scan.csv"
        write_area_scan_csv(path, area_points)
        written.append(path)
    if cs_map is not None:
        path = out / "cs_map.csv"
        write_cs_map_csv(path, cs_map)
        written.append(path)
    return written
