"""Synthetic twin-beam frame generation with known ground truth.

Each frame is one laser shot.  Generation order per frame is fixed and
documented so that stacks are bit-reproducible:

1. sample the relative pulse energy (and per-mode mean) for the shot,
2. draw one multithermal photon number per coherence cell, shared by the
   signal cell and its conjugate idler cell,
3. thin both arms independently with their channel efficiencies,
4. spread each cell's detected photons uniformly over the cell's
   superpixel block (signal and idler spreads are independent draws),
5. add straylight (Poisson) and read noise (Gaussian) per superpixel,
6. optionally inject cosmic-ray spikes,
7. quantise counts to integers, clipped at zero.

Every frame owns an RNG stream derived deterministically from
(master_seed, kind, pulse_index), so stacks are identical no matter how
generation is scheduled across workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, ResourceError
from .model import (
    BackgroundModel,
    ChannelEfficiencies,
    FrameGeometry,
    ModeStructure,
    PulseModel,
    Region,
    SIDE_SIGNAL,
)

KIND_PDC = "pdc_on"
KIND_BACKGROUND = "background"
_KIND_CODE = {KIND_PDC: 0, KIND_BACKGROUND: 1}

# Materialised stacks above this many superpixels are refused; use
# iter_stack to stream arbitrarily long acquisitions.
_MAX_STACK_ELEMENTS = 1 << 28

# Added cosmic-ray amplitude: 20x the larger of the frame median and the
# struck superpixel, so a hit on a bright emission pixel still stands out.
_COSMIC_FACTOR = 20.0


@dataclass(frozen=True)
class ExperimentConfig:
    """All ground-truth parameters of a simulated acquisition.

    Two runs with equal config produce bitwise identical stacks.
    ``cs_offset`` displaces the idler deposition (in fractional
    superpixels) to emulate a misaligned symmetry centre.
    """

    channel: ChannelEfficiencies
    modes: ModeStructure
    pulse: PulseModel
    background: BackgroundModel
    geometry: FrameGeometry
    cs_offset: tuple[float, float] = (0.0, 0.0)
    cosmic_ray_rate: float = 0.0
    master_seed: int = 0

    def __post_init__(self) -> None:
        if self.cosmic_ray_rate < 0.0:
            raise DomainError("cosmic_ray_rate must be >= 0")
        if not 0 <= self.master_seed < 2 ** 64:
            raise DomainError("master_seed must fit in 64 bits")
        # Fail early if the emission blocks cannot sit inside their halves.
        self.signal_region()
        self.idler_block_origin()

    def frame_stream(self, kind: str, pulse_index: int) -> np.random.Generator:
        """Independent RNG stream of one frame."""
        if kind not in _KIND_CODE:
            raise DomainError(f"unknown frame kind {kind!r}")
        seq = np.random.SeedSequence(
            entropy=self.master_seed,
            spawn_key=(_KIND_CODE[kind], pulse_index))
        return np.random.default_rng(seq)

    def signal_block_origin(self) -> tuple[int, int]:
        """Placement of the signal emission block.

        Rows are centred on the symmetry centre, columns in the middle of
        the signal half; the placement is derived, not configured, so the
        config carries no redundant geometry.
        """
        geo = self.geometry
        height, width = self.modes.block_shape
        r0 = int(math.floor(geo.cs[0] - (height - 1) / 2.0 + 0.5))
        c0 = int(math.floor((geo.beam_split - width) / 2.0))
        return (r0, c0)

    def signal_region(self) -> Region:
        """The emission block of the signal beam as a Region."""
        region = Region(origin=self.signal_block_origin(),
                        extent=self.modes.block_shape, side=SIDE_SIGNAL)
        self.geometry.validate_region(region)
        return region

    def idler_block_origin(self) -> tuple[int, int]:
        """Origin of the idler deposition block (conjugate + rounded offset)."""
        signal = self.signal_region()
        shift = (_round_half_away(self.cs_offset[0]),
                 _round_half_away(self.cs_offset[1]))
        conj = self.geometry.conjugate_region(signal, shift=shift)
        return conj.origin


@dataclass
class Frame:
    """One laser shot: the superpixel count matrix plus shot metadata."""

    counts: np.ndarray
    pulse_index: int
    pulse_energy: float
    kind: str = KIND_PDC


def _round_half_away(x: float) -> int:
    """Round to the nearest integer, ties away from zero.

    Applied to the injected symmetry-centre offset: a half-superpixel
    misalignment deposits into the cell further from perfect conjugation.
    """
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def sample_pulse(pulse: PulseModel, rng: np.random.Generator) -> tuple[float, float]:
    """Draw one shot's relative energy and per-mode mean.

    Energy is Gaussian(1, jitter) resampled until positive (no point mass
    at a clamp floor), so the per-mode mean is always > 0.
    """
    if pulse.relative_energy_jitter == 0.0:
        return 1.0, pulse.mean_mu
    energy = rng.normal(1.0, pulse.relative_energy_jitter)
    while energy <= 0.0:
        energy = rng.normal(1.0, pulse.relative_energy_jitter)
    return float(energy), pulse.mu_at(float(energy))


def sample_cell_pair(mu: float, m_t: int, ch: ChannelEfficiencies,
                     rng: np.random.Generator,
                     size: int | None = None):
    """Detected signal/idler photon numbers of one (or ``size``) cell pairs.

    The pre-detection number per cell is negative-binomial with ``m_t``
    modes of mean ``mu`` each (multithermal); it is shared exactly by the
    two arms, which are then thinned independently.
    """
    if not mu > 0.0:
        raise DomainError("mu must be > 0")
    if m_t < 1:
        raise DomainError("m_t must be >= 1")
    pre = rng.negative_binomial(m_t, 1.0 / (1.0 + mu), size=size)
    detected_s = rng.binomial(pre, ch.eta_s)
    detected_i = rng.binomial(pre, ch.eta_i)
    return detected_s, detected_i


def _spread_cells(values: np.ndarray, px: int,
                  rng: np.random.Generator) -> np.ndarray:
    """Distribute per-cell counts uniformly over px*px superpixel blocks.

    ``values`` has shape (grid_rows, grid_cols); the result is the
    assembled (grid_rows*px, grid_cols*px) superpixel block.
    """
    gr, gc = values.shape
    if px == 1:
        return values.astype(np.float64)
    split = rng.multinomial(values.reshape(-1),
                            np.full(px * px, 1.0 / (px * px)))
    block = split.reshape(gr, gc, px, px).transpose(0, 2, 1, 3)
    return block.reshape(gr * px, gc * px).astype(np.float64)


def _inject_spike(counts: np.ndarray, rng: np.random.Generator) -> None:
    r = int(rng.integers(counts.shape[0]))
    c = int(rng.integers(counts.shape[1]))
    median = float(np.median(counts))
    counts[r, c] += _COSMIC_FACTOR * max(median, float(counts[r, c]), 1.0)


def inject_cosmic_ray(frame: Frame, rng: np.random.Generator) -> Frame:
    """Return a copy of the frame with one cosmic-ray spike added."""
    counts = frame.counts.copy()
    _inject_spike(counts, rng)
    np.rint(counts, out=counts)
    return replace(frame, counts=counts)


def render_frame(cfg: ExperimentConfig, pulse_index: int,
                 rng: np.random.Generator | None = None,
                 kind: str = KIND_PDC) -> Frame:
    """Generate one frame.  ``rng`` defaults to the frame's derived stream."""
    if kind not in _KIND_CODE:
        raise DomainError(f"unknown frame kind {kind!r}")
    if rng is None:
        rng = cfg.frame_stream(kind, pulse_index)

    geo = cfg.geometry
    counts = np.zeros(geo.shape, dtype=np.float64)
    energy, mu = sample_pulse(cfg.pulse, rng)

    if kind == KIND_PDC:
        grid = cfg.modes.grid
        px = cfg.modes.coherence_cell_px
        det_s, det_i = sample_cell_pair(
            mu, cfg.modes.temporal_modes, cfg.channel, rng,
            size=grid[0] * grid[1])
        det_s = det_s.reshape(grid)
        det_i = det_i.reshape(grid)

        sig_r0, sig_c0 = cfg.signal_block_origin()
        idl_r0, idl_c0 = cfg.idler_block_origin()
        height, width = cfg.modes.block_shape

        sig_block = _spread_cells(det_s, px, rng)
        # Conjugation is a point reflection: cell (a, b) lands at the
        # rotated slot of the idler block.  Sub-cell positions are
        # uncorrelated physically, so the idler spread is a fresh draw.
        idl_block = _spread_cells(det_i[::-1, ::-1], px, rng)

        counts[sig_r0:sig_r0 + height, sig_c0:sig_c0 + width] += sig_block
        counts[idl_r0:idl_r0 + height, idl_c0:idl_c0 + width] += idl_block

    bg = cfg.background
    if bg.straylight_mean > 0.0:
        scale = energy if bg.straylight_tracks_pulse else 1.0
        split = geo.beam_split
        counts[:, :split] += rng.poisson(
            bg.straylight_mean * scale, size=(geo.rows, split))
        lam_idler = bg.straylight_mean * bg.straylight_idler_ratio * scale
        if lam_idler > 0.0:
            counts[:, split:] += rng.poisson(
                lam_idler, size=(geo.rows, geo.cols - split))

    if bg.read_noise_std > 0.0:
        counts += rng.normal(0.0, bg.read_noise_per_superpixel, size=geo.shape)

    if cfg.cosmic_ray_rate > 0.0:
        for _ in range(int(rng.poisson(cfg.cosmic_ray_rate))):
            _inject_spike(counts, rng)

    np.rint(counts, out=counts)
    np.clip(counts, 0.0, None, out=counts)
    return Frame(counts=counts, pulse_index=pulse_index,
                 pulse_energy=energy, kind=kind)


def iter_stack(cfg: ExperimentConfig, count: int, kind: str = KIND_PDC):
    """Yield ``count`` frames one at a time (constant memory)."""
    if count < 1:
        raise DomainError("count must be >= 1")
    for pulse_index in range(count):
        yield render_frame(cfg, pulse_index, kind=kind)


def generate_stack(cfg: ExperimentConfig, count: int, kind: str = KIND_PDC,
                   workers: int = 1) -> list[Frame]:
    """Materialise a stack of mutually independent frames.

    The result does not depend on ``workers``: each frame is generated
    from its own derived stream, so scheduling cannot reorder randomness.
    """
    if count < 1:
        raise DomainError("count must be >= 1")
    total = cfg.geometry.rows * cfg.geometry.cols * count
    if total > _MAX_STACK_ELEMENTS:
        raise ResourceError(
            f"stack of {count} frames x {cfg.geometry.shape} superpixels "
            f"({total} elements) is too large to materialise; use iter_stack")
    if workers <= 1:
        return [render_frame(cfg, k, kind=kind) for k in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(
            lambda k: render_frame(cfg, k, kind=kind), range(count)))
