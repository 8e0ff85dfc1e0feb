"""Canned configurations and the bundled reference benchmark.

``reference_experiment`` reproduces the count statistics of the bundled
reference acquisition (a pulsed twin-beam run on a binned scientific CCD):
5x8 superpixel detection regions of one coherence cell each, 5000 temporal
modes per shot, whole-channel efficiency 0.613 on the signal arm, ~5%
straylight and a parametric-gain pump map whose pulse-to-pulse instability
drives the excess noise.  The numeric constants were calibrated so the
simulated first and second moments land on the reference values in
``REFERENCE_VALUES``.
"""

from __future__ import annotations

from .io import AnalysisParams
from .model import (
    BackgroundModel,
    ChannelEfficiencies,
    FrameGeometry,
    GAIN_SINH2,
    ModeStructure,
    PulseModel,
)
from .simulate import ExperimentConfig

# Reference estimates (and standard uncertainties) the canned run is
# compared against: region mean and fluctuation of the illuminated and
# background acquisitions, balancing factors, and the three
# noise-reduction variants.
REFERENCE_VALUES = {
    "E_Ns": (262710.0, 620.0),
    "std_Ns": (35982.0, 437.0),
    "E_Ms": (12751.0, 158.0),
    "std_Ms": (1318.0, 30.0),
    "alpha": (0.99952, 0.00003),
    "alpha_b": (0.99416, 0.00004),
    "sigma": (0.454, 0.010),
    "sigma_alpha": (0.449, 0.010),
    "sigma_alpha_b": (0.384, 0.011),
    "eta_s": (0.613, 0.011),
}

# Calibrated generator constants (see module docstring).  The pump map is
# mu ∝ sinh^2(g*sqrt(E)); with g = 1.0605 a 10.3% energy jitter yields the
# 13.9% photon-mean jitter implied by the reference fluctuation columns.
_ETA_S = 0.613
_ETA_I = 0.6166009495453447          # eta_s / 0.99416
_MEAN_MU = 2.0302248446269053        # per-mode mean at nominal pulse energy
_GAIN_CONST = 1.0605028651720567
_ENERGY_JITTER = 0.10296516798316946
_STRAYLIGHT_PX = 318.775             # 5% of the region counts over 40 px
_STRAYLIGHT_RATIO = 0.8947396845198955


def reference_experiment(master_seed: int = 20260809) -> ExperimentConfig:
    """Experiment configuration matched to the reference acquisition."""
    return ExperimentConfig(
        channel=ChannelEfficiencies(eta_s=_ETA_S, eta_i=_ETA_I),
        modes=ModeStructure(temporal_modes=5000, coherence_cell_px=1,
                            grid=(5, 8)),
        pulse=PulseModel(mean_mu=_MEAN_MU,
                         relative_energy_jitter=_ENERGY_JITTER,
                         gain_map=GAIN_SINH2, gain_const=_GAIN_CONST),
        background=BackgroundModel(straylight_mean=_STRAYLIGHT_PX,
                                   straylight_tracks_pulse=True,
                                   read_noise_std=4.0, binning=1,
                                   straylight_idler_ratio=_STRAYLIGHT_RATIO),
        geometry=FrameGeometry(rows=13, cols=30, cs=(6.0, 14.5),
                               beam_split=15),
        master_seed=master_seed,
    )


def reference_analysis(z_batches: int = 8, frames_per_batch: int = 500,
                       background_frames_per_batch: int = 500) -> AnalysisParams:
    """Analysis parameters of the canned run: Z batches of N + M frames."""
    cfg = reference_experiment()
    return AnalysisParams(
        region_s=cfg.signal_region(),
        z_batches=z_batches,
        frames_per_batch=frames_per_batch,
        background_frames_per_batch=background_frames_per_batch,
        cs_search_extent=(3, 3),
        areas=(),
        cosmic_mad_k=10.0,
        variance_ddof=1,
    )
