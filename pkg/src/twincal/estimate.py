"""Measurement-side procedures: region statistics, noise-reduction-factor
estimators with and without background correction, symmetry-centre search,
detection-area scan, cosmic-ray rejection, efficiency inversion and the
statistical uncertainty budget.

Conventions
-----------
* Sample variances default to the unbiased (N-1) form; the biased
  divide-by-N form used by the defining expectation formulas is available
  through ``ddof=0`` (the difference is O(1/N) and the uncertainty model
  assumes unbiased moments).
* Negative noise-reduction values are possible through sampling noise and
  are returned as-is (clamping would bias the efficiency upward).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, DomainError, GeometryError
from .model import FrameGeometry, Region, SIDE_SIGNAL

VARIANT_RAW = "sigma"
VARIANT_ALPHA = "sigma_alpha"
VARIANT_ALPHA_B = "sigma_alpha_b"

# Fixed systematic (Type B) terms reported with every calibration: the
# residual of excess-noise nullification by balancing, and the relative
# bias from a symmetry centre known to a tenth of a coherence cell.
TYPE_B_BALANCE_RESIDUAL = 1e-6
TYPE_B_CS_BIAS_RELATIVE = 0.015


# ---------------------------------------------------------------------------
# Series containers
# ---------------------------------------------------------------------------

@dataclass
class RegionPairSeries:
    """Per-frame integrated counts of a conjugate region pair.

    ``n_s`` / ``n_i`` are the per-frame region sums of the illuminated
    acquisition; ``m_s`` / ``m_i`` the optional background series measured
    with the emission off.
    """

    n_s: np.ndarray
    n_i: np.ndarray
    m_s: np.ndarray | None = None
    m_i: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.n_s = np.asarray(self.n_s, dtype=np.float64)
        self.n_i = np.asarray(self.n_i, dtype=np.float64)
        if self.n_s.shape != self.n_i.shape or self.n_s.ndim != 1:
            raise DegenerateDataError("n_s and n_i must be 1-d and equal length")
        if self.n_s.size < 2:
            raise DegenerateDataError("need at least 2 frames")
        if (self.m_s is None) != (self.m_i is None):
            raise DegenerateDataError("background series must come in pairs")
        if self.m_s is not None:
            self.m_s = np.asarray(self.m_s, dtype=np.float64)
            self.m_i = np.asarray(self.m_i, dtype=np.float64)
            if self.m_s.shape != self.m_i.shape or self.m_s.ndim != 1:
                raise DegenerateDataError("m_s and m_i must be 1-d and equal length")
            if self.m_s.size < 2:
                raise DegenerateDataError("need at least 2 background frames")
        for arr in (self.n_s, self.n_i, self.m_s, self.m_i):
            if arr is not None and np.any(arr < 0):
                raise DegenerateDataError("region sums must be non-negative")

    @property
    def has_background(self) -> bool:
        return self.m_s is not None

    @property
    def n_frames(self) -> int:
        return self.n_s.size

    def batches(self, z: int) -> list["RegionPairSeries"]:
        """Split into ``z`` equal contiguous batches (extras dropped)."""
        if z < 1:
            raise DomainError("z must be >= 1")
        n = self.n_frames // z
        if n < 2:
            raise DegenerateDataError(f"cannot form {z} batches of >= 2 frames")
        m = self.m_s.size // z if self.has_background else 0
        if self.has_background and m < 2:
            raise DegenerateDataError(f"cannot form {z} background batches")
        out = []
        for l in range(z):
            kwargs = {}
            if self.has_background:
                kwargs = {"m_s": self.m_s[l * m:(l + 1) * m],
                          "m_i": self.m_i[l * m:(l + 1) * m]}
            out.append(RegionPairSeries(self.n_s[l * n:(l + 1) * n],
                                        self.n_i[l * n:(l + 1) * n], **kwargs))
        return out


@dataclass(frozen=True)
class NoiseReductionEstimate:
    """A noise-reduction-factor value with estimator provenance."""

    value: float
    variant: str
    alpha_used: float
    n_frames: int


def region_sum(frame, region: Region) -> float:
    """Sum of superpixel counts over a region; bounds-checked."""
    counts = frame.counts if hasattr(frame, "counts") else np.asarray(frame)
    r0, c0 = region.origin
    h, w = region.extent
    if r0 < 0 or c0 < 0 or r0 + h > counts.shape[0] or c0 + w > counts.shape[1]:
        raise GeometryError(
            f"region {region.origin}+{region.extent} leaves the frame "
            f"{counts.shape}")
    return float(counts[r0:r0 + h, c0:c0 + w].sum())


def build_series(pdc_frames, region_s: Region, region_i: Region,
                 bg_frames=None) -> RegionPairSeries:
    """Integrate a conjugate region pair over frame stacks (streaming)."""
    n_s, n_i = [], []
    for frame in pdc_frames:
        n_s.append(region_sum(frame, region_s))
        n_i.append(region_sum(frame, region_i))
    kwargs = {}
    if bg_frames is not None:
        m_s, m_i = [], []
        for frame in bg_frames:
            m_s.append(region_sum(frame, region_s))
            m_i.append(region_sum(frame, region_i))
        kwargs = {"m_s": np.array(m_s), "m_i": np.array(m_i)}
    return RegionPairSeries(np.array(n_s), np.array(n_i), **kwargs)


# ---------------------------------------------------------------------------
# Point estimators
# ---------------------------------------------------------------------------

def estimate_alpha(series: RegionPairSeries) -> float:
    """Balancing factor E[N_s]/E[N_i] over the frame set."""
    denom = float(series.n_i.mean())
    if denom == 0.0:
        raise DegenerateDataError("idler mean is zero; alpha undefined")
    return float(series.n_s.mean()) / denom


def estimate_sigma_alpha(series: RegionPairSeries, alpha: float | None = None,
                         ddof: int = 1) -> float:
    """Noise reduction factor of N_s - alpha*N_i, shot-noise normalised.

    Var(N_s - alpha*N_i) / (E[N_s] + alpha*E[N_i]); with alpha estimated
    from the same set the denominator equals 2*E[N_s].
    """
    if alpha is None:
        alpha = estimate_alpha(series)
    denom = float(series.n_s.mean() + alpha * series.n_i.mean())
    if denom <= 0.0:
        raise DegenerateDataError("shot-noise denominator is not positive")
    return float(np.var(series.n_s - alpha * series.n_i, ddof=ddof)) / denom


def estimate_sigma_raw(series: RegionPairSeries, ddof: int = 1) -> float:
    """Unbalanced noise reduction factor Var(N_s - N_i)/E[N_s + N_i]."""
    denom = float(series.n_s.mean() + series.n_i.mean())
    if denom <= 0.0:
        raise DegenerateDataError("shot-noise denominator is not positive")
    return float(np.var(series.n_s - series.n_i, ddof=ddof)) / denom


def estimate_alpha_b(series: RegionPairSeries) -> float:
    """Background-corrected balancing factor.

    (E[N'_s] - E[M_s]) / (E[N'_i] - E[M_i]); with zero background series
    this reduces to estimate_alpha.
    """
    if not series.has_background:
        raise DegenerateDataError("background series required for alpha_b")
    num = float(series.n_s.mean() - series.m_s.mean())
    den = float(series.n_i.mean() - series.m_i.mean())
    if den <= 0.0:
        raise DegenerateDataError("background-corrected idler mean is not positive")
    if num < 0.0:
        warnings.warn("background exceeds the signal-arm mean; alpha_b < 0",
                      stacklevel=2)
    return num / den


def estimate_sigma_alpha_b(series: RegionPairSeries,
                           alpha_b: float | None = None,
                           ddof: int = 1) -> float:
    """Background-corrected balanced noise reduction factor.

    [Var(N'_s - a*N'_i) - Var(M_s - a*M_i)] / (2*(E[N'_s] - E[M_s])) with
    a = alpha_b.  May come out negative through sampling noise; the value
    is reported as-is.
    """
    if not series.has_background:
        raise DegenerateDataError("background series required for sigma_alpha_b")
    if alpha_b is None:
        alpha_b = estimate_alpha_b(series)
    var_n = float(np.var(series.n_s - alpha_b * series.n_i, ddof=ddof))
    var_m = float(np.var(series.m_s - alpha_b * series.m_i, ddof=ddof))
    denom = 2.0 * float(series.n_s.mean() - series.m_s.mean())
    if denom <= 0.0:
        raise DegenerateDataError("background-corrected signal mean is not positive")
    return (var_n - var_m) / denom


def noise_reduction_estimate(series: RegionPairSeries, variant: str,
                             ddof: int = 1) -> NoiseReductionEstimate:
    """Convenience wrapper tagging a sigma value with its provenance."""
    if variant == VARIANT_RAW:
        value, alpha = estimate_sigma_raw(series, ddof=ddof), 1.0
    elif variant == VARIANT_ALPHA:
        alpha = estimate_alpha(series)
        value = estimate_sigma_alpha(series, alpha, ddof=ddof)
    elif variant == VARIANT_ALPHA_B:
        alpha = estimate_alpha_b(series)
        value = estimate_sigma_alpha_b(series, alpha, ddof=ddof)
    else:
        raise DomainError(f"unknown variant {variant!r}")
    return NoiseReductionEstimate(value=value, variant=variant,
                                  alpha_used=alpha, n_frames=series.n_frames)


def eta_from_sigma(alpha_b: float, sigma_ab: float) -> tuple[float, float]:
    """Invert the balanced noise-reduction relation to the efficiencies.

    eta_s = (1 + alpha_b)/2 - sigma_ab and eta_i = alpha_b * eta_s.
    Values outside (0, 1] are physically impossible and flagged.
    """
    eta_s = 0.5 * (1.0 + alpha_b) - sigma_ab
    if not 0.0 < eta_s <= 1.0:
        warnings.warn(f"recovered eta_s = {eta_s:.6g} lies outside (0, 1]",
                      stacklevel=2)
    return eta_s, alpha_b * eta_s


def correct_for_transmittance(eta: float, tau: float) -> float:
    """Divide out the optical-path transmittance: eta_true = eta / tau."""
    if not 0.0 < tau <= 1.0:
        raise DomainError(f"tau must be in (0, 1], got {tau!r}")
    eta_true = eta / tau
    if eta_true > 1.0:
        warnings.warn(f"transmittance-corrected efficiency {eta_true:.6g} "
                      "exceeds 1", stacklevel=2)
    return eta_true


def excess_noise(series: RegionPairSeries, m_tot: int | None = None):
    """Fluctuation of the summed counts relative to shot noise.

    Returns (ratio, thermal_excess): ratio = Var(N_s + N_i)/E[N_s + N_i];
    thermal_excess = <N>/m_tot is the per-arm multithermal prediction for
    comparison (None when m_tot is not given).  Pump jitter drives the
    ratio orders of magnitude above both 1 and the thermal level.
    """
    total = series.n_s + series.n_i
    mean = float(total.mean())
    if mean <= 0.0:
        raise DegenerateDataError("summed counts have non-positive mean")
    ratio = float(np.var(total, ddof=1)) / mean
    thermal = None
    if m_tot is not None:
        if m_tot < 1:
            raise DomainError("m_tot must be >= 1")
        thermal = 0.5 * mean / m_tot
    return ratio, thermal


# ---------------------------------------------------------------------------
# Cosmic-ray rejection
# ---------------------------------------------------------------------------

def cosmic_ray_filter(frames, mad_k: float = 10.0):
    """Discard frames containing superpixels far above their stack statistics.

    Per superpixel the threshold is median + mad_k * scale across the
    stack, with scale the Gaussian-consistent MAD (1.4826*MAD).  Each
    pixel's scale is floored at the frame-typical scale (its median over
    all superpixels) and at one count: with few frames a single pixel's
    sample MAD fluctuates far below the true dispersion, and an unfloored
    threshold would flag ordinary shot noise.
    """
    frames = list(frames)
    if len(frames) < 3:
        raise DegenerateDataError("need at least 3 frames to filter")
    stack = np.stack([f.counts for f in frames])
    median = np.median(stack, axis=0)
    scale = 1.4826 * np.median(np.abs(stack - median), axis=0)
    floor = max(float(np.median(scale)), 1.0)
    threshold = median + mad_k * np.maximum(scale, floor)
    bad = np.any(stack > threshold, axis=(1, 2))
    kept = [f for f, b in zip(frames, bad) if not b]
    discarded = [i for i, b in enumerate(bad) if b]
    return kept, discarded


# ---------------------------------------------------------------------------
# Symmetry-centre search
# ---------------------------------------------------------------------------

@dataclass
class SpatialMapResult:
    """Spatial noise-reduction map over candidate idler displacements."""

    values: np.ndarray          # (2*er+1, 2*ec+1) map of sigma_spatial
    row_offsets: np.ndarray     # displacement labels of the map rows
    col_offsets: np.ndarray     # displacement labels of the map columns
    argmin: tuple[int, int]     # displacement minimising the map
    ties: list[tuple[int, int]]
    curvature: float | None     # discrete Laplacian at the argmin, if interior

    @property
    def min_value(self) -> float:
        i = int(np.where(self.row_offsets == self.argmin[0])[0][0])
        j = int(np.where(self.col_offsets == self.argmin[1])[0][0])
        return float(self.values[i, j])


def sigma_spatial_map(frames, region_s: Region, geometry: FrameGeometry,
                      search_extent: tuple[int, int] = (3, 3)) -> SpatialMapResult:
    """Map the pairwise spatial noise reduction over idler displacements.

    For each candidate displacement xi the idler region is the conjugate of
    ``region_s`` shifted by xi.  Within one frame the statistic is the
    population variance of the conjugated-pair differences normalised by
    the mean pair sum; frames are then averaged.  Correlated displacements
    produce a dip, uncorrelated ones a plateau near 1 + excess noise.
    """
    if region_s.side != SIDE_SIGNAL:
        raise GeometryError("region_s must lie on the signal half")
    geometry.validate_region(region_s)
    er, ec = search_extent
    if er < 0 or ec < 0:
        raise DomainError("search extent components must be >= 0")

    # All candidate regions must be valid before any data is touched.
    shifts = [(dr, dc) for dr in range(-er, er + 1) for dc in range(-ec, ec + 1)]
    for shift in shifts:
        geometry.conjugate_region(region_s, shift=shift)
    base = geometry.conjugate_region(region_s)

    h, w = region_s.extent
    sums = np.zeros((2 * er + 1, 2 * ec + 1))
    n_frames = 0
    for frame in frames:
        counts = frame.counts
        sig = counts[region_s.row_slice, region_s.col_slice]
        for k, (dr, dc) in enumerate(shifts):
            r0, c0 = base.origin[0] + dr, base.origin[1] + dc
            # Conjugate pairing reverses both axes of the idler block.
            idl = counts[r0:r0 + h, c0:c0 + w][::-1, ::-1]
            diff = sig - idl
            denom = float(sig.sum() + idl.sum())
            if denom <= 0.0:
                raise DegenerateDataError("empty region pair in spatial map")
            value = float(np.var(diff)) * diff.size / denom
            sums[k // (2 * ec + 1), k % (2 * ec + 1)] += value
        n_frames += 1
    if n_frames == 0:
        raise DegenerateDataError("no frames supplied")
    values = sums / n_frames

    flat = values.reshape(-1)
    best = float(flat.min())
    ties = [shifts[i] for i in np.flatnonzero(flat == best)]
    argmin = ties[0]  # row-major order; first wins on exact ties
    i = argmin[0] + er
    j = argmin[1] + ec
    curvature = None
    if 0 < i < values.shape[0] - 1 and 0 < j < values.shape[1] - 1:
        curvature = float(values[i - 1, j] + values[i + 1, j]
                          + values[i, j - 1] + values[i, j + 1]
                          - 4.0 * values[i, j])
    return SpatialMapResult(values=values,
                            row_offsets=np.arange(-er, er + 1),
                            col_offsets=np.arange(-ec, ec + 1),
                            argmin=argmin, ties=ties, curvature=curvature)


# ---------------------------------------------------------------------------
# Detection-area scan
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AreaScanPoint:
    extent: tuple[int, int]        # region extent in superpixels
    coherence_cells: float         # area expressed in coherence cells
    sigma_alpha: float
    sigma_alpha_b: float | None


def anchored_region(anchor: tuple[float, float], extent: tuple[int, int],
                    side: str = SIDE_SIGNAL) -> Region:
    """Region of given extent whose centre is nearest to ``anchor``."""
    r0 = int(np.floor(anchor[0] - extent[0] / 2.0 + 0.5))
    c0 = int(np.floor(anchor[1] - extent[1] / 2.0 + 0.5))
    return Region(origin=(r0, c0), extent=extent, side=side)


def area_scan(pdc_frames, bg_frames, geometry: FrameGeometry,
              anchor: tuple[float, float], areas, cell_px: int = 1,
              ddof: int = 1) -> list[AreaScanPoint]:
    """Noise reduction factor versus detection-area size.

    ``areas`` is an ascending list of (height, width) superpixel extents;
    each signal region is anchored at ``anchor`` and paired with its exact
    conjugate, so the pair is symmetric about the symmetry centre.  Both
    the uncorrected and (when background frames are given) the
    background-corrected curves are returned.
    """
    areas = list(areas)
    if not areas:
        raise DomainError("areas must be non-empty")
    sizes = [h * w for h, w in areas]
    if sizes != sorted(sizes):
        raise DomainError("areas must be sorted ascending")

    pairs = []
    for extent in areas:
        region_s = anchored_region(anchor, tuple(extent))
        geometry.validate_region(region_s)
        pairs.append((region_s, geometry.conjugate_region(region_s)))

    def collect(frames):
        sums = [([], []) for _ in pairs]
        for frame in frames:
            for (region_s, region_i), (acc_s, acc_i) in zip(pairs, sums):
                acc_s.append(region_sum(frame, region_s))
                acc_i.append(region_sum(frame, region_i))
        return sums

    pdc_sums = collect(pdc_frames)
    bg_sums = collect(bg_frames) if bg_frames is not None else None

    points = []
    for k, extent in enumerate(areas):
        kwargs = {}
        if bg_sums is not None:
            kwargs = {"m_s": np.array(bg_sums[k][0]),
                      "m_i": np.array(bg_sums[k][1])}
        series = RegionPairSeries(np.array(pdc_sums[k][0]),
                                  np.array(pdc_sums[k][1]), **kwargs)
        sigma_a = estimate_sigma_alpha(series, ddof=ddof)
        sigma_ab = None
        if series.has_background:
            sigma_ab = estimate_sigma_alpha_b(series, ddof=ddof)
        points.append(AreaScanPoint(
            extent=tuple(extent),
            coherence_cells=extent[0] * extent[1] / float(cell_px * cell_px),
            sigma_alpha=sigma_a, sigma_alpha_b=sigma_ab))
    return points


# ---------------------------------------------------------------------------
# Uncertainty budget
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TypeAUncertainty:
    """Delta-method standard uncertainties of one experiment's estimates."""

    u_alpha: float
    u_sigma: float
    u_eta: float
    cov_alpha_sigma: float


def _estimates_from_moments(mom: np.ndarray, n: int, m: int,
                            ddof: int) -> tuple[float, float, float]:
    """(alpha, sigma, eta_s) as a smooth function of raw sample moments.

    ``mom`` holds per-frame means of (n_s, n_i, n_s^2, n_s*n_i, n_i^2) and,
    when m > 0, the same five for the background series.  Matches the
    point estimators exactly at the observed moments.
    """
    a_s, a_i, q_ss, q_si, q_ii = mom[:5]
    corr_n = n / (n - ddof)
    if m > 0:
        b_s, b_i, r_ss, r_si, r_ii = mom[5:]
        alpha = (a_s - b_s) / (a_i - b_i)
        var_n = (q_ss - 2 * alpha * q_si + alpha ** 2 * q_ii
                 - (a_s - alpha * a_i) ** 2) * corr_n
        var_m = (r_ss - 2 * alpha * r_si + alpha ** 2 * r_ii
                 - (b_s - alpha * b_i) ** 2) * (m / (m - ddof))
        sigma = (var_n - var_m) / (2.0 * (a_s - b_s))
    else:
        alpha = a_s / a_i
        var_n = (q_ss - 2 * alpha * q_si + alpha ** 2 * q_ii
                 - (a_s - alpha * a_i) ** 2) * corr_n
        sigma = var_n / (a_s + alpha * a_i)
    eta = 0.5 * (1.0 + alpha) - sigma
    return alpha, sigma, eta


def _moment_rows(series: RegionPairSeries):
    v = np.column_stack([series.n_s, series.n_i, series.n_s ** 2,
                         series.n_s * series.n_i, series.n_i ** 2])
    w = None
    if series.has_background:
        w = np.column_stack([series.m_s, series.m_i, series.m_s ** 2,
                             series.m_s * series.m_i, series.m_i ** 2])
    return v, w


def propagate_type_a(series: RegionPairSeries,
                     ddof: int = 1) -> TypeAUncertainty:
    """Type A uncertainties of (alpha, sigma, eta_s) by the delta method.

    The estimates are smooth functions of the sample moments of the
    measured quantities; only intra-frame covariances (signal with idler
    of the same shot) enter -- different frames are independent.  The
    gradient is taken numerically and projected onto the per-frame moment
    rows, which keeps the quadratic form well conditioned at large counts.
    """
    v, w = _moment_rows(series)
    n = series.n_frames
    m = series.m_s.size if series.has_background else 0
    mom = np.concatenate([v.mean(axis=0)] + ([w.mean(axis=0)] if m else []))

    def grad(component: int) -> np.ndarray:
        g = np.empty(mom.size)
        for j in range(mom.size):
            h = 1e-6 * max(abs(mom[j]), 1.0)
            hi, lo = mom.copy(), mom.copy()
            hi[j] += h
            lo[j] -= h
            f_hi = _estimates_from_moments(hi, n, m, ddof)[component]
            f_lo = _estimates_from_moments(lo, n, m, ddof)[component]
            g[j] = (f_hi - f_lo) / (2.0 * h)
        return g

    gradients = [grad(0), grad(1), grad(2)]
    cov = np.zeros((3, 3))
    for block, count in ((v, n), (w, m)):
        if block is None:
            continue
        lo = 0 if block is v else 5
        proj = np.column_stack([block @ g[lo:lo + 5] for g in gradients])
        cov += np.cov(proj, rowvar=False, ddof=1) / count
    u = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    if not np.all(np.isfinite(u)):
        raise DegenerateDataError("uncertainty propagation produced NaN")
    return TypeAUncertainty(u_alpha=float(u[0]), u_sigma=float(u[1]),
                            u_eta=float(u[2]),
                            cov_alpha_sigma=float(cov[0, 1]))


@dataclass
class RepeatSummary:
    """Aggregate of Z repeated experiments with both uncertainty routes."""

    z: int
    alpha_b: float
    sigma_ab: float
    eta_s: float
    eta_i: float
    u_alpha_empirical: float
    u_sigma_empirical: float
    u_eta_empirical: float
    u_alpha_propagated: float
    u_sigma_propagated: float
    u_eta_propagated: float
    per_batch_alpha: np.ndarray
    per_batch_sigma: np.ndarray
    per_batch_eta: np.ndarray
    background_corrected: bool


def _sem(values: np.ndarray) -> float:
    """Standard error of the mean of Z repeated determinations."""
    z = values.size
    return float(np.sqrt(np.sum((values - values.mean()) ** 2)
                         / (z * (z - 1))))


def repeat_experiment(batches, ddof: int = 1) -> RepeatSummary:
    """Aggregate per-batch estimates and their statistical uncertainty.

    Each batch is a self-contained experiment (its own balancing factor);
    the aggregate is the plain mean over batches, the empirical
    uncertainty the standard error of that mean, and the propagated
    uncertainty combines the per-batch delta-method values.
    """
    batches = list(batches)
    z = len(batches)
    if z < 2:
        raise DegenerateDataError("need Z >= 2 batches")
    corrected = batches[0].has_background
    if any(b.has_background != corrected for b in batches):
        raise DegenerateDataError("batches disagree on background presence")

    alphas, sigmas, etas = [], [], []
    propagated = []
    for batch in batches:
        if corrected:
            alpha = estimate_alpha_b(batch)
            sigma = estimate_sigma_alpha_b(batch, alpha, ddof=ddof)
        else:
            alpha = estimate_alpha(batch)
            sigma = estimate_sigma_alpha(batch, alpha, ddof=ddof)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            eta_s, _ = eta_from_sigma(alpha, sigma)
        alphas.append(alpha)
        sigmas.append(sigma)
        etas.append(eta_s)
        propagated.append(propagate_type_a(batch, ddof=ddof))

    alphas = np.array(alphas)
    sigmas = np.array(sigmas)
    etas = np.array(etas)
    alpha_b = float(alphas.mean())
    sigma_ab = float(sigmas.mean())
    eta_s, eta_i = eta_from_sigma(alpha_b, sigma_ab)

    def combine(key):
        return float(np.sqrt(np.mean([getattr(p, key) ** 2
                                      for p in propagated]) / z))

    return RepeatSummary(
        z=z, alpha_b=alpha_b, sigma_ab=sigma_ab, eta_s=eta_s, eta_i=eta_i,
        u_alpha_empirical=_sem(alphas),
        u_sigma_empirical=_sem(sigmas),
        u_eta_empirical=_sem(etas),
        u_alpha_propagated=combine("u_alpha"),
        u_sigma_propagated=combine("u_sigma"),
        u_eta_propagated=combine("u_eta"),
        per_batch_alpha=alphas, per_batch_sigma=sigmas, per_batch_eta=etas,
        background_corrected=corrected)


# ---------------------------------------------------------------------------
# Calibration result
# ---------------------------------------------------------------------------

@dataclass
class CalibrationDiagnostics:
    excess_noise_ratio: float
    thermal_excess: float | None
    discarded_pdc: int
    discarded_background: int
    cs_offset: tuple[int, int]
    type_b_balance_residual: float = TYPE_B_BALANCE_RESIDUAL
    type_b_cs_bias_relative: float = TYPE_B_CS_BIAS_RELATIVE


@dataclass
class CalibrationResult:
    """Final efficiencies with the statistical uncertainty budget."""

    eta_s: float
    eta_i: float
    alpha_b: float
    sigma_ab: float
    u_eta_s: float
    u_alpha_b: float
    u_sigma_ab: float
    z_repeats: int
    diagnostics: CalibrationDiagnostics
    u_eta_s_propagated: float = float("nan")
    eta_s_true: float | None = None
    eta_i_true: float | None = None
