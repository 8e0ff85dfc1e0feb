"""Command-line entry points wiring config -> simulator -> estimators -> tables.

Subcommands
-----------
simulate          generate the illuminated and background stacks of a run
find-cs           map the spatial noise reduction and report its minimum
area-scan         noise reduction factor versus detection-area size
calibrate         full chain from stacks to a calibration result
reproduce-table1  canned reference run compared against bundled values
selftest          reduced-scale analytic-vs-Monte-Carlo invariant suite

Exit codes: 0 success, 2 configuration, 3 file format/IO, 4 geometry,
5 degenerate data, 1 anything else.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import estimate, io, presets, simulate
from .errors import (
    ConfigError,
    DegenerateDataError,
    DomainError,
    GeometryError,
    StackFormatError,
    TwincalError,
)

_EXIT_CODES = (
    (ConfigError, 2),
    (StackFormatError, 3),
    (OSError, 3),
    (GeometryError, 4),
    (DegenerateDataError, 5),
    (DomainError, 2),
    (TwincalError, 1),
)


def _say(args, *parts) -> None:
    if not args.quiet:
        print(*parts)


def _load_config(args):
    cfg, params = io.load_run_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, master_seed=args.seed)
    return cfg, params


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg, params = _load_config(args)
    out = _outdir(args)
    doc = io.run_config_to_dict(cfg, params)

    n_pdc = params.z_batches * params.frames_per_batch
    frames = list(simulate.iter_stack(cfg, n_pdc, simulate.KIND_PDC))
    pdc_path = out / "pdc.tbs"
    io.write_stack(pdc_path, frames, doc)
    energies = np.array([f.pulse_energy for f in frames])
    _say(args, f"wrote {pdc_path} ({n_pdc} frames), digest "
               f"{io.config_digest(doc).hex()}")
    _say(args, f"pulse energy mean {energies.mean():.4f}, "
               f"std {energies.std(ddof=1):.4f}")

    if params.background_frames_per_batch:
        n_bg = params.z_batches * params.background_frames_per_batch
        bg_path = out / "background.tbs"
        io.write_stack(bg_path,
                       simulate.iter_stack(cfg, n_bg, simulate.KIND_BACKGROUND),
                       doc)
        _say(args, f"wrote {bg_path} ({n_bg} frames), digest "
                   f"{io.config_digest(doc).hex()}")
    return 0


def cmd_find_cs(args) -> int:
    cfg, params = _load_config(args)
    out = _outdir(args)
    frames, _ = io.read_stack(args.stack)
    result = estimate.sigma_spatial_map(frames, params.region_s, cfg.geometry,
                                        params.cs_search_extent)
    io.write_cs_map_csv(out / "cs_map.csv", result)
    _say(args, f"spatial-map minimum at offset {result.argmin}, "
               f"value {result.min_value:.6g}"
               + (f", ties {result.ties}" if len(result.ties) > 1 else ""))
    return 0


def cmd_area_scan(args) -> int:
    cfg, params = _load_config(args)
    out = _outdir(args)
    if not params.areas:
        raise ConfigError("analysis.areas is empty; nothing to scan")
    pdc, _ = io.read_stack(args.pdc)
    bg = None
    if args.background:
        bg, _ = io.read_stack(args.background)
    anchor = params.region_s.center
    points = estimate.area_scan(pdc, bg, cfg.geometry, anchor, params.areas,
                                cell_px=cfg.modes.coherence_cell_px,
                                ddof=params.variance_ddof)
    io.write_area_scan_csv(out / "area_scan.csv", points)
    _say(args, f"wrote {out / 'area_scan.csv'} ({len(points)} areas)")
    return 0


def _calibrate(cfg, params, pdc_frames, bg_frames, quiet=True):
    """Shared calibration chain: filter, locate, batch, estimate."""
    ddof = params.variance_ddof

    pdc_kept, pdc_dropped = estimate.cosmic_ray_filter(
        pdc_frames, mad_k=params.cosmic_mad_k)
    bg_kept, bg_dropped = [], []
    if bg_frames:
        bg_kept, bg_dropped = estimate.cosmic_ray_filter(
            bg_frames, mad_k=params.cosmic_mad_k)

    probe = pdc_kept[:min(20, len(pdc_kept))]
    cs_map = estimate.sigma_spatial_map(probe, params.region_s, cfg.geometry,
                                        params.cs_search_extent)
    region_i = cfg.geometry.conjugate_region(params.region_s,
                                             shift=cs_map.argmin)

    series = estimate.build_series(pdc_kept, params.region_s, region_i,
                                   bg_kept or None)
    z = params.z_batches
    summary = estimate.repeat_experiment(series.batches(z), ddof=ddof)
    ratio, thermal = estimate.excess_noise(
        series, cfg.modes.total_modes(params.region_s.area
                                      // cfg.modes.coherence_cell_px ** 2))

    result = estimate.CalibrationResult(
        eta_s=summary.eta_s, eta_i=summary.eta_i,
        alpha_b=summary.alpha_b, sigma_ab=summary.sigma_ab,
        u_eta_s=summary.u_eta_empirical,
        u_alpha_b=summary.u_alpha_empirical,
        u_sigma_ab=summary.u_sigma_empirical,
        u_eta_s_propagated=summary.u_eta_propagated,
        z_repeats=summary.z,
        diagnostics=estimate.CalibrationDiagnostics(
            excess_noise_ratio=ratio, thermal_excess=thermal,
            discarded_pdc=len(pdc_dropped),
            discarded_background=len(bg_dropped),
            cs_offset=cs_map.argmin))
    if params.tau_s != 1.0:
        result.eta_s_true = estimate.correct_for_transmittance(
            result.eta_s, params.tau_s)
    if params.tau_i != 1.0:
        result.eta_i_true = estimate.correct_for_transmittance(
            result.eta_i, params.tau_i)
    return result, summary


def _print_calibration(args, result, summary) -> None:
    d = result.diagnostics
    _say(args, f"eta_s   = {result.eta_s:.6f} +- {result.u_eta_s:.6f} "
               f"(propagated {result.u_eta_s_propagated:.6f})")
    _say(args, f"eta_i   = {result.eta_i:.6f}")
    _say(args, f"alpha_b = {result.alpha_b:.6f} +- {result.u_alpha_b:.6f}")
    _say(args, f"sigma   = {result.sigma_ab:.6f} +- {result.u_sigma_ab:.6f}")
    _say(args, f"excess-noise ratio {d.excess_noise_ratio:.4g} "
               f"(thermal level {d.thermal_excess:.4g}), "
               f"discarded {d.discarded_pdc}+{d.discarded_background} frames, "
               f"cs offset {d.cs_offset}")
    _say(args, f"type B: balance residual < {d.type_b_balance_residual:g}, "
               f"cs alignment bias {d.type_b_cs_bias_relative:.1%}")
    if result.eta_s_true is not None:
        _say(args, f"eta_s / tau_s = {result.eta_s_true:.6f}")


def cmd_calibrate(args) -> int:
    cfg, params = _load_config(args)
    out = _outdir(args)
    pdc, _ = io.read_stack(args.pdc)
    bg = None
    if args.background:
        bg, _ = io.read_stack(args.background)
    result, summary = _calibrate(cfg, params, pdc, bg)
    io.write_calibration_csv(out / "calibration.csv", result)
    io.write_batches_csv(out / "batches.csv", summary)
    _print_calibration(args, result, summary)
    return 0


def cmd_reproduce_table1(args) -> int:
    out = _outdir(args)
    seed = args.seed if args.seed is not None else 20260809
    cfg = presets.reference_experiment(master_seed=seed)
    params = presets.reference_analysis()

    n = params.z_batches * params.frames_per_batch
    m = params.z_batches * params.background_frames_per_batch
    _say(args, f"generating {n} illuminated + {m} background frames ...")
    pdc = simulate.generate_stack(cfg, n, simulate.KIND_PDC)
    bg = simulate.generate_stack(cfg, m, simulate.KIND_BACKGROUND)

    result, summary = _calibrate(cfg, params, pdc, bg)
    io.write_calibration_csv(out / "calibration.csv", result)
    io.write_batches_csv(out / "batches.csv", summary)

    region_i = cfg.geometry.conjugate_region(params.region_s)
    series = estimate.build_series(pdc, params.region_s, region_i, bg)
    ddof = params.variance_ddof
    alpha = estimate.estimate_alpha(series)
    simulated = {
        "E_Ns": float(series.n_s.mean()),
        "std_Ns": float(series.n_s.std(ddof=ddof)),
        "E_Ms": float(series.m_s.mean()),
        "std_Ms": float(series.m_s.std(ddof=ddof)),
        "alpha": alpha,
        "alpha_b": result.alpha_b,
        "sigma": estimate.estimate_sigma_raw(series, ddof=ddof),
        "sigma_alpha": estimate.estimate_sigma_alpha(series, alpha, ddof=ddof),
        "sigma_alpha_b": result.sigma_ab,
        "eta_s": result.eta_s,
    }
    uncertainties = {"alpha_b": result.u_alpha_b,
                     "sigma_alpha_b": result.u_sigma_ab,
                     "eta_s": result.u_eta_s}

    lines = ["quantity,reference,u_reference,simulated,u_simulated\n"]
    for key, (ref, u_ref) in presets.REFERENCE_VALUES.items():
        u_sim = uncertainties.get(key, float("nan"))
        lines.append(f"{key},{ref:.9g},{u_ref:.9g},{simulated[key]:.9g},"
                     f"{u_sim:.9g}\n")
    (out / "side_by_side.csv").write_text("".join(lines))

    _say(args, f"{'quantity':<14}{'reference':>14}{'simulated':>14}")
    for key, (ref, _u) in presets.REFERENCE_VALUES.items():
        _say(args, f"{key:<14}{ref:>14.6g}{simulated[key]:>14.6g}")
    _print_calibration(args, result, summary)
    return 0


def cmd_selftest(args) -> int:
    checks: list[tuple[str, bool, str]] = []

    def check(name: str, ok: bool, detail: str = "") -> None:
        checks.append((name, bool(ok), detail))
        _say(args, f"{'PASS' if ok else 'FAIL'} {name}" +
             (f" ({detail})" if detail else ""))

    from .model import ChannelEfficiencies, predict_covariance, predict_variance

    seed = args.seed if args.seed is not None else 99

    # Balanced-loss identity at reduced scale.
    cfg = presets.reference_experiment(master_seed=seed)
    cfg = dataclasses.replace(
        cfg,
        channel=ChannelEfficiencies(eta_s=0.6, eta_i=0.6),
        pulse=dataclasses.replace(cfg.pulse, mean_mu=0.1,
                                  relative_energy_jitter=0.0,
                                  gain_map="linear", gain_const=None),
        background=dataclasses.replace(cfg.background, straylight_mean=0.0,
                                       read_noise_std=0.0))
    region_s = cfg.signal_region()
    region_i = cfg.geometry.conjugate_region(region_s)
    frames = simulate.generate_stack(cfg, 600)
    series = estimate.build_series(frames, region_s, region_i)
    sigma = estimate.estimate_sigma_alpha(series)
    u = estimate.propagate_type_a(series).u_sigma
    check("balanced-loss identity", abs(sigma - 0.4) < 3 * u,
          f"sigma={sigma:.4f}, 3u={3 * u:.4f}")

    # First and second moments against the closed-form predictors.
    m_tot = cfg.modes.total_modes(cfg.modes.spatial_modes)
    mean_th = m_tot * 0.6 * 0.1
    var_th = predict_variance(0.1, 0.6, m_tot)
    cov_th = predict_covariance(0.1, 0.6, 0.6, m_tot)
    n = series.n_frames
    ok_mean = abs(series.n_s.mean() - mean_th) < 3 * np.sqrt(var_th / n)
    ok_var = abs(np.var(series.n_s, ddof=1) - var_th) < 3 * var_th * np.sqrt(2 / n)
    cov = float(np.cov(series.n_s, series.n_i)[0, 1])
    ok_cov = abs(cov - cov_th) < 3 * np.sqrt((var_th ** 2 + cov_th ** 2) / n)
    check("moment laws", ok_mean and ok_var and ok_cov,
          f"mean {series.n_s.mean():.1f}/{mean_th:.1f}, "
          f"var {np.var(series.n_s, ddof=1):.0f}/{var_th:.0f}, "
          f"cov {cov:.0f}/{cov_th:.0f}")

    # Classical bound: independent Poisson series sit at shot noise.
    rng = np.random.default_rng(seed)
    ps = estimate.RegionPairSeries(
        rng.poisson(10000, 4000).astype(float),
        rng.poisson(10000, 4000).astype(float))
    s_poisson = estimate.estimate_sigma_alpha(ps)
    u_poisson = estimate.propagate_type_a(ps).u_sigma
    check("classical shot-noise bound", abs(s_poisson - 1.0) < 3 * u_poisson,
          f"sigma={s_poisson:.4f}")

    # Symmetry-centre recovery of an injected offset.
    cfg_cs = dataclasses.replace(cfg, cs_offset=(2.0, -1.0), master_seed=seed + 1)
    frames_cs = simulate.generate_stack(cfg_cs, 20)
    inner = estimate.anchored_region(region_s.center, (3, 6))
    cs_map = estimate.sigma_spatial_map(frames_cs, inner, cfg.geometry, (3, 3))
    check("symmetry-centre search", cs_map.argmin == (2, -1),
          f"argmin={cs_map.argmin}")

    # Determinism and stack round trip.
    a = simulate.generate_stack(cfg, 5)
    b = simulate.generate_stack(cfg, 5, workers=3)
    same = all(np.array_equal(x.counts, y.counts) for x, y in zip(a, b))
    check("deterministic streams", same)

    import tempfile
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "stack.tbs"
        doc = io.run_config_to_dict(cfg, presets.reference_analysis(2, 10, 10))
        io.write_stack(path, a, doc)
        back, _ = io.read_stack(path)
        ok_rt = all(np.array_equal(x.counts, y.counts) for x, y in zip(a, back))
        check("stack round trip", ok_rt)

    failures = [name for name, ok, _ in checks if not ok]
    _say(args, f"{len(checks) - len(failures)}/{len(checks)} checks passed")
    return 0 if not failures else 1


# ---------------------------------------------------------------------------
# Parser / dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twincal",
        description="Twin-beam frame simulation and sub-shot-noise "
                    "detector calibration")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="run config JSON")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the master seed")
        p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("simulate", help="generate frame stacks")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("find-cs", help="spatial noise-reduction map")
    common(p)
    p.add_argument("--stack", required=True, help="illuminated stack file")
    p.set_defaults(func=cmd_find_cs)

    p = sub.add_parser("area-scan", help="noise reduction vs detection area")
    common(p)
    p.add_argument("--pdc", required=True, help="illuminated stack file")
    p.add_argument("--background", default=None, help="background stack file")
    p.set_defaults(func=cmd_area_scan)

    p = sub.add_parser("calibrate", help="full calibration chain")
    common(p)
    p.add_argument("--pdc", required=True, help="illuminated stack file")
    p.add_argument("--background", default=None, help="background stack file")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("reproduce-table1",
                       help="canned reference run with side-by-side table")
    common(p, config=False)
    p.set_defaults(func=cmd_reproduce_table1)

    p = sub.add_parser("selftest", help="reduced-scale invariant suite")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # map to machine-readable exit codes
        for klass, code in _EXIT_CODES:
            if isinstance(exc, klass):
                print(f"error[{klass.__name__}]: {exc}", file=sys.stderr)
                return code
        raise


if __name__ == "__main__":
    raise SystemExit(main())
