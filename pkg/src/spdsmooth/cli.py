"""Command-line entry point.

Subcommands mirror the pipeline stages:

- ``phantom``   write the synthetic tensor field and its region masks;
- ``noise``     corrupt the phantom (DWI signals or direct tensor noise);
- ``fit``       estimate tensors from a DWI file;
- ``smooth``    kernel-smooth a tensor field under a chosen geometry;
- ``weights``   tabulate interior kernel-weight profiles per bandwidth;
- ``run``       the full experiment grid with per-region error reports;
- ``verify``    numerical checks of the expansion/asymptotic claims.

Every subcommand accepts ``--config FILE`` (INI) plus one flag per config
key; flags override the file, which overrides the defaults. Exit status is
0 on success, 1 when a verification criterion or the fit failure budget
fails, and 2 for usage errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .config import SCHEMA, ExperimentConfig, apply_overrides, read_config
from .estimators import DwiTensorFitter
from .io import (
    read_dwi,
    read_field,
    read_gradients,
    write_diagnostics,
    write_dwi,
    write_field,
    write_gradients,
    write_json_report,
    write_masks,
    write_perturbation_csv,
    write_plot_csv,
    write_report_csv,
    write_weight_profiles,
)
from .pipeline import (
    generate_noisy,
    generate_truth,
    plot_rows,
    run_experiment,
    weight_profile_entries,
)
from .smoothing import SmoothingConfig, smooth_field
from .validation import DomainError
from .verify import run_all_suites

FLAG_HELP = {
    "dims": "grid size as nx,ny,nz",
    "spacing": "voxel spacing as dx,dy,dz",
    "vertical_bands_x_oriented": "swap the first two diagonal entries of "
    "the upper-slice vertical-band tensors (true/false)",
    "noise_model": "rician, spectral, or none",
    "sigma": "Rician noise level",
    "s0": "unattenuated signal magnitude",
    "repeats": "acquisitions per gradient direction",
    "nu": "degrees of freedom of the eigenvalue noise",
    "eta": "eigenvector noise amplitude",
    "fit_method": "linear, nonlinear, or mle",
    "project": "project non-positive tensor estimates (true/false)",
    "failure_limit": "largest tolerated fit failure fraction",
    "metrics": "comma list from euclidean,log_euclidean,affine",
    "schemes": "comma list from isotropic,anisotropic",
    "bandwidths": "comma list of isotropic bandwidths",
    "aniso_pairs": "semicolon list of h_iso:h_aniso pairs",
    "truncation": "kernel weight truncation threshold",
    "seeds": "comma list of master seeds",
    "outdir": "output directory",
    "threads": "worker threads for smoothing",
    "chunk_size": "voxels per smoothing work unit",
    "family_size": "members per perturbation ensemble",
    "var_replicates": "Monte Carlo replicates for variance checks",
    "bias_replicates": "Monte Carlo replicates for bias checks",
    "mle_replicates": "Monte Carlo replicates for the likelihood fitter",
}


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE", help="INI configuration file")
    parser.add_argument(
        "--seed", type=int, metavar="N",
        help="single master seed (shorthand for --seeds N)",
    )
    for (_, key) in SCHEMA:
        parser.add_argument(
            "--" + key.replace("_", "-"),
            dest="opt_" + key,
            metavar="VALUE",
            help=FLAG_HELP[key],
        )


def _build_config(args: argparse.Namespace) -> ExperimentConfig:
    config = read_config(args.config) if args.config else ExperimentConfig()
    overrides = {}
    for (_, key) in SCHEMA:
        raw = getattr(args, "opt_" + key)
        if raw is not None:
            overrides[key] = raw
    if args.seed is not None:
        overrides["seeds"] = str(args.seed)
    return apply_overrides(config, overrides)


def _outdir(config: ExperimentConfig) -> Path:
    path = Path(config.outdir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _metadata(config: ExperimentConfig, **extra) -> dict:
    meta = {"config_hash": config.config_hash(), "seed": config.seeds[0]}
    meta.update(extra)
    return meta


def cmd_phantom(config: ExperimentConfig, args: argparse.Namespace) -> int:
    truth, masks = generate_truth(config)
    out = _outdir(config)
    write_field(out / "truth_field.csv", truth, _metadata(config))
    write_masks(out / "region_masks.csv", masks, _metadata(config))
    counts = masks.counts()
    print("wrote %s and %s" % (out / "truth_field.csv", out / "region_masks.csv"))
    for label, count in counts.items():
        print("  %s: %d voxels" % (label, count))
    return 0


def cmd_noise(config: ExperimentConfig, args: argparse.Namespace) -> int:
    truth, _ = generate_truth(config)
    out = _outdir(config)
    stage = generate_noisy(config, truth, config.seeds[0])
    if "dwi" in stage:
        meta = _metadata(config, sigma=config.sigma)
        write_dwi(out / "dwi.csv", stage["dwi"], meta)
        write_gradients(out / "gradients.csv", stage["scheme"].directions, meta)
        print("wrote %s and %s" % (out / "dwi.csv", out / "gradients.csv"))
    else:
        meta = _metadata(config, redraws=stage["redraws"])
        write_field(out / "noisy_field.csv", stage["field"], meta)
        print("wrote %s (redraws=%d)" % (out / "noisy_field.csv", stage["redraws"]))
    return 0


def cmd_fit(config: ExperimentConfig, args: argparse.Namespace) -> int:
    out = _outdir(config)
    gradients_path = args.gradients or out / "gradients.csv"
    dwi_path = args.dwi or out / "dwi.csv"
    directions, _ = read_gradients(gradients_path)
    dwi, _ = read_dwi(dwi_path, directions)
    fitter = DwiTensorFitter(
        method=config.fit_method,
        sigma=config.sigma if config.fit_method == "mle" else None,
        project=config.project,
    )
    fitted = fitter.fit_transform(dwi)
    fraction = fitter.result_.failure_fraction()
    meta = _metadata(
        config, method=config.fit_method, projected_voxels=fitter.projected_,
        failure_fraction=fraction,
    )
    write_field(out / "fitted_field.csv", fitted, meta)
    write_diagnostics(out / "fit_diagnostics.csv", fitter.result_, dwi.dims, meta)
    print(
        "fit %d voxels (%s): failure fraction %.6f, projected %d"
        % (fitter.result_.n_voxels, config.fit_method, fraction, fitter.projected_)
    )
    if fraction > config.failure_limit:
        print("failure fraction exceeds limit %r" % config.failure_limit)
        return 1
    return 0


def cmd_smooth(config: ExperimentConfig, args: argparse.Namespace) -> int:
    out = _outdir(config)
    input_path = args.input or out / "fitted_field.csv"
    field, _ = read_field(input_path)
    metric = config.metrics[0]
    scheme = config.schemes[0]
    if scheme == "anisotropic":
        h_iso, h_aniso = config.aniso_pairs[0]
        smoothing = SmoothingConfig(
            metric=metric, scheme=scheme, h_iso=h_iso, h_aniso=h_aniso,
            truncation=config.truncation, threads=config.threads,
            chunk_size=config.chunk_size,
        )
    else:
        smoothing = SmoothingConfig(
            metric=metric, scheme=scheme, h=config.bandwidths[0],
            truncation=config.truncation, threads=config.threads,
            chunk_size=config.chunk_size,
        )
    smoothed, report = smooth_field(field, smoothing)
    meta = _metadata(
        config, metric=metric, scheme=scheme,
        bandwidths=",".join("%r" % b for b in report.bandwidths),
        neighborhood_size=report.neighborhood_size,
        aniso_fallbacks=report.aniso_fallbacks,
    )
    write_field(out / "smoothed_field.csv", smoothed, meta)
    print(
        "smoothed with %s/%s (support %d offsets, %d fallbacks): wrote %s"
        % (metric, scheme, report.neighborhood_size, report.aniso_fallbacks,
           out / "smoothed_field.csv")
    )
    return 0


def cmd_weights(config: ExperimentConfig, args: argparse.Namespace) -> int:
    out = _outdir(config)
    entries = weight_profile_entries(config)
    write_weight_profiles(out / "weight_profiles.csv", entries, _metadata(config))
    print("h        size  n99  min          median       max          entropy")
    for h, profile in entries:
        print(
            "%-8r %-5d %-4d %-12.6g %-12.6g %-12.6g %.6g"
            % (h, profile.size, profile.n99, profile.wmin, profile.median,
               profile.wmax, profile.entropy)
        )
    return 0


def cmd_run(config: ExperimentConfig, args: argparse.Namespace) -> int:
    out = _outdir(config)
    payload, worst_failure = run_experiment(config)
    for block in payload["seeds"]:
        seed = block["seed"]
        meta = _metadata(config)
        meta["seed"] = seed
        write_report_csv(out / ("report_%d.csv" % seed), block["summaries"], meta)
        write_plot_csv(
            out / ("plotdata_%d.csv" % seed), plot_rows(block["summaries"]), meta
        )
        print(
            "seed %d: failure fraction %.6f, projected %d, redraws %d"
            % (seed, block["failure_fraction"], block["projected_voxels"],
               block["spectral_redraws"])
        )
    write_json_report(out / "summary.json", payload)
    print("wrote %s" % (out / "summary.json"))
    if worst_failure > config.failure_limit:
        print("failure fraction exceeds limit %r" % config.failure_limit)
        return 1
    return 0


def cmd_verify(config: ExperimentConfig, args: argparse.Namespace) -> int:
    out = _outdir(config)
    payload, ok = run_all_suites(config)
    write_perturbation_csv(
        out / "perturbation.csv", payload["perturbation"], _metadata(config)
    )
    report = dict(payload)
    report["config_hash"] = config.config_hash()
    report["all_passed"] = ok
    write_json_report(out / "verify.json", report)
    checks = [
        ("perturbation grid", all(
            row["pass"] for row in payload["perturbation"] if row["pass"] != ""
        )),
        ("mixed-case guard", payload["mixed_case_guard"]),
        ("fisher range", payload["fisher"]["in_unit_interval"]),
        ("fisher high-SNR limit", payload["fisher"]["high_snr_pass"]),
        ("fisher collapse", payload["fisher"]["collapse_pass"]),
        ("variance ordering", payload["variance_order"]["psd_pass"]),
        ("isotropic variance equality", payload["variance_order"]["isotropic_pass"]),
        ("regression variance", payload["regression_mc"]["var_pass"]),
        ("regression bias", payload["regression_mc"]["bias_pass"]),
        ("likelihood variance", payload["mle_mc"]["pass"]),
        ("signal bias", payload["signal_bias"]["pass"]),
    ]
    for name, passed in checks:
        print("%-30s %s" % (name, "pass" if passed else "FAIL"))
    print("wrote %s and %s" % (out / "verify.json", out / "perturbation.csv"))
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="spdsmooth",
        description="Kernel smoothing of SPD tensor fields under Euclidean, "
        "log-Euclidean, and affine-invariant geometries.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    specs = [
        ("phantom", cmd_phantom, "write the synthetic field and region masks"),
        ("noise", cmd_noise, "apply the configured noise model"),
        ("fit", cmd_fit, "estimate tensors from DWI signals"),
        ("smooth", cmd_smooth, "kernel-smooth a tensor field"),
        ("weights", cmd_weights, "tabulate kernel weight profiles"),
        ("run", cmd_run, "run the full experiment grid"),
        ("verify", cmd_verify, "check expansion and asymptotic claims"),
    ]
    for name, fn, help_text in specs:
        p = sub.add_parser(name, help=help_text)
        _add_common_flags(p)
        if name == "fit":
            p.add_argument("--dwi", metavar="FILE", help="DWI csv to fit")
            p.add_argument(
                "--gradients", metavar="FILE", help="gradient directions csv"
            )
        if name == "smooth":
            p.add_argument("--input", metavar="FILE", help="tensor field csv")
        p.set_defaults(func=fn)

    args = parser.parse_args(argv)
    try:
        config = _build_config(args)
        return args.func(config, args)
    except DomainError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
