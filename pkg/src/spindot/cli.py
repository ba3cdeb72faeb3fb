"""Command-line entry points.

Five subcommands cover the full pipeline::

    spindot simulate  -> ground-truth trajectory (CSV + JSON + figure)
    spindot sense     -> QPC count record from a trajectory
    spindot smooth    -> filtered + smoothed occupation timeline
    spindot estimate  -> parameter-estimation report (Bayes grid, rate
                         re-estimation, hybrid protocol)
    spindot histogram -> dwell-time histogram and fit from a timeline

The inference commands accept only count-record / timeline paths, never
the trajectory file.  Every command prints the seeds it used and the
digests of its inputs; rerunning with the same configuration reproduces
every output byte.  Exit codes: 0 ok, 2 usage or validation error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import estimate as est
from . import io as sio
from . import plots
from .model import ModelParams
from .sensor import LikelihoodUnderflowError, synthesize_counts
from .smoother import smooth
from .trajectory import simulate_trajectory

USAGE_ERROR = 2
NUMERICAL_ERROR = 3


def _add_params_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--omega", type=float, default=5.0,
                   help="Rabi angular frequency [rad/us] (default 5.0)")
    p.add_argument("--gamma-down", type=float, default=3.0,
                   help="charging rate [1/us] (default 3.0)")
    p.add_argument("--gamma-up", type=float, default=3.0,
                   help="discharge rate [1/us] (default 3.0)")
    p.add_argument("--r0", type=float, default=31210.0,
                   help="QPC count rate, empty dot [counts/us]")
    p.add_argument("--r1", type=float, default=24970.0,
                   help="QPC count rate, occupied dot [counts/us]")
    p.add_argument("--dt-sim", type=float, default=1e-3,
                   help="simulation step [us] (default 0.001)")
    p.add_argument("--bin-dt", type=float, default=1e-2,
                   help="measurement bin [us] (default 0.01)")


def _params_from_args(args) -> ModelParams:
    return ModelParams(omega=args.omega, gamma_down=args.gamma_down,
                       gamma_up=args.gamma_up, r0=args.r0, r1=args.r1,
                       dt_sim=args.dt_sim, bin_dt=args.bin_dt)


def _figures_enabled(args) -> bool:
    return not args.no_figures


def cmd_simulate(args) -> int:
    params = _params_from_args(args)
    seed = sio.derive_seed(args.seed, sio.SEED_STREAM_TRAJECTORY)
    print(f"root seed {args.seed} -> trajectory seed {seed}")
    traj = simulate_trajectory(params, args.duration, seed)
    json_path, csv_path = sio.write_trajectory(args.out, traj)
    print(f"wrote {json_path} and {csv_path}")
    print(f"body digest {sio.sha256_file(csv_path)}")
    if _figures_enabled(args):
        fig = plots.save_trajectory_figure(Path(args.out).with_suffix(".png"), traj)
        print(f"wrote {fig}")
    return 0


def cmd_sense(args) -> int:
    params = _params_from_args(args)
    traj = sio.read_trajectory(args.trajectory)
    src_digest = sio.sha256_file(Path(args.trajectory).with_suffix(".csv"))
    print(f"consumed trajectory digest {src_digest}")
    seed = sio.derive_seed(args.seed, sio.SEED_STREAM_SENSOR)
    print(f"root seed {args.seed} -> sensor seed {seed}")
    record = synthesize_counts(traj, params, seed)
    json_path, csv_path = sio.write_counts(args.out, record,
                                           source_digest=src_digest)
    print(f"wrote {json_path} and {csv_path}")
    print(f"body digest {sio.sha256_file(csv_path)}")
    if _figures_enabled(args):
        fig = plots.save_counts_figure(Path(args.out).with_suffix(".png"), record)
        print(f"wrote {fig}")
    return 0


def cmd_smooth(args) -> int:
    params = _params_from_args(args)
    record = sio.read_counts(args.counts)
    src_digest = sio.sha256_file(Path(args.counts).with_suffix(".csv"))
    print(f"consumed count-record digest {src_digest} (seed {record.seed})")
    timeline = smooth(record, params)
    json_path, csv_path = sio.write_timeline(args.out, timeline,
                                             threshold=args.threshold,
                                             source_digest=src_digest,
                                             params=params)
    print(f"wrote {json_path} and {csv_path}")
    print(f"body digest {sio.sha256_file(csv_path)}")
    if _figures_enabled(args):
        fig = plots.save_timeline_figure(Path(args.out).with_suffix(".png"),
                                         timeline)
        print(f"wrote {fig}")
    return 0


def cmd_estimate(args) -> int:
    params = _params_from_args(args)
    record = sio.read_counts(args.counts)
    if record.r0 == record.r1:
        raise ValueError("record carries no charge information (r0 == r1)")
    src_digest = sio.sha256_file(Path(args.counts).with_suffix(".csv"))
    print(f"consumed count-record digest {src_digest} (seed {record.seed})")
    grid = (np.array([args.grid_min]) if args.grid_size == 1
            else np.linspace(args.grid_min, args.grid_max, args.grid_size))
    guess_gd = args.guess_gamma_down if args.guess_gamma_down is not None \
        else params.gamma_down
    guess_gu = args.guess_gamma_up if args.guess_gamma_up is not None \
        else params.gamma_up
    hybrid = est.hybrid_estimate(record, grid, (guess_gd, guess_gu),
                                 n_inner=args.n_inner, n_outer=args.n_outer)
    # one more grid pass at the final rates for the likelihood-evolution data
    bayes = est.bayes_omega(record, grid, hybrid.gamma_down_hat,
                            hybrid.gamma_up_hat)
    mean, width = est.posterior_stats(bayes)
    out = Path(args.out)
    report = {
        "format": "spindot-report/1",
        "input_digest": src_digest,
        "record_seed": record.seed,
        "grid": list(map(float, grid)),
        "rate_guess": [guess_gd, guess_gu],
        "n_inner": args.n_inner,
        "n_outer": args.n_outer,
        "estimates": {
            "omega": hybrid.omega_hat,
            "gamma_down": hybrid.gamma_down_hat,
            "gamma_up": hybrid.gamma_up_hat,
        },
        "converged": hybrid.converged,
        "argmax_tie_break": "lowest candidate",
        "posterior": {
            "mean": mean,
            "width": width,
            "values": list(map(float, bayes.posterior)),
        },
        "history": [
            {k: v for k, v in h.items() if k != "rate_history"}
            | {"rate_history": [list(map(float, rr)) for rr in h["rate_history"]]}
            for h in hybrid.history
        ],
    }
    report_path = sio.write_report(out.with_suffix(".json"), report)
    print(f"wrote {report_path}")
    if not hybrid.converged:
        print("warning: hybrid protocol did not converge; "
              "reporting best-so-far estimates")
    # likelihood-evolution CSV: one row per snapshot time
    lik_csv = out.with_suffix(".likelihood.csv")
    with open(lik_csv, "w", encoding="utf-8") as fh:
        fh.write("t_us," + ",".join(f"logL_omega_{w:.6g}" for w in grid) + "\n")
        for t, row in zip(bayes.snapshot_times, bayes.snapshots):
            fh.write("%.17g," % t + ",".join("%.17g" % v for v in row) + "\n")
    print(f"wrote {lik_csv}")
    print(f"estimates: omega={hybrid.omega_hat:.6g} rad/us, "
          f"gamma_down={hybrid.gamma_down_hat:.6g} /us, "
          f"gamma_up={hybrid.gamma_up_hat:.6g} /us")
    if _figures_enabled(args):
        f1 = plots.save_likelihood_figure(out.with_suffix(".likelihood.png"),
                                          bayes)
        f2 = plots.save_rates_figure(out.with_suffix(".rates.png"),
                                     hybrid.history)
        print(f"wrote {f1}")
        print(f"wrote {f2}")
    return 0


def cmd_histogram(args) -> int:
    times, _, p_pqs = sio.read_timeline(args.timeline)
    src_digest = sio.sha256_file(Path(args.timeline).with_suffix(".csv"))
    print(f"consumed timeline digest {src_digest}")
    hist = est.extract_dwells_from_series(times, p_pqs,
                                          threshold=args.threshold)
    out = Path(args.out)
    fit = None
    fit_error = None
    try:
        fit = est.fit_dwell_histogram(hist)
    except est.FitError as exc:
        fit_error = str(exc)
        print(f"dwell fit failed: {exc}")
    header = {
        "format": "spindot-dwells/1",
        "threshold": args.threshold,
        "n_occupied": int(hist.occupied_durations.size),
        "n_empty": int(hist.empty_durations.size),
        "input_digest": src_digest,
        "fit": None if fit is None else {
            "omega": fit[0], "gamma_up": fit[1], "gamma_down": fit[2]},
        "fit_error": fit_error,
    }
    csv_path = out.with_suffix(".csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("kind,duration_us\n")
        for d in hist.occupied_durations:
            fh.write(f"occupied,%.17g\n" % d)
        for d in hist.empty_durations:
            fh.write(f"empty,%.17g\n" % d)
    header["body_digest"] = sio.sha256_file(csv_path)
    sio.write_report(out.with_suffix(".json"), header)
    print(f"wrote {out.with_suffix('.json')} and {csv_path}")
    if fit is not None:
        print(f"dwell fit: omega={fit[0]:.6g} rad/us, gamma_up={fit[1]:.6g}, "
              f"gamma_down={fit[2]:.6g} /us")
    if _figures_enabled(args):
        fig = plots.save_dwell_figure(out.with_suffix(".png"), hist, fit)
        print(f"wrote {fig}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spindot",
        description="Simulation and inference for a charge-sensed "
                    "single-electron quantum dot")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a ground-truth trajectory")
    _add_params_args(p)
    p.add_argument("--duration", type=float, required=True,
                   help="trajectory duration [us]")
    p.add_argument("--seed", type=int, required=True, help="root seed")
    p.add_argument("--out", required=True, help="output path stem")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sense", help="synthesize the QPC count record")
    _add_params_args(p)
    p.add_argument("trajectory", help="trajectory path stem")
    p.add_argument("--seed", type=int, required=True, help="root seed")
    p.add_argument("--out", required=True, help="output path stem")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_sense)

    p = sub.add_parser("smooth", help="filter + smooth a count record")
    _add_params_args(p)
    p.add_argument("counts", help="count-record path stem")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True, help="output path stem")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_smooth)

    p = sub.add_parser("estimate", help="estimate omega and the rates")
    _add_params_args(p)
    p.add_argument("counts", help="count-record path stem")
    p.add_argument("--grid-min", type=float, default=3.5)
    p.add_argument("--grid-max", type=float, default=6.5)
    p.add_argument("--grid-size", type=int, default=60)
    p.add_argument("--n-inner", type=int, default=5,
                   help="rate re-estimation sweeps per round (default 5)")
    p.add_argument("--n-outer", type=int, default=5,
                   help="outer rounds of the hybrid protocol (default 5)")
    p.add_argument("--guess-gamma-down", type=float, default=None)
    p.add_argument("--guess-gamma-up", type=float, default=None)
    p.add_argument("--out", required=True, help="output path stem")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("histogram", help="dwell histogram + fit from a timeline")
    p.add_argument("timeline", help="timeline path stem")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True, help="output path stem")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_histogram)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (LikelihoodUnderflowError, est.FitError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
