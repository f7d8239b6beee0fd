"""crackscat 命令行入口: python -m crackscat.main <subcommand> ..."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from typing import Any, Sequence

import numpy as np
from dotenv import load_dotenv

from crackscat import dataset, forward, inverse, nn, spectral
from crackscat.core.config import resolve_config, thread_count
from crackscat.core.errors import ConfigError, CrackscatError
from crackscat.core.logs import setup_logging
from crackscat.core.paths import default_config_path, derived_path, ensure_parent, write_sidecar
from crackscat.core.status import Status
from crackscat.families import family_names, get_family
from crackscat.models.schemas import NoiseSpec, RunConfig, TrainConfig

logger = logging.getLogger("crackscat.cli")

KNOWN_MAGICS = {dataset.MAGIC: "dataset", nn.MAGIC: "model"}


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("configuration")
    g.add_argument("--config", help="key=value config file (default: $CRACKSCAT_CONFIG or config/crackscat.conf)")
    g.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    g.add_argument("--k", type=float, help="wavenumber")
    g.add_argument("--radius", type=float, help="observation circle radius R")
    g.add_argument("--n-obs", type=int, help="observation points N_S")
    g.add_argument("--n-quad", type=int, help="coarse quadrature nodes N_GAMMA")
    g.add_argument("--n-singular", type=int, help="leading singular vectors N")
    g.add_argument("--a-max", type=float, help="offset bound a_max")
    g.add_argument("--seed", type=int, help="master seed")
    g.add_argument("--threads", type=int, help="worker threads (0 = auto)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="crackscat", description="Crack inverse scattering toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="generate a training dataset")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", parents=[common], help="train one of the three networks")
    p.add_argument("--data", required=True)
    p.add_argument("--net", choices=["N1", "N2", "N3"], required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="training log CSV (default: <out>.log.csv)")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--val-fraction", type=float, default=0.05)
    p.add_argument("--patience", type=int, default=10)

    p = sub.add_parser("eval", parents=[common], help="evaluate trained networks on random trials")
    p.add_argument("--models", required=True, help="directory holding N1.crkm, N2.crkm, N3.crkm")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--noise", type=float, default=0.0, help="noise amplitude as a fraction of the sup norm")
    p.add_argument("--out", required=True)
    p.add_argument("--n-dense", type=int, default=256)
    p.add_argument("--data-example", help="CSV of clean/noisy data for the first successful trial")

    p = sub.add_parser("verify-stability", parents=[common], help="Monte-Carlo stability and U2 checks")
    p.add_argument("--family", required=True, help=f"one of: {', '.join(family_names())}")
    p.add_argument("--N", dest="n", type=int, help="subspace size (default: n_singular)")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--out", required=True, help="report path")
    p.add_argument("--sweep-max", type=int, default=0, help="also write C(N) for N = 1..sweep-max")
    p.add_argument("--sweep-samples", type=int, default=2_000)
    p.add_argument("--u2-grid", type=int, default=5)
    p.add_argument("--u2-angles", type=int, default=8)

    p = sub.add_parser("field-grid", parents=[common], help="total field on a square grid")
    p.add_argument("--case", type=int, choices=[1, 2, 3, 4], required=True)
    p.add_argument("--eta-angle", type=float, default=0.0, help="plane-wave direction angle (case 1)")
    p.add_argument("--source", help="point source x,y (cases 2 and 3)")
    p.add_argument("--theta", type=float, default=0.0)
    p.add_argument("--a", type=float, default=0.0)
    p.add_argument("--o", type=float, default=0.0)
    p.add_argument("--l", type=float, default=2.0)
    p.add_argument("--extent", type=float, default=6.0)
    p.add_argument("--res", type=int, default=121)
    p.add_argument("--n-dense", type=int, default=256)
    p.add_argument("--out", required=True)

    p = sub.add_parser("info", parents=[common], help="dump an artifact header")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--data")
    g.add_argument("--model")
    return parser


def _resolve(args: argparse.Namespace) -> RunConfig:
    overrides = {
        "k": args.k,
        "radius": args.radius,
        "n_obs": args.n_obs,
        "n_quad": args.n_quad,
        "n_singular": args.n_singular,
        "a_max": args.a_max,
        "seed": args.seed,
        "threads": args.threads,
    }
    return resolve_config(args.config or default_config_path(), overrides)


def _header(config: RunConfig, command: str, extra: dict[str, Any] | None = None) -> list[str]:
    lines = [f"command={command}", *config.echo_lines()]
    lines += [f"{k}={v}" for k, v in (extra or {}).items()]
    return lines


def cmd_gen_data(args: argparse.Namespace, config: RunConfig) -> int:
    if args.count < 0:
        raise ConfigError("--count must be >= 0")
    stats = dataset.generate_dataset(
        config.sample_config(), args.count, args.out, threads=thread_count(config), echo=config.echo_lines()
    )
    print(f"count={stats['count']}")
    print(f"rate={stats['rate']:.1f}")
    return Status.Ok


def cmd_train(args: argparse.Namespace, config: RunConfig) -> int:
    try:
        train_config = TrainConfig(
            learning_rate=args.lr,
            batch_size=args.batch_size,
            epochs=args.epochs,
            seed=config.seed,
            validation_fraction=args.val_fraction,
            patience=args.patience,
        )
    except ValueError as e:
        raise ConfigError(f"Invalid training options: {e}") from None
    data = dataset.load_dataset(args.data)
    model, log = nn.train(args.net, data, train_config, hash_extra=config.echo_lines())
    nn.save_model(model, args.out)
    extra = {"net": args.net, "data": args.data, **train_config.model_dump()}
    write_sidecar(args.out, [*config.echo_lines(), *(f"# {k}={v}" for k, v in extra.items())])
    log_path = args.log or derived_path(args.out, "log", ".csv")
    log.write_csv(log_path, _header(config, "train", extra))
    print(f"net={args.net}")
    print(f"best_epoch={log.best_epoch}")
    print(f"val_mse={log.best_val_mse!r}")
    return Status.Ok


def cmd_eval(args: argparse.Namespace, config: RunConfig) -> int:
    if args.trials < 1:
        raise ConfigError("--trials must be >= 1")
    try:
        noise = NoiseSpec(amplitude=args.noise) if args.noise > 0 else None
    except ValueError as e:
        raise ConfigError(f"Invalid noise amplitude: {e}") from None
    models = inverse.ModelSet.load(args.models, a_max=config.a_max)
    result = inverse.evaluate(
        models,
        trials=args.trials,
        seed=config.seed,
        config=config.sample_config(),
        noise=noise,
        threads=thread_count(config),
        n_dense=args.n_dense,
    )
    header = _header(config, "eval", {"trials": args.trials, "noise": args.noise, "n_dense": args.n_dense})
    inverse.write_trials_csv(result.results, args.out, header)
    inverse.write_sorted_errors_csv(result.results, derived_path(args.out, "sorted"), header)
    if args.data_example:
        example = inverse.data_example(result, forward.ObservationSet(config.radius, config.n_obs))
        if example is None:
            logger.warning("no successful trial, data example not written")
        else:
            inverse.write_data_example_csv(example, args.data_example, header)
    for key, value in result.summary.items():
        print(f"{key}={value}")
    return Status.Ok


def cmd_verify_stability(args: argparse.Namespace, config: RunConfig) -> int:
    family = get_family(args.family, config)
    threads = thread_count(config)
    sample_matrix = family.matrix(family.sample_parameter(np.random.default_rng([config.seed, 0])))
    n = args.n or config.n_singular
    if n > min(sample_matrix.shape):
        logger.warning("N=%d exceeds the %s matrix size %s, using %d", n, family.name, sample_matrix.shape, min(sample_matrix.shape))
        n = min(sample_matrix.shape)
    if args.samples < 1:
        raise ConfigError("--samples must be >= 1")

    report = spectral.estimate_stability_constant(family, n, args.samples, config.seed, threads=threads)
    u2_min, u2_rows = spectral.u2_sweep(family, args.u2_grid, args.u2_angles, threads=threads, n=n)
    report.min_u2_margin = u2_min
    report.u2_points = len(u2_rows)
    report.u2_n = n
    report.u2_argmin = min(u2_rows, key=lambda r: r["margin"])

    header = _header(config, "verify-stability", {"family": family.name, "N": n, "samples": args.samples})
    ensure_parent(args.out)
    with open(args.out, "w", encoding="utf-8") as f:
        f.write(spectral.report_to_text(report, header))
    spectral.write_ratios_csv(report, derived_path(args.out, "ratios", ".csv"), header)
    _write_rows(derived_path(args.out, "u2", ".csv"), header, u2_rows)

    if args.sweep_max > 0:
        top = min(args.sweep_max, min(sample_matrix.shape))
        rows = spectral.stability_sweep(family, range(1, top + 1), args.sweep_samples, config.seed, threads)
        _write_rows(derived_path(args.out, "sweep", ".csv"), header, rows)

    print(f"family={family.name}")
    print(f"min_ratio={report.min_ratio!r}")
    print(f"min_u2_margin={u2_min!r}")
    return Status.Ok


def _write_rows(path: str, header: Sequence[str], rows: list[dict[str, Any]]) -> None:
    ensure_parent(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        for h in header:
            f.write(f"# {h}\n")
        if not rows:
            return
        writer = csv.DictWriter(f, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def _parse_point(text: str | None) -> tuple[float, float]:
    if not text:
        raise ConfigError("--source x,y is required for cases 2 and 3")
    try:
        x, y = (float(p) for p in str(text).split(","))
    except ValueError:
        raise ConfigError(f"Bad --source value: {text!r}") from None
    return x, y


def cmd_field_grid(args: argparse.Namespace, config: RunConfig) -> int:
    if args.case == forward.Excitation.PlaneWave:
        params = forward.ExcitationParams.plane_wave(args.eta_angle)
    elif args.case == forward.Excitation.Forcing:
        params = forward.ExcitationParams.forcing()
    else:
        params = forward.ExcitationParams.point_source(_parse_point(args.source), args.case)
    try:
        params.validate()
    except CrackscatError as e:
        raise ConfigError(str(e)) from None
    geom = forward.CrackGeometry(args.theta, args.a)
    support = forward.SupportInterval(args.o, args.l)
    grid = forward.total_field_grid(params, geom, support, args.extent, args.res, config.k, n_dense=args.n_dense)

    header = _header(
        config,
        "field-grid",
        {"case": args.case, "theta": args.theta, "a": args.a, "o": args.o, "l": args.l, "extent": args.extent, "res": args.res},
    )
    ensure_parent(args.out)
    with open(args.out, "w", newline="", encoding="utf-8") as f:
        for h in header:
            f.write(f"# {h}\n")
        writer = csv.writer(f)
        writer.writerow(["x", "y", "re_total", "im_total", "masked"])
        for i, x in enumerate(grid.xs):
            for j, y in enumerate(grid.ys):
                z = grid.total[i, j]
                writer.writerow([repr(float(x)), repr(float(y)), repr(float(z.real)), repr(float(z.imag)), int(grid.masked[i, j])])
    print(f"points={grid.total.size}")
    print(f"masked={int(grid.masked.sum())}")
    return Status.Ok


def cmd_info(args: argparse.Namespace, config: RunConfig) -> int:
    path = args.data or args.model
    if not os.path.exists(path):
        raise CrackscatError(f"File not found: {path}")
    with open(path, "rb") as f:
        magic = f.read(4)
    kind = KNOWN_MAGICS.get(magic)
    if kind is None:
        expected = ", ".join(m.decode() for m in KNOWN_MAGICS)
        raise CrackscatError(f"{path}: unrecognized magic {magic!r} (expected one of: {expected})")
    header = dataset.read_header(path) if kind == "dataset" else nn.read_model_header(path)
    print(f"type={kind}")
    for key, value in header.items():
        print(f"{key}={value}")
    return Status.Ok


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "verify-stability": cmd_verify_stability,
    "field-grid": cmd_field_grid,
    "info": cmd_info,
}


def main(argv: Sequence[str] | None = None) -> int:
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if isinstance(e.code, int) else Status.UsageError
    setup_logging(args.verbose)
    try:
        config = _resolve(args)
        logger.debug("resolved config: %s", ", ".join(config.echo_lines()))
        return COMMANDS[args.command](args, config)
    except CrackscatError as e:
        logger.error("%s", e)
        return e.status
    except OSError as e:
        logger.error("I/O error: %s", e)
        return Status.RuntimeFailure
    except Exception:
        logger.exception("Unhandled error in %s", args.command)
        return Status.RuntimeFailure


if __name__ == "__main__":
    sys.exit(main())
