"""Command-line front-end wiring the modules into reproducible batch runs.

Configuration is INI-style with one section per concern; every run's
randomness flows from the configured seed (or --seed), never wall-clock
state, so identical invocations rebuild identical artifacts. Exit codes:
0 success, 2 usage, 3 invalid configuration, 4 missing input, 5 runtime
failure.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from pathlib import Path

import numpy as np

from ambiloc import decode, dsp, foa, metrics, room, tensorfile
from ambiloc.dataset import (
    DatasetError,
    DatasetSpec,
    generate_dataset,
    load_arrays,
    read_manifest,
)
from ambiloc.features import extract_features
from ambiloc.geometry import build_grid, nearest_class
from ambiloc.model import (
    REFERENCE_PARAMETER_COUNTS,
    config_by_name,
    count_parameters,
)
from ambiloc.model.training import (
    TrainSchedule,
    TrainingDiverged,
    history_to_csv,
    load_checkpoint,
    save_checkpoint,
    train,
)

log = logging.getLogger("ambiloc")

EXIT_OK = 0
EXIT_CONFIG = 3
EXIT_MISSING = 4
EXIT_RUNTIME = 5


class ConfigError(ValueError):
    pass


class MissingInputError(FileNotFoundError):
    pass


def _load_config(path: str | None) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    if path is None:
        return parser
    file = Path(path)
    if not file.is_file():
        raise MissingInputError(f"config file not found: {file}")
    try:
        parser.read_string(file.read_text(), source=str(file))
    except configparser.Error as exc:
        raise ConfigError(f"unparseable config {file}: {exc}") from exc
    return parser


def _get(cfg, section: str, key: str, fallback: str | None = None) -> str:
    value = cfg.get(section, key, fallback=fallback)
    if value is None:
        raise ConfigError(f"missing [{section}] {key}")
    return value


def _floats(cfg, section: str, key: str, count: int, fallback: str | None = None):
    text = _get(cfg, section, key, fallback)
    parts = text.split()
    if len(parts) != count:
        raise ConfigError(f"[{section}] {key} needs {count} numbers, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"[{section}] {key} is not numeric: {text!r}") from None


def _resolve_seed(args, cfg) -> int:
    if args.seed is not None:
        return args.seed
    return int(cfg.get("experiment", "seed", fallback="0"))


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _model_name(args, cfg) -> str:
    if args.profile == "reduced":
        return "reduced"
    name = cfg.get("model", "name", fallback="reduced")
    if name != "reduced" and name not in REFERENCE_PARAMETER_COUNTS:
        raise ConfigError(f"unknown model name {name!r}")
    return name


def cmd_simulate_srir(args, cfg) -> int:
    if not cfg.has_section("room"):
        raise ConfigError("simulate-srir needs a [room] section")
    config = room.RoomConfig(
        dimensions=_floats(cfg, "room", "dimensions", 3),
        rt60=float(_get(cfg, "room", "rt60")),
        source_position=_floats(cfg, "room", "source", 3),
        mic_position=_floats(cfg, "room", "mic", 3),
    )
    srir = room.simulate_srir(config)
    out = _out_dir(args) / "srir.wav"
    room.write_srir(out, srir)
    log.info("wrote %s", out)
    log.info(
        "direct path: %.2f samples, azimuth %.2f, elevation %.2f",
        srir.delay_samples,
        srir.direction.azimuth_deg,
        srir.direction.elevation_deg,
    )
    return EXIT_OK


def _dataset_spec(args, cfg) -> DatasetSpec:
    if not cfg.has_section("dataset"):
        raise ConfigError("synth-dataset needs a [dataset] section")
    counts = tuple(int(v) for v in _floats(cfg, "dataset", "counts", 3))
    kwargs = dict(
        seed=_resolve_seed(args, cfg),
        counts=counts,
        grid_resolution_deg=float(cfg.get("dataset", "alpha", fallback="10")),
        corpus=cfg.get("dataset", "corpus", fallback="synthetic:256"),
    )
    for key, field in (
        ("dims", "dims_range"),
        ("rt60", "rt60_range"),
        ("snr", "snr_range"),
        ("distance", "distance_range"),
    ):
        if cfg.has_option("dataset", key):
            kwargs[field] = _floats(cfg, "dataset", key, 2)
    if cfg.has_option("dataset", "splits"):
        kwargs["splits"] = _floats(cfg, "dataset", "splits", 3)
    if cfg.has_option("dataset", "excerpt_seconds"):
        kwargs["excerpt_seconds"] = float(_get(cfg, "dataset", "excerpt_seconds"))
    try:
        return DatasetSpec(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"invalid dataset spec: {exc}") from exc


def cmd_synth_dataset(args, cfg) -> int:
    spec = _dataset_spec(args, cfg)
    manifest = generate_dataset(spec, _out_dir(args))
    index = read_manifest(manifest)
    log.info("wrote %s (%d sequences)", manifest, index.sequences)
    return EXIT_OK


def cmd_extract_features(args, cfg) -> int:
    source = _get(cfg, "features", "input", None) if cfg.has_section("features") else None
    if source is None:
        raise ConfigError("extract-features needs [features] input = <wav>")
    wav = Path(source)
    if not wav.is_file():
        raise MissingInputError(f"input wave not found: {wav}")
    signal = foa.read_foa_wav(wav)
    feats = extract_features(signal)
    out = _out_dir(args) / "features.ambt"
    tensorfile.write_tensors(
        out, {f"seq-{i:05d}": feats[i] for i in range(len(feats))}
    )
    log.info("wrote %s: %d sequences of shape %s", out, len(feats), feats.shape[1:])
    return EXIT_OK


def _schedule(cfg) -> TrainSchedule:
    kwargs = {}
    for key, cast in (
        ("learning_rate", float),
        ("max_epochs", int),
        ("batch_size", int),
        ("halve_patience", int),
        ("stop_patience", int),
    ):
        if cfg.has_option("train", key):
            kwargs[key] = cast(_get(cfg, "train", key))
    try:
        return TrainSchedule(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"invalid schedule: {exc}") from exc


def cmd_train(args, cfg) -> int:
    dataset_dir = _get(cfg, "train", "dataset") if cfg.has_section("train") else None
    if dataset_dir is None:
        raise ConfigError("train needs [train] dataset = <dir>")
    if not Path(dataset_dir).exists():
        raise MissingInputError(f"dataset not found: {dataset_dir}")
    index = read_manifest(dataset_dir)
    name = _model_name(args, cfg)
    model_cfg = config_by_name(name, index.class_count)
    schedule = _schedule(cfg)
    seed = _resolve_seed(args, cfg)

    train_x, train_y, _ = load_arrays(dataset_dir, split="train")
    val_x, val_y, _ = load_arrays(dataset_dir, split="val")
    log.info(
        "training %s on %d sequences (%d validation), seed %d",
        name, len(train_x), len(val_x), seed,
    )
    result = train(
        model_cfg,
        (train_x, train_y),
        (val_x, val_y),
        schedule,
        seed=seed,
        callback=lambda r: log.info(
            "epoch %d: loss %.4f, val accuracy %.4f, lr %g",
            r.epoch, r.train_loss, r.val_accuracy, r.learning_rate,
        ),
    )
    out = _out_dir(args)
    checkpoint = out / "checkpoint.ambt"
    save_checkpoint(
        checkpoint, model_cfg, result.params, result.best_epoch, result.best_accuracy
    )
    (out / "history.csv").write_text(history_to_csv(result.history))
    log.info(
        "best validation accuracy %.4f at epoch %d; wrote %s",
        result.best_accuracy, result.best_epoch, checkpoint,
    )
    return EXIT_OK


def cmd_evaluate(args, cfg) -> int:
    if not cfg.has_section("evaluate"):
        raise ConfigError("evaluate needs an [evaluate] section")
    dataset_dir = _get(cfg, "evaluate", "dataset")
    checkpoint_path = _get(cfg, "evaluate", "checkpoint")
    split = cfg.get("evaluate", "split", fallback="test")
    mode = cfg.get("evaluate", "mode", fallback="known-count")
    if mode not in ("known-count", "threshold"):
        raise ConfigError(f"unknown decode mode {mode!r}")
    threshold = float(cfg.get("evaluate", "threshold", fallback="0.2"))
    for path in (dataset_dir, checkpoint_path):
        if not Path(path).exists():
            raise MissingInputError(f"input not found: {path}")

    network, meta = load_checkpoint(checkpoint_path)
    index = read_manifest(dataset_dir)
    if network.cfg.class_count != index.class_count:
        raise ConfigError(
            f"checkpoint has {network.cfg.class_count} classes, "
            f"dataset {index.class_count}"
        )
    grid = index.grid()
    x, y, truths = load_arrays(dataset_dir, split=split)

    records = []
    estimate_rows = []
    for start in range(0, len(x), 32):
        probs_batch = network.predict_proba(x[start : start + 32])
        for k, frame_probs in enumerate(probs_batch):
            i = start + k
            truth = list(truths[i])
            probs = decode.average_frames(frame_probs, grid)
            if mode == "known-count":
                picked = decode.peak_pick(probs, source_count=len(truth))
            else:
                picked = decode.peak_pick(probs, threshold=threshold)
            peaks = picked.peaks[:3]
            estimates = [grid.points[c] for c, _ in peaks]
            records.append(metrics.EvalRecord.evaluate(f"t{i:05d}", truth, estimates))
            estimate_rows.append(
                (f"t{i:05d}", [(grid.points[c], s) for c, s in peaks])
            )

    out = _out_dir(args)
    by_count: dict[int, list[metrics.EvalRecord]] = {}
    for rec in records:
        by_count.setdefault(len(rec.truth), []).append(rec)
    rows = [
        (meta.get("config", "model"), n, metrics.summarize(by_count[n]))
        for n in sorted(by_count)
    ]
    (out / "report.csv").write_text(metrics.report_csv(rows))
    (out / "estimates.csv").write_text(decode.estimates_to_csv(estimate_rows))
    for name, n, summary in rows:
        log.info(
            "%s n=%d: acc<10 %.1f%%, acc<15 %.1f%%, mean %.2f, median %.2f",
            name, n,
            100 * summary.accuracy[10.0], 100 * summary.accuracy[15.0],
            summary.mean_error, summary.median_error,
        )
    return EXIT_OK


def cmd_localize(args, cfg) -> int:
    if not cfg.has_section("localize"):
        raise ConfigError("localize needs a [localize] section")
    source = Path(_get(cfg, "localize", "input"))
    if not source.is_file():
        raise MissingInputError(f"input wave not found: {source}")
    alpha = float(cfg.get("localize", "alpha", fallback="10"))
    grid = build_grid(alpha)
    checkpoint_path = cfg.get("localize", "checkpoint", fallback=None)
    sources_opt = cfg.get("localize", "sources", fallback=None)
    threshold_opt = cfg.get("localize", "threshold", fallback=None)
    if (sources_opt is None) == (threshold_opt is None):
        raise ConfigError("[localize] needs exactly one of sources or threshold")
    source_count = int(sources_opt) if sources_opt is not None else None
    threshold = float(threshold_opt) if threshold_opt is not None else None

    signal = foa.read_foa_wav(source)
    rows = []
    if checkpoint_path is not None:
        network, _ = load_checkpoint(checkpoint_path)
        if network.cfg.class_count != grid.class_count:
            raise ConfigError("checkpoint classes do not match the grid")
        feats = extract_features(signal)
        for i in range(len(feats)):
            probs = decode.average_frames(
                network.predict_proba(feats[i])[0], grid
            )
            picked = decode.peak_pick(
                probs, source_count=source_count, threshold=threshold
            )
            rows.append(
                (f"seq-{i:05d}", [(grid.points[c], s) for c, s in picked.peaks])
            )
    else:
        spec = dsp.stft(signal)
        for i, window in enumerate(dsp.frame_sequences(spec)):
            probs = decode.intensity_histogram(window, grid)
            if probs is None:
                rows.append((f"seq-{i:05d}", []))
                continue
            estimates = decode.histogram_localizer(
                window, grid, source_count=source_count, threshold=threshold
            )
            rows.append(
                (
                    f"seq-{i:05d}",
                    [
                        (d, float(probs.values[nearest_class(d, grid)]))
                        for d in estimates
                    ],
                )
            )

    text = decode.estimates_to_csv(rows)
    sys.stdout.write(text)
    if args.out:
        target = _out_dir(args) / "estimates.csv"
        target.write_text(text)
        log.info("wrote %s", target)
    return EXIT_OK


def cmd_count_params(args, cfg) -> int:
    name = args.name or _model_name(args, cfg)
    classes = args.classes
    model_cfg = config_by_name(name, classes)
    counted = count_parameters(model_cfg)
    if name in REFERENCE_PARAMETER_COUNTS and classes == 425:
        reference = REFERENCE_PARAMETER_COUNTS[name]
        deviation = 100.0 * (counted - reference) / reference
        print(f"{name}: {counted:,} parameters "
              f"(reference {reference:,}, deviation {deviation:+.2f}%)")
    else:
        print(f"{name}: {counted:,} parameters")
    return EXIT_OK


def cmd_selftest(args, cfg) -> int:
    checks: list[tuple[str, bool]] = []

    grid = build_grid(10.0)
    checks.append(("grid alpha=10 has 425 classes", grid.class_count == 425))

    d = foa.Direction(37.0, -12.0)
    gains = foa.encode_direction(d)
    norm = gains.x**2 + gains.y**2 + gains.z**2
    checks.append(("directional gain norm is 3", abs(norm - 3.0) < 1e-9))

    window = dsp.DEFAULT_STFT.window()
    hop = dsp.DEFAULT_STFT.hop
    overlap = window[:hop] ** 2 + window[hop:] ** 2
    checks.append(
        ("analysis window is power-complementary",
         bool(np.allclose(overlap, 1.0, atol=1e-12)))
    )

    values = np.zeros(grid.class_count)
    values[17] = 0.9
    picked = decode.peak_pick(
        decode.ClassProbabilities(values, grid), source_count=1
    )
    checks.append(("peak picking finds a lone spike", picked.classes == (17,)))

    counted = count_parameters(config_by_name("4-2", 425))
    reference = REFERENCE_PARAMETER_COUNTS["4-2"]
    checks.append(
        ("4-2 parameter count within 2% of reference",
         abs(counted - reference) / reference < 0.02)
    )

    failed = [name for name, ok in checks if not ok]
    for name, ok in checks:
        log.info("%s: %s", "ok" if ok else "FAIL", name)
    if failed:
        log.error("%d selftest checks failed", len(failed))
        return EXIT_RUNTIME
    return EXIT_OK


COMMANDS = {
    "simulate-srir": cmd_simulate_srir,
    "synth-dataset": cmd_synth_dataset,
    "extract-features": cmd_extract_features,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "localize": cmd_localize,
    "count-params": cmd_count_params,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ambiloc",
        description="Sound-source localization experiments on synthetic rooms.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI experiment configuration")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallelism cap (this build runs serially)")
        p.add_argument("--profile", choices=("full", "reduced"), default="full")
        if name == "count-params":
            p.add_argument("--name", help="architecture name, e.g. 4-2")
            p.add_argument("--classes", type=int, default=425)
    return parser


def main(argv: list[str] | None = None) -> int:
    # force rebinds the handler to the current stderr; callers such as the
    # test suite invoke main() repeatedly with swapped streams
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s: %(message)s",
        stream=sys.stderr, force=True,
    )
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_CONFIG
    except MissingInputError as exc:
        log.error("%s", exc)
        return EXIT_MISSING
    except (DatasetError, TrainingDiverged, tensorfile.TensorFileError,
            ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
