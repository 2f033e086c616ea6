"""Synthetic corpus generation: rooms, mixtures, labeled feature shards.

Every example draws its own child seed from one root seed sequence, so the
output is byte-identical across runs and independent of generation order.
Feature tensors land in fixed-size binary shards; a line-oriented manifest
carries ids, offsets, checksums, split assignment, and the ground truth
needed to rebuild targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ambiloc import dsp, tensorfile
from ambiloc.dsp import FoaSignal
from ambiloc.foa import mix_foa
from ambiloc.geometry import (
    Direction,
    SphericalGrid,
    build_grid,
    direction_from_vector,
    nearest_class,
)
from ambiloc.features import extract_features
from ambiloc.room import (
    RoomConfig,
    diffuse_babble,
    rt60_attainable,
    simulate_srir,
    speech_shaped_noise,
)

MANIFEST_HEADER = "ambiloc-dataset v1"
MANIFEST_NAME = "manifest.txt"
SPLIT_NAMES = ("train", "val", "test")
BABBLE_DIRECTIONS = 16
MIN_EXCERPT_SAMPLES = 1024 + 24 * 512  # one full 25-frame sequence


class DatasetError(RuntimeError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    """Knobs for one synthesized corpus; defaults are recorded choices."""

    seed: int
    counts: tuple[int, int, int]
    grid_resolution_deg: float = 10.0
    corpus: str = "synthetic:256"
    excerpt_seconds: float = 1.25
    dims_range: tuple[float, float] = (3.0, 10.0)
    rt60_range: tuple[float, float] = (0.2, 0.8)
    snr_range: tuple[float, float] = (0.0, 20.0)
    wall_margin: float = 0.5
    distance_range: tuple[float, float] = (1.0, 3.0)
    min_separation_deg: float = 20.0
    splits: tuple[float, float, float] = (0.8, 0.1, 0.1)
    shard_size: int = 256
    sample_rate: int = 16000

    def __post_init__(self) -> None:
        if len(self.counts) != 3 or any(c < 0 for c in self.counts):
            raise ValueError("counts must be three non-negative integers")
        if sum(self.counts) < 1:
            raise ValueError("at least one example required")
        for name, (lo, hi) in (
            ("dims_range", self.dims_range),
            ("rt60_range", self.rt60_range),
            ("snr_range", self.snr_range),
            ("distance_range", self.distance_range),
        ):
            if hi < lo:
                raise ValueError(f"{name} is reversed: {lo} > {hi}")
        if self.dims_range[0] <= 2 * self.wall_margin:
            raise ValueError("rooms too small for the wall margin")
        if len(self.splits) != 3 or any(s < 0 for s in self.splits):
            raise ValueError("splits must be three non-negative ratios")
        if abs(sum(self.splits) - 1.0) > 1e-9:
            raise ValueError(f"splits must sum to 1, got {sum(self.splits)}")
        if self.min_separation_deg < 0:
            raise ValueError("separation must be non-negative")
        if self.excerpt_samples < MIN_EXCERPT_SAMPLES:
            raise ValueError(
                f"excerpts must span at least {MIN_EXCERPT_SAMPLES} samples"
            )
        if self.shard_size < 1:
            raise ValueError("shard_size must be positive")

    @property
    def excerpt_samples(self) -> int:
        return int(round(self.excerpt_seconds * self.sample_rate))

    @property
    def example_count(self) -> int:
        return sum(self.counts)

    def grid(self) -> SphericalGrid:
        return build_grid(self.grid_resolution_deg)


class SyntheticSpeechCorpus:
    """Deterministic speech-shaped excerpts with syllable-rate envelopes."""

    def __init__(self, size: int, sample_rate: int = 16000, seed: int = 0) -> None:
        if size < 1:
            raise ValueError("corpus size must be positive")
        self.size = size
        self.sample_rate = sample_rate
        self.seed = seed

    def __len__(self) -> int:
        return self.size

    def excerpt(self, index: int, n_samples: int) -> np.ndarray:
        if not 0 <= index < self.size:
            raise IndexError(f"excerpt {index} outside corpus of {self.size}")
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=self.seed, spawn_key=(index,))
        )
        base = speech_shaped_noise(n_samples, rng, self.sample_rate)
        # 4 Hz amplitude modulation with pauses, roughly syllabic
        n_ctrl = max(2, int(round(4.0 * n_samples / self.sample_rate)) + 1)
        ctrl = rng.random(n_ctrl) ** 2
        envelope = np.interp(
            np.arange(n_samples),
            np.linspace(0, n_samples - 1, n_ctrl),
            ctrl,
        )
        excerpt = base * (0.1 + 0.9 * envelope)
        return excerpt / math.sqrt(float(np.mean(excerpt**2)))


def open_corpus(spec: str, sample_rate: int, seed: int = 0) -> SyntheticSpeechCorpus:
    """Resolve a corpus string of the form 'synthetic:<size>'."""
    kind, _, arg = spec.partition(":")
    if kind != "synthetic":
        raise DatasetError(f"unknown corpus kind {kind!r}")
    try:
        size = int(arg)
    except ValueError:
        raise DatasetError(f"bad corpus size {arg!r}") from None
    return SyntheticSpeechCorpus(size, sample_rate, seed)


@dataclass(frozen=True)
class LabeledSequence:
    """One 25-frame feature sequence with its target and provenance."""

    sequence_id: str
    features: np.ndarray
    target: np.ndarray
    truth: tuple[Direction, ...]
    split: str
    snr_db: float
    room_dims: tuple[float, float, float]
    rt60: float
    excerpt_ids: tuple[int, ...]

    @property
    def n_sources(self) -> int:
        return len(self.truth)


def split_allocation(n: int, ratios: tuple[float, float, float]) -> list[int]:
    """Largest-remainder apportionment of n items over three ratios."""
    raw = [n * r for r in ratios]
    base = [int(math.floor(v)) for v in raw]
    order = sorted(range(3), key=lambda i: (base[i] - raw[i], i))
    for i in order[: n - sum(base)]:
        base[i] += 1
    return base


def _sample_room(spec: DatasetSpec, n_sources: int, rng: np.random.Generator):
    """Room dims, rt60, mic, and separated source positions for one example."""
    lo, hi = spec.dims_range
    for _ in range(200):
        dims = tuple(float(v) for v in rng.uniform(lo, hi, 3))
        rt60 = float(rng.uniform(*spec.rt60_range))
        probe = RoomConfig(
            dims, rt60, tuple(d * 0.25 for d in dims), tuple(d * 0.75 for d in dims)
        )
        if not rt60_attainable(probe):
            continue
        margin = spec.wall_margin
        mic = np.array(
            [rng.uniform(margin, d - margin) for d in dims]
        )
        sources: list[np.ndarray] = []
        directions: list[Direction] = []
        attempts = 0
        while len(sources) < n_sources and attempts < 500:
            attempts += 1
            vec = rng.standard_normal(3)
            norm = float(np.linalg.norm(vec))
            if norm < 1e-12:
                continue
            unit = vec / norm
            distance = float(rng.uniform(*spec.distance_range))
            pos = mic + distance * unit
            if not all(margin < p < d - margin for p, d in zip(pos, dims)):
                continue
            cand = direction_from_vector(pos - mic)
            units = [d.unit_vector() for d in directions]
            if units and max(u @ cand.unit_vector() for u in units) > math.cos(
                math.radians(spec.min_separation_deg)
            ):
                continue
            sources.append(pos)
            directions.append(cand)
        if len(sources) == n_sources:
            return dims, rt60, mic, sources, directions
    raise DatasetError(
        f"could not place {n_sources} sources after bounded retries"
    )


def _render_example(
    spec: DatasetSpec,
    corpus: SyntheticSpeechCorpus,
    n_sources: int,
    child: np.random.SeedSequence,
):
    """Mixture features plus ground truth for one random example."""
    rng = np.random.default_rng(child)
    dims, rt60, mic, sources, directions = _sample_room(spec, n_sources, rng)
    excerpt_ids = tuple(
        int(i) for i in rng.choice(len(corpus), size=n_sources, replace=False)
    )
    n = spec.excerpt_samples
    wet: list[FoaSignal] = []
    for pos, excerpt_id in zip(sources, excerpt_ids):
        config = RoomConfig(dims, rt60, tuple(pos), tuple(mic))
        srir = simulate_srir(config, sample_rate=spec.sample_rate)
        dry = corpus.excerpt(excerpt_id, n)
        channels = np.stack(
            [dsp.convolve(dry, ch)[:n] for ch in srir.signal.channels]
        )
        wet.append(FoaSignal(channels, spec.sample_rate))
    mixture = mix_foa(wet)

    snr_db = float(rng.uniform(*spec.snr_range))
    babble_seed = int(rng.integers(0, 2**31))
    crop_seed = int(rng.integers(0, 2**31))
    babble = diffuse_babble(
        n / spec.sample_rate, BABBLE_DIRECTIONS, babble_seed, spec.sample_rate
    )
    noisy = dsp.mix_at_snr(mixture, babble, snr_db, crop_seed)

    feats = extract_features(noisy)
    return feats, tuple(directions), snr_db, dims, rt60, excerpt_ids


def _format_direction(d: Direction) -> str:
    return f"{d.azimuth_deg!r}:{d.elevation_deg!r}"


def _parse_directions(text: str) -> tuple[Direction, ...]:
    out = []
    for part in text.split(";"):
        az, _, el = part.partition(":")
        out.append(Direction(float(az), float(el)))
    return tuple(out)


def target_vector(truth: tuple[Direction, ...], grid: SphericalGrid) -> np.ndarray:
    y = np.zeros(grid.class_count, dtype=np.float32)
    for d in truth:
        y[nearest_class(d, grid)] = 1.0
    return y


def generate_dataset(spec: DatasetSpec, out_dir: str | Path) -> Path:
    """Synthesize, persist, and index the corpus; returns the manifest path.

    Examples run in a fixed order (all 1-source, then 2-, then 3-source);
    each consumes only its own child seed. Both sequences cut from one
    excerpt share its split so splits never leak near-duplicates.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = spec.grid()
    corpus = open_corpus(spec.corpus, spec.sample_rate, seed=spec.seed)
    max_sources = max(k + 1 for k, c in enumerate(spec.counts) if c > 0)
    if len(corpus) < 3 * max_sources:
        raise DatasetError(
            f"corpus of {len(corpus)} too small for {max_sources}-source mixes"
        )

    n_examples = spec.example_count
    root = np.random.SeedSequence(spec.seed)
    children = root.spawn(n_examples + 1)
    split_rng = np.random.default_rng(children[-1])
    labels: list[str] = []
    for name, count in zip(SPLIT_NAMES, split_allocation(n_examples, spec.splits)):
        labels.extend([name] * count)
    split_rng.shuffle(labels)

    source_counts = [
        k + 1 for k, count in enumerate(spec.counts) for _ in range(count)
    ]

    records: list[str] = []
    shard_index = -1
    shard_writer = None
    shard_path = None
    sequences = 0
    try:
        for example, (n_sources, child) in enumerate(zip(source_counts, children)):
            feats, truth, snr_db, dims, rt60, excerpt_ids = _render_example(
                spec, corpus, n_sources, child
            )
            for window, tensor in enumerate(feats):
                if sequences % spec.shard_size == 0:
                    if shard_writer is not None:
                        shard_writer.close()
                    shard_index += 1
                    shard_path = out_dir / f"features-{shard_index:03d}.ambt"
                    shard_writer = tensorfile.TensorWriter(shard_path)
                seq_id = f"ex{example:05d}-w{window}"
                offset, crc = shard_writer.add(seq_id, tensor)
                sequences += 1
                dims_text = "x".join(repr(d) for d in dims)
                doas = ";".join(_format_direction(d) for d in truth)
                excerpts = ";".join(str(i) for i in excerpt_ids)
                records.append(
                    f"{seq_id},{shard_path.name},{offset},{crc},"
                    f"{labels[example]},{n_sources},{snr_db!r},"
                    f"{dims_text},{rt60!r},{excerpts},{doas}"
                )
    finally:
        if shard_writer is not None:
            shard_writer.close()

    manifest = out_dir / MANIFEST_NAME
    head = [
        MANIFEST_HEADER,
        f"seed={spec.seed}",
        f"alpha={spec.grid_resolution_deg!r}",
        f"class_count={grid.class_count}",
        f"examples={n_examples}",
        f"sequences={sequences}",
        f"corpus={spec.corpus}",
    ]
    manifest.write_text("\n".join(head) + "\n\n" + "\n".join(records) + "\n")
    return manifest


@dataclass(frozen=True)
class DatasetIndex:
    """Parsed manifest: header fields plus per-sequence record tuples."""

    directory: Path
    alpha: float
    class_count: int
    sequences: int
    records: tuple[tuple, ...] = field(repr=False)

    def grid(self) -> SphericalGrid:
        return build_grid(self.alpha)


def read_manifest(path: str | Path) -> DatasetIndex:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    lines = path.read_text().splitlines()
    if not lines or lines[0] != MANIFEST_HEADER:
        raise DatasetError(f"unrecognized manifest header in {path}")
    fields: dict[str, str] = {}
    body_start = len(lines)
    for i, line in enumerate(lines[1:], start=1):
        if line == "":
            body_start = i + 1
            break
        key, _, value = line.partition("=")
        fields[key] = value
    records = []
    for line in lines[body_start:]:
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 11:
            raise DatasetError(f"malformed manifest line: {line!r}")
        (seq_id, file_name, offset, crc, split, n_sources, snr, dims_text,
         rt60, excerpts, doas) = parts
        records.append((
            seq_id,
            file_name,
            int(offset),
            int(crc),
            split,
            int(n_sources),
            float(snr),
            tuple(float(v) for v in dims_text.split("x")),
            float(rt60),
            tuple(int(v) for v in excerpts.split(";")) if excerpts else (),
            _parse_directions(doas),
        ))
    index = DatasetIndex(
        directory=path.parent,
        alpha=float(fields["alpha"]),
        class_count=int(fields["class_count"]),
        sequences=int(fields["sequences"]),
        records=tuple(records),
    )
    if index.sequences != len(records):
        raise DatasetError(
            f"manifest claims {index.sequences} sequences, lists {len(records)}"
        )
    return index


def load_dataset(
    path: str | Path,
    split: str | None = None,
    shuffle_seed: int | None = None,
):
    """Yield LabeledSequence items in manifest or seeded-shuffled order."""
    index = read_manifest(path)
    if split is not None and split not in SPLIT_NAMES:
        raise ValueError(f"split must be one of {SPLIT_NAMES}")
    grid = index.grid()
    records = [r for r in index.records if split is None or r[4] == split]
    order = np.arange(len(records))
    if shuffle_seed is not None:
        np.random.default_rng(shuffle_seed).shuffle(order)
    handles: dict[str, object] = {}
    try:
        for i in order:
            (seq_id, file_name, offset, crc, rec_split, n_sources, snr,
             dims, rt60, excerpt_ids, truth) = records[i]
            if file_name not in handles:
                shard = index.directory / file_name
                try:
                    handles[file_name] = open(shard, "rb")
                except OSError as exc:
                    raise DatasetError(f"record {seq_id}: {exc}") from exc
            try:
                name, tensor = tensorfile.read_tensor_at(
                    handles[file_name], offset, expected_crc=crc
                )
            except (tensorfile.TensorFileError, OSError) as exc:
                raise DatasetError(f"record {seq_id}: {exc}") from exc
            if name != seq_id:
                raise DatasetError(
                    f"record {seq_id}: shard holds {name!r} at its offset"
                )
            yield LabeledSequence(
                sequence_id=seq_id,
                features=tensor,
                target=target_vector(truth, grid),
                truth=truth,
                split=rec_split,
                snr_db=snr,
                room_dims=dims,
                rt60=rt60,
                excerpt_ids=excerpt_ids,
            )
    finally:
        for handle in handles.values():
            handle.close()


def load_arrays(
    path: str | Path, split: str | None = None
) -> tuple[np.ndarray, np.ndarray, list[tuple[Direction, ...]]]:
    """Stacked (features, targets, truths) for in-memory training."""
    feats, targets, truths = [], [], []
    for seq in load_dataset(path, split=split):
        feats.append(seq.features)
        targets.append(seq.target)
        truths.append(seq.truth)
    if not feats:
        raise DatasetError(f"no sequences in split {split!r}")
    return np.stack(feats), np.stack(targets), truths
