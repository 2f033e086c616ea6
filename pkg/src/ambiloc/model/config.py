"""Network architecture configurations: shapes, pooling plans, parameter counts.

The family is a stack of B convolutional blocks (two same-padded 3x3 conv
layers then a 1xP max-pool over frequency only), a flatten of frequency x
filters per frame, two bidirectional LSTM layers, and two dense layers with
a logistic output. Named configurations "B-qB" differ only in B and the
per-block pool sizes; qB is the frequency size surviving all pools.
"""

from __future__ import annotations

from dataclasses import dataclass, field

INPUT_FRAMES = 25
INPUT_BINS = 513
INPUT_CHANNELS = 6

# pool rows for the nine named configurations
_NAMED_POOLS: dict[str, tuple[int, ...]] = {
    "4-2": (8, 4, 4, 2),
    "4-4": (4, 4, 4, 2),
    "4-8": (4, 4, 2, 2),
    "5-2": (4, 4, 4, 2, 2),
    "5-4": (4, 4, 2, 2, 2),
    "6-2": (4, 4, 2, 2, 2, 2),
    "6-4": (4, 2, 2, 2, 2, 2),
    "7-2": (4, 2, 2, 2, 2, 2, 2),
    "7-4": (2, 2, 2, 2, 2, 2, 2),
}

# published totals the implementation is measured against (2% tolerance)
REFERENCE_PARAMETER_COUNTS: dict[str, int] = {
    "4-2": 700_259,
    "4-4": 765_795,
    "4-8": 896_867,
    "5-2": 774_315,
    "5-4": 839_851,
    "6-2": 848_371,
    "6-4": 913_907,
    "7-2": 922_427,
    "7-4": 987_963,
}

REDUCED_POOLS = (16, 4)
REDUCED_FILTERS = 16
REDUCED_HIDDEN = 16


@dataclass(frozen=True)
class ArchConfig:
    name: str
    blocks: int
    pool_sizes: tuple[int, ...]
    class_count: int
    conv_filters: int = 64
    kernel: int = 3
    recurrent_layers: int = 2
    recurrent_hidden: int = 64
    dense_layers: int = 2
    input_frames: int = INPUT_FRAMES
    input_bins: int = INPUT_BINS
    input_channels: int = INPUT_CHANNELS

    def __post_init__(self) -> None:
        if self.blocks != len(self.pool_sizes):
            raise ValueError(
                f"{self.blocks} blocks but {len(self.pool_sizes)} pool sizes"
            )
        if self.class_count < 1:
            raise ValueError("class_count must be at least 1")
        if any(p < 1 for p in self.pool_sizes):
            raise ValueError("pool sizes must be positive")
        if min(self.frequency_trace()) < 1:
            raise ValueError(
                f"pools {self.pool_sizes} reduce {self.input_bins} bins below 1"
            )

    def frequency_trace(self) -> list[int]:
        """Frequency sizes [input, after block 1, ..., after block B]."""
        trace = [self.input_bins]
        for p in self.pool_sizes:
            trace.append(trace[-1] // p)
        return trace

    @property
    def q_final(self) -> int:
        return self.frequency_trace()[-1]

    @property
    def recurrent_input(self) -> int:
        return self.q_final * self.conv_filters


def config_by_name(name: str, class_count: int) -> ArchConfig:
    """One of the nine published configurations, or the desk-scale 'reduced'."""
    if name == "reduced":
        return ArchConfig(
            name="reduced",
            blocks=len(REDUCED_POOLS),
            pool_sizes=REDUCED_POOLS,
            class_count=class_count,
            conv_filters=REDUCED_FILTERS,
            recurrent_hidden=REDUCED_HIDDEN,
        )
    if name not in _NAMED_POOLS:
        raise ValueError(f"unknown configuration {name!r}; "
                         f"expected one of {sorted(_NAMED_POOLS)} or 'reduced'")
    pools = _NAMED_POOLS[name]
    return ArchConfig(name=name, blocks=len(pools), pool_sizes=pools, class_count=class_count)


def named_configs(class_count: int = 425) -> dict[str, ArchConfig]:
    return {name: config_by_name(name, class_count) for name in _NAMED_POOLS}


def shape_propagate(cfg: ArchConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Per-layer output shapes for one input sequence.

    Convolutions preserve both spatial dimensions (same padding); pooling
    floor-divides frequency only; the time axis stays at input_frames
    throughout; recurrent and dense layers are time-distributed.
    """
    t, f = cfg.input_frames, cfg.input_bins
    shapes: list[tuple[str, tuple[int, ...]]] = [("input", (t, f, cfg.input_channels))]
    for b, pool in enumerate(cfg.pool_sizes):
        shapes.append((f"block{b}/conv0", (t, f, cfg.conv_filters)))
        shapes.append((f"block{b}/conv1", (t, f, cfg.conv_filters)))
        f //= pool
        if f < 1:
            raise ValueError(f"pool {pool} of block {b} empties the frequency axis")
        shapes.append((f"block{b}/pool", (t, f, cfg.conv_filters)))
    shapes.append(("flatten", (t, f * cfg.conv_filters)))
    width = 2 * cfg.recurrent_hidden
    for r in range(cfg.recurrent_layers):
        shapes.append((f"lstm{r}", (t, width)))
    for d in range(cfg.dense_layers):
        shapes.append((f"dense{d}", (t, cfg.class_count)))
    return shapes


def parameter_shapes(cfg: ArchConfig) -> dict[str, tuple[int, ...]]:
    """Name -> shape for every trainable tensor, in creation order."""
    shapes: dict[str, tuple[int, ...]] = {}
    in_ch = cfg.input_channels
    for b in range(cfg.blocks):
        for layer in range(2):
            shapes[f"block{b}/conv{layer}/W"] = (
                cfg.kernel, cfg.kernel, in_ch, cfg.conv_filters,
            )
            shapes[f"block{b}/conv{layer}/b"] = (cfg.conv_filters,)
            in_ch = cfg.conv_filters
    width = cfg.recurrent_input
    h = cfg.recurrent_hidden
    for r in range(cfg.recurrent_layers):
        for direction in ("fwd", "bwd"):
            shapes[f"lstm{r}/{direction}/W"] = (width, 4 * h)
            shapes[f"lstm{r}/{direction}/U"] = (h, 4 * h)
            shapes[f"lstm{r}/{direction}/b"] = (4 * h,)
        width = 2 * h
    c = cfg.class_count
    shapes["dense0/W"] = (width, c)
    shapes["dense0/b"] = (c,)
    shapes["dense1/W"] = (c, c)
    shapes["dense1/b"] = (c,)
    return shapes


def count_parameters(cfg: ArchConfig) -> int:
    total = 0
    for shape in parameter_shapes(cfg).values():
        n = 1
        for s in shape:
            n *= s
        total += n
    return total
