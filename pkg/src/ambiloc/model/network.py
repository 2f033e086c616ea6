"""Parameter initialization and end-to-end forward/backward composition."""

from __future__ import annotations

import numpy as np

from ambiloc.model import layers
from ambiloc.model.config import ArchConfig, parameter_shapes

Params = dict[str, np.ndarray]


def initialize_parameters(
    cfg: ArchConfig, seed: int = 0, dtype: np.dtype = np.float32
) -> Params:
    """Seeded fan-in-scaled uniform weights; zero biases except forget gates.

    Layers followed by a rectifier draw from +-sqrt(6/fan_in); the recurrent
    and output layers draw from +-sqrt(6/(fan_in+fan_out)). Forget-gate
    biases start at 1 so early cell states are not immediately discarded.
    """
    rng = np.random.default_rng(seed)
    params: Params = {}
    for name, shape in parameter_shapes(cfg).items():
        if name.endswith("/b"):
            arr = np.zeros(shape, dtype=dtype)
            if "/fwd/" in name or "/bwd/" in name:
                hidden = shape[0] // 4
                arr[hidden : 2 * hidden] = 1.0
        elif "/conv" in name or name == "dense0/W":
            fan_in = int(np.prod(shape[:-1]))
            limit = np.sqrt(6.0 / fan_in)
            arr = rng.uniform(-limit, limit, shape).astype(dtype)
        else:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            arr = rng.uniform(-limit, limit, shape).astype(dtype)
        params[name] = arr
    return params


class Network:
    """The convolutional-recurrent classifier for one architecture config."""

    def __init__(
        self,
        cfg: ArchConfig,
        params: Params | None = None,
        seed: int = 0,
        dtype: np.dtype = np.float32,
    ) -> None:
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        if params is None:
            params = initialize_parameters(cfg, seed=seed, dtype=self.dtype)
        else:
            expected = parameter_shapes(cfg)
            for name, shape in expected.items():
                if name not in params:
                    raise ValueError(f"missing parameter {name}")
                if tuple(params[name].shape) != shape:
                    raise ValueError(
                        f"parameter {name} has shape {params[name].shape}, "
                        f"expected {shape}"
                    )
            params = {k: np.asarray(v, dtype=self.dtype) for k, v in params.items()}
        self.params = params

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 3:
            x = x[None]
        cfg = self.cfg
        want = (cfg.input_frames, cfg.input_bins, cfg.input_channels)
        if x.ndim != 4 or x.shape[1:] != want:
            raise ValueError(f"input shape {x.shape} does not end with {want}")
        return x

    def forward(self, x: np.ndarray, want_cache: bool = False):
        """Logits of shape (batch, frames, class_count); probabilities are
        sigmoid(logits)."""
        x = self._check_input(x)
        p = self.params
        cfg = self.cfg
        caches = []

        a = x
        for blk in range(cfg.blocks):
            for layer in range(2):
                stem = f"block{blk}/conv{layer}"
                a, conv_cache = layers.conv2d_forward(a, p[stem + "/W"], p[stem + "/b"])
                a, mask = layers.relu_forward(a)
                caches.append((stem, conv_cache, mask))
            a, pool_cache = layers.maxpool_freq_forward(a, cfg.pool_sizes[blk])
            caches.append((f"block{blk}/pool", pool_cache, None))

        bsz, frames = a.shape[0], a.shape[1]
        flat_shape = a.shape
        a = a.reshape(bsz, frames, -1)

        for r in range(cfg.recurrent_layers):
            stem = f"lstm{r}"
            hf, cache_f = layers.lstm_forward(
                a, p[stem + "/fwd/W"], p[stem + "/fwd/U"], p[stem + "/fwd/b"]
            )
            hb, cache_b = layers.lstm_forward(
                a, p[stem + "/bwd/W"], p[stem + "/bwd/U"], p[stem + "/bwd/b"],
                reverse=True,
            )
            a = np.concatenate([hf, hb], axis=2)
            caches.append((stem, cache_f, cache_b))

        a, dense0_in = layers.dense_forward(a, p["dense0/W"], p["dense0/b"])
        a, relu_mask = layers.relu_forward(a)
        caches.append(("dense0", dense0_in, relu_mask))
        logits, dense1_in = layers.dense_forward(a, p["dense1/W"], p["dense1/b"])
        caches.append(("dense1", dense1_in, None))

        if want_cache:
            return logits, (caches, flat_shape)
        return logits

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return layers.sigmoid(self.forward(x))

    def loss_and_gradients(
        self, x: np.ndarray, y: np.ndarray
    ) -> tuple[float, Params]:
        """Mean binary cross-entropy over batch, frames, and classes.

        y holds one {0,1} label vector per sequence; it supervises every
        frame of that sequence identically.
        """
        x = self._check_input(x)
        y = np.asarray(y)
        if not np.isin(y, (0, 1)).all():
            raise ValueError("targets must lie in {0, 1}")
        if y.ndim == 1:
            y = y[None]
        if y.shape != (x.shape[0], self.cfg.class_count):
            raise ValueError(
                f"target shape {y.shape} does not match "
                f"({x.shape[0]}, {self.cfg.class_count})"
            )
        targets = np.broadcast_to(
            y[:, None, :].astype(self.dtype),
            (x.shape[0], self.cfg.input_frames, self.cfg.class_count),
        )

        logits, (caches, flat_shape) = self.forward(x, want_cache=True)
        loss, grad = layers.bce_with_logits(logits, targets)

        p = self.params
        grads: Params = {}
        caches = list(caches)

        name, dense1_in, _ = caches.pop()
        grad, grads["dense1/W"], grads["dense1/b"] = layers.dense_backward(
            grad, p["dense1/W"], dense1_in
        )
        name, dense0_in, relu_mask = caches.pop()
        grad = layers.relu_backward(grad, relu_mask)
        grad, grads["dense0/W"], grads["dense0/b"] = layers.dense_backward(
            grad, p["dense0/W"], dense0_in
        )

        for r in range(self.cfg.recurrent_layers - 1, -1, -1):
            stem, cache_f, cache_b = caches.pop()
            hidden = self.cfg.recurrent_hidden
            dxf, dwf, duf, dbf = layers.lstm_backward(
                grad[:, :, :hidden], p[stem + "/fwd/W"], p[stem + "/fwd/U"], cache_f
            )
            dxb, dwb, dub, dbb = layers.lstm_backward(
                grad[:, :, hidden:], p[stem + "/bwd/W"], p[stem + "/bwd/U"], cache_b
            )
            grads[stem + "/fwd/W"] = dwf
            grads[stem + "/fwd/U"] = duf
            grads[stem + "/fwd/b"] = dbf
            grads[stem + "/bwd/W"] = dwb
            grads[stem + "/bwd/U"] = dub
            grads[stem + "/bwd/b"] = dbb
            grad = dxf + dxb

        grad = grad.reshape(flat_shape)
        for blk in range(self.cfg.blocks - 1, -1, -1):
            stem, pool_cache, _ = caches.pop()
            grad = layers.maxpool_freq_backward(grad, pool_cache)
            for layer in (1, 0):
                stem, conv_cache, mask = caches.pop()
                grad = layers.relu_backward(grad, mask)
                grad, grads[stem + "/W"], grads[stem + "/b"] = layers.conv2d_backward(
                    grad, p[stem + "/W"], conv_cache
                )

        return loss, grads
