"""Encoder/decoder clutter-removal network with residual dense skip blocks.

The model owns a flat name -> array parameter dict plus per-layer batch-norm
running statistics, and implements the full forward and backward passes by
composing the primitives in ops.py. Architecture: four encoder stages (two
3x3 conv+BN+ReLU then 2x2 max-pool), a two-conv bottleneck, a residual dense
block on each skip path, four decoder stages (bilinear x2 upsample, concat
with the RDB output, two 3x3 conv+BN+ReLU), and a head of two 3x3
conv+BN+ReLU plus a 1x1 projection to one channel. Channel widths double per
stage from base_width.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..radargram import Radargram, normalize_unit
from .ops import (
    BatchNormState,
    batch_norm,
    batch_norm_backward,
    conv2d,
    conv2d_backward,
    maxpool2,
    maxpool2_backward,
    relu,
    relu_backward,
    upsample_bilinear2,
    upsample_bilinear2_backward,
)

CHECKPOINT_MAGIC = "CRN1"
DEPTH = 4
RDB_LAYERS = 3
INIT_MODES = ("scaled", "paper-gaussian")


@dataclass(frozen=True)
class CRNetConfig:
    base_width: int = 64
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    init: str = "scaled"

    def __post_init__(self):
        if self.base_width < 3:
            raise ValueError("base_width must be >= 3 so the RDB growth rate is >= 1")
        if self.init not in INIT_MODES:
            raise ValueError(f"init must be one of {INIT_MODES}")

    def encoder_widths(self) -> list[int]:
        return [self.base_width * 2**i for i in range(DEPTH)]

    def bottleneck_width(self) -> int:
        return self.base_width * 2**DEPTH


def _concat(parts: list[np.ndarray]) -> np.ndarray:
    return np.concatenate(parts, axis=1)


def _split(grad: np.ndarray, widths: list[int]) -> list[np.ndarray]:
    return list(np.split(grad, np.cumsum(widths)[:-1], axis=1))


class CRNetModel:
    """Parameter container plus explicit forward/backward passes."""

    def __init__(self, config: CRNetConfig | None = None, seed: int = 0, dtype=np.float32):
        self.config = config or CRNetConfig()
        self.dtype = np.dtype(dtype)
        self.params: dict[str, np.ndarray] = {}
        self.bn_states: dict[str, BatchNormState] = {}
        self._build(np.random.default_rng(seed))

    # -- construction -------------------------------------------------------

    def _add_conv(self, name: str, c_in: int, c_out: int, k: int, rng) -> None:
        if self.config.init == "paper-gaussian":
            w = rng.standard_normal((c_out, c_in, k, k))
        else:
            w = rng.standard_normal((c_out, c_in, k, k)) / np.sqrt(c_in * k * k)
        self.params[f"{name}.w"] = w.astype(self.dtype)
        self.params[f"{name}.b"] = np.zeros(c_out, dtype=self.dtype)

    def _add_conv_bn(self, name: str, c_in: int, c_out: int, rng) -> None:
        self._add_conv(name, c_in, c_out, 3, rng)
        self.params[f"{name}.gamma"] = np.ones(c_out, dtype=self.dtype)
        self.params[f"{name}.beta"] = np.zeros(c_out, dtype=self.dtype)
        self.bn_states[name] = BatchNormState(c_out, dtype=self.dtype)

    def _build(self, rng) -> None:
        widths = self.config.encoder_widths()
        c_in = 1
        for i, c_out in enumerate(widths, start=1):
            self._add_conv_bn(f"enc{i}.c1", c_in, c_out, rng)
            self._add_conv_bn(f"enc{i}.c2", c_out, c_out, rng)
            c_in = c_out
        bott = self.config.bottleneck_width()
        self._add_conv_bn("bot.c1", widths[-1], bott, rng)
        self._add_conv_bn("bot.c2", bott, bott, rng)
        for i, c in enumerate(widths, start=1):
            g = c // RDB_LAYERS
            for l in range(1, RDB_LAYERS + 1):
                self._add_conv(f"rdb{i}.d{l}", c + (l - 1) * g, g, 3, rng)
            self._add_conv(f"rdb{i}.fuse", c + RDB_LAYERS * g, c, 1, rng)
        up_c = bott
        for i in range(DEPTH, 0, -1):
            skip_c = widths[i - 1]
            self._add_conv_bn(f"dec{i}.c1", skip_c + up_c, skip_c, rng)
            self._add_conv_bn(f"dec{i}.c2", skip_c, skip_c, rng)
            up_c = skip_c
        b = self.config.base_width
        self._add_conv_bn("head.c1", b, b, rng)
        self._add_conv_bn("head.c2", b, b, rng)
        self._add_conv("head.out", b, 1, 1, rng)

    # -- dtype handling -----------------------------------------------------

    def astype(self, dtype) -> "CRNetModel":
        """Copy of the model with all parameters and stats cast to dtype."""
        clone = CRNetModel.__new__(CRNetModel)
        clone.config = self.config
        clone.dtype = np.dtype(dtype)
        clone.params = {k: v.astype(dtype) for k, v in self.params.items()}
        clone.bn_states = {}
        for name, st in self.bn_states.items():
            new = BatchNormState(len(st.running_mean), dtype=dtype)
            new.running_mean = st.running_mean.astype(dtype)
            new.running_var = st.running_var.astype(dtype)
            new.initialized = st.initialized
            clone.bn_states[name] = new
        return clone

    def zero_like_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    # -- layer helpers ------------------------------------------------------

    def _cbr_forward(self, x, name, train):
        y, c_conv = conv2d(x, self.params[f"{name}.w"], self.params[f"{name}.b"])
        y, c_bn = batch_norm(
            y,
            self.params[f"{name}.gamma"],
            self.params[f"{name}.beta"],
            self.bn_states[name],
            train=train,
            momentum=self.config.bn_momentum,
            eps=self.config.bn_eps,
        )
        y, mask = relu(y)
        return y, (name, c_conv, c_bn, mask)

    def _cbr_backward(self, dy, cache, grads):
        name, c_conv, c_bn, mask = cache
        dy = relu_backward(dy, mask)
        dy, dgamma, dbeta = batch_norm_backward(dy, c_bn)
        grads[f"{name}.gamma"] += dgamma
        grads[f"{name}.beta"] += dbeta
        dx, dw, db = conv2d_backward(dy, c_conv)
        grads[f"{name}.w"] += dw
        grads[f"{name}.b"] += db
        return dx

    def _rdb_forward(self, f0, index):
        feats = [f0]
        layer_caches = []
        for l in range(1, RDB_LAYERS + 1):
            xin = _concat(feats)
            y, c_conv = conv2d(
                xin, self.params[f"rdb{index}.d{l}.w"], self.params[f"rdb{index}.d{l}.b"]
            )
            y, mask = relu(y)
            layer_caches.append((c_conv, mask, [f.shape[1] for f in feats]))
            feats.append(y)
        fused_in = _concat(feats)
        f_lf, c_fuse = conv2d(
            fused_in, self.params[f"rdb{index}.fuse.w"], self.params[f"rdb{index}.fuse.b"]
        )
        out = f0 + f_lf
        widths = [f.shape[1] for f in feats]
        return out, (index, layer_caches, c_fuse, widths)

    def _rdb_backward(self, dy, cache, grads):
        index, layer_caches, c_fuse, widths = cache
        dfused_in, dw, db = conv2d_backward(dy, c_fuse)
        grads[f"rdb{index}.fuse.w"] += dw
        grads[f"rdb{index}.fuse.b"] += db
        dfeats = _split(dfused_in, widths)
        dfeats[0] = dfeats[0] + dy  # residual branch
        for l in range(RDB_LAYERS, 0, -1):
            c_conv, mask, in_widths = layer_caches[l - 1]
            dyl = relu_backward(dfeats[l], mask)
            dxin, dw, db = conv2d_backward(dyl, c_conv)
            grads[f"rdb{index}.d{l}.w"] += dw
            grads[f"rdb{index}.d{l}.b"] += db
            for j, part in enumerate(_split(dxin, in_widths)):
                dfeats[j] = dfeats[j] + part
        return dfeats[0]

    # -- full network -------------------------------------------------------

    def forward(self, x: np.ndarray, train: bool = False, want_cache: bool = False):
        """Run the network on (N, 1, H, W); H and W must be divisible by 16."""
        if x.ndim != 4 or x.shape[1] != 1:
            raise ValueError(f"expected (N, 1, H, W) input, got {x.shape}")
        n, _, h, w = x.shape
        if h % 2**DEPTH or w % 2**DEPTH:
            raise ValueError(
                f"spatial dims must be divisible by {2 ** DEPTH}, got {h}x{w}; "
                "resize or pad the input"
            )
        x = x.astype(self.dtype, copy=False)
        caches = {"enc": [], "rdb": [], "pool": [], "dec": [], "up": []}
        skips = []
        hcur = x
        for i in range(1, DEPTH + 1):
            hcur, c1 = self._cbr_forward(hcur, f"enc{i}.c1", train)
            hcur, c2 = self._cbr_forward(hcur, f"enc{i}.c2", train)
            caches["enc"].append((c1, c2))
            rdb_out, c_rdb = self._rdb_forward(hcur, i)
            caches["rdb"].append(c_rdb)
            skips.append(rdb_out)
            hcur, c_pool = maxpool2(hcur)
            caches["pool"].append(c_pool)
        hcur, cb1 = self._cbr_forward(hcur, "bot.c1", train)
        hcur, cb2 = self._cbr_forward(hcur, "bot.c2", train)
        caches["bot"] = (cb1, cb2)
        for i in range(DEPTH, 0, -1):
            hcur, c_up = upsample_bilinear2(hcur)
            caches["up"].append(c_up)
            skip = skips[i - 1]
            hcur = _concat([skip, hcur])
            widths = [skip.shape[1], hcur.shape[1] - skip.shape[1]]
            hcur, d1 = self._cbr_forward(hcur, f"dec{i}.c1", train)
            hcur, d2 = self._cbr_forward(hcur, f"dec{i}.c2", train)
            caches["dec"].append((widths, d1, d2))
        hcur, h1 = self._cbr_forward(hcur, "head.c1", train)
        hcur, h2 = self._cbr_forward(hcur, "head.c2", train)
        out, c_out = conv2d(hcur, self.params["head.out.w"], self.params["head.out.b"])
        caches["head"] = (h1, h2, c_out)
        if want_cache:
            return out, caches
        return out

    def backward(self, dy: np.ndarray, caches) -> dict[str, np.ndarray]:
        """Gradients of a scalar loss w.r.t. every parameter, given dL/dout."""
        grads = self.zero_like_grads()
        h1, h2, c_out = caches["head"]
        dh, dw, db = conv2d_backward(dy.astype(self.dtype, copy=False), c_out)
        grads["head.out.w"] += dw
        grads["head.out.b"] += db
        dh = self._cbr_backward(dh, h2, grads)
        dh = self._cbr_backward(dh, h1, grads)
        dskips = [None] * DEPTH
        for pos, i in enumerate(range(1, DEPTH + 1)):
            widths, d1, d2 = caches["dec"][DEPTH - 1 - pos]
            dh = self._cbr_backward(dh, d2, grads)
            dh = self._cbr_backward(dh, d1, grads)
            dskip, dup = _split(dh, widths)
            dskips[i - 1] = dskip
            dh = upsample_bilinear2_backward(dup, caches["up"][DEPTH - 1 - pos])
        dh = self._cbr_backward(dh, caches["bot"][1], grads)
        dh = self._cbr_backward(dh, caches["bot"][0], grads)
        for i in range(DEPTH, 0, -1):
            denc = maxpool2_backward(dh, caches["pool"][i - 1])
            denc = denc + self._rdb_backward(dskips[i - 1], caches["rdb"][i - 1], grads)
            c1, c2 = caches["enc"][i - 1]
            denc = self._cbr_backward(denc, c2, grads)
            dh = self._cbr_backward(denc, c1, grads)
        return grads


def rdb_forward(f0: np.ndarray, model: CRNetModel, index: int = 1) -> np.ndarray:
    """Standalone RDB application (skip-path block index 1..4)."""
    out, _ = model._rdb_forward(f0, index)
    return out


def predict(model: CRNetModel, r: Radargram) -> Radargram:
    """Declutter one scan: normalize, pad to /16 dims, eval forward, crop."""
    scan = normalize_unit(r)
    h, w = scan.data.shape
    mult = 2**DEPTH
    ph = (mult - h % mult) % mult
    pw = (mult - w % mult) % mult
    grid = np.pad(scan.data, ((0, ph), (0, pw)), mode="edge")
    out = model.forward(grid[None, None].astype(model.dtype), train=False)
    cleaned = out[0, 0, :h, :w].astype(np.float64)
    return r.with_data(cleaned, label=f"crnet {r.label}")


# ---------------------------------------------------------------------------
# Checkpoint format: text magic + config line + named binary32 groups
# ---------------------------------------------------------------------------


def save_checkpoint(path, model: CRNetModel) -> None:
    cfg = model.config
    bn_init = any(st.initialized for st in model.bn_states.values())
    groups: list[tuple[str, np.ndarray]] = list(model.params.items())
    for name, st in model.bn_states.items():
        groups.append((f"{name}.running_mean", st.running_mean))
        groups.append((f"{name}.running_var", st.running_var))
    with open(path, "wb") as fh:
        fh.write(f"{CHECKPOINT_MAGIC}\n".encode())
        fh.write(
            f"base_width={cfg.base_width} bn_momentum={cfg.bn_momentum!r} "
            f"bn_eps={cfg.bn_eps!r} init={cfg.init} bn_initialized={int(bn_init)}\n".encode()
        )
        fh.write(f"groups {len(groups)}\n".encode())
        for name, arr in groups:
            dims = " ".join(str(d) for d in arr.shape)
            fh.write(f"{name} {arr.ndim} {dims}\n".encode())
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path, dtype=np.float32) -> CRNetModel:
    with open(path, "rb") as fh:
        magic = fh.readline().decode().strip()
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"bad checkpoint magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
        kv = dict(item.split("=", 1) for item in fh.readline().decode().split())
        config = CRNetConfig(
            base_width=int(kv["base_width"]),
            bn_momentum=float(kv["bn_momentum"]),
            bn_eps=float(kv["bn_eps"]),
            init=kv["init"],
        )
        bn_init = bool(int(kv.get("bn_initialized", "0")))
        head = fh.readline().decode().split()
        if len(head) != 2 or head[0] != "groups":
            raise ValueError("malformed checkpoint group header")
        count = int(head[1])
        model = CRNetModel(config, dtype=dtype)
        for _ in range(count):
            parts = fh.readline().decode().split()
            name, ndim = parts[0], int(parts[1])
            shape = tuple(int(d) for d in parts[2 : 2 + ndim])
            n_values = int(np.prod(shape)) if shape else 1
            raw = fh.read(n_values * 4)
            if len(raw) != n_values * 4:
                raise ValueError(f"truncated checkpoint group {name!r}")
            arr = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(dtype)
            if name.endswith(".running_mean"):
                model.bn_states[name.rsplit(".", 1)[0]].running_mean = arr
            elif name.endswith(".running_var"):
                model.bn_states[name.rsplit(".", 1)[0]].running_var = arr
            else:
                if name not in model.params:
                    raise ValueError(f"unknown parameter group {name!r}")
                if model.params[name].shape != arr.shape:
                    raise ValueError(
                        f"group {name!r} has shape {arr.shape}, expected {model.params[name].shape}"
                    )
                model.params[name] = arr
    for st in model.bn_states.values():
        st.initialized = bn_init
    return model
