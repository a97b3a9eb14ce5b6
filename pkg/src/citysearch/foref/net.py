"""Small CNN for frame-of-reference angle regression, with manual backprop and Adam."""
from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

TWO_PI = 2 * math.pi
MAGIC = b"FOREF1"

# (name, shape) in declaration order; this order is also the weights-file order
PARAM_SHAPES = (
    ("conv1_w", (16, 1, 5, 5)),
    ("conv1_b", (16,)),
    ("conv2_w", (32, 16, 3, 3)),
    ("conv2_b", (32,)),
    ("fc1_w", (800, 128)),
    ("fc1_b", (128,)),
    ("fc2_w", (128, 32)),
    ("fc2_b", (32,)),
    ("fc3_w", (32, 1)),
    ("fc3_b", (1,)),
)


def angular_deviation(theta, theta_star):
    """Wrap-around distance between angles, in [0, pi]. Works on scalars and arrays."""
    d = np.abs(np.mod(theta, TWO_PI) - np.mod(theta_star, TWO_PI))
    out = np.where(d > math.pi, TWO_PI - d, d)
    return float(out) if np.ndim(out) == 0 else out


def signed_deviation(theta, theta_star):
    """theta - theta_star wrapped into (-pi, pi]."""
    d = np.mod(np.asarray(theta) - np.asarray(theta_star), TWO_PI)
    return np.where(d > math.pi, d - TWO_PI, d)


def loss(predictions, labels) -> float:
    p = np.asarray(predictions, dtype=float).ravel()
    t = np.asarray(labels, dtype=float).ravel()
    if p.size == 0:
        raise ValueError("empty batch")
    if p.size != t.size:
        raise ValueError(f"length mismatch: {p.size} predictions, {t.size} labels")
    return float(np.mean(angular_deviation(p, t) ** 2))


def loss_grad(predictions, labels) -> np.ndarray:
    p = np.asarray(predictions, dtype=float).ravel()
    return 2.0 * signed_deviation(p, labels) / p.size


def _glorot(rng, shape):
    if len(shape) == 4:
        rf = shape[2] * shape[3]
        fan_in, fan_out = shape[1] * rf, shape[0] * rf
    else:
        fan_in, fan_out = shape
    lim = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


def _im2col(x, k):
    # x: (B, H, W, C) -> (B, Ho, Wo, C*k*k), patch order (C, ki, kj)
    win = sliding_window_view(x, (k, k), axis=(1, 2))  # B, Ho, Wo, C, k, k
    b, ho, wo = win.shape[:3]
    return win.reshape(b, ho, wo, -1)


def _pool(x):
    # 2x2 max-pool on (B, H, W, C); returns pooled values and the winning slot per window.
    # Ties (common over flat image regions) go to the first slot so the gradient is not duplicated.
    b, h, w, c = x.shape
    r = x.reshape(b, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(b, h // 2, w // 2, c, 4)
    idx = r.argmax(axis=-1)
    out = np.take_along_axis(r, idx[..., None], axis=-1)[..., 0]
    return out, idx


def _unpool(dout, idx):
    b, h2, w2, c = idx.shape
    g = np.zeros((b, h2, w2, c, 4), dtype=dout.dtype)
    np.put_along_axis(g, idx[..., None], dout[..., None], axis=-1)
    return g.reshape(b, h2, w2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(b, h2 * 2, w2 * 2, c)


class ForefModel:
    """conv(16@5x5) -> relu -> pool -> conv(32@3x3) -> relu -> pool -> 800 -> 128 -> 32 -> 1."""

    def __init__(self, params=None, variant="front", seed=0, dtype=np.float64):
        self.variant = variant
        if params is None:
            rng = np.random.default_rng(seed)
            params = {}
            for name, shape in PARAM_SHAPES:
                params[name] = np.zeros(shape) if name.endswith("_b") else _glorot(rng, shape)
        self.params = {k: np.array(v, dtype=dtype) for k, v in params.items()}
        for name, shape in PARAM_SHAPES:
            if self.params[name].shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {self.params[name].shape}")
        self.m = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.t = 0

    def copy(self) -> "ForefModel":
        return ForefModel(self.params, self.variant, dtype=self.params["fc1_w"].dtype)

    # -- forward / backward ------------------------------------------------
    def _forward(self, x):
        p = self.params
        x = np.asarray(x, dtype=p["fc1_w"].dtype)
        if x.ndim == 2:
            x = x[None]
        if x.shape[1:] != (28, 28):
            raise ValueError(f"expected 28x28 images, got {x.shape[1:]}")
        b = x.shape[0]
        col1 = _im2col(x[..., None], 5)                               # B,24,24,25
        z1 = col1 @ p["conv1_w"].reshape(16, -1).T + p["conv1_b"]    # B,24,24,16
        h1, m1 = _pool(np.maximum(z1, 0))                            # B,12,12,16
        col2 = _im2col(h1, 3)                                        # B,10,10,144
        z2 = col2 @ p["conv2_w"].reshape(32, -1).T + p["conv2_b"]    # B,10,10,32
        h2, m2 = _pool(np.maximum(z2, 0))                            # B,5,5,32
        f0 = h2.reshape(b, 800)
        z3 = f0 @ p["fc1_w"] + p["fc1_b"]
        f1 = np.maximum(z3, 0)
        z4 = f1 @ p["fc2_w"] + p["fc2_b"]
        f2 = np.maximum(z4, 0)
        out = (f2 @ p["fc3_w"] + p["fc3_b"])[:, 0]
        return out, (col1, z1, m1, h1, col2, z2, m2, f0, z3, f1, z4, f2)

    def forward(self, images) -> np.ndarray:
        """Raw (unreduced) angle outputs for a batch of images, or one image."""
        return self._forward(images)[0]

    def predict(self, images) -> np.ndarray:
        return np.mod(self.forward(images), TWO_PI)

    def backward(self, cache, dout) -> dict:
        p = self.params
        col1, z1, m1, h1, col2, z2, m2, f0, z3, f1, z4, f2 = cache
        b = dout.shape[0]
        g = {}
        d = np.asarray(dout, dtype=f0.dtype)[:, None]
        g["fc3_w"] = f2.T @ d
        g["fc3_b"] = d.sum(0)
        d = (d @ p["fc3_w"].T) * (z4 > 0)
        g["fc2_w"] = f1.T @ d
        g["fc2_b"] = d.sum(0)
        d = (d @ p["fc2_w"].T) * (z3 > 0)
        g["fc1_w"] = f0.T @ d
        g["fc1_b"] = d.sum(0)
        d = (d @ p["fc1_w"].T).reshape(b, 5, 5, 32)
        d = (_unpool(d, m2) * (z2 > 0)).reshape(-1, 32)              # B*10*10, 32
        g["conv2_w"] = (d.T @ col2.reshape(-1, 144)).reshape(32, 16, 3, 3)
        g["conv2_b"] = d.sum(0)
        dcol = (d @ p["conv2_w"].reshape(32, -1)).reshape(b, 10, 10, 16, 3, 3)
        dh1 = np.zeros_like(h1)
        for ki in range(3):
            for kj in range(3):
                dh1[:, ki:ki + 10, kj:kj + 10, :] += dcol[..., ki, kj]
        d = (_unpool(dh1, m1) * (z1 > 0)).reshape(-1, 16)
        g["conv1_w"] = (d.T @ col1.reshape(-1, 25)).reshape(16, 1, 5, 5)
        g["conv1_b"] = d.sum(0)
        return g

    def loss_and_grads(self, images, labels):
        out, cache = self._forward(images)
        return loss(out, labels), self.backward(cache, loss_grad(out, labels))

    def adam_step(self, grads, lr=1e-5, beta1=0.9, beta2=0.999, eps=1e-8):
        self.t += 1
        c1 = 1 - beta1 ** self.t
        c2 = 1 - beta2 ** self.t
        for k, gk in grads.items():
            self.m[k] = beta1 * self.m[k] + (1 - beta1) * gk
            self.v[k] = beta2 * self.v[k] + (1 - beta2) * gk * gk
            step = lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + eps)
            self.params[k] -= step.astype(self.params[k].dtype)

    # -- persistence ---------------------------------------------------------
    def save(self, path, meta: dict | None = None) -> None:
        path = Path(path)
        buf = bytearray(MAGIC)
        buf += struct.pack("<I", len(PARAM_SHAPES))
        for _, shape in PARAM_SHAPES:
            buf += struct.pack("<I", len(shape))
            buf += struct.pack(f"<{len(shape)}I", *shape)
        for name, _ in PARAM_SHAPES:
            buf += self.params[name].astype("<f4").tobytes()
        path.write_bytes(bytes(buf))
        sidecar = {"variant": self.variant, "epochs": 0, "val_loss": None, "seed": 0}
        sidecar.update(meta or {})
        Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ForefModel":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"model file not found: {path}")
        data = path.read_bytes()
        if not data.startswith(MAGIC):
            raise ValueError(f"{path}: bad magic")
        off = len(MAGIC)
        (n,) = struct.unpack_from("<I", data, off)
        off += 4
        shapes = []
        for _ in range(n):
            (nd,) = struct.unpack_from("<I", data, off)
            off += 4
            shapes.append(struct.unpack_from(f"<{nd}I", data, off))
            off += 4 * nd
        if [tuple(s) for s in shapes] != [s for _, s in PARAM_SHAPES]:
            raise ValueError(f"{path}: layer dims {shapes} do not match the architecture")
        params = {}
        for (name, shape) in PARAM_SHAPES:
            count = int(np.prod(shape))
            params[name] = np.frombuffer(data, dtype="<f4", count=count, offset=off).reshape(shape).astype(float)
            off += 4 * count
        variant = "front"
        side = Path(str(path) + ".json")
        if side.exists():
            variant = json.loads(side.read_text(encoding="utf-8")).get("variant", "front")
        return cls(params, variant)
