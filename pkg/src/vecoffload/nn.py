"""Dense actor (softmax policy) and critic (scalar value) networks.

Parameters are immutable snapshots: arrays are stored read-only so a worker
holding a snapshot can never be affected by, or cause, a concurrent update.
All math runs through the selected kernel backend.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import CheckpointError, DomainError

__all__ = [
    "NetParams",
    "Gradients",
    "init_params",
    "forward_policy",
    "forward_value",
    "policy_entropy",
    "backward_actor",
    "backward_actor_batch",
    "backward_critic",
    "backward_critic_batch",
    "apply_sgd",
    "save_checkpoint",
    "load_checkpoint",
]

LOG_FLOOR = 1e-12

_MAGIC = b"VOFF"
_FORMAT_VERSION = 1


def _freeze(arr):
    out = np.ascontiguousarray(arr, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class NetParams:
    """One network's weights and biases plus its output head kind."""

    sizes: tuple
    weights: tuple
    biases: tuple
    out_kind: str = "softmax"

    def __post_init__(self):
        if len(self.sizes) < 2 or any(s < 1 for s in self.sizes):
            raise DomainError(f"need >= 2 layer sizes, all >= 1, got {self.sizes}")
        if self.out_kind not in ("softmax", "identity"):
            raise DomainError(f"unknown output head {self.out_kind!r}")
        if len(self.weights) != len(self.sizes) - 1 or len(self.biases) != len(self.weights):
            raise DomainError("layer count mismatch between sizes and arrays")
        ws, bs = [], []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            w, b = _freeze(w), _freeze(b)
            if w.shape != (self.sizes[i], self.sizes[i + 1]) or b.shape != (self.sizes[i + 1],):
                raise DomainError(
                    f"layer {i}: got {w.shape}/{b.shape}, sizes say "
                    f"({self.sizes[i]}, {self.sizes[i + 1]})"
                )
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise DomainError(f"layer {i}: non-finite parameter")
            ws.append(w)
            bs.append(b)
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        object.__setattr__(self, "weights", tuple(ws))
        object.__setattr__(self, "biases", tuple(bs))

    @property
    def in_size(self) -> int:
        return self.sizes[0]

    @property
    def out_size(self) -> int:
        return self.sizes[-1]


@dataclass(frozen=True)
class Gradients:
    """Same shapes as the owning NetParams."""

    weights: tuple
    biases: tuple

    def __add__(self, other: "Gradients") -> "Gradients":
        return Gradients(
            weights=tuple(a + b for a, b in zip(self.weights, other.weights)),
            biases=tuple(a + b for a, b in zip(self.biases, other.biases)),
        )

    def scaled(self, c: float) -> "Gradients":
        return Gradients(weights=tuple(c * w for w in self.weights),
                         biases=tuple(c * b for b in self.biases))

    def clipped(self, max_norm: float) -> "Gradients":
        """Rescale so the global l2 norm is at most ``max_norm``."""
        total = 0.0
        for arr in (*self.weights, *self.biases):
            total += float((arr * arr).sum())
        norm = total ** 0.5
        if norm <= max_norm or norm == 0.0:
            return self
        return self.scaled(max_norm / norm)

    def norm(self) -> float:
        total = 0.0
        for arr in (*self.weights, *self.biases):
            total += float((arr * arr).sum())
        return total ** 0.5

    @staticmethod
    def zeros_like(params: NetParams) -> "Gradients":
        return Gradients(
            weights=tuple(np.zeros_like(w) for w in params.weights),
            biases=tuple(np.zeros_like(b) for b in params.biases),
        )


def init_params(sizes, seed: int, out_kind: str = "softmax") -> NetParams:
    """Seeded init: uniform weights in +-1/sqrt(fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = 1.0 / np.sqrt(fan_in)
        ws.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        bs.append(np.zeros(fan_out))
    return NetParams(sizes=tuple(sizes), weights=tuple(ws), biases=tuple(bs),
                     out_kind=out_kind)


def _as_batch(x) -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise DomainError(f"expected 1D or 2D input, got shape {arr.shape}")
    return arr


def forward_policy(params: NetParams, x) -> np.ndarray:
    """Action probabilities; 1D in -> 1D out, 2D in -> one row per sample."""
    if params.out_kind != "softmax":
        raise DomainError("policy forward needs a softmax head")
    batch = _as_batch(x)
    probs = _backend.policy_forward(params.weights, params.biases, batch)
    return probs[0] if np.ndim(x) == 1 else probs


def forward_value(params: NetParams, x):
    """State value; scalar for a 1D input, vector for a batch."""
    if params.out_kind != "identity" or params.out_size != 1:
        raise DomainError("value forward needs a scalar identity head")
    batch = _as_batch(x)
    values = _backend.value_forward(params.weights, params.biases, batch)
    return float(values[0]) if np.ndim(x) == 1 else values


def policy_entropy(probs) -> float:
    p = np.asarray(probs, dtype=np.float64)
    return float(-(p * np.log(np.maximum(p, LOG_FLOOR))).sum())


def backward_actor_batch(params: NetParams, x, actions, advantages,
                         entropy_coef: float) -> Gradients:
    """Ascent gradient of sum [A log pi(a|s) + delta H(pi(s))], batch-summed."""
    batch = _as_batch(x)
    acts = np.ascontiguousarray(actions, dtype=np.int64)
    advs = np.ascontiguousarray(advantages, dtype=np.float64)
    if acts.shape != (batch.shape[0],) or advs.shape != (batch.shape[0],):
        raise DomainError("actions/advantages must match the batch length")
    if acts.min(initial=0) < 0 or acts.max(initial=0) >= params.out_size:
        raise DomainError("action index outside the policy's output range")
    dws, dbs = _backend.actor_backward(params.weights, params.biases, batch,
                                       acts, advs, float(entropy_coef))
    return Gradients(weights=tuple(dws), biases=tuple(dbs))


def backward_actor(params: NetParams, x, action: int, advantage: float,
                   entropy_coef: float) -> Gradients:
    return backward_actor_batch(params, _as_batch(x), [action], [advantage],
                                entropy_coef)


def backward_critic_batch(params: NetParams, x, targets):
    """Descent gradient of sum (G - V(s))^2 and that summed loss."""
    batch = _as_batch(x)
    tgts = np.ascontiguousarray(targets, dtype=np.float64)
    if tgts.shape != (batch.shape[0],):
        raise DomainError("targets must match the batch length")
    dws, dbs, loss = _backend.critic_backward(params.weights, params.biases,
                                              batch, tgts)
    return Gradients(weights=tuple(dws), biases=tuple(dbs)), float(loss)


def backward_critic(params: NetParams, x, target: float):
    grads, loss = backward_critic_batch(params, _as_batch(x), [target])
    return grads, loss


def apply_sgd(params: NetParams, grads: Gradients, lr: float) -> NetParams:
    """One plain gradient-descent step; returns a new immutable snapshot."""
    if lr <= 0:
        raise DomainError(f"lr must be > 0, got {lr}")
    if len(grads.weights) != len(params.weights):
        raise DomainError("gradient/parameter layer counts differ")
    for w, dw, b, db in zip(params.weights, grads.weights,
                            params.biases, grads.biases):
        if w.shape != dw.shape or b.shape != db.shape:
            raise DomainError(f"gradient shape {dw.shape} vs parameter {w.shape}")
    return NetParams(
        sizes=params.sizes,
        weights=tuple(w - lr * dw for w, dw in zip(params.weights, grads.weights)),
        biases=tuple(b - lr * db for b, db in zip(params.biases, grads.biases)),
        out_kind=params.out_kind,
    )


# --------------------------------------------------------------------------
# checkpoints: a short binary container that round-trips bit-exactly.
# Layout: magic, format version, header length, JSON header, then each
# network's weight and bias arrays as raw little-endian float64, row-major,
# in header order.


def save_checkpoint(path, nets: dict, meta: dict | None = None) -> None:
    """Write named networks plus a JSON-able metadata dict."""
    header = {
        "meta": meta or {},
        "nets": {
            name: {"sizes": list(p.sizes), "out_kind": p.out_kind}
            for name, p in nets.items()
        },
        "order": sorted(nets),
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for name in header["order"]:
            p = nets[name]
            for w, b in zip(p.weights, p.biases):
                fh.write(w.astype("<f8").tobytes())
                fh.write(b.astype("<f8").tobytes())


def load_checkpoint(path):
    """Read (nets, meta) back; raises CheckpointError on any mismatch."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if data[:4] != _MAGIC:
        raise CheckpointError(f"{path} is not a model checkpoint")
    version, hlen = struct.unpack_from("<II", data, 4)
    if version != _FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format {version}")
    try:
        header = json.loads(data[12:12 + hlen])
    except ValueError as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    offset = 12 + hlen
    nets = {}
    for name in header["order"]:
        desc = header["nets"][name]
        sizes = tuple(desc["sizes"])
        ws, bs = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            need = (fan_in * fan_out + fan_out) * 8
            if offset + need > len(data):
                raise CheckpointError(f"checkpoint truncated inside {name!r}")
            w = np.frombuffer(data, dtype="<f8", count=fan_in * fan_out,
                              offset=offset).reshape(fan_in, fan_out)
            offset += fan_in * fan_out * 8
            b = np.frombuffer(data, dtype="<f8", count=fan_out, offset=offset)
            offset += fan_out * 8
            ws.append(w.copy())
            bs.append(b.copy())
        try:
            nets[name] = NetParams(sizes=sizes, weights=tuple(ws),
                                   biases=tuple(bs), out_kind=desc["out_kind"])
        except DomainError as exc:
            raise CheckpointError(f"invalid parameters for {name!r}: {exc}") from exc
    if offset != len(data):
        raise CheckpointError(f"{len(data) - offset} trailing bytes in checkpoint")
    return nets, header["meta"]
