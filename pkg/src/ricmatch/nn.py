"""Dense feed-forward networks trained from scratch with Adam.

Parameters live in one flat float64 vector; per-layer weight matrices
(fan_out x fan_in) and bias vectors are views into it.  Gradients use the
same layout, so the optimiser and the finite-difference checker operate on
a single array.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import accel
from ._kernels import LINEAR, SIGMOID, TANH
from .netcost import ComputeModel, modeled_training_time
from .preprocess import FeatureMatrix, Normalizer, TargetVector, transform
from .rng import stream


class NonFiniteLossError(FloatingPointError):
    """Training produced a NaN or infinite loss."""


class Activation(str, Enum):
    SIGMOID = "sigmoid"
    TANH = "tanh"

    @property
    def code(self) -> int:
        return SIGMOID if self is Activation.SIGMOID else TANH


@dataclass(frozen=True)
class NetworkSpec:
    layer_widths: tuple[int, ...]
    hidden_activation: Activation = Activation.SIGMOID

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        object.__setattr__(self, "hidden_activation", Activation(self.hidden_activation))
        if len(self.layer_widths) < 2 or min(self.layer_widths) < 1:
            raise ValueError(f"invalid layer widths {self.layer_widths}")
        if self.layer_widths[-1] != 1:
            raise ValueError("output width must be 1")

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1

    @property
    def n_params(self) -> int:
        w = self.layer_widths
        return sum(w[i + 1] * w[i] + w[i + 1] for i in range(self.n_layers))


# per-UE regressor: 2 hidden layers of 30 sigmoid units
FF_SPEC = NetworkSpec((6, 30, 30, 1), Activation.SIGMOID)
# per-RU "encoder-decoder": 16/64/32/32 tanh units
ENC_DEC_SPEC = NetworkSpec((3, 16, 64, 32, 32, 1), Activation.TANH)
PAPER_LEARNING_RATE = {FF_SPEC: 1e-6, ENC_DEC_SPEC: 1e-5}


def _views(spec: NetworkSpec, flat: np.ndarray):
    weights, biases = [], []
    pos = 0
    w = spec.layer_widths
    for i in range(spec.n_layers):
        fan_in, fan_out = w[i], w[i + 1]
        weights.append(flat[pos:pos + fan_out * fan_in].reshape(fan_out, fan_in))
        pos += fan_out * fan_in
        biases.append(flat[pos:pos + fan_out])
        pos += fan_out
    return weights, biases


class Params:
    """A flat parameter-shaped vector with per-layer views."""

    def __init__(self, spec: NetworkSpec, flat: Optional[np.ndarray] = None):
        self.spec = spec
        if flat is None:
            flat = np.zeros(spec.n_params)
        flat = np.ascontiguousarray(flat, dtype=np.float64)
        if flat.shape != (spec.n_params,):
            raise ValueError(f"expected {spec.n_params} parameters, got {flat.shape}")
        self.flat = flat
        self.weights, self.biases = _views(spec, flat)

    def copy(self):
        return type(self)(self.spec, self.flat.copy())


class Network(Params):
    def to_dict(self) -> dict:
        return {
            "spec": {"layer_widths": list(self.spec.layer_widths),
                     "hidden_activation": self.spec.hidden_activation.value,
                     "output_activation": "linear"},
            "weights": [w.ravel().tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Network":
        spec = NetworkSpec(tuple(d["spec"]["layer_widths"]), Activation(d["spec"]["hidden_activation"]))
        net = cls(spec)
        for w, src in zip(net.weights, d["weights"]):
            w[...] = np.asarray(src, dtype=float).reshape(w.shape)
        for b, src in zip(net.biases, d["biases"]):
            b[...] = src
        return net


class Gradients(Params):
    pass


def init_network(spec: NetworkSpec, seed: int) -> Network:
    """Glorot-uniform weights, zero biases."""
    net = Network(spec)
    g = stream(seed, "init")
    for w in net.weights:
        fan_out, fan_in = w.shape
        a = math.sqrt(6.0 / (fan_in + fan_out))
        w[...] = g.uniform(-a, a, size=w.shape)
    return net


def _as_array(features) -> np.ndarray:
    if isinstance(features, FeatureMatrix):
        return features.values
    return np.ascontiguousarray(features, dtype=np.float64)


def _activations(net: Network, x: np.ndarray) -> list[np.ndarray]:
    acts = [x]
    last = net.spec.n_layers - 1
    hidden = net.spec.hidden_activation.code
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        out = np.empty((x.shape[0], w.shape[0]))
        accel.layer_forward(w, b, acts[-1], LINEAR if i == last else hidden, out)
        acts.append(out)
    return acts


def forward(net: Network, features) -> np.ndarray:
    """Training-space predictions, one per row."""
    x = _as_array(features)
    if x.ndim != 2 or x.shape[1] != net.spec.layer_widths[0]:
        raise ValueError(f"expected {net.spec.layer_widths[0]} input columns, got shape {x.shape}")
    return _activations(net, x)[-1][:, 0].copy()


def loss_and_grad(net: Network, features, targets_scaled) -> tuple[float, Gradients]:
    """Mean squared error over the batch and its exact gradient."""
    x = _as_array(features)
    y = np.asarray(targets_scaled, dtype=np.float64)
    acts = _activations(net, x)
    resid = acts[-1][:, 0] - y
    loss = float(resid @ resid) / y.shape[0]
    grads = Gradients(net.spec)
    delta = (2.0 / y.shape[0]) * resid[:, None]
    hidden = net.spec.hidden_activation.code
    last = net.spec.n_layers - 1
    for i in range(last, -1, -1):
        w = net.weights[i]
        delta_prev = np.empty((x.shape[0], w.shape[1])) if i > 0 else np.empty((0, 0))
        accel.layer_backward(w, acts[i], acts[i + 1], delta, LINEAR if i == last else hidden,
                             grads.weights[i], grads.biases[i], delta_prev, i > 0)
        delta = delta_prev
    return loss, grads


def backward(net: Network, features, targets_scaled) -> Gradients:
    return loss_and_grad(net, features, targets_scaled)[1]


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, net: Params) -> "AdamState":
        return cls(np.zeros_like(net.flat), np.zeros_like(net.flat))


def adam_step(net: Network, grads: Params, state: AdamState, learning_rate: float):
    """One in-place Adam update; returns ``(net, state)`` for chaining."""
    if grads.flat.shape != net.flat.shape or state.m.shape != net.flat.shape:
        raise ValueError("parameter, gradient and moment shapes differ")
    state.t += 1
    accel.adam_update(net.flat, grads.flat, state.m, state.v, float(learning_rate),
                      state.beta1, state.beta2, state.eps, state.t)
    return net, state


class MapeResult(NamedTuple):
    value: float
    degenerate: bool


def mape(y_true, y_pred, nonzero_only: bool = True) -> MapeResult:
    """Mean absolute percentage error over strictly positive targets."""
    y = np.asarray(y_true, dtype=float)
    p = np.asarray(y_pred, dtype=float)
    if nonzero_only:
        keep = y > 0
        y, p = y[keep], p[keep]
    elif np.any(y == 0):
        raise ValueError("zero targets present; MAPE undefined without nonzero_only")
    if y.size == 0:
        return MapeResult(0.0, True)
    return MapeResult(float(100.0 * np.mean(np.abs(y - p) / y)), False)


def evaluate_mape(net: Network, features: FeatureMatrix, targets: TargetVector,
                  normalizer: Optional[Normalizer], nonzero_only: bool = True) -> MapeResult:
    x = transform(normalizer, features) if normalizer is not None else features
    return mape(targets.values, targets.invert(forward(net, x)), nonzero_only)


def grad_check(net: Network, batch, h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients."""
    if not h > 0:
        raise ValueError("h must be > 0")
    x, y = batch
    x = _as_array(x)
    y = np.asarray(y, dtype=float)
    _, grads = loss_and_grad(net, x, y)
    probe = net.copy()
    worst = 0.0
    for k in range(probe.flat.size):
        orig = probe.flat[k]
        probe.flat[k] = orig + h
        r = forward(probe, x) - y
        up = float(r @ r) / y.size
        probe.flat[k] = orig - h
        r = forward(probe, x) - y
        down = float(r @ r) / y.size
        probe.flat[k] = orig
        num = (up - down) / (2.0 * h)
        ana = grads.flat[k]
        err = abs(ana - num) / max(abs(ana), abs(num), 1e-12)
        worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    max_epochs: int = 100
    batch_size: int = 512
    seed: int = 0
    time_budget: Optional[float] = None
    compute: ComputeModel = field(default_factory=ComputeModel)
    clock: str = "modeled"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("batch_size must be >= 1 and max_epochs >= 0")
        if self.clock not in ("modeled", "wall"):
            raise ValueError(f"clock must be 'modeled' or 'wall', got {self.clock!r}")

    def to_dict(self) -> dict:
        return {"learning_rate": self.learning_rate, "max_epochs": self.max_epochs,
                "batch_size": self.batch_size, "seed": self.seed, "time_budget": self.time_budget,
                "compute": self.compute.to_dict(), "clock": self.clock}


@dataclass
class Dataset:
    """Normalised features plus targets carrying the training scale factor."""

    features: FeatureMatrix
    targets: TargetVector

    def __post_init__(self):
        if self.features.n_rows != self.targets.n:
            raise ValueError("feature and target row counts differ")

    def __len__(self):
        return self.targets.n


@dataclass
class TrainReport:
    train_mse: list = field(default_factory=list)
    val_mape: list = field(default_factory=list)
    epoch_time_s: list = field(default_factory=list)
    epochs_completed: int = 0
    best_val_mape: Optional[float] = None
    best_epoch: Optional[int] = None
    initial_val_mape: Optional[float] = None

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("train_mse", "val_mape", "epoch_time_s", "epochs_completed",
                                                "best_val_mape", "best_epoch", "initial_val_mape")}


# relative slack on the modeled-time budget so exact multiples are not lost to rounding
_BUDGET_SLACK = 1e-12


def train(net: Network, train_data: Dataset, val_data: Dataset, cfg: TrainConfig):
    """Mini-batch Adam on MSE; returns the lowest-validation-MAPE snapshot.

    Validation MAPE is measured in bits per second: predictions are mapped
    back with ``train_data.targets.invert`` and compared with
    ``val_data.targets.values``.
    """
    if len(train_data) == 0 or len(val_data) == 0:
        raise ValueError("train and validation sets must be non-empty")
    net = net.copy()
    x, y = train_data.features.values, train_data.targets.scaled
    xv, yv = val_data.features.values, val_data.targets.values
    invert = train_data.targets.invert
    n = y.shape[0]
    state = AdamState.fresh(net)
    g = stream(cfg.seed, "shuffle")
    report = TrainReport(initial_val_mape=mape(yv, invert(forward(net, xv))).value)
    best = net.copy()
    modeled_epoch = modeled_training_time(n, 1, cfg.compute)
    elapsed = 0.0
    bs = cfg.batch_size

    for epoch in range(1, cfg.max_epochs + 1):
        if cfg.time_budget is not None:
            if cfg.clock == "modeled":
                projected = modeled_training_time(n, epoch, cfg.compute)
            else:
                projected = elapsed + (report.epoch_time_s[-1] if report.epoch_time_s else 0.0)
            if projected > cfg.time_budget * (1.0 + _BUDGET_SLACK):
                break
        started = time.perf_counter()
        order = g.permutation(n)
        total = 0.0
        # overflow surfaces as NonFiniteLossError below, not as warnings
        with np.errstate(over="ignore", invalid="ignore"):
            for lo in range(0, n, bs):
                idx = order[lo:lo + bs]
                loss, grads = loss_and_grad(net, x[idx], y[idx])
                if not math.isfinite(loss):
                    raise NonFiniteLossError(f"non-finite training loss at epoch {epoch}")
                total += loss * idx.size
                adam_step(net, grads, state, cfg.learning_rate)
        wall = time.perf_counter() - started
        val = mape(yv, invert(forward(net, xv))).value
        duration = modeled_epoch if cfg.clock == "modeled" else wall
        elapsed += duration
        report.train_mse.append(total / n)
        report.val_mape.append(val)
        report.epoch_time_s.append(duration)
        report.epochs_completed = epoch
        if report.best_val_mape is None or val < report.best_val_mape:
            report.best_val_mape, report.best_epoch = val, epoch
            best.flat[...] = net.flat
    return best, report


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, net: Network, normalizer: Optional[Normalizer] = None,
                    target_scale: float = 1.0, extra: Optional[dict] = None) -> None:
    doc = net.to_dict()
    doc["normalizer"] = None if normalizer is None else normalizer.to_dict()
    doc["target_scale"] = target_scale
    if extra:
        doc["meta"] = extra
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")


def load_checkpoint(path):
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    norm = None if doc.get("normalizer") is None else Normalizer.from_dict(doc["normalizer"])
    return Network.from_dict(doc), norm, float(doc.get("target_scale", 1.0))


def spec_for_columns(n_cols: int) -> NetworkSpec:
    """The architecture matching an encoded trace's column count."""
    if n_cols == FF_SPEC.layer_widths[0]:
        return FF_SPEC
    if n_cols == ENC_DEC_SPEC.layer_widths[0]:
        return ENC_DEC_SPEC
    raise ValueError(f"no default architecture for {n_cols} input columns")


__all__: Sequence[str] = (
    "Activation", "NetworkSpec", "Network", "Gradients", "AdamState", "TrainConfig", "TrainReport",
    "Dataset", "MapeResult", "NonFiniteLossError", "FF_SPEC", "ENC_DEC_SPEC", "PAPER_LEARNING_RATE",
    "init_network", "forward", "backward", "loss_and_grad", "adam_step", "train", "mape",
    "evaluate_mape", "grad_check", "save_checkpoint", "load_checkpoint", "spec_for_columns",
)
