"""MLP construction, shared-trunk multi-head nets, Adam, and checkpoints.

Parameters are plain dicts of named float64 arrays ("W0", "b0", ...). Every
network has two forward paths: one that records onto a Tape (for training) and
a plain-numpy one (for sampling and evaluation); both apply the same sequence
of operations.

Weight init is uniform in [-sqrt(1/fan_in), +sqrt(1/fan_in)] with zero biases,
a scale-stable default for the small dense nets used here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape, VarId

ParamSet = dict[str, np.ndarray]

OUTPUT_KINDS = ("linear", "sigmoid", "tanh", "relu")


@dataclass(frozen=True)
class MlpSpec:
    """Dense net shape: (input, hidden..., output) with relu between layers."""

    layer_sizes: tuple[int, ...]
    activation: str = "relu"
    output_kind: str = "linear"

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise ValueError("MlpSpec needs at least an input and an output size")
        if any(s <= 0 for s in self.layer_sizes):
            raise ValueError(f"layer sizes must be positive: {self.layer_sizes}")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")
        if self.output_kind not in OUTPUT_KINDS:
            raise ValueError(f"unsupported output kind {self.output_kind!r}")

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]


def init_mlp(spec: MlpSpec, seed: int) -> ParamSet:
    """Deterministic parameter draw for a spec; same seed, same bits."""
    rng = np.random.default_rng(seed)
    params: ParamSet = {}
    sizes = spec.layer_sizes
    for layer, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = np.sqrt(1.0 / fan_in)
        params[f"W{layer}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        params[f"b{layer}"] = np.zeros((1, fan_out))
    return params


def lift_params(tape: Tape, params: ParamSet, requires_grad: bool = True) -> dict[str, VarId]:
    """Insert every named parameter as a tape leaf, preserving names."""
    return {name: tape.leaf(value, requires_grad=requires_grad) for name, value in params.items()}


def _apply_output(tape: Tape, h: VarId, kind: str) -> VarId:
    if kind == "linear":
        return h
    if kind == "sigmoid":
        return tape.unary("sigmoid", h)
    if kind == "relu":
        return tape.unary("relu", h)
    # tanh(x) = 2*sigmoid(2x) - 1, composed from the primitive set
    two = tape.leaf(2.0)
    one = tape.leaf(1.0)
    return tape.binary("sub", tape.binary("mul", two, tape.unary("sigmoid", tape.binary("mul", two, h))), one)


def forward(tape: Tape, spec: MlpSpec, param_ids: dict[str, VarId], x: VarId) -> VarId:
    """Tape forward pass. x is (batch, in_dim); returns (batch, out_dim)."""
    if tape.value(x).shape[1] != spec.in_dim:
        raise ValueError(
            f"input has {tape.value(x).shape[1]} columns, spec expects {spec.in_dim}"
        )
    n_layers = len(spec.layer_sizes) - 1
    h = x
    for layer in range(n_layers):
        h = tape.binary("add", tape.binary("matmul", h, param_ids[f"W{layer}"]), param_ids[f"b{layer}"])
        if layer < n_layers - 1:
            h = tape.unary("relu", h)
    return _apply_output(tape, h, spec.output_kind)


def forward_np(spec: MlpSpec, params: ParamSet, x: np.ndarray) -> np.ndarray:
    """Plain-numpy mirror of forward(), for sampling and evaluation."""
    if x.shape[1] != spec.in_dim:
        raise ValueError(f"input has {x.shape[1]} columns, spec expects {spec.in_dim}")
    n_layers = len(spec.layer_sizes) - 1
    h = x
    for layer in range(n_layers):
        h = h @ params[f"W{layer}"] + params[f"b{layer}"]
        if layer < n_layers - 1:
            h = np.maximum(h, 0.0)
    if spec.output_kind == "sigmoid":
        return 1.0 / (1.0 + np.exp(-np.clip(h, -500, 500)))
    if spec.output_kind == "relu":
        return np.maximum(h, 0.0)
    if spec.output_kind == "tanh":
        return np.tanh(h)
    return h


@dataclass
class MultiHeadNet:
    """Shared trunk with named linear heads on the trunk features.

    Heads "adv" (1-dim score) and "cls" (K logits) are always present;
    "twin_cls" only when the twin classifier variant asks for it.
    """

    trunk_spec: MlpSpec
    trunk: ParamSet
    heads: dict[str, ParamSet] = field(default_factory=dict)

    def __post_init__(self):
        feat = self.trunk_spec.out_dim
        for name, head in self.heads.items():
            if head["W"].shape[0] != feat:
                raise ValueError(
                    f"head {name!r} expects {head['W'].shape[0]} features, trunk emits {feat}"
                )

    def head_names(self) -> tuple[str, ...]:
        return tuple(self.heads)


def init_multihead(trunk_spec: MlpSpec, head_dims: dict[str, int], seed: int) -> MultiHeadNet:
    if "adv" not in head_dims or "cls" not in head_dims:
        raise ValueError("multi-head net requires 'adv' and 'cls' heads")
    trunk = init_mlp(trunk_spec, seed)
    feat = trunk_spec.out_dim
    heads: dict[str, ParamSet] = {}
    for i, (name, dim) in enumerate(sorted(head_dims.items())):
        rng = np.random.default_rng([seed, 1000 + i])
        bound = np.sqrt(1.0 / feat)
        heads[name] = {
            "W": rng.uniform(-bound, bound, size=(feat, dim)),
            "b": np.zeros((1, dim)),
        }
    return MultiHeadNet(trunk_spec, trunk, heads)


def multihead_params(net: MultiHeadNet) -> ParamSet:
    """Flatten trunk and head parameters under prefixed names."""
    flat = {f"trunk.{k}": v for k, v in net.trunk.items()}
    for name, head in net.heads.items():
        for k, v in head.items():
            flat[f"head.{name}.{k}"] = v
    return flat


def forward_heads(
    tape: Tape,
    net: MultiHeadNet,
    param_ids: dict[str, VarId],
    x: VarId,
    head_names: tuple[str, ...],
) -> dict[str, VarId]:
    """Run the trunk once, then each requested head on the shared features."""
    for name in head_names:
        if name not in net.heads:
            raise ValueError(f"unknown head {name!r}; net has {sorted(net.heads)}")
    trunk_ids = {k.split(".", 1)[1]: v for k, v in param_ids.items() if k.startswith("trunk.")}
    feats = forward(tape, net.trunk_spec, trunk_ids, x)
    outs = {}
    for name in head_names:
        w = param_ids[f"head.{name}.W"]
        b = param_ids[f"head.{name}.b"]
        outs[name] = tape.binary("add", tape.binary("matmul", feats, w), b)
    return outs


def forward_head_np(net: MultiHeadNet, x: np.ndarray, head: str) -> np.ndarray:
    if head not in net.heads:
        raise ValueError(f"unknown head {head!r}; net has {sorted(net.heads)}")
    feats = forward_np(net.trunk_spec, net.trunk, x)
    return feats @ net.heads[head]["W"] + net.heads[head]["b"]


class Adam:
    """Adam with bias correction, updating a ParamSet in place.

    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
    """

    def __init__(
        self,
        params: ParamSet,
        lr: float,
        beta1: float = 0.0,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise ValueError(f"betas must lie in [0, 1): {beta1}, {beta2}")
        if eps <= 0:
            raise ValueError(f"epsilon must be positive, got {eps}")
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        missing = [k for k in self.params if k not in grads]
        if missing:
            raise ValueError(f"missing gradient for parameter {missing[0]!r}")
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, theta in self.params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            theta -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


# -- checkpoints ----------------------------------------------------------

_CHECKPOINT_FORMAT = "tacgan-params-v1"


def save_params(params: ParamSet, path) -> None:
    """Write named tensors as JSON: {name: {shape, data}}; exact round trip."""
    payload = {
        "format": _CHECKPOINT_FORMAT,
        "tensors": {
            name: {"shape": list(value.shape), "data": value.ravel().tolist()}
            for name, value in params.items()
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_params(path) -> ParamSet:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format") != _CHECKPOINT_FORMAT:
        raise ValueError(
            f"unsupported checkpoint format {payload.get('format')!r}, "
            f"expected {_CHECKPOINT_FORMAT!r}"
        )
    out: ParamSet = {}
    for name, entry in payload["tensors"].items():
        out[name] = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
    return out
