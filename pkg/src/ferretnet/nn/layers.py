"""Module containers and the layers FerretNet is built from.

Modules discover their parameters, buffers and sub-modules from instance
attributes in assignment order, which fixes the parameter naming used by
checkpoints. Every module can `describe` itself for a given input shape,
returning per-layer records with closed-form parameter and FLOP counts.
"""
from __future__ import annotations

import math
from collections import OrderedDict

import numpy as np

from . import functional as F
from .tensor import Parameter, Tensor, get_default_dtype


def _kaiming_uniform(shape, fan_in, rng, dtype):
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Module:
    training = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):  # pragma: no cover - abstract
        raise NotImplementedError

    # -- discovery -----------------------------------------------------
    def named_children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
        for name, child in self.named_children():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = ""):
        for name, value in getattr(self, "_buffers", {}).items():
            yield prefix + name, value
        for name, child in self.named_children():
            yield from child.named_buffers(prefix + name + ".")

    def modules(self):
        yield self
        for _, child in self.named_children():
            yield from child.modules()

    # -- state ---------------------------------------------------------
    def train(self, mode: bool = True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        state = OrderedDict((k, p.data) for k, p in self.named_parameters())
        state.update(self.named_buffers())
        return state

    def load_state_dict(self, state) -> None:
        own = self.state_dict()
        missing = set(own) - set(state)
        unexpected = set(state) - set(own)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, arr in own.items():
            src = np.asarray(state[name])
            if src.shape != arr.shape:
                raise ValueError(f"{name}: expected shape {arr.shape}, got {src.shape}")
            arr[...] = src

    def astype(self, dtype):
        """Cast all parameters and buffers in place (e.g. float64 for gradient checks)."""
        for m in self.modules():
            for name, value in list(vars(m).items()):
                if isinstance(value, Parameter):
                    value.data = value.data.astype(dtype)
                    value.grad = None
            for name, buf in getattr(m, "_buffers", {}).items():
                m._buffers[name] = buf.astype(dtype)
        return self

    # -- accounting ----------------------------------------------------
    def describe(self, input_shape):
        """Return (records, output_shape) for an input of `input_shape`."""
        raise NotImplementedError(f"{type(self).__name__} cannot describe itself")


class Sequential(Module):
    def __init__(self, *layers: Module):
        for i, layer in enumerate(layers):
            setattr(self, str(i), layer)

    def __iter__(self):
        return (m for _, m in self.named_children())

    def __len__(self):
        return sum(1 for _ in self.named_children())

    def __getitem__(self, i):
        return getattr(self, str(i))

    def forward(self, x):
        for layer in self:
            x = layer(x)
        return x

    def describe(self, input_shape):
        records, shape = [], tuple(input_shape)
        for name, layer in self.named_children():
            sub, shape = layer.describe(shape)
            records.extend(_prefixed(sub, name))
        return records, shape


def _prefixed(records, prefix):
    out = []
    for r in records:
        r = dict(r)
        r["name"] = f"{prefix}.{r['name']}" if r["name"] else prefix
        out.append(r)
    return out


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size=3, stride: int = 1,
                 padding: int = 0, dilation: int = 1, groups: int = 1, bias: bool = True,
                 rng: np.random.Generator | None = None):
        if in_channels < 1 or out_channels < 1:
            raise ValueError("channel counts must be positive")
        if groups < 1 or in_channels % groups or out_channels % groups:
            raise ValueError(f"groups={groups} must divide {in_channels} and {out_channels}")
        if stride < 1 or dilation < 1 or padding < 0:
            raise ValueError("stride and dilation must be >= 1, padding >= 0")
        kh, kw = (kernel_size, kernel_size) if isinstance(kernel_size, int) else tuple(kernel_size)
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel_size = (kh, kw)
        self.stride, self.padding, self.dilation, self.groups = stride, padding, dilation, groups
        rng = rng if rng is not None else np.random.default_rng()
        dtype = get_default_dtype()
        fan_in = (in_channels // groups) * kh * kw
        self.weight = Parameter(_kaiming_uniform((out_channels, in_channels // groups, kh, kw), fan_in, rng, dtype))
        self.bias = Parameter(np.zeros(out_channels, dtype=dtype)) if bias else None

    def forward(self, x):
        return F.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.dilation, self.groups)

    def describe(self, input_shape):
        n, c, h, w = input_shape
        if c != self.in_channels:
            raise ValueError(f"conv expects {self.in_channels} channels, got {c}")
        kh, kw = self.kernel_size
        ho = F.conv_output_size(h, kh, self.stride, self.padding, self.dilation)
        wo = F.conv_output_size(w, kw, self.stride, self.padding, self.dilation)
        per_out = (self.in_channels // self.groups) * kh * kw
        params = self.out_channels * per_out + (self.out_channels if self.bias is not None else 0)
        flops = 2 * self.out_channels * per_out * ho * wo * n
        return [dict(name="", kind="conv2d", params=params, flops=flops,
                     config=dict(in_channels=self.in_channels, out_channels=self.out_channels,
                                 kernel=[kh, kw], stride=self.stride, padding=self.padding,
                                 dilation=self.dilation, groups=self.groups, bias=self.bias is not None),
                     input_shape=list(input_shape), output_shape=[n, self.out_channels, ho, wo])], \
            (n, self.out_channels, ho, wo)


class BatchNorm2d(Module):
    def __init__(self, num_features: int, momentum: float = 0.1, eps: float = 1e-5):
        if eps <= 0:
            raise ValueError("eps must be positive")
        dtype = get_default_dtype()
        self.num_features, self.momentum, self.eps = num_features, momentum, eps
        self.gamma = Parameter(np.ones(num_features, dtype=dtype))
        self.beta = Parameter(np.zeros(num_features, dtype=dtype))
        self._buffers = OrderedDict(
            running_mean=np.zeros(num_features, dtype=dtype),
            running_var=np.ones(num_features, dtype=dtype),
        )

    @property
    def running_mean(self):
        return self._buffers["running_mean"]

    @property
    def running_var(self):
        return self._buffers["running_var"]

    def forward(self, x):
        return F.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                            self.training, self.momentum, self.eps)

    def describe(self, input_shape):
        return [dict(name="", kind="batchnorm2d", params=2 * self.num_features, flops=0,
                     config=dict(num_features=self.num_features, momentum=self.momentum, eps=self.eps),
                     input_shape=list(input_shape), output_shape=list(input_shape))], tuple(input_shape)


class _Shapeless(Module):
    kind = ""

    def describe(self, input_shape):
        out = self._out_shape(tuple(input_shape))
        return [dict(name="", kind=self.kind, params=0, flops=0, config=self._config(),
                     input_shape=list(input_shape), output_shape=list(out))], out

    def _out_shape(self, shape):
        return shape

    def _config(self):
        return {}


class ReLU(_Shapeless):
    kind = "relu"

    def forward(self, x):
        return F.relu(x)


class GlobalAvgPool(_Shapeless):
    kind = "global_avg_pool"

    def forward(self, x):
        return F.global_avg_pool(x)

    def _out_shape(self, shape):
        return shape[:2]


class Dropout(_Shapeless):
    kind = "dropout"

    def __init__(self, p: float = 0.5, rng: np.random.Generator | None = None):
        if not 0 <= p < 1:
            raise ValueError(f"dropout probability must be in [0, 1), got {p}")
        self.p = p
        self.rng = rng if rng is not None else np.random.default_rng()

    def forward(self, x):
        return F.dropout(x, self.p, self.training, self.rng)

    def _config(self):
        return {"p": self.p}


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, bias: bool = True,
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng()
        dtype = get_default_dtype()
        self.in_features, self.out_features = in_features, out_features
        self.weight = Parameter(_kaiming_uniform((out_features, in_features), in_features, rng, dtype))
        self.bias = Parameter(np.zeros(out_features, dtype=dtype)) if bias else None

    def forward(self, x):
        return F.linear(x, self.weight, self.bias)

    def describe(self, input_shape):
        n, f = input_shape
        if f != self.in_features:
            raise ValueError(f"linear expects {self.in_features} features, got {f}")
        params = self.in_features * self.out_features + (self.out_features if self.bias is not None else 0)
        return [dict(name="", kind="linear", params=params, flops=2 * self.in_features * self.out_features * n,
                     config=dict(in_features=self.in_features, out_features=self.out_features,
                                 bias=self.bias is not None),
                     input_shape=list(input_shape), output_shape=[n, self.out_features])], \
            (n, self.out_features)


def param_count(model: Module) -> int:
    """Number of trainable scalars, enumerated from the allocated parameters."""
    return int(sum(p.size for p in model.parameters()))


def flops_count(model: Module, input_shape) -> int:
    """2 x multiply-accumulates of every conv/linear layer at `input_shape`."""
    records, _ = model.describe(tuple(input_shape))
    return int(sum(r["flops"] for r in records))
