"""Encoder/decoder networks built on the tensor module.

Two families: fully connected nets with skip connections for the
low-dimensional systems, and a 1-D convolutional autoencoder whose decoder
first augments the latent vector with its Kronecker square.

Every forward pass has a tangent-propagating twin that pushes a directional
derivative of the input through the same graph, so that Jacobian-vector
products of the encoder remain differentiable with respect to the weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from . import tensor as T
from .tensor import Tensor

CHECKPOINT_VERSION = 1


class ConfigurationError(ValueError):
    """Raised when a network spec is internally inconsistent."""


@dataclass
class MlpSpec:
    in_dim: int
    out_dim: int
    width: int
    depth: int = 3          # number of hidden layers
    activation: str = "silu"
    skip: bool = True

    def __post_init__(self):
        if self.width < 1 or self.depth < 1:
            raise ConfigurationError("MLP width and depth must be >= 1")
        if self.activation != "silu":
            raise ConfigurationError(f"unsupported activation {self.activation!r}")


@dataclass
class ConvAeSpec:
    input_length: int = 256
    channels: tuple = (1, 8, 16, 32, 64)
    kernel: int = 4
    stride: int = 2
    padding: int = 1
    latent_dim: int = 4
    quad_aug: bool = True

    def conv_lengths(self):
        lengths = [self.input_length]
        for _ in range(len(self.channels) - 1):
            lengths.append(
                (lengths[-1] + 2 * self.padding - self.kernel) // self.stride + 1)
        return lengths

    def __post_init__(self):
        lengths = self.conv_lengths()
        if any(l < 1 for l in lengths):
            raise ConfigurationError(f"conv pipeline collapses: lengths {lengths}")
        # decoder mirrors the encoder; transposed conv must invert the lengths
        for lin, lout in zip(lengths[1:], lengths[:-1]):
            if (lin - 1) * self.stride - 2 * self.padding + self.kernel != lout:
                raise ConfigurationError(
                    "transposed conv does not invert the encoder lengths")

    @property
    def flat_dim(self):
        return self.channels[-1] * self.conv_lengths()[-1]


def _init_linear(rng: np.random.Generator, fan_in: int, fan_out: int):
    bound = 1.0 / np.sqrt(fan_in)
    w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
    b = rng.uniform(-bound, bound, size=(fan_out,))
    return Tensor(w, requires_grad=True), Tensor(b, requires_grad=True)


def _silu_slope(s: Tensor) -> Tensor:
    """Derivative of silu at pre-activation s, as a differentiable graph."""
    sig = T.sigmoid(s)
    return sig + s * sig * (T.sub(1.0, sig))


def _as_batch(x) -> Tensor:
    x = T.as_tensor(x)
    if x.ndim == 1:
        return T.reshape(x, (1, x.shape[0]))
    return x


class Mlp:
    """Fully connected net; silu hidden layers, linear output layer.

    Skip connections add the previous hidden activation to the next one
    (consecutive hidden layers share the same width, so this is always
    well-defined).
    """

    def __init__(self, spec: MlpSpec, rng: np.random.Generator, prefix: str = "mlp"):
        self.spec = spec
        self.prefix = prefix
        self.weights = []
        self.biases = []
        dims = [spec.in_dim] + [spec.width] * spec.depth + [spec.out_dim]
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            w, b = _init_linear(rng, fan_in, fan_out)
            self.weights.append(w)
            self.biases.append(b)

    def parameters(self):
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{self.prefix}.w{i}"] = w
            out[f"{self.prefix}.b{i}"] = b
        return out

    def forward(self, x) -> Tensor:
        if T.as_tensor(x).shape[-1] != self.spec.in_dim:
            raise T.DimensionError(
                f"{self.prefix}: expected input dim {self.spec.in_dim}, "
                f"got {T.as_tensor(x).shape}")
        h = _as_batch(x)
        n_layers = len(self.weights)
        prev_hidden: Optional[Tensor] = None
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            s = T.matmul(h, w) + b
            if i == n_layers - 1:
                h = s  # linear output
            else:
                a = T.silu(s)
                if self.spec.skip and prev_hidden is not None:
                    a = a + prev_hidden
                prev_hidden = a
                h = a
        return h

    def forward_with_tangent(self, x, dx):
        """Returns (f(x), d f(x)[dx]) with both differentiable in the weights."""
        h = _as_batch(x)
        dh = _as_batch(dx)
        n_layers = len(self.weights)
        prev_hidden = prev_tangent = None
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            s = T.matmul(h, w) + b
            ds = T.matmul(dh, w)
            if i == n_layers - 1:
                h, dh = s, ds
            else:
                a = T.silu(s)
                da = _silu_slope(s) * ds
                if self.spec.skip and prev_hidden is not None:
                    a = a + prev_hidden
                    da = da + prev_tangent
                prev_hidden, prev_tangent = a, da
                h, dh = a, da
        return h, dh


def quad_aug(z: Tensor) -> Tensor:
    """[z; z kron z] along the trailing axis."""
    return T.concat([z, T.kron_self(z)], axis=-1)


def _quad_aug_tangent(z: Tensor, dz: Tensor) -> Tensor:
    n = z.shape[-1]
    batch = z.shape[:-1]
    za = T.reshape(z, batch + (n, 1))
    zb = T.reshape(z, batch + (1, n))
    da = T.reshape(dz, batch + (n, 1))
    db = T.reshape(dz, batch + (1, n))
    dk = T.reshape(da * zb + za * db, batch + (n * n,))
    return T.concat([dz, dk], axis=-1)


@dataclass
class MlpAutoencoder:
    """Encoder x -> z and decoder z -> x, both skip-connected MLPs."""

    encoder: Mlp
    decoder: Mlp

    @classmethod
    def create(cls, state_dim: int, latent_dim: int, width: int,
               depth: int = 3, seed: int = 0):
        rng = np.random.default_rng(seed)
        enc = Mlp(MlpSpec(state_dim, latent_dim, width, depth), rng, "encoder")
        dec = Mlp(MlpSpec(latent_dim, state_dim, width, depth), rng, "decoder")
        return cls(enc, dec)

    @property
    def state_dim(self):
        return self.encoder.spec.in_dim

    @property
    def latent_dim(self):
        return self.encoder.spec.out_dim

    def parameters(self):
        out = self.encoder.parameters()
        out.update(self.decoder.parameters())
        return out

    def encode(self, x) -> Tensor:
        return self.encoder.forward(x)

    def decode(self, z) -> Tensor:
        return self.decoder.forward(z)

    def encode_with_tangent(self, x, dx):
        return self.encoder.forward_with_tangent(x, dx)

    def decode_with_tangent(self, z, dz):
        return self.decoder.forward_with_tangent(z, dz)

    def encode_np(self, x: np.ndarray) -> np.ndarray:
        return self.encode(np.atleast_2d(x)).data

    def decode_np(self, z: np.ndarray) -> np.ndarray:
        return self.decode(np.atleast_2d(z)).data


class ConvAutoencoder:
    """1-D convolutional autoencoder with a quad-aug decoder head.

    Encoder: stride-2 convolutions with silu, flatten, linear to the latent.
    Decoder: quad-aug, linear back to the flattened conv shape, silu, then
    transposed convolutions mirroring the encoder (linear final layer).
    """

    def __init__(self, spec: ConvAeSpec, seed: int = 0):
        self.spec = spec
        rng = np.random.default_rng(seed)
        ch = spec.channels
        K = spec.kernel
        self.enc_w, self.enc_b = [], []
        for cin, cout in zip(ch[:-1], ch[1:]):
            fan_in = cin * K
            bound = 1.0 / np.sqrt(fan_in)
            self.enc_w.append(Tensor(
                rng.uniform(-bound, bound, (cout, cin, K)), requires_grad=True))
            self.enc_b.append(Tensor(
                rng.uniform(-bound, bound, (cout, 1)), requires_grad=True))
        self.enc_lin_w, self.enc_lin_b = _init_linear(
            rng, spec.flat_dim, spec.latent_dim)
        aug_dim = spec.latent_dim + (spec.latent_dim ** 2 if spec.quad_aug else 0)
        self.dec_lin_w, self.dec_lin_b = _init_linear(rng, aug_dim, spec.flat_dim)
        self.dec_w, self.dec_b = [], []
        for cin, cout in zip(ch[:0:-1], ch[-2::-1]):
            fan_in = cin * K
            bound = 1.0 / np.sqrt(fan_in)
            self.dec_w.append(Tensor(
                rng.uniform(-bound, bound, (cin, cout, K)), requires_grad=True))
            self.dec_b.append(Tensor(
                rng.uniform(-bound, bound, (cout, 1)), requires_grad=True))

    @property
    def state_dim(self):
        return self.spec.input_length

    @property
    def latent_dim(self):
        return self.spec.latent_dim

    def parameters(self):
        out = {}
        for i, (w, b) in enumerate(zip(self.enc_w, self.enc_b)):
            out[f"encoder.conv{i}.w"] = w
            out[f"encoder.conv{i}.b"] = b
        out["encoder.lin.w"] = self.enc_lin_w
        out["encoder.lin.b"] = self.enc_lin_b
        out["decoder.lin.w"] = self.dec_lin_w
        out["decoder.lin.b"] = self.dec_lin_b
        for i, (w, b) in enumerate(zip(self.dec_w, self.dec_b)):
            out[f"decoder.convT{i}.w"] = w
            out[f"decoder.convT{i}.b"] = b
        return out

    def encode(self, u) -> Tensor:
        z, _ = self._encode(u, tangent=None)
        return z

    def encode_with_tangent(self, u, du):
        return self._encode(u, tangent=T.as_tensor(du))

    def _encode(self, u, tangent):
        u = _as_batch(u)
        if u.shape[-1] != self.spec.input_length:
            raise T.DimensionError(
                f"conv encoder: expected length {self.spec.input_length}, "
                f"got {u.shape}")
        N = u.shape[0]
        h = T.reshape(u, (N, 1, self.spec.input_length))
        dh = None
        if tangent is not None:
            dh = T.reshape(_as_batch(tangent), (N, 1, self.spec.input_length))
        s_, p_ = self.spec.stride, self.spec.padding
        for w, b in zip(self.enc_w, self.enc_b):
            s = T.conv1d(h, w, stride=s_, padding=p_) + b
            h = T.silu(s)
            if dh is not None:
                dh = _silu_slope(s) * T.conv1d(dh, w, stride=s_, padding=p_)
        h = T.reshape(h, (N, self.spec.flat_dim))
        z = T.matmul(h, self.enc_lin_w) + self.enc_lin_b
        dz = None
        if dh is not None:
            dh = T.reshape(dh, (N, self.spec.flat_dim))
            dz = T.matmul(dh, self.enc_lin_w)
        return z, dz

    def decode(self, z) -> Tensor:
        z = _as_batch(z)
        N = z.shape[0]
        if self.spec.quad_aug:
            z = quad_aug(z)
        h = T.silu(T.matmul(z, self.dec_lin_w) + self.dec_lin_b)
        lengths = self.spec.conv_lengths()
        h = T.reshape(h, (N, self.spec.channels[-1], lengths[-1]))
        s_, p_ = self.spec.stride, self.spec.padding
        last = len(self.dec_w) - 1
        for i, (w, b) in enumerate(zip(self.dec_w, self.dec_b)):
            h = T.conv_transpose1d(h, w, stride=s_, padding=p_) + b
            if i != last:
                h = T.silu(h)
        return T.reshape(h, (N, self.spec.input_length))

    def encode_np(self, u: np.ndarray) -> np.ndarray:
        return self.encode(np.atleast_2d(u)).data

    def decode_np(self, z: np.ndarray) -> np.ndarray:
        return self.decode(np.atleast_2d(z)).data


def encoder_jacobian(net, x: np.ndarray) -> np.ndarray:
    """d z / d x at a single state, one reverse pass per latent component."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise T.DimensionError(f"encoder_jacobian expects a vector, got {x.shape}")
    leaf = Tensor(x, requires_grad=True)
    z = net.encode(leaf)
    z1 = T.reshape(z, (z.shape[-1],))
    return T.jacobian(z1, leaf)


# ---------------------------------------------------------------------------
# checkpoint container (JSON, name -> shape + row-major values)

def params_to_dict(net) -> dict:
    entries = {}
    for name, t in net.parameters().items():
        entries[name] = {"shape": list(t.data.shape),
                         "values": t.data.ravel().tolist()}
    if isinstance(net, MlpAutoencoder):
        meta = {"kind": "mlp_autoencoder",
                "encoder": asdict(net.encoder.spec),
                "decoder": asdict(net.decoder.spec)}
    else:
        meta = {"kind": "conv_autoencoder", "spec": asdict(net.spec)}
    return {"version": CHECKPOINT_VERSION, "net": meta, "params": entries}


def params_from_dict(d: dict):
    if d.get("version") != CHECKPOINT_VERSION:
        raise ConfigurationError(f"unsupported checkpoint version {d.get('version')}")
    meta = d["net"]
    if meta["kind"] == "mlp_autoencoder":
        rng = np.random.default_rng(0)
        enc = Mlp(MlpSpec(**meta["encoder"]), rng, "encoder")
        dec = Mlp(MlpSpec(**meta["decoder"]), rng, "decoder")
        net = MlpAutoencoder(enc, dec)
    elif meta["kind"] == "conv_autoencoder":
        spec = meta["spec"]
        spec["channels"] = tuple(spec["channels"])
        net = ConvAutoencoder(ConvAeSpec(**spec))
    else:
        raise ConfigurationError(f"unknown net kind {meta['kind']!r}")
    params = net.parameters()
    for name, entry in d["params"].items():
        if name not in params:
            raise ConfigurationError(f"unexpected parameter {name!r} in checkpoint")
        arr = np.array(entry["values"], dtype=np.float64).reshape(entry["shape"])
        if arr.shape != params[name].data.shape:
            raise ConfigurationError(
                f"parameter {name!r}: checkpoint shape {arr.shape} "
                f"!= expected {params[name].data.shape}")
        params[name].data = arr
    return net


def save_params(net, path):
    with open(path, "w") as fh:
        json.dump(params_to_dict(net), fh)


def load_params(path):
    with open(path) as fh:
        return params_from_dict(json.load(fh))
