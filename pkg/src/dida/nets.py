"""Invariant meta-feature architectures.

The main model maps a labeled dataset, seen as a discrete distribution over
feature/label space, to a fixed-length meta-feature vector through:

  1. a dimension-agnostic first layer: every sample pair (i, j) is embedded by
     aggregating a shared map u over feature coordinates, a label-mismatch
     indicator bit is appended once, and a map v mixes the result;
  2. a pairwise layer averaging an affine+activation map over all point pairs;
  3. moment pooling (column means) and three fully connected layers, the last
     one linear.

Invariance to sample order, feature order and class relabeling holds by
construction. Three deep-sets baseline variants over summed features/labels
(linear, nonlinear, equivariant+invariant) share the same output contract.
Checkpoints round-trip through JSON bit-faithfully.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, activation, affine, concat
from .data import LabeledDataset
from .errors import ConfigError, DimensionError, DomainError, FormatError

MODEL_KINDS = ("dida", "dss-linear", "dss-nonlinear", "dss-equivariant")

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ArchConfig:
    kind: str = "dida"
    activation: str = "relu"
    aggregation: str = "sum"  # first-layer aggregation over feature coordinates
    t: int = 8  # per-coordinate pair embedding width
    r: int = 64  # first invariant layer output width
    mid_dim: int = 64  # second invariant layer output width
    head_dims: tuple = (64, 32, 16)  # three FC output widths; last is meta_dim
    hidden: int = 16  # deep-sets inner width
    branch_dim: int = 16  # deep-sets per-branch output width
    channels: int = 8  # equivariant channels

    def __post_init__(self):
        object.__setattr__(self, "head_dims", tuple(self.head_dims))
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if self.activation not in ad.ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.aggregation not in ("sum", "mean"):
            raise ConfigError("aggregation must be sum or mean")
        dims = (self.t, self.r, self.mid_dim, self.hidden, self.branch_dim, self.channels)
        if any(d < 1 for d in dims) or any(d < 1 for d in self.head_dims):
            raise ConfigError("all layer widths must be positive")
        if len(self.head_dims) != 3:
            raise ConfigError("the head has exactly three FC layers")

    @property
    def meta_dim(self):
        return self.head_dims[-1]

    def to_dict(self):
        d = asdict(self)
        d["head_dims"] = list(self.head_dims)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**{**d, "head_dims": tuple(d["head_dims"])})


@dataclass
class AffineLayer:
    w: Tensor  # (out, in)
    b: Tensor  # (out,)
    activation: str = "identity"

    def __call__(self, x):
        return activation(self.activation, affine(self.w, self.b, x))

    def params(self):
        return [self.w, self.b]


@dataclass
class FirstLayerParams:
    a_u: Tensor  # (t, 2)
    b_u: Tensor  # (t,)
    a_v: Tensor  # (r, t+1), the +1 receives the label indicator
    b_v: Tensor  # (r,)
    activation: str = "relu"
    aggregation: str = "sum"

    def params(self):
        return [self.a_u, self.b_u, self.a_v, self.b_v]


@dataclass
class MidLayerParams:
    w: Tensor  # (d_out, 2 * d_in), acting on concatenated point pairs
    b: Tensor
    activation: str = "relu"

    def params(self):
        return [self.w, self.b]


@dataclass
class DidaModel:
    config: ArchConfig
    first: FirstLayerParams
    mid: MidLayerParams
    head: list  # three AffineLayer, last linear

    @property
    def meta_dim(self):
        return self.config.meta_dim

    def named_parameters(self):
        named = {
            "first.a_u": self.first.a_u,
            "first.b_u": self.first.b_u,
            "first.a_v": self.first.a_v,
            "first.b_v": self.first.b_v,
            "mid.w": self.mid.w,
            "mid.b": self.mid.b,
        }
        for i, layer in enumerate(self.head):
            named[f"head.{i}.w"] = layer.w
            named[f"head.{i}.b"] = layer.b
        return named

    def parameters(self):
        return list(self.named_parameters().values())


@dataclass
class DeepSetsBranch:
    """rho(sum_k phi(s[k])) on a summed input vector s, one scalar at a time."""

    phi_layers: list
    rho_layers: list

    def __call__(self, s):
        h = s.reshape(-1, 1)
        for layer in self.phi_layers:
            h = layer(h)
        pooled = h.sum(axis=0)
        for layer in self.rho_layers:
            pooled = layer(pooled)
        return pooled

    def params(self):
        out = []
        for layer in self.phi_layers + self.rho_layers:
            out.extend(layer.params())
        return out


@dataclass
class EquivariantBranch:
    """Per-sample equivariant channels followed by invariant pooling.

    Channel c maps sample row x_i to
      lam1_c x_i + gam1_c sum(x_i) 1 + lam2_c (S - x_i) + gam2_c (sum(S) - sum(x_i)) 1 + beta_c
    with S the sample sum; an activation, sample mean + coordinate sum, and an
    affine map to the branch width follow.
    """

    lam1: Tensor  # (channels,)
    gam1: Tensor
    lam2: Tensor
    gam2: Tensor
    beta: Tensor
    post: AffineLayer  # channels -> branch_dim
    activation: str = "relu"

    def __call__(self, m):
        n, q = m.shape
        rowsum = m.sum(axis=1, keepdims=True)  # (n, 1)
        colsum = m.sum(axis=0, keepdims=True)  # (1, q)
        total = m.sum()
        m3 = m.reshape(n, q, 1)
        rs3 = rowsum.reshape(n, 1, 1)
        cs3 = colsum.reshape(1, q, 1)
        pre = (
            m3 * self.lam1
            + rs3 * self.gam1
            + (cs3 - m3) * self.lam2
            + (total - rowsum).reshape(n, 1, 1) * self.gam2
            + self.beta
        )
        pooled = activation(self.activation, pre).mean(axis=0).sum(axis=0)  # (channels,)
        return self.post(pooled)

    def params(self):
        return [self.lam1, self.gam1, self.lam2, self.gam2, self.beta] + self.post.params()


@dataclass
class DssModel:
    config: ArchConfig
    feature_branch: object
    label_branch: object
    head: list

    @property
    def meta_dim(self):
        return self.config.meta_dim

    def named_parameters(self):
        named = {}
        for prefix, branch in (("feature", self.feature_branch), ("label", self.label_branch)):
            for i, p in enumerate(branch.params()):
                named[f"{prefix}.{i}"] = p
        for i, layer in enumerate(self.head):
            named[f"head.{i}.w"] = layer.w
            named[f"head.{i}.b"] = layer.b
        return named

    def parameters(self):
        return list(self.named_parameters().values())


# ---------------------------------------------------------------------------
# Forward passes
# ---------------------------------------------------------------------------


def first_layer_forward(z: LabeledDataset, p: FirstLayerParams) -> Tensor:
    """Point set of per-sample pair aggregates, shape (n, r)."""
    x = z.features
    n, dx = x.shape
    a = np.repeat(x, n, axis=0).reshape(-1)
    b = np.tile(x, (n, 1)).reshape(-1)
    u_in = Tensor(np.stack([a, b], axis=1))  # (n*n*dx, 2)
    t = p.a_u.shape[0]
    h = activation(p.activation, affine(p.a_u, p.b_u, u_in))
    e = ad.reduce(p.aggregation, h.reshape(n * n, dx, t), axis=1)  # (n^2, t)
    mism = (z.labels[:, None] != z.labels[None, :]).astype(np.float64).reshape(-1, 1)
    e_full = concat([e, Tensor(mism)], axis=1)  # label indicator appended once
    phi = activation(p.activation, affine(p.a_v, p.b_v, e_full))  # (n^2, r)
    return phi.reshape(n, n, p.a_v.shape[0]).mean(axis=1)


def _pair_parts(pts, p):
    """Per-point halves of the pair map: W (p_i; p_j) = W_self p_i + W_other p_j."""
    d = pts.shape[1]
    if p.w.shape[1] != 2 * d:
        raise DimensionError(f"layer expects pairs of {p.w.shape[1] // 2}-vectors, got {d}")
    w_self = p.w.slice_cols(0, d)
    w_other = p.w.slice_cols(d, 2 * d)
    return pts @ ad.transpose(w_self), pts @ ad.transpose(w_other)


def pairwise_layer_forward(points, p: MidLayerParams) -> Tensor:
    """Average an affine+activation map over all point pairs; (n, d_out)."""
    pts = points if isinstance(points, Tensor) else Tensor(points)
    n = pts.shape[0]
    d_out = p.w.shape[0]
    a_part, b_part = _pair_parts(pts, p)
    pre = a_part.reshape(n, 1, d_out) + b_part.reshape(1, n, d_out) + p.b
    return activation(p.activation, pre).mean(axis=1)


def localized_pairwise_forward(points, p: MidLayerParams, k_neighbors: int) -> Tensor:
    """Like the pairwise layer but averaging only over the k nearest points.

    Neighbors use Euclidean distance with ties broken by index; selected
    indices are aggregated in ascending order so k = n reproduces the full
    layer bit-exactly.
    """
    pts = points if isinstance(points, Tensor) else Tensor(points)
    n = pts.shape[0]
    if not 1 <= k_neighbors <= n:
        raise DomainError(f"k_neighbors must lie in [1, {n}], got {k_neighbors}")
    d = pts.data
    dist = np.sqrt(((d[:, None, :] - d[None, :, :]) ** 2).sum(axis=2))
    order = np.argsort(dist, axis=1, kind="stable")
    nbrs = np.sort(order[:, :k_neighbors], axis=1)
    ii = np.repeat(np.arange(n), k_neighbors)
    jj = nbrs.reshape(-1)
    d_out = p.w.shape[0]
    a_part, b_part = _pair_parts(pts, p)
    pre = a_part.gather_rows(ii) + b_part.gather_rows(jj) + p.b
    return activation(p.activation, pre).reshape(n, k_neighbors, d_out).mean(axis=1)


def moment_pool(points) -> Tensor:
    pts = points if isinstance(points, Tensor) else Tensor(points)
    return pts.mean(axis=0)


def dida_forward(z: LabeledDataset, model: DidaModel) -> Tensor:
    h = first_layer_forward(z, model.first)
    h = pairwise_layer_forward(h, model.mid)
    v = moment_pool(h)
    for layer in model.head:
        v = layer(v)
    return v


def one_hot_labels(z: LabeledDataset):
    out = np.zeros((z.n, z.n_classes))
    out[np.arange(z.n), z.labels] = 1.0
    return out


def dss_forward(z: LabeledDataset, model: DssModel) -> Tensor:
    x = Tensor(z.features)
    y = Tensor(one_hot_labels(z))
    if isinstance(model.feature_branch, DeepSetsBranch):
        feats = model.feature_branch(x.sum(axis=0))
        labs = model.label_branch(y.sum(axis=0))
    else:
        feats = model.feature_branch(x)
        labs = model.label_branch(y)
    v = concat([feats, labs], axis=0)
    for layer in model.head:
        v = layer(v)
    return v


def forward(z: LabeledDataset, model) -> Tensor:
    if isinstance(model, DidaModel):
        return dida_forward(z, model)
    return dss_forward(z, model)


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------


def _glorot(rng, out_dim, in_dim):
    s = np.sqrt(6.0 / (in_dim + out_dim))
    return Tensor(rng.uniform(-s, s, size=(out_dim, in_dim)), requires_grad=True)


def _bias(out_dim):
    return Tensor(np.zeros(out_dim), requires_grad=True)


def _vector_param(rng, length):
    # vector parameters follow the fan rule as (length, 1) matrices
    s = np.sqrt(6.0 / (length + 1))
    return Tensor(rng.uniform(-s, s, size=length), requires_grad=True)


def _fc_stack(rng, in_dim, dims, act, last_linear=True):
    layers = []
    for i, out_dim in enumerate(dims):
        kind = "identity" if (last_linear and i == len(dims) - 1) else act
        layers.append(AffineLayer(_glorot(rng, out_dim, in_dim), _bias(out_dim), kind))
        in_dim = out_dim
    return layers


def init_model(config: ArchConfig, seed):
    """Fresh model with uniform(-s, s), s = sqrt(6 / (fan_in + fan_out))."""
    rng = np.random.default_rng(seed)
    act = config.activation
    if config.kind == "dida":
        first = FirstLayerParams(
            a_u=_glorot(rng, config.t, 2),
            b_u=_bias(config.t),
            a_v=_glorot(rng, config.r, config.t + 1),
            b_v=_bias(config.r),
            activation=act,
            aggregation=config.aggregation,
        )
        mid = MidLayerParams(
            w=_glorot(rng, config.mid_dim, 2 * config.r),
            b=_bias(config.mid_dim),
            activation=act,
        )
        head = _fc_stack(rng, config.mid_dim, config.head_dims, act)
        return DidaModel(config, first, mid, head)

    def deep_sets_branch(nonlinear):
        if nonlinear:
            phi = [
                AffineLayer(_glorot(rng, config.hidden, 1), _bias(config.hidden), act),
                AffineLayer(_glorot(rng, config.hidden, config.hidden), _bias(config.hidden), act),
            ]
            rho = [AffineLayer(_glorot(rng, config.branch_dim, config.hidden), _bias(config.branch_dim), act)]
        else:
            phi = [AffineLayer(_glorot(rng, config.hidden, 1), _bias(config.hidden), "identity")]
            rho = [AffineLayer(_glorot(rng, config.branch_dim, config.hidden), _bias(config.branch_dim), "identity")]
        return DeepSetsBranch(phi, rho)

    def equivariant_branch():
        return EquivariantBranch(
            lam1=_vector_param(rng, config.channels),
            gam1=_vector_param(rng, config.channels),
            lam2=_vector_param(rng, config.channels),
            gam2=_vector_param(rng, config.channels),
            beta=_vector_param(rng, config.channels),
            post=AffineLayer(_glorot(rng, config.branch_dim, config.channels), _bias(config.branch_dim), act),
            activation=act,
        )

    if config.kind in ("dss-linear", "dss-nonlinear"):
        nonlinear = config.kind == "dss-nonlinear"
        feature_branch = deep_sets_branch(nonlinear)
        label_branch = deep_sets_branch(nonlinear)
    elif config.kind == "dss-equivariant":
        feature_branch = equivariant_branch()
        label_branch = equivariant_branch()
    else:
        raise ConfigError(f"unknown model kind {config.kind!r}")
    head = _fc_stack(rng, 2 * config.branch_dim, config.head_dims, act)
    return DssModel(config, feature_branch, label_branch, head)


def param_count(model):
    return sum(p.data.size for p in model.parameters())


def match_parameter_budget(target_count, kind, base: ArchConfig):
    """Pick the deep-sets width whose total parameter count is closest to target."""
    best = None
    for hidden in range(2, 257):
        cfg = replace(base, kind=kind, hidden=hidden, channels=max(2, hidden // 2))
        count = param_count(init_model(cfg, seed=0))
        gap = abs(count - target_count)
        if best is None or gap < best[0]:
            best = (gap, cfg)
    return best[1]


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def checkpoint_payload(model, extra=None):
    tensors = {
        name: {
            "shape": list(p.data.shape),
            "values": [format(v, ".17e") for v in p.data.reshape(-1)],
        }
        for name, p in model.named_parameters().items()
    }
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "arch_config": model.config.to_dict(),
        "tensors": tensors,
    }
    if extra:
        payload["meta"] = extra
    return payload


def save_checkpoint(model, path, extra=None):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(checkpoint_payload(model, extra), fh)
        fh.write("\n")
    os.replace(tmp, path)


def model_from_payload(payload):
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise FormatError(
            f"checkpoint format {payload.get('format_version')!r} unsupported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    config = ArchConfig.from_dict(payload["arch_config"])
    model = init_model(config, seed=0)
    named = model.named_parameters()
    stored = payload["tensors"]
    if set(named) != set(stored):
        raise FormatError("checkpoint tensor names do not match the architecture")
    for name, p in named.items():
        entry = stored[name]
        values = np.array([float(v) for v in entry["values"]])
        if list(p.data.shape) != entry["shape"] or values.size != p.data.size:
            raise FormatError(f"checkpoint tensor {name} has wrong shape")
        p.data = values.reshape(p.data.shape)
    return model


def load_checkpoint(path):
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read checkpoint {path}: {exc}") from exc
    return model_from_payload(payload)
