"""Reverse-mode automatic differentiation over dense float64 arrays.

A Tensor wraps a numpy array and records, for every operation whose inputs
require gradients, a closure that propagates the output gradient back to the
inputs. `backward` replays those closures in reverse topological order.
Everything is float64; non-finite values are rejected at creation so that a
NaN can only mean a genuine numerical bug downstream.

Conventions:
  - relu'(0) = 0, and sqrt'(0) is taken as 0 (both documented kink choices).
  - Repeated `backward` calls without `zero_grad` accumulate gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, DimensionError, DomainError, NumericError

ACTIVATIONS = ("relu", "tanh", "sigmoid", "identity")


def _as_array(values):
    arr = np.asarray(values, dtype=np.float64)
    if arr.size and not np.all(np.isfinite(arr)):
        raise NumericError("tensor values must be finite")
    return arr


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, values, requires_grad=False):
        self.data = _as_array(values)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        # closures hand over freshly computed arrays (or read-only views that
        # are never mutated), so the first accumulation can take ownership
        if self.grad is None:
            self.grad = np.asarray(g, dtype=np.float64)
        else:
            self.grad = self.grad + g

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _result(data, parents, backward):
        out = Tensor.__new__(Tensor)
        out.data = data
        out.requires_grad = any(p.requires_grad for p in parents)
        out.grad = None
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @staticmethod
    def _lift(x):
        return x if isinstance(x, Tensor) else Tensor(x)

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        other = Tensor._lift(other)
        data = self.data + other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.data.shape))

        return Tensor._result(data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self):
        def backward(g):
            self._accumulate(-g)

        return Tensor._result(-self.data, (self,), backward)

    def __sub__(self, other):
        return self + (-Tensor._lift(other))

    def __rsub__(self, other):
        return Tensor._lift(other) + (-self)

    def __mul__(self, other):
        other = Tensor._lift(other)
        data = self.data * other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.data.shape))

        return Tensor._result(data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._lift(other)
        data = self.data / other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(
                    _unbroadcast(-g * self.data / (other.data * other.data), other.data.shape)
                )

        return Tensor._result(data, (self, other), backward)

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise ContractError("only scalar exponents are supported")
        data = self.data**p

        def backward(g):
            self._accumulate(g * p * self.data ** (p - 1))

        return Tensor._result(data, (self,), backward)

    def matmul(self, other):
        other = Tensor._lift(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise DimensionError("matmul expects 2-D operands")
        if self.data.shape[1] != other.data.shape[0]:
            raise DimensionError(
                f"matmul shapes do not conform: {self.data.shape} @ {other.data.shape}"
            )
        data = self.data @ other.data

        def backward(g):
            if self.requires_grad:
                self._accumulate(g @ other.data.T)
            if other.requires_grad:
                other._accumulate(self.data.T @ g)

        return Tensor._result(data, (self, other), backward)

    __matmul__ = matmul

    # -- elementwise nonlinearities -------------------------------------------

    def exp(self):
        data = np.exp(self.data)
        if not np.all(np.isfinite(data)):
            raise NumericError("exp overflow")

        def backward(g):
            self._accumulate(g * data)

        return Tensor._result(data, (self,), backward)

    def log(self):
        if np.any(self.data <= 0):
            raise DomainError("log requires strictly positive inputs")
        data = np.log(self.data)

        def backward(g):
            self._accumulate(g / self.data)

        return Tensor._result(data, (self,), backward)

    def sqrt(self):
        if np.any(self.data < 0):
            raise DomainError("sqrt requires nonnegative inputs")
        data = np.sqrt(self.data)

        def backward(g):
            # derivative at 0 taken as 0 (kink convention)
            d = np.where(data > 0, 0.5 / np.where(data > 0, data, 1.0), 0.0)
            self._accumulate(g * d)

        return Tensor._result(data, (self,), backward)

    def relu(self):
        data = np.maximum(self.data, 0.0)

        def backward(g):
            self._accumulate(g * (self.data > 0))

        return Tensor._result(data, (self,), backward)

    def tanh(self):
        data = np.tanh(self.data)

        def backward(g):
            self._accumulate(g * (1.0 - data * data))

        return Tensor._result(data, (self,), backward)

    def sigmoid(self):
        # sign-split form saturates cleanly at |x| ~ 1e3 without overflow
        x = self.data
        data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

        def backward(g):
            self._accumulate(g * data * (1.0 - data))

        return Tensor._result(data, (self,), backward)

    def clamp(self, lo, hi):
        data = np.clip(self.data, lo, hi)

        def backward(g):
            self._accumulate(g * ((self.data > lo) & (self.data < hi)))

        return Tensor._result(data, (self,), backward)

    # -- shape ops -------------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        data = self.data.reshape(shape)

        def backward(g):
            self._accumulate(g.reshape(old))

        return Tensor._result(data, (self,), backward)

    def sum(self, axis=None, keepdims=False):
        if axis is not None and self.data.shape[axis] == 0:
            raise DomainError("cannot reduce over an empty axis")
        data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g):
            if axis is None:
                self._accumulate(np.broadcast_to(g, self.data.shape))
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                self._accumulate(np.broadcast_to(gg, self.data.shape))

        return Tensor._result(data, (self,), backward)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.data.shape[axis]
        if n == 0:
            raise DomainError("cannot reduce over an empty axis")
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def gather_rows(self, indices):
        """Rows at `indices` (any multiplicity); backward scatter-adds."""
        idx = np.asarray(indices, dtype=np.intp)
        data = self.data[idx]

        def backward(g):
            out = np.zeros_like(self.data)
            np.add.at(out, idx, g)
            self._accumulate(out)

        return Tensor._result(data, (self,), backward)

    def slice_cols(self, start, stop):
        """Column block [start, stop); backward pads with zeros."""
        if self.data.ndim != 2:
            raise DimensionError("slice_cols expects a 2-D tensor")
        data = self.data[:, start:stop]

        def backward(g):
            out = np.zeros_like(self.data)
            out[:, start:stop] = g
            self._accumulate(out)

        return Tensor._result(data, (self,), backward)

    # -- backward pass -----------------------------------------------------------

    def backward_graph(self):
        """Topologically ordered list of graph nodes ending at self."""
        order, visited, stack = [], set(), [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        return order


def concat(tensors, axis=0):
    tensors = [Tensor._lift(t) for t in tensors]
    if not tensors:
        raise ContractError("concat of an empty list")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, a, b in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(a, b)
                t._accumulate(g[tuple(sl)])

    return Tensor._result(data, tuple(tensors), backward)


def affine(W, b, x):
    """W @ x + b for a single vector x or a batch of row vectors.

    W is (out, in), b is (out,), x is (in,) or (batch, in).
    """
    W, b, x = Tensor._lift(W), Tensor._lift(b), Tensor._lift(x)
    if W.data.ndim != 2 or b.data.ndim != 1 or W.data.shape[0] != b.data.shape[0]:
        raise DimensionError(f"affine parameter shapes do not conform: W{W.shape} b{b.shape}")
    if x.data.ndim == 1:
        if x.data.shape[0] != W.data.shape[1]:
            raise DimensionError(f"affine input {x.shape} does not match W{W.shape}")
        return (x.reshape(1, -1) @ transpose(W) + b).reshape(-1)
    if x.data.ndim == 2:
        if x.data.shape[1] != W.data.shape[1]:
            raise DimensionError(f"affine input {x.shape} does not match W{W.shape}")
        return x @ transpose(W) + b
    raise DimensionError("affine input must be 1-D or 2-D")


def transpose(x):
    x = Tensor._lift(x)
    if x.data.ndim != 2:
        raise DimensionError("transpose expects a 2-D tensor")
    data = x.data.T

    def backward(g):
        x._accumulate(g.T)

    return Tensor._result(data, (x,), backward)


def activation(kind, x):
    x = Tensor._lift(x)
    if kind == "relu":
        return x.relu()
    if kind == "tanh":
        return x.tanh()
    if kind == "sigmoid":
        return x.sigmoid()
    if kind == "identity":
        return x
    raise ConfigError(f"unknown activation kind: {kind!r}")


def reduce(kind, x, axis=None):
    x = Tensor._lift(x)
    if kind == "mean":
        return x.mean(axis=axis)
    if kind == "sum":
        return x.sum(axis=axis)
    raise ConfigError(f"unknown reduction kind: {kind!r}")


def backward(loss):
    """Populate .grad on every reachable leaf tensor that requires a gradient.

    Interior node gradients are accumulated on .grad while consumers fire,
    then cleared; leaves keep theirs (and accumulate across repeated calls).
    """
    if not isinstance(loss, Tensor):
        raise ContractError("backward expects a Tensor")
    if loss.data.size != 1:
        raise ContractError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return
    order = loss.backward_graph()
    loss._accumulate(np.ones_like(loss.data))
    for node in reversed(order):
        if node._backward is None:
            continue
        g = node.grad
        if g is None:
            continue
        node._backward(g)
        node.grad = None


def _unbroadcast(g, shape):
    """Sum g down to `shape` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_coordinates: int
    excluded: list = field(default_factory=list)  # (param_index, flat_coordinate)


def check_gradients(f, params, eps=1e-5, kink_tol=1e-3, atol=1e-8):
    """Worst central-difference relative error of d f / d params.

    `f` evaluates the scalar loss from the current parameter values. Relative
    error uses max(|analytic|, |numeric|, 1e-12) as denominator. Coordinates
    where the two one-sided differences disagree by more than `kink_tol`
    (relative) sit on a nonsmooth point and are excluded, not failed.
    Coordinates agreeing within `atol` absolutely count as correct without
    entering the relative maximum: central differences on an O(1) loss carry
    ~1e-11 of cancellation noise at eps=1e-5, which would otherwise dominate
    the ratio wherever the true gradient is tiny or exactly zero (e.g. the
    last bias cancelling in a Siamese pair).
    """
    if not (0 < eps <= 1e-2):
        raise DomainError("eps must lie in (0, 1e-2]")
    for p in params:
        p.zero_grad()
    loss = f()
    backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    f0 = float(loss.data)
    if not math.isfinite(f0):
        raise NumericError("loss is not finite")

    report = GradCheckReport(max_rel_error=0.0, n_coordinates=0)
    for pi, p in enumerate(params):
        flat = p.data.reshape(-1)
        for ci in range(flat.size):
            x0 = flat[ci]
            flat[ci] = x0 + eps
            f_plus = float(f().data)
            flat[ci] = x0 - eps
            f_minus = float(f().data)
            flat[ci] = x0
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                raise NumericError("non-finite evaluation during gradient check")
            d_plus = (f_plus - f0) / eps
            d_minus = (f0 - f_minus) / eps
            if abs(d_plus - d_minus) > kink_tol * max(abs(d_plus), abs(d_minus), 1.0):
                report.excluded.append((pi, ci))
                continue
            numeric = (f_plus - f_minus) / (2 * eps)
            a = analytic[pi].reshape(-1)[ci]
            report.n_coordinates += 1
            if abs(a - numeric) <= atol:
                continue
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
            if rel > report.max_rel_error:
                report.max_rel_error = rel
    return report


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: list = field(default_factory=list)
    second_moment: list = field(default_factory=list)

    @classmethod
    def init(cls, params, learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        return cls(
            learning_rate=learning_rate,
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
            step_count=0,
            first_moment=[np.zeros_like(p.data) for p in params],
            second_moment=[np.zeros_like(p.data) for p in params],
        )


def adam_step(params, state):
    """One bias-corrected Adam update, in place, from each param's .grad."""
    if len(state.first_moment) != len(params):
        raise ContractError("Adam state does not match parameter list")
    state.step_count += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step_count
    c2 = 1.0 - b2**state.step_count
    for i, p in enumerate(params):
        g = p.grad
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape or state.first_moment[i].shape != p.data.shape:
            raise ContractError("gradient/state shape mismatch in Adam update")
        m = state.first_moment[i] = b1 * state.first_moment[i] + (1 - b1) * g
        v = state.second_moment[i] = b2 * state.second_moment[i] + (1 - b2) * g * g
        p.data -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params, state


def zero_grads(params):
    for p in params:
        p.zero_grad()
