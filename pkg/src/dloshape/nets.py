"""From-scratch MLP with input re-concatenation at every hidden layer.

Each hidden layer sees [previous activation | raw network input], is
batch-normalized before its ReLU, and dropout-masked after it during
training.  Forward passes return a cache that the matching backward pass
consumes; gradients are exact (they are checked against finite differences
in the test suite), with batch-norm backward handling the train-mode batch
statistics coupling.

All parameters (and their gradients) are views into one contiguous vector
per network, so the optimizer and the target-network updates run as single
whole-array operations.  Forward/backward also work out of preallocated
per-batch-size scratch, which means a network supports one in-flight forward
at a time: run backward (or discard the cache) before the next forward of
the same network.  The training loop and the inference helpers respect this
by construction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BN_EPS = 1e-5
BN_MOMENTUM = 0.01  # running-statistics update fraction per train batch


@dataclass(frozen=True)
class D2rlNetSpec:
    input_dim: int
    output_dim: int
    hidden_layers: int = 4
    hidden_width: int = 256
    dropout_rate: float = 0.5
    batch_norm: bool = True

    def layer_input_dim(self, k: int) -> int:
        if k == 0:
            return self.input_dim
        return self.hidden_width + self.input_dim


def _layout(spec: D2rlNetSpec) -> tuple:
    """(param entries, buffer entries) as (name, shape) lists."""
    params, buffers = [], []
    w = spec.hidden_width
    for k in range(spec.hidden_layers):
        params.append((f"l{k}.w", (spec.layer_input_dim(k), w)))
        params.append((f"l{k}.b", (w,)))
        if spec.batch_norm:
            params.append((f"l{k}.gamma", (w,)))
            params.append((f"l{k}.beta", (w,)))
            buffers.append((f"l{k}.running_mean", (w,)))
            buffers.append((f"l{k}.running_var", (w,)))
    params.append(("out.w", (w, spec.output_dim)))
    params.append(("out.b", (spec.output_dim,)))
    return params, buffers


def _views(flat: np.ndarray, entries: list) -> dict:
    views = {}
    offset = 0
    for name, shape in entries:
        size = int(np.prod(shape))
        views[name] = flat[offset:offset + size].reshape(shape)
        offset += size
    return views


class Adam:
    """Optimizer over one network's flat parameter vector."""

    def __init__(self, size: int, lr: float, beta1=0.9, beta2=0.999, eps=1e-8,
                 dtype=np.float64):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = np.zeros(size, dtype=dtype)
        self.v = np.zeros(size, dtype=dtype)
        self._s = np.empty(size, dtype=dtype)

    def step(self, params_flat: np.ndarray, grads_flat: np.ndarray):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        step_size = self.lr / (1.0 - b1**self.t)
        inv_sqrt_bias2 = 1.0 / np.sqrt(1.0 - b2**self.t)
        m, v, s = self.m, self.v, self._s
        m *= b1
        np.multiply(grads_flat, 1.0 - b1, out=s)
        m += s
        v *= b2
        np.multiply(grads_flat, grads_flat, out=s)
        s *= 1.0 - b2
        v += s
        # params -= lr * mhat / (sqrt(vhat) + eps)
        np.sqrt(v, out=s)
        s *= inv_sqrt_bias2
        s += self.eps
        np.divide(m, s, out=s)
        s *= step_size
        params_flat -= s


class D2rlNetwork:
    """Parameters plus forward/backward for one network."""

    def __init__(self, spec: D2rlNetSpec, rng: np.random.Generator | None = None,
                 dtype=np.float64, zero: bool = False):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        param_entries, buffer_entries = _layout(spec)
        self.flat_params = np.zeros(
            sum(int(np.prod(s)) for _, s in param_entries), dtype=self.dtype)
        self.flat_buffers = np.zeros(
            sum(int(np.prod(s)) for _, s in buffer_entries), dtype=self.dtype)
        self.flat_grads = np.zeros_like(self.flat_params)
        self.params = _views(self.flat_params, param_entries)
        self.buffers = _views(self.flat_buffers, buffer_entries)
        self._grads = _views(self.flat_grads, param_entries)

        w = spec.hidden_width
        for k in range(spec.hidden_layers):
            fan_in = spec.layer_input_dim(k)
            if not (zero or rng is None):
                self.params[f"l{k}.w"][...] = rng.normal(
                    0.0, np.sqrt(2.0 / fan_in), size=(fan_in, w))
            if spec.batch_norm:
                self.params[f"l{k}.gamma"][...] = 1.0
                self.buffers[f"l{k}.running_var"][...] = 1.0
        if not (zero or rng is None):
            self.params["out.w"][...] = rng.uniform(
                -3e-3, 3e-3, size=(w, spec.output_dim))
        self._scratch: dict[int, dict] = {}

    def param_names(self):
        return list(self.params.keys())

    # -- scratch management --------------------------------------------------

    def _workspace(self, batch: int) -> dict:
        ws = self._scratch.get(batch)
        if ws is not None:
            return ws
        spec = self.spec
        w = spec.hidden_width
        dt = self.dtype
        layers = []
        for k in range(spec.hidden_layers):
            fan_in = spec.layer_input_dim(k)
            layers.append({
                "u": None if k == 0 else np.empty((batch, fan_in), dtype=dt),
                "z": np.empty((batch, w), dtype=dt),
                "xhat": np.empty((batch, w), dtype=dt),
                "act": np.empty((batch, w), dtype=dt),
                "relu": np.empty((batch, w), dtype=bool),
                "rand": np.empty((batch, w), dtype=dt),
                "drop": np.empty((batch, w), dtype=bool),
                "du": np.empty((batch, fan_in), dtype=dt),
            })
        ws = {
            "layers": layers,
            "out": np.empty((batch, spec.output_dim), dtype=dt),
            "da": np.empty((batch, w), dtype=dt),
            "dx": np.empty((batch, spec.input_dim), dtype=dt),
        }
        self._scratch[batch] = ws
        return ws

    # -- forward ---------------------------------------------------------------

    def forward(self, x: np.ndarray, train: bool, dropout_rng=None):
        """Returns (output, cache).  x is (B, input_dim)."""
        spec = self.spec
        x = np.ascontiguousarray(x, dtype=self.dtype)
        b = x.shape[0]
        ws = self._workspace(b)
        cache = {"x": x, "train": train, "bn": []}
        h = x
        for k in range(spec.hidden_layers):
            lws = ws["layers"][k]
            if k == 0:
                u = x
            else:
                u = lws["u"]
                u[:, : spec.hidden_width] = h
                u[:, spec.hidden_width:] = x
            z = lws["z"]
            np.matmul(u, self.params[f"l{k}.w"], out=z)
            z += self.params[f"l{k}.b"]
            if spec.batch_norm:
                cache["bn"].append(self._bn_forward(k, z, lws, train, b))
            act = lws["act"] if spec.batch_norm else z
            np.greater(act, 0.0, out=lws["relu"])
            np.maximum(act, 0.0, out=act)
            if train and spec.dropout_rate > 0.0:
                keep = 1.0 - spec.dropout_rate
                self._dropout_mask(lws, dropout_rng)
                np.multiply(act, lws["drop"], out=act)
                act *= 1.0 / keep
            h = act
        out = ws["out"]
        np.matmul(h, self.params["out.w"], out=out)
        out += self.params["out.b"]
        cache["h_last"] = h
        cache["batch"] = b
        return out, cache

    def _dropout_mask(self, lws: dict, rng):
        """Fill lws['drop'] with keep decisions.

        Rates that are a multiple of 1/256 (the default 0.5 included) draw one
        random byte per unit, which is much cheaper than float sampling; other
        rates fall back to uniform floats.
        """
        drop = lws["drop"]
        scaled = (1.0 - self.spec.dropout_rate) * 256.0
        if scaled == round(scaled):
            raw = np.frombuffer(rng.bytes(drop.size), dtype=np.uint8)
            np.less(raw.reshape(drop.shape), int(round(scaled)), out=drop)
        else:
            if self.dtype == np.float32:
                rng.random(out=lws["rand"], dtype=np.float32)
            else:
                rng.random(out=lws["rand"])
            np.less(lws["rand"], 1.0 - self.spec.dropout_rate, out=drop)

    def _bn_forward(self, k: int, z: np.ndarray, lws: dict, train: bool, b: int):
        gamma = self.params[f"l{k}.gamma"]
        beta = self.params[f"l{k}.beta"]
        xhat = lws["xhat"]
        if train:
            mu = z.mean(axis=0)
            np.subtract(z, mu, out=xhat)
            var = np.einsum("ij,ij->j", xhat, xhat) / b
            rm = self.buffers[f"l{k}.running_mean"]
            rv = self.buffers[f"l{k}.running_var"]
            rm *= 1.0 - BN_MOMENTUM
            rm += BN_MOMENTUM * mu
            rv *= 1.0 - BN_MOMENTUM
            rv += BN_MOMENTUM * var
        else:
            var = self.buffers[f"l{k}.running_var"]
            np.subtract(z, self.buffers[f"l{k}.running_mean"], out=xhat)
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        xhat *= inv_std
        act = lws["act"]
        np.multiply(xhat, gamma, out=act)
        act += beta
        return {"inv_std": inv_std, "train": train}

    # -- backward ----------------------------------------------------------------

    def backward(self, cache: dict, grad_out: np.ndarray):
        """Returns (grads dict, grad wrt the raw input x).

        The grads dict views the network's flat gradient vector; both it and
        the input gradient live in scratch storage, so consume them before
        the next backward of this network.
        """
        spec = self.spec
        b = cache["batch"]
        ws = self._workspace(b)
        grads = self._grads
        h = cache["h_last"]
        np.matmul(h.T, grad_out, out=grads["out.w"])
        np.sum(grad_out, axis=0, out=grads["out.b"])
        da = ws["da"]
        np.matmul(grad_out, self.params["out.w"].T, out=da)
        dx = ws["dx"]
        dx.fill(0.0)
        for k in range(spec.hidden_layers - 1, -1, -1):
            lws = ws["layers"][k]
            if cache["train"] and spec.dropout_rate > 0.0:
                keep = 1.0 - spec.dropout_rate
                np.multiply(da, lws["drop"], out=da)
                da *= 1.0 / keep
            np.multiply(da, lws["relu"], out=da)
            if spec.batch_norm:
                self._bn_backward(k, cache["bn"][k], lws, da, grads, b)
            u = cache["x"] if k == 0 else lws["u"]
            np.matmul(u.T, da, out=grads[f"l{k}.w"])
            np.sum(da, axis=0, out=grads[f"l{k}.b"])
            du = lws["du"]
            np.matmul(da, self.params[f"l{k}.w"].T, out=du)
            if k == 0:
                dx += du
            else:
                dx += du[:, spec.hidden_width:]
                np.copyto(da, du[:, : spec.hidden_width])
        return grads, dx

    def _bn_backward(self, k: int, bn_cache: dict, lws: dict, da: np.ndarray,
                     grads: dict, b: int):
        """In place: da enters as d(bn output), leaves as d(z)."""
        gamma = self.params[f"l{k}.gamma"]
        xhat = lws["xhat"]
        inv_std = bn_cache["inv_std"]
        np.einsum("ij,ij->j", da, xhat, out=grads[f"l{k}.gamma"])
        np.sum(da, axis=0, out=grads[f"l{k}.beta"])
        np.multiply(da, gamma, out=da)  # now d(xhat)
        if not bn_cache["train"]:
            da *= inv_std
            return
        sum_d = da.sum(axis=0)
        sum_dx = np.einsum("ij,ij->j", da, xhat)
        da *= float(b)
        da -= sum_d
        np.multiply(xhat, sum_dx, out=xhat)  # xhat is spent for this layer
        da -= xhat
        da *= inv_std / b

    # -- state management ---------------------------------------------------

    def state_items(self):
        """(name, array) pairs for parameters then buffers, fixed order."""
        for name in self.params:
            yield name, self.params[name]
        for name in self.buffers:
            yield name, self.buffers[name]

    def set_tensor(self, name: str, value: np.ndarray):
        target = self.params.get(name)
        if target is None:
            target = self.buffers.get(name)
        if target is None or target.shape != tuple(value.shape):
            raise KeyError(f"no tensor {name!r} of shape {getattr(value, 'shape', None)}")
        target[...] = value

    def copy(self) -> "D2rlNetwork":
        twin = D2rlNetwork(self.spec, rng=None, dtype=self.dtype, zero=True)
        twin.flat_params[...] = self.flat_params
        twin.flat_buffers[...] = self.flat_buffers
        return twin

    def polyak_from(self, live: "D2rlNetwork", tau: float):
        """theta' <- tau*theta + (1-tau)*theta' for parameters and buffers."""
        self.flat_params *= 1.0 - tau
        self.flat_params += tau * live.flat_params
        self.flat_buffers *= 1.0 - tau
        self.flat_buffers += tau * live.flat_buffers
