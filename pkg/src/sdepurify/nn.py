"""Tiny fully-connected network with hand-rolled derivatives.

Used for both the trainable score model and the toy classifiers.  Three
derivative paths are provided and each is exact:

* ``backward``  -- reverse-mode gradients for the parameters and the input,
* ``vjp``       -- input gradient only (transposed Jacobian times a vector),
* ``jvp``       -- forward-mode dual-number pass (Jacobian times a vector).

The dual-number pass carries (value, tangent) pairs through every layer:
an affine layer maps (z, dz) to (zW + b, dzW) and tanh maps them to
(tanh(a), (1 - tanh(a)^2) da).
"""

import numpy as np

from .errors import ContractError

_ACTIVATIONS = ("tanh", "identity")


class Mlp:
    """Affine layers with tanh between them (identity after the last)."""

    def __init__(self, dims, rng=None, activation="tanh"):
        if len(dims) < 2:
            raise ContractError("need at least input and output dims")
        if activation not in _ACTIVATIONS:
            raise ContractError(f"unknown activation {activation!r}")
        self.dims = list(dims)
        self.activation = activation
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights = [
            rng.standard_normal((m, n)) / np.sqrt(m)
            for m, n in zip(dims[:-1], dims[1:])
        ]
        self.biases = [np.zeros(n) for n in dims[1:]]

    @property
    def n_layers(self):
        return len(self.weights)

    def _act(self, a):
        return np.tanh(a) if self.activation == "tanh" else a

    def _act_deriv_from_out(self, z):
        return 1.0 - z * z if self.activation == "tanh" else np.ones_like(z)

    def forward(self, x):
        """x: (B, d_in) -> (B, d_out)."""
        z = np.asarray(x, dtype=float)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = z @ w + b
            if i < self.n_layers - 1:
                z = self._act(z)
        return z

    def forward_cache(self, x):
        """Forward pass keeping the post-activation of every layer."""
        z = np.asarray(x, dtype=float)
        cache = [z]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = z @ w + b
            if i < self.n_layers - 1:
                z = self._act(z)
            cache.append(z)
        return z, cache

    def backward(self, dout, cache):
        """Reverse pass.  Returns (dweights, dbiases, dinput)."""
        dws = [None] * self.n_layers
        dbs = [None] * self.n_layers
        delta = np.asarray(dout, dtype=float)
        for i in range(self.n_layers - 1, -1, -1):
            if i < self.n_layers - 1:
                delta = delta * self._act_deriv_from_out(cache[i + 1])
            dws[i] = cache[i].T @ delta
            dbs[i] = delta.sum(axis=0)
            delta = delta @ self.weights[i].T
        return dws, dbs, delta

    def vjp(self, x, u):
        """(d out/d in)^T u, batched: x (B, d_in), u (B, d_out)."""
        _, cache = self.forward_cache(x)
        _, _, dinput = self.backward(u, cache)
        return dinput

    def jvp(self, x, v):
        """(d out/d in) v via a dual-number forward pass, batched."""
        z = np.asarray(x, dtype=float)
        dz = np.asarray(v, dtype=float)
        if z.shape != dz.shape:
            raise ContractError("tangent shape must match input shape")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = z @ w + b
            da = dz @ w
            if i < self.n_layers - 1:
                z = self._act(a)
                dz = self._act_deriv_from_out(z) * da
            else:
                z, dz = a, da
        return dz

    def sgd_step(self, dws, dbs, lr):
        for w, dw in zip(self.weights, dws):
            w -= lr * dw
        for b, db in zip(self.biases, dbs):
            b -= lr * db


def save_mlp(path, net: Mlp, extra=None):
    """Text format: header line, then one 'name rows cols' block per array.

    Header: ``mlp v1 dims=<d0,d1,...> act=<name> [key=value ...]``; arrays
    follow in layer order, row-major, one row per line.  The layout is plain
    text so saved runs stay inspectable and diffable.
    """
    lines = []
    header = f"mlp v1 dims={','.join(str(d) for d in net.dims)} act={net.activation}"
    for key, val in (extra or {}).items():
        header += f" {key}={val}"
    lines.append(header)
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        lines.append(f"W{i} {w.shape[0]} {w.shape[1]}")
        lines.extend(" ".join(repr(float(v)) for v in row) for row in w)
        lines.append(f"b{i} 1 {b.shape[0]}")
        lines.append(" ".join(repr(float(v)) for v in b))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mlp(path):
    """Inverse of save_mlp.  Returns (net, extra-dict)."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    head = lines[0].split()
    if head[:2] != ["mlp", "v1"]:
        raise ContractError(f"not an mlp v1 file: {path}")
    fields = dict(tok.split("=", 1) for tok in head[2:])
    dims = [int(d) for d in fields.pop("dims").split(",")]
    net = Mlp(dims, activation=fields.pop("act"))
    pos = 1
    for i in range(net.n_layers):
        rows, cols = (int(v) for v in lines[pos].split()[1:])
        block = lines[pos + 1 : pos + 1 + rows]
        net.weights[i] = np.array([[float(v) for v in ln.split()] for ln in block])
        assert net.weights[i].shape == (rows, cols)
        pos += 1 + rows
        net.biases[i] = np.array([float(v) for v in lines[pos + 1].split()])
        pos += 2
    return net, fields
