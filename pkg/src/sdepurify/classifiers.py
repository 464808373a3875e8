"""Toy datasets and classifiers the purifier defends.

2-D datasets keep every experiment fast and the geometry plottable; the
code is dimension-general.  Classifiers are a single affine map or a small
tanh MLP trained by cross-entropy SGD, with hand-rolled input gradients so
attacks can differentiate through them.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, TrainingDivergenceError
from .nn import Mlp, load_mlp, save_mlp

_GENERATORS = ("two-gaussians", "two-moons", "rings")


@dataclass
class ToyDataset:
    points: np.ndarray
    labels: np.ndarray
    generator: str
    seed: int


def make_dataset(kind, n, seed, offset=2.0, noise=0.1):
    """Deterministic dataset for (kind, seed, n)."""
    rng = np.random.default_rng(seed)
    half = n // 2
    if kind == "two-gaussians":
        means = np.array([[-offset, 0.0], [offset, 0.0]])
        labels = np.repeat([0, 1], [n - half, half])
        pts = means[labels] + rng.standard_normal((n, 2))
    elif kind == "two-moons":
        th = rng.uniform(0.0, np.pi, size=n)
        labels = np.repeat([0, 1], [n - half, half])
        x = np.where(labels == 0, np.cos(th), 1.0 - np.cos(th))
        y = np.where(labels == 0, np.sin(th), 0.5 - np.sin(th))
        pts = np.stack([x, y], axis=1) + noise * rng.standard_normal((n, 2))
    elif kind == "rings":
        th = rng.uniform(0.0, 2.0 * np.pi, size=n)
        labels = np.repeat([0, 1], [n - half, half])
        r = np.where(labels == 0, 1.0, 2.0)
        pts = (r[:, None] * np.stack([np.cos(th), np.sin(th)], axis=1)
               + noise * rng.standard_normal((n, 2)))
    else:
        raise ContractError(f"unknown generator {kind!r}; choose from {_GENERATORS}")
    perm = rng.permutation(n)
    return ToyDataset(pts[perm], labels[perm].astype(int), kind, seed)


class ToyClassifier:
    """Linear or small-MLP logits with argmax prediction (first max wins)."""

    def __init__(self, net: Mlp, kind):
        self.net = net
        self.kind = kind
        self.n_classes = net.dims[-1]

    def logits(self, x):
        return self.net.forward(np.atleast_2d(np.asarray(x, dtype=float)))

    def predict(self, x):
        return np.argmax(self.logits(x), axis=1)

    @staticmethod
    def _softmax(logits):
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)

    def loss_and_input_grad(self, x, labels):
        """Per-sample cross-entropy and its gradient w.r.t. the input."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        labels = np.asarray(labels, dtype=int)
        if labels.shape[0] != x.shape[0]:
            raise ContractError("labels/points length mismatch")
        out, cache = self.net.forward_cache(x)
        p = self._softmax(out)
        idx = np.arange(x.shape[0])
        loss = -np.log(np.maximum(p[idx, labels], 1e-300))
        dlogits = p.copy()
        dlogits[idx, labels] -= 1.0
        _, _, dinput = self.net.backward(dlogits, cache)
        return loss, dinput


def train_classifier(data: ToyDataset, kind="linear", steps=2000, lr=0.1,
                     seed=0, batch_size=128, hidden=32):
    """Cross-entropy SGD; returns (classifier, train_accuracy)."""
    pts, labels = data.points, data.labels
    if pts.size == 0:
        raise ContractError("empty dataset")
    n, d = pts.shape
    n_classes = int(labels.max()) + 1
    rng = np.random.default_rng(seed)
    if kind == "linear":
        net = Mlp([d, n_classes], rng=rng)
    elif kind == "small-mlp":
        net = Mlp([d, hidden, n_classes], rng=rng)
    else:
        raise ContractError(f"unknown classifier kind {kind!r}")
    clf = ToyClassifier(net, kind)
    for step in range(steps):
        idx = rng.integers(0, n, size=min(batch_size, n))
        x, y = pts[idx], labels[idx]
        out, cache = net.forward_cache(x)
        p = ToyClassifier._softmax(out)
        loss = float(-np.log(np.maximum(p[np.arange(len(y)), y], 1e-300)).mean())
        if not np.isfinite(loss):
            raise TrainingDivergenceError(f"classifier loss non-finite at step {step}")
        dlogits = p
        dlogits[np.arange(len(y)), y] -= 1.0
        dws, dbs, _ = net.backward(dlogits / len(y), cache)
        net.sgd_step(dws, dbs, lr)
    train_acc = float((clf.predict(pts) == labels).mean())
    return clf, train_acc


def evaluate_accuracy(model: ToyClassifier, points, labels, defense=None,
                      n_repeats=1, master_seed=0, tag="eval"):
    """Mean accuracy and standard error over defense randomizations.

    With no defense (or a deterministic one) every repeat is identical and
    the standard error is zero.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    labels = np.asarray(labels, dtype=int)
    if labels.shape[0] != points.shape[0]:
        raise ContractError("labels/points length mismatch")
    if n_repeats < 1:
        raise ContractError("n_repeats must be >= 1")
    accs = np.empty(n_repeats)
    for r in range(n_repeats):
        x = points
        if defense is not None:
            x, _ = defense.run_batch(points, master_seed, tag=f"{tag}/{r}")
        accs[r] = float((model.predict(x) == labels).mean())
    return float(accs.mean()), float(accs.std(ddof=0) / np.sqrt(n_repeats))


def save_classifier(path, clf: ToyClassifier):
    save_mlp(path, clf.net, extra={"kind": "classifier", "clf_kind": clf.kind})


def load_classifier(path) -> ToyClassifier:
    net, fields = load_mlp(path)
    if fields.get("kind") != "classifier":
        raise ContractError(f"{path} is not a saved classifier")
    return ToyClassifier(net, fields["clf_kind"])


def save_dataset(path, data: ToyDataset):
    d = data.points.shape[1]
    header = ",".join([f"x_{j}" for j in range(d)] + ["label"])
    rows = [header]
    for x, y in zip(data.points, data.labels):
        rows.append(",".join(repr(float(v)) for v in x) + f",{y}")
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")


def load_points(path):
    """CSV with x_0..x_{d-1}[,label] columns -> (points, labels-or-None)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        body = [ln.strip().split(",") for ln in fh if ln.strip()]
    has_label = header[-1] == "label"
    raw = np.array([[float(v) for v in row] for row in body])
    if has_label:
        return raw[:, :-1], raw[:, -1].astype(int)
    return raw, None
