"""Dense ReLU regressor with explicit forward/backward passes, and Adam.

The network maps ``x`` through ReLU hidden layers to a feature vector ``z``
(the last hidden activation) and then through a linear head to a scalar
prediction. ``backward`` accepts gradients with respect to both the
predictions and the features, so a regularizer acting on ``z`` can inject
its gradient without a general autodiff graph.

Checkpoint format (JSON, version 1)::

    {"format": "ranksim-checkpoint", "version": 1,
     "architecture": {"input_dim": int, "hidden": [int, ...]},
     "tensors": [{"name": str, "shape": [int, ...], "data": [float, ...]}, ...]}

Tensor data is stored flat in C order; floats round-trip exactly.
"""

import json

import numpy as np

__all__ = [
    "RegressorNet",
    "Adam",
    "DivergedError",
    "regression_loss",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_FORMAT = "ranksim-checkpoint"
CHECKPOINT_VERSION = 1


class DivergedError(FloatingPointError):
    """Raised when a non-finite gradient or loss shows up during training."""


class RegressorNet:
    """Feedforward regressor ``x -> z -> y_hat``.

    Parameters are held in ``self.params``, an ordered dict of named arrays:
    ``W{k}``/``b{k}`` for hidden layer ``k`` and ``head_W``/``head_b`` for the
    output head. With ``hidden=()`` the features are the raw inputs and the
    network is linear.
    """

    def __init__(self, input_dim, hidden=(64, 64), seed=0):
        self.input_dim = int(input_dim)
        self.hidden = tuple(int(h) for h in hidden)
        if self.input_dim < 1 or any(h < 1 for h in self.hidden):
            raise ValueError("layer widths must be positive")
        rng = np.random.default_rng(seed)
        self.params = {}
        fan_in = self.input_dim
        for k, width in enumerate(self.hidden):
            bound = np.sqrt(6.0 / fan_in)  # He-uniform
            self.params[f"W{k}"] = rng.uniform(-bound, bound, size=(fan_in, width))
            self.params[f"b{k}"] = np.zeros(width)
            fan_in = width
        bound = np.sqrt(6.0 / (fan_in + 1))  # Xavier-uniform
        self.params["head_W"] = rng.uniform(-bound, bound, size=(fan_in, 1))
        self.params["head_b"] = np.zeros(1)
        self._cache = None

    @property
    def feature_dim(self):
        return self.hidden[-1] if self.hidden else self.input_dim

    @property
    def head_names(self):
        return ("head_W", "head_b")

    def n_parameters(self):
        return int(sum(p.size for p in self.params.values()))

    def forward(self, X):
        """Return ``(features, predictions)`` and cache activations for backward."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ValueError(f"expected input of width {self.input_dim}, got shape {X.shape}")
        acts = [X]
        h = X
        for k in range(len(self.hidden)):
            h = np.maximum(h @ self.params[f"W{k}"] + self.params[f"b{k}"], 0.0)
            acts.append(h)
        pred = (h @ self.params["head_W"])[:, 0] + self.params["head_b"][0]
        self._cache = acts
        return h, pred

    def predict(self, X):
        return self.forward(X)[1]

    def backward(self, grad_pred=None, grad_features=None):
        """Parameter gradients for the most recent ``forward`` call.

        Either upstream may be ``None`` (treated as zero).
        """
        if self._cache is None:
            raise RuntimeError("backward called before forward")
        acts = self._cache
        z = acts[-1]
        n = z.shape[0]
        gp = np.zeros(n) if grad_pred is None else np.asarray(grad_pred, dtype=np.float64).ravel()
        if gp.shape != (n,):
            raise ValueError(f"grad_pred must have shape ({n},), got {gp.shape}")
        grads = {
            "head_W": z.T @ gp[:, None],
            "head_b": np.array([gp.sum()]),
        }
        gz = gp[:, None] * self.params["head_W"][:, 0][None, :]
        if grad_features is not None:
            gf = np.asarray(grad_features, dtype=np.float64)
            if gf.shape != z.shape:
                raise ValueError(f"grad_features must have shape {z.shape}, got {gf.shape}")
            gz = gz + gf
        for k in reversed(range(len(self.hidden))):
            # ReLU'(0) = 0
            gz = gz * (acts[k + 1] > 0)
            grads[f"W{k}"] = acts[k].T @ gz
            grads[f"b{k}"] = gz.sum(axis=0)
            gz = gz @ self.params[f"W{k}"].T
        return {name: grads[name] for name in self.params}

    def get_flat(self):
        return np.concatenate([p.ravel() for p in self.params.values()])

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        i = 0
        for name, p in self.params.items():
            self.params[name] = flat[i : i + p.size].reshape(p.shape).copy()
            i += p.size
        if i != flat.size:
            raise ValueError("flat parameter vector has the wrong length")

    def copy(self):
        other = RegressorNet.__new__(RegressorNet)
        other.input_dim = self.input_dim
        other.hidden = self.hidden
        other.params = {k: v.copy() for k, v in self.params.items()}
        other._cache = None
        return other


class Adam:
    """Bias-corrected Adam with decoupled weight decay.

    Weight decay is applied as ``p -= lr * weight_decay * p`` alongside the
    adaptive step.
    """

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=1e-4):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads, names=None):
        """Update ``params`` in place. ``names`` restricts the update to a subset."""
        names = list(params) if names is None else list(names)
        for name in names:
            if not np.all(np.isfinite(grads[name])):
                raise DivergedError("diverged")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for name in names:
            p, g = params[name], grads[name]
            if g.shape != p.shape:
                raise ValueError(f"gradient shape mismatch for {name}: {g.shape} vs {p.shape}")
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            if self.weight_decay:
                update = update + self.lr * self.weight_decay * p
            params[name] = p - update
        return params


def regression_loss(predictions, targets, weights=None, kind="l1"):
    """Weighted mean of ``|e|`` (``l1``) or ``e**2`` (``mse``), and its gradient.

    The mean divides by the number of samples, not by the weight total.
    """
    p = np.asarray(predictions, dtype=np.float64).ravel()
    t = np.asarray(targets, dtype=np.float64).ravel()
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.size} predictions vs {t.size} targets")
    n = p.size
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64).ravel()
    if w.shape != p.shape:
        raise ValueError(f"length mismatch: {w.size} weights vs {n} predictions")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    e = p - t
    if kind == "l1":
        return float(np.sum(w * np.abs(e)) / n), w * np.sign(e) / n
    if kind == "mse":
        return float(np.sum(w * e * e) / n), 2.0 * w * e / n
    raise ValueError(f"unknown loss kind {kind!r}")


def save_checkpoint(net, path):
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "architecture": {"input_dim": net.input_dim, "hidden": list(net.hidden)},
        "tensors": [
            {"name": name, "shape": list(p.shape), "data": p.ravel().tolist()}
            for name, p in net.params.items()
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_checkpoint(path):
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a ranksim checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    arch = doc["architecture"]
    net = RegressorNet(arch["input_dim"], arch["hidden"])
    for t in doc["tensors"]:
        if t["name"] not in net.params:
            raise ValueError(f"unexpected tensor {t['name']!r}")
        net.params[t["name"]] = np.asarray(t["data"], dtype=np.float64).reshape(t["shape"])
    return net
