"""Parametric perceptual and action channels with closed-form log-gradients.

The perceptual channel is a bias-free one-hidden-layer network,
``p(x|xi) = softmax(tanh(xi @ V) @ W)``.  The action channel is a multinomial
in natural parameters: for every percept ``x`` the column ``eta[:, x]`` holds
``n = |A| - 1`` logits for actions ``1..n`` while action 0 is the complement
with an implicit logit of zero.
"""

from dataclasses import dataclass

import numpy as np


def _softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class PerceptualNetwork:
    V: np.ndarray  # (d_xi, hidden)
    W: np.ndarray  # (hidden, n_percepts)

    def __post_init__(self):
        self.V = np.asarray(self.V, dtype=float)
        self.W = np.asarray(self.W, dtype=float)
        if self.V.ndim != 2 or self.W.ndim != 2:
            raise ValueError("V and W must be 2-D")
        if self.V.shape[1] != self.W.shape[0]:
            raise ValueError(f"hidden size mismatch: V {self.V.shape}, W {self.W.shape}")

    @property
    def n_inputs(self):
        return self.V.shape[0]

    @property
    def n_hidden(self):
        return self.V.shape[1]

    @property
    def n_percepts(self):
        return self.W.shape[1]

    def copy(self):
        return PerceptualNetwork(self.V.copy(), self.W.copy())

    def _check_input(self, xi):
        xi = np.asarray(xi, dtype=float)
        if xi.shape[-1] != self.n_inputs:
            raise ValueError(f"input has {xi.shape[-1]} components, network expects {self.n_inputs}")
        return xi

    def hidden(self, xi):
        return np.tanh(self._check_input(xi) @ self.V)

    def forward(self, xi):
        """Percept distribution for one input (1-D) or a batch of inputs (2-D)."""
        return _softmax(self.hidden(xi) @ self.W)


@dataclass
class ActionChannel:
    eta: np.ndarray  # (n_actions - 1, n_percepts)

    def __post_init__(self):
        self.eta = np.asarray(self.eta, dtype=float)
        if self.eta.ndim != 2:
            raise ValueError("eta must be 2-D")

    @property
    def n_actions(self):
        return self.eta.shape[0] + 1

    @property
    def n_percepts(self):
        return self.eta.shape[1]

    def copy(self):
        return ActionChannel(self.eta.copy())

    def log_partition(self, x):
        """Psi(eta^x) = log(1 + sum_i exp(eta_i^x)), stabilised."""
        col = self.eta[:, x]
        m = max(0.0, float(col.max(initial=0.0)))
        return m + np.log(np.exp(-m) + np.exp(col - m).sum())

    def table(self):
        """p(a|x) for all percepts, shape (n_percepts, n_actions)."""
        logits = np.vstack([np.zeros((1, self.n_percepts)), self.eta]).T
        probs = _softmax(logits)
        # complement entry defined as one minus the parameterised ones
        probs[:, 0] = 1.0 - probs[:, 1:].sum(axis=1)
        return probs


def perceptual_forward(net, xi):
    return net.forward(xi)


def perceptual_table(net, inputs):
    """p(x|w) for a stack of per-world inputs, shape (n_worlds, n_percepts)."""
    return net.forward(np.atleast_2d(inputs))


def grad_log_perceptual_V(net, xi, x_i):
    """d/dV log p(x_i | xi); same shape as V."""
    xi = net._check_input(xi)
    h = np.tanh(xi @ net.V)
    p = _softmax(h @ net.W)
    dphi = 1.0 - h**2
    # sum_k [1(k=i) - p_k] W[:, k], then chain through tanh
    back = net.W[:, x_i] - net.W @ p
    return np.outer(xi, dphi * back)


def grad_log_perceptual_W(net, xi, x_i):
    """d/dW log p(x_i | xi); column j is (1(i=j) - p_j) * tanh(V^T xi)."""
    h = net.hidden(xi)
    p = _softmax(h @ net.W)
    coeff = -p
    coeff[x_i] += 1.0
    return np.outer(h, coeff)


def action_prob(ch, x):
    """p(.|x) of length n_actions; entry 0 is the complement action."""
    col = ch.eta[:, x]
    psi = ch.log_partition(x)
    probs = np.empty(ch.n_actions)
    probs[1:] = np.exp(col - psi)
    probs[0] = 1.0 - probs[1:].sum()
    return probs


def grad_log_action_eta(ch, x, a):
    """d/d eta^x log p(a|x), length n_actions - 1. Action 0 has no indicator term."""
    probs = action_prob(ch, x)
    grad = -probs[1:]
    if a > 0:
        grad[a - 1] += 1.0
    return grad


def glorot_bound(fan_in, fan_out):
    return np.sqrt(6.0 / (fan_in + fan_out))


def init_glorot(n_inputs, n_hidden, n_percepts, rng):
    """Network with V, W drawn uniformly within the Glorot bound of each layer."""
    bv = glorot_bound(n_inputs, n_hidden)
    bw = glorot_bound(n_hidden, n_percepts)
    V = rng.uniform(-bv, bv, size=(n_inputs, n_hidden))
    W = rng.uniform(-bw, bw, size=(n_hidden, n_percepts))
    return PerceptualNetwork(V, W)


def init_uniform_actions(n_actions, n_percepts):
    return ActionChannel(np.zeros((n_actions - 1, n_percepts)))


def sample_index(probs, u):
    """Inverse-CDF draw from ``probs`` given one uniform ``u`` in [0, 1)."""
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return min(idx, len(probs) - 1)


# --- parameter snapshots --------------------------------------------------


def _fmt(values):
    return " ".join(f"{v:.17g}" for v in np.ravel(values))


def dump_parameters(net, ch):
    """Plain-text snapshot: a dims line, then V, W, eta row-major at 17 digits."""
    lines = [
        f"dims {net.n_inputs} {net.n_hidden} {net.n_percepts} {ch.n_actions}",
        "V",
        *(_fmt(row) for row in net.V),
        "W",
        *(_fmt(row) for row in net.W),
        "eta",
        *(_fmt(row) for row in ch.eta),
    ]
    return "\n".join(lines) + "\n"


def load_parameters(text):
    lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
    head = lines[0].split()
    if head[0] != "dims" or len(head) != 5:
        raise ValueError("snapshot must start with 'dims d_xi hidden n_percepts n_actions'")
    d, h, nx, na = (int(v) for v in head[1:])

    def block(name, start, rows):
        if lines[start] != name:
            raise ValueError(f"expected section {name!r}, got {lines[start]!r}")
        body = [[float(v) for v in ln.split()] for ln in lines[start + 1 : start + 1 + rows]]
        return np.array(body, dtype=float), start + 1 + rows

    V, pos = block("V", 1, d)
    W, pos = block("W", pos, h)
    eta, pos = block("eta", pos, na - 1)
    if V.shape != (d, h) or W.shape != (h, nx) or eta.shape != (na - 1, nx):
        raise ValueError("snapshot block shapes disagree with dims line")
    return PerceptualNetwork(V, W), ActionChannel(eta)
