"""Minimal numerical core: dense ops, GCN layer, attention pooling, GRU cell,
Gumbel-Softmax, and hand-written reverse-mode gradients.

Matrices and vectors are plain float64 numpy arrays. Forward functions come in
two flavours: validated single-call wrappers matching the documented
signatures, and cached variants that tolerate leading batch dimensions and
return what the matching ``*_backward`` function needs. The architecture is
static, so gradients are chained per operation rather than through a tape.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericalError, StructuralError

CHECKPOINT_FORMAT_VERSION = 1


def require_finite(arr: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{what} contains non-finite entries")
    return arr


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    ex = np.exp(shifted)
    return ex / np.sum(ex, axis=axis, keepdims=True)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def outer_sum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Sum of outer products over all leading dims: (..., p), (..., q) -> (p, q)."""
    a2 = np.ascontiguousarray(a).reshape(-1, a.shape[-1])
    b2 = np.ascontiguousarray(b).reshape(-1, b.shape[-1])
    return a2.T @ b2


def lead_sum(a: np.ndarray) -> np.ndarray:
    """Sum over all leading dims: (..., p) -> (p,)."""
    return np.ascontiguousarray(a).reshape(-1, a.shape[-1]).sum(axis=0)


class ParamStore:
    """Named parameter arrays with matching gradient accumulators."""

    def __init__(self):
        self._params: dict[str, np.ndarray] = {}
        self._grads: dict[str, np.ndarray] = {}

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self._params:
            raise ConfigurationError(f"parameter {name!r} already registered")
        arr = np.array(value, dtype=float)
        self._params[name] = arr
        self._grads[name] = np.zeros_like(arr)
        return arr

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def param(self, name: str) -> np.ndarray:
        return self._params[name]

    def grad(self, name: str) -> np.ndarray:
        return self._grads[name]

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grad(self) -> None:
        for g in self._grads.values():
            g[...] = 0.0

    def n_params(self) -> int:
        return sum(p.size for p in self._params.values())

    def as_arrays(self) -> dict[str, np.ndarray]:
        return dict(self._params)


def glorot_uniform(shape, fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


# ---------------------------------------------------------------------------
# Graph operations
# ---------------------------------------------------------------------------


def normalize_adjacency(edges, n: int) -> np.ndarray:
    """Symmetrically normalized adjacency with self-loops.

    Returns D^{-1/2} (A + I) D^{-1/2} where D is the degree matrix of A + I.
    """
    if n < 1:
        raise StructuralError("node count must be positive")
    a_hat = np.eye(n)
    for u, v in edges:
        u, v = int(u), int(v)
        if u == v:
            raise StructuralError(f"self-edge ({u},{v}) not allowed")
        if not (0 <= u < n and 0 <= v < n):
            raise StructuralError(f"edge ({u},{v}) out of range for n={n}")
        a_hat[u, v] = 1.0
        a_hat[v, u] = 1.0
    d_inv_sqrt = 1.0 / np.sqrt(a_hat.sum(axis=1))
    return d_inv_sqrt[:, None] * a_hat * d_inv_sqrt[None, :]


def gcn_forward_cached(H: np.ndarray, A_norm: np.ndarray, W: np.ndarray):
    """ReLU(A_norm @ H @ W); tolerates leading batch dims on H and A_norm."""
    AH = A_norm @ H
    Z = AH @ W
    out = relu(Z)
    return out, (AH, A_norm, W, Z)


def gcn_backward(cache, d_out: np.ndarray):
    """Gradients of gcn_forward w.r.t. H and W (summed over batch dims for W)."""
    AH, A_norm, W, Z = cache
    dZ = d_out * (Z > 0)
    dW = outer_sum(AH, dZ)
    dH = A_norm @ (dZ @ W.T)
    return dH, dW


def gcn_forward(H: np.ndarray, A_norm: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Validated single-graph GCN layer."""
    H = require_finite(H, "H")
    A_norm = require_finite(A_norm, "A_norm")
    W = require_finite(W, "W")
    if H.ndim != 2 or A_norm.ndim != 2 or W.ndim != 2:
        raise StructuralError("gcn_forward expects 2D arrays")
    if A_norm.shape[0] != A_norm.shape[1] or A_norm.shape[1] != H.shape[0]:
        raise StructuralError(f"A_norm shape {A_norm.shape} does not match H shape {H.shape}")
    if H.shape[1] != W.shape[0]:
        raise StructuralError(f"H shape {H.shape} does not chain with W shape {W.shape}")
    if not np.allclose(A_norm, A_norm.T, atol=1e-12):
        raise StructuralError("A_norm must be symmetric")
    out, _ = gcn_forward_cached(H, A_norm, W)
    return out


def attention_pool_cached(H: np.ndarray, v: np.ndarray, W_a: np.ndarray):
    """Additive attention pooling: scores v . tanh(W_a h_j), softmax weights."""
    T = np.tanh(H @ W_a.T)
    s = T @ v
    w = softmax(s, axis=-1)
    J = np.einsum("...n,...nh->...h", w, H)
    return J, w, (H, v, W_a, T, w)


def attention_backward(cache, dJ: np.ndarray, dw_extra: np.ndarray | None = None):
    H, v, W_a, T, w = cache
    dw = np.einsum("...h,...nh->...n", dJ, H)
    if dw_extra is not None:
        dw = dw + dw_extra
    dH = w[..., None] * dJ[..., None, :]
    swdot = np.sum(w * dw, axis=-1, keepdims=True)
    ds = w * (dw - swdot)
    dv = np.ascontiguousarray(T).reshape(-1, T.shape[-1]).T @ ds.reshape(-1)
    dT = ds[..., None] * v
    dpre = dT * (1.0 - T * T)
    dW_a = outer_sum(dpre, H)
    dH = dH + dpre @ W_a
    return dH, dv, dW_a


def attention_pool(H: np.ndarray, v: np.ndarray, W_a: np.ndarray):
    """Validated pooling; returns the pooled vector and the weights."""
    H = require_finite(H, "H")
    v = require_finite(v, "v")
    W_a = require_finite(W_a, "W_a")
    if H.ndim != 2 or H.shape[0] < 1:
        raise StructuralError("attention_pool needs at least one node row")
    if W_a.shape != (v.shape[0], H.shape[1]):
        raise StructuralError(f"W_a shape {W_a.shape} does not match v {v.shape} and H {H.shape}")
    J, w, _ = attention_pool_cached(H, v, W_a)
    return J, w


# ---------------------------------------------------------------------------
# GRU cell
# ---------------------------------------------------------------------------


@dataclass
class GruParams:
    """View over a ParamStore holding one GRU cell's weights."""

    store: ParamStore
    prefix: str
    input_dim: int
    hidden_dim: int

    _NAMES = ("w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_c", "u_c", "b_c")

    @classmethod
    def create(cls, store: ParamStore, prefix: str, input_dim: int, hidden_dim: int, rng) -> "GruParams":
        i, h = input_dim, hidden_dim
        for gate in ("z", "r", "c"):
            store.add(f"{prefix}w_{gate}", glorot_uniform((h, i), i, h, rng))
            store.add(f"{prefix}u_{gate}", glorot_uniform((h, h), h, h, rng))
            store.add(f"{prefix}b_{gate}", glorot_uniform((h,), h, h, rng))
        return cls(store, prefix, input_dim, hidden_dim)

    @classmethod
    def attach(cls, store: ParamStore, prefix: str, input_dim: int, hidden_dim: int) -> "GruParams":
        return cls(store, prefix, input_dim, hidden_dim)

    def _p(self, name: str) -> np.ndarray:
        return self.store.param(self.prefix + name)

    def _g(self, name: str) -> np.ndarray:
        return self.store.grad(self.prefix + name)

    def step(self, x: np.ndarray, h: np.ndarray):
        """One GRU update; tolerates leading batch dims.

        Gates: z update, r reset, candidate tanh(W_c x + U_c (r*h) + b_c);
        output is (1-z)*h + z*candidate.
        """
        w_z, u_z, b_z = self._p("w_z"), self._p("u_z"), self._p("b_z")
        w_r, u_r, b_r = self._p("w_r"), self._p("u_r"), self._p("b_r")
        w_c, u_c, b_c = self._p("w_c"), self._p("u_c"), self._p("b_c")
        z = sigmoid(x @ w_z.T + h @ u_z.T + b_z)
        r = sigmoid(x @ w_r.T + h @ u_r.T + b_r)
        rh = r * h
        c = np.tanh(x @ w_c.T + rh @ u_c.T + b_c)
        out = (1.0 - z) * h + z * c
        return out, (x, h, z, r, rh, c)

    def backward(self, cache, d_out: np.ndarray):
        """Accumulate parameter gradients; return (d_x, d_h_prev)."""
        x, h, z, r, rh, c = cache
        u_z, u_r, u_c = self._p("u_z"), self._p("u_r"), self._p("u_c")
        w_z, w_r, w_c = self._p("w_z"), self._p("w_r"), self._p("w_c")

        dz = d_out * (c - h)
        dc = d_out * z
        dh = d_out * (1.0 - z)

        dac = dc * (1.0 - c * c)
        self._g("w_c")[...] += outer_sum(dac, x)
        self._g("u_c")[...] += outer_sum(dac, rh)
        self._g("b_c")[...] += lead_sum(dac)
        drh = dac @ u_c
        dr = drh * h
        dh = dh + drh * r

        dar = dr * r * (1.0 - r)
        self._g("w_r")[...] += outer_sum(dar, x)
        self._g("u_r")[...] += outer_sum(dar, h)
        self._g("b_r")[...] += lead_sum(dar)
        dh = dh + dar @ u_r

        daz = dz * z * (1.0 - z)
        self._g("w_z")[...] += outer_sum(daz, x)
        self._g("u_z")[...] += outer_sum(daz, h)
        self._g("b_z")[...] += lead_sum(daz)
        dh = dh + daz @ u_z

        dx = dac @ w_c + dar @ w_r + daz @ w_z
        return dx, dh


def gru_step(x: np.ndarray, h: np.ndarray, params: GruParams) -> np.ndarray:
    """Validated single-step GRU update."""
    x = require_finite(x, "x")
    h = require_finite(h, "h")
    if x.shape[-1] != params.input_dim:
        raise StructuralError(f"input dim {x.shape[-1]} != {params.input_dim}")
    if h.shape[-1] != params.hidden_dim:
        raise StructuralError(f"hidden dim {h.shape[-1]} != {params.hidden_dim}")
    out, _ = params.step(x, h)
    return out


# ---------------------------------------------------------------------------
# Gumbel-Softmax
# ---------------------------------------------------------------------------


def sample_gumbel(shape, rng: np.random.Generator) -> np.ndarray:
    u = np.clip(rng.random(shape), 1e-12, 1.0 - 1e-16)
    return -np.log(-np.log(u))


def gumbel_softmax(logits: np.ndarray, tau: float, rng: np.random.Generator) -> np.ndarray:
    """softmax((logits + Gumbel noise) / tau); differentiable w.r.t. logits."""
    if tau <= 0:
        raise ConfigurationError("tau must be positive")
    logits = require_finite(logits, "logits")
    g = sample_gumbel(logits.shape, rng)
    return softmax((logits + g) / tau, axis=-1)


def gumbel_softmax_backward(y: np.ndarray, tau: float, dy: np.ndarray) -> np.ndarray:
    """Jacobian-vector product treating the noise as a constant."""
    dot = np.sum(y * dy, axis=-1, keepdims=True)
    return y * (dy - dot) / tau


# ---------------------------------------------------------------------------
# Graph encoder (two GCN layers + attention pooling + projection)
# ---------------------------------------------------------------------------


@dataclass
class GraphEncoderParams:
    """View over a ParamStore holding one attention-pooled GCN encoder."""

    store: ParamStore
    prefix: str
    node_dim: int
    hidden_dim: int
    embed_dim: int

    @classmethod
    def create(cls, store, prefix, node_dim, hidden_dim, embed_dim, rng) -> "GraphEncoderParams":
        d, h, e = node_dim, hidden_dim, embed_dim
        store.add(f"{prefix}gcn0", glorot_uniform((d, h), d, h, rng))
        store.add(f"{prefix}gcn1", glorot_uniform((h, h), h, h, rng))
        store.add(f"{prefix}att_v", glorot_uniform((h,), h, 1, rng))
        store.add(f"{prefix}att_w", glorot_uniform((h, h), h, h, rng))
        store.add(f"{prefix}proj_w", glorot_uniform((e, h), h, e, rng))
        store.add(f"{prefix}proj_b", glorot_uniform((e,), h, e, rng))
        return cls(store, prefix, node_dim, hidden_dim, embed_dim)

    @classmethod
    def attach(cls, store, prefix, node_dim, hidden_dim, embed_dim) -> "GraphEncoderParams":
        return cls(store, prefix, node_dim, hidden_dim, embed_dim)

    def _p(self, name):
        return self.store.param(self.prefix + name)

    def _g(self, name):
        return self.store.grad(self.prefix + name)

    @property
    def gcn_weights(self):
        return [self._p("gcn0"), self._p("gcn1")]

    def forward(self, H: np.ndarray, A: np.ndarray):
        """Encode node features H with normalized adjacency A; batched-friendly."""
        h1, c1 = gcn_forward_cached(H, A, self._p("gcn0"))
        h2, c2 = gcn_forward_cached(h1, A, self._p("gcn1"))
        J, w, c3 = attention_pool_cached(h2, self._p("att_v"), self._p("att_w"))
        e = J @ self._p("proj_w").T + self._p("proj_b")
        return e, (c1, c2, c3, J)

    def backward(self, cache, de: np.ndarray) -> None:
        c1, c2, c3, J = cache
        self._g("proj_w")[...] += outer_sum(de, J)
        self._g("proj_b")[...] += lead_sum(de)
        dJ = de @ self._p("proj_w")
        dh2, dv, dwa = attention_backward(c3, dJ)
        self._g("att_v")[...] += dv
        self._g("att_w")[...] += dwa
        dh1, dw1 = gcn_backward(c2, dh2)
        self._g("gcn1")[...] += dw1
        _, dw0 = gcn_backward(c1, dh1)
        self._g("gcn0")[...] += dw0


def graph_encode(graph, params: GraphEncoderParams) -> np.ndarray:
    """Encode a SceneGraph into a fixed-size embedding vector."""
    H = require_finite(graph.node_features, "node features")
    if H.shape[1] != params.node_dim:
        raise StructuralError(f"feature dim {H.shape[1]} != encoder node_dim {params.node_dim}")
    A = normalize_adjacency(graph.edges, H.shape[0])
    e, _ = params.forward(H, A)
    return e


# ---------------------------------------------------------------------------
# Optimizer, gradient check, checkpoints
# ---------------------------------------------------------------------------


class Adam:
    """Adam over all parameters in a store."""

    def __init__(self, store: ParamStore, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.store = store
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = {name: np.zeros_like(p) for name, p in store.items()}
        self._v = {name: np.zeros_like(p) for name, p in store.items()}

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name, p in self.store.items():
            g = self.store.grad(name)
            m = self._m[name]
            v = self._v[name]
            m[...] = self.beta1 * m + (1.0 - self.beta1) * g
            v[...] = self.beta2 * v + (1.0 - self.beta2) * g * g
            p[...] -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def finite_diff_check(f, store: ParamStore, epsilon: float = 1e-5) -> float:
    """Compare analytic gradients against central finite differences.

    ``f(need_grad=...)`` must return the scalar objective; when called with
    ``need_grad=True`` it must also accumulate gradients into the store. The
    harness zeroes gradients before each call. Returns the max relative error
    with denominator max(|analytic|, |numeric|, 1e-8).
    """
    if epsilon <= 0:
        raise ConfigurationError("epsilon must be positive")
    store.zero_grad()
    base = float(f(need_grad=True))
    if not np.isfinite(base):
        raise NumericalError("objective is not finite")
    analytic = {name: store.grad(name).copy() for name in store.names()}

    max_rel = 0.0
    for name, p in store.items():
        flat = p.reshape(-1)
        ana = analytic[name].reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + epsilon
            store.zero_grad()
            f_plus = float(f(need_grad=False))
            flat[idx] = orig - epsilon
            store.zero_grad()
            f_minus = float(f(need_grad=False))
            flat[idx] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NumericalError(f"objective not finite while perturbing {name}[{idx}]")
            numeric = (f_plus - f_minus) / (2.0 * epsilon)
            rel = abs(ana[idx] - numeric) / max(abs(ana[idx]), abs(numeric), 1e-8)
            max_rel = max(max_rel, rel)
    # restore analytic gradients for the caller
    store.zero_grad()
    for name in store.names():
        store.grad(name)[...] = analytic[name]
    return max_rel


def save_checkpoint(path: str, store: ParamStore, dims: dict, extra: dict | None = None) -> None:
    obj = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "dims": dims,
        "arrays": {name: p.tolist() for name, p in sorted(store.items())},
    }
    if extra:
        obj.update(extra)
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path: str):
    """Returns (arrays, dims, full object) from a checkpoint file."""
    with open(path) as fh:
        obj = json.load(fh)
    if obj.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        from .errors import IncompatibleDataError

        raise IncompatibleDataError(
            f"{path}: checkpoint version {obj.get('format_version')!r}, expected {CHECKPOINT_FORMAT_VERSION}"
        )
    arrays = {name: np.asarray(val, dtype=float) for name, val in obj["arrays"].items()}
    return arrays, obj["dims"], obj
