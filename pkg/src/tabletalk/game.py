"""Lewis referential game: round construction, speaker/listener agents,
loss, training loop, and evaluation.

The speaker encodes the target graph and unrolls a GRU into a fixed-length
message; during training the message rows are Gumbel-Softmax samples so the
whole episode stays differentiable, at evaluation they are one-hot argmax
tokens. The listener consumes the message with its own GRU and scores every
candidate graph with a logistic sigmoid of the dot product between the decoded
message and the candidate's embedding; the loss is per-candidate binary
cross-entropy.

Internally all episode math runs batched (leading batch axis across rounds,
all graphs in a batch must share a node count); gradients are accumulated into
the agents' ParamStore by per-operation backward rules.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .errors import ConfigurationError, NumericalError, StructuralError
from .metrics import MessageCorpus
from .nn import GraphEncoderParams, GruParams, ParamStore, glorot_uniform
from .scenegen import Dataset, SceneGraph

ENCODER_KINDS = ("vag", "baseline")

_CLAMP = 1e-7
_DISTRACTOR_RETRY_CAP = 100


@dataclass(frozen=True)
class Vocabulary:
    """Message alphabet size and fixed message length."""

    size: int
    length: int

    def __post_init__(self):
        if self.size < 2:
            raise ConfigurationError("vocabulary size must be at least 2")
        if self.length < 1:
            raise ConfigurationError("message length must be at least 1")


@dataclass
class Message:
    """L x |V| rows; probability rows when soft, exact one-hots when hard."""

    rows: np.ndarray
    mode: str

    def __post_init__(self):
        if self.mode not in ("soft", "hard"):
            raise ConfigurationError(f"unknown message mode {self.mode!r}")
        self.rows = nn.require_finite(self.rows, "message rows")
        if self.rows.ndim != 2:
            raise StructuralError("message rows must be a 2D array")
        sums = self.rows.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > 1e-6):
            raise StructuralError("every message row must sum to 1")
        if self.mode == "hard":
            if not np.all((self.rows == 0.0) | (self.rows == 1.0)):
                raise StructuralError("hard message rows must be exact one-hots")

    @property
    def length(self) -> int:
        return self.rows.shape[0]

    def tokens(self) -> np.ndarray:
        """Token ids; meaningful for hard messages (argmax row index)."""
        return np.argmax(self.rows, axis=1)


@dataclass
class Round:
    """One game instance: a target hidden among distractors."""

    target: SceneGraph
    candidates: list[SceneGraph]
    target_index: int

    def __post_init__(self):
        hits = [i for i, c in enumerate(self.candidates) if c is self.target]
        if hits != [self.target_index]:
            raise StructuralError("candidates must contain the target exactly once, at target_index")


@dataclass(frozen=True)
class AgentDims:
    """Network widths shared by speaker and listener."""

    node_dim: int = 18
    gcn_hidden: int = 32
    embed_dim: int = 32
    gru_hidden: int = 64
    token_dim: int = 32


@dataclass(frozen=True)
class TrainConfig:
    vocab: Vocabulary
    n_distractors: int = 5
    batch_size: int = 32
    epochs: int = 100
    lr: float = 1e-3
    tau: float = 1.0
    seed: int = 0
    encoder_kind: str = "vag"

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigurationError("tau must be positive")
        if self.n_distractors < 1:
            raise ConfigurationError("need at least one distractor")
        if self.encoder_kind not in ENCODER_KINDS:
            raise ConfigurationError(f"encoder_kind must be one of {ENCODER_KINDS}")
        if self.batch_size < 1 or self.epochs < 0 or self.lr < 0:
            raise ConfigurationError("batch_size >= 1, epochs >= 0, lr >= 0 required")


# ---------------------------------------------------------------------------
# Encoders
# ---------------------------------------------------------------------------


@dataclass
class BaselineEncoderParams:
    """Structure-blind encoder: mean node feature -> 2-layer perceptron."""

    store: ParamStore
    prefix: str
    node_dim: int
    hidden_dim: int
    embed_dim: int

    @classmethod
    def create(cls, store, prefix, node_dim, hidden_dim, embed_dim, rng) -> "BaselineEncoderParams":
        d, h, e = node_dim, hidden_dim, embed_dim
        store.add(f"{prefix}mlp1_w", glorot_uniform((h, d), d, h, rng))
        store.add(f"{prefix}mlp1_b", glorot_uniform((h,), d, h, rng))
        store.add(f"{prefix}mlp2_w", glorot_uniform((e, h), h, e, rng))
        store.add(f"{prefix}mlp2_b", glorot_uniform((e,), h, e, rng))
        return cls(store, prefix, node_dim, hidden_dim, embed_dim)

    @classmethod
    def attach(cls, store, prefix, node_dim, hidden_dim, embed_dim) -> "BaselineEncoderParams":
        return cls(store, prefix, node_dim, hidden_dim, embed_dim)

    def _p(self, name):
        return self.store.param(self.prefix + name)

    def _g(self, name):
        return self.store.grad(self.prefix + name)

    def forward(self, H: np.ndarray, A: np.ndarray | None = None):
        m = H.mean(axis=-2)
        z1 = m @ self._p("mlp1_w").T + self._p("mlp1_b")
        r = nn.relu(z1)
        e = r @ self._p("mlp2_w").T + self._p("mlp2_b")
        return e, (m, z1, r)

    def backward(self, cache, de: np.ndarray) -> None:
        m, z1, r = cache
        self._g("mlp2_w")[...] += nn.outer_sum(de, r)
        self._g("mlp2_b")[...] += nn.lead_sum(de)
        dr = de @ self._p("mlp2_w")
        dz1 = dr * (z1 > 0)
        self._g("mlp1_w")[...] += nn.outer_sum(dz1, m)
        self._g("mlp1_b")[...] += nn.lead_sum(dz1)


def baseline_encode(graph: SceneGraph, params: BaselineEncoderParams) -> np.ndarray:
    """Encode a graph ignoring its edges: mean features through the MLP."""
    H = nn.require_finite(graph.node_features, "node features")
    if H.shape[1] != params.node_dim:
        raise StructuralError(f"feature dim {H.shape[1]} != encoder node_dim {params.node_dim}")
    e, _ = params.forward(H)
    return e


def make_encoder(kind: str, store: ParamStore, prefix: str, dims: AgentDims, rng):
    if kind == "vag":
        return GraphEncoderParams.create(store, prefix, dims.node_dim, dims.gcn_hidden, dims.embed_dim, rng)
    if kind == "baseline":
        return BaselineEncoderParams.create(store, prefix, dims.node_dim, dims.gcn_hidden, dims.embed_dim, rng)
    raise ConfigurationError(f"encoder_kind must be one of {ENCODER_KINDS}")


def attach_encoder(kind: str, store: ParamStore, prefix: str, dims: AgentDims):
    cls = GraphEncoderParams if kind == "vag" else BaselineEncoderParams
    return cls.attach(store, prefix, dims.node_dim, dims.gcn_hidden, dims.embed_dim)


# ---------------------------------------------------------------------------
# Agents
# ---------------------------------------------------------------------------


@dataclass
class Speaker:
    store: ParamStore
    prefix: str
    dims: AgentDims
    vocab: Vocabulary
    encoder_kind: str
    encoder: object = field(init=False)
    gru: GruParams = field(init=False)

    role = "speaker"

    def __post_init__(self):
        self.encoder = attach_encoder(self.encoder_kind, self.store, self.prefix + "enc.", self.dims)
        self.gru = GruParams.attach(self.store, self.prefix + "gru.", self.dims.token_dim, self.dims.gru_hidden)

    @classmethod
    def create(cls, vocab: Vocabulary, dims: AgentDims, encoder_kind: str, rng, store=None, prefix="") -> "Speaker":
        store = store if store is not None else ParamStore()
        make_encoder(encoder_kind, store, prefix + "enc.", dims, rng)
        store.add(prefix + "init_w", glorot_uniform((dims.gru_hidden, dims.embed_dim), dims.embed_dim, dims.gru_hidden, rng))
        store.add(prefix + "init_b", glorot_uniform((dims.gru_hidden,), dims.embed_dim, dims.gru_hidden, rng))
        store.add(prefix + "start", glorot_uniform((dims.token_dim,), dims.token_dim, 1, rng))
        store.add(prefix + "embed", glorot_uniform((vocab.size, dims.token_dim), vocab.size, dims.token_dim, rng))
        GruParams.create(store, prefix + "gru.", dims.token_dim, dims.gru_hidden, rng)
        store.add(prefix + "out_w", glorot_uniform((vocab.size, dims.gru_hidden), dims.gru_hidden, vocab.size, rng))
        store.add(prefix + "out_b", glorot_uniform((vocab.size,), dims.gru_hidden, vocab.size, rng))
        return cls(store, prefix, dims, vocab, encoder_kind)

    def _p(self, name):
        return self.store.param(self.prefix + name)

    def _g(self, name):
        return self.store.grad(self.prefix + name)


@dataclass
class Listener:
    store: ParamStore
    prefix: str
    dims: AgentDims
    vocab: Vocabulary
    encoder_kind: str
    encoder: object = field(init=False)
    gru: GruParams = field(init=False)

    role = "listener"

    def __post_init__(self):
        self.encoder = attach_encoder(self.encoder_kind, self.store, self.prefix + "enc.", self.dims)
        self.gru = GruParams.attach(self.store, self.prefix + "gru.", self.dims.token_dim, self.dims.gru_hidden)

    @classmethod
    def create(cls, vocab: Vocabulary, dims: AgentDims, encoder_kind: str, rng, store=None, prefix="") -> "Listener":
        store = store if store is not None else ParamStore()
        make_encoder(encoder_kind, store, prefix + "enc.", dims, rng)
        store.add(prefix + "embed", glorot_uniform((vocab.size, dims.token_dim), vocab.size, dims.token_dim, rng))
        GruParams.create(store, prefix + "gru.", dims.token_dim, dims.gru_hidden, rng)
        store.add(prefix + "dec_w", glorot_uniform((dims.embed_dim, dims.gru_hidden), dims.gru_hidden, dims.embed_dim, rng))
        store.add(prefix + "dec_b", glorot_uniform((dims.embed_dim,), dims.gru_hidden, dims.embed_dim, rng))
        return cls(store, prefix, dims, vocab, encoder_kind)

    def _p(self, name):
        return self.store.param(self.prefix + name)

    def _g(self, name):
        return self.store.grad(self.prefix + name)


# ---------------------------------------------------------------------------
# Batched episode engine
# ---------------------------------------------------------------------------


def graph_stacks(graphs: list[SceneGraph]):
    """Stack features and normalized adjacencies; all graphs must share a node count."""
    if not graphs:
        raise StructuralError("need at least one graph")
    n = graphs[0].n_nodes
    d = graphs[0].node_features.shape[1]
    for g in graphs:
        if g.n_nodes != n or g.node_features.shape[1] != d:
            raise StructuralError("all graphs in a batch must share node count and feature dim")
    H = np.stack([g.node_features for g in graphs])
    A = np.stack([nn.normalize_adjacency(g.edges, n) for g in graphs])
    return H, A


def _speak_forward(spk: Speaker, H_t, A_t, tau, rng, mode, keep_cache):
    """Unroll the speaker over a batch of targets. Returns rows (B, L, V)."""
    B = H_t.shape[0]
    L, V = spk.vocab.length, spk.vocab.size
    e_s, enc_cache = spk.encoder.forward(H_t, A_t)
    h = e_s @ spk._p("init_w").T + spk._p("init_b")
    x = np.broadcast_to(spk._p("start"), (B, spk.dims.token_dim))
    embed = spk._p("embed")
    out_w, out_b = spk._p("out_w"), spk._p("out_b")
    rows = np.empty((B, L, V))
    steps = []
    for ell in range(L):
        h_new, gru_cache = spk.gru.step(x, h)
        logits = h_new @ out_w.T + out_b
        if mode == "soft":
            y = nn.gumbel_softmax(logits, tau, rng)
        else:
            ids = np.argmax(logits, axis=-1)
            y = np.zeros((B, V))
            y[np.arange(B), ids] = 1.0
        rows[:, ell, :] = y
        if keep_cache:
            steps.append((x, gru_cache, h_new, y))
        x = y @ embed
        h = h_new
    cache = (e_s, enc_cache, steps) if keep_cache else None
    return rows, cache


def _speak_backward(spk: Speaker, cache, d_rows, tau):
    """Backprop through a soft-mode speaker unroll; accumulates into the store."""
    e_s, enc_cache, steps = cache
    embed = spk._p("embed")
    out_w = spk._p("out_w")
    L = len(steps)
    dh_carry = np.zeros_like(steps[0][2])
    dx_next = None
    for ell in range(L - 1, -1, -1):
        x, gru_cache, h_new, y = steps[ell]
        dy = d_rows[:, ell, :].copy()
        if dx_next is not None:
            # feedback path: x_{ell+1} = y_ell @ embed
            dy += dx_next @ embed.T
            spk._g("embed")[...] += np.einsum("bv,bi->vi", y, dx_next)
        dlogits = nn.gumbel_softmax_backward(y, tau, dy)
        spk._g("out_w")[...] += np.einsum("bv,bh->vh", dlogits, h_new)
        spk._g("out_b")[...] += dlogits.sum(axis=0)
        dh_new = dlogits @ out_w + dh_carry
        dx, dh_carry = spk.gru.backward(gru_cache, dh_new)
        dx_next = dx
    spk._g("start")[...] += dx_next.sum(axis=0)
    dh0 = dh_carry
    spk._g("init_w")[...] += np.einsum("bh,be->he", dh0, e_s)
    spk._g("init_b")[...] += dh0.sum(axis=0)
    de_s = dh0 @ spk._p("init_w")
    spk.encoder.backward(enc_cache, de_s)


def _listen_forward(lst: Listener, rows, H_c, A_c, keep_cache):
    """Score every candidate for a batch of rounds. Returns scores (B, C)."""
    B, L, V = rows.shape
    e_c, enc_cache = lst.encoder.forward(H_c, A_c)  # (B, C, e)
    embed = lst._p("embed")
    h = np.zeros((B, lst.dims.gru_hidden))
    steps = []
    for ell in range(L):
        x = rows[:, ell, :] @ embed
        h_new, gru_cache = lst.gru.step(x, h)
        if keep_cache:
            steps.append(gru_cache)
        h = h_new
    u = h @ lst._p("dec_w").T + lst._p("dec_b")  # (B, e)
    raw = np.einsum("be,bce->bc", u, e_c)
    scores = nn.sigmoid(raw)
    cache = (rows, e_c, enc_cache, steps, h, u, scores) if keep_cache else None
    return scores, cache


def _listen_backward(lst: Listener, cache, d_scores):
    """Backprop the listener; returns gradient w.r.t. the message rows."""
    rows, e_c, enc_cache, steps, h_final, u, scores = cache
    embed = lst._p("embed")
    d_raw = d_scores * scores * (1.0 - scores)
    du = np.einsum("bc,bce->be", d_raw, e_c)
    de_c = d_raw[..., None] * u[:, None, :]
    lst.encoder.backward(enc_cache, de_c)
    lst._g("dec_w")[...] += np.einsum("be,bh->eh", du, h_final)
    lst._g("dec_b")[...] += du.sum(axis=0)
    dh = du @ lst._p("dec_w")
    B, L, V = rows.shape
    d_rows = np.empty_like(rows)
    for ell in range(L - 1, -1, -1):
        dx, dh = lst.gru.backward(steps[ell], dh)
        d_rows[:, ell, :] = dx @ embed.T
        lst._g("embed")[...] += np.einsum("bv,bi->vi", rows[:, ell, :], dx)
    return d_rows


def _batch_loss(scores: np.ndarray, t_idx: np.ndarray):
    """Mean per-round loss and its gradient w.r.t. the raw scores."""
    B, C = scores.shape
    s = np.clip(scores, _CLAMP, 1.0 - _CLAMP)
    rows = np.arange(B)
    tgt = s[rows, t_idx]
    loss_b = -np.log(tgt) - (np.log(1.0 - s).sum(axis=1) - np.log(1.0 - tgt))
    d_s = 1.0 / (1.0 - s)
    d_s[rows, t_idx] = -1.0 / tgt
    inside = (scores > _CLAMP) & (scores < 1.0 - _CLAMP)
    d_scores = d_s * inside / B
    return float(loss_b.mean()), d_scores


def episode(spk: Speaker, lst: Listener, H_t, A_t, H_c, A_c, t_idx, tau, rng, need_grad):
    """Full soft-mode episode over a batch; returns (loss, scores).

    When need_grad is set, parameter gradients are accumulated into the
    agents' stores (which the caller should have zeroed).
    """
    rows, spk_cache = _speak_forward(spk, H_t, A_t, tau, rng, "soft", need_grad)
    scores, lst_cache = _listen_forward(lst, rows, H_c, A_c, need_grad)
    loss, d_scores = _batch_loss(scores, t_idx)
    if need_grad:
        d_rows = _listen_backward(lst, lst_cache, d_scores)
        _speak_backward(spk, spk_cache, d_rows, tau)
    return loss, scores


# ---------------------------------------------------------------------------
# Rounds
# ---------------------------------------------------------------------------


def _graphs_of(dataset) -> list[SceneGraph]:
    return dataset.graphs if isinstance(dataset, Dataset) else list(dataset)


def _sample_distractors(target: int, tuples, n_distractors: int, n_graphs: int, rng) -> list[int]:
    """Without-replacement distractors, tuple-distinct from the target when possible."""
    chosen: list[int] = []
    taken = {target}
    tries = 0
    while len(chosen) < n_distractors:
        j = int(rng.integers(n_graphs))
        if j in taken:
            continue
        if tuples[j] == tuples[target] and tries < _DISTRACTOR_RETRY_CAP:
            tries += 1
            continue
        taken.add(j)
        chosen.append(j)
    return chosen


def build_round(dataset, n_distractors: int, rng: np.random.Generator) -> Round:
    """Sample one game round: a target hidden at a uniform position among distractors."""
    graphs = _graphs_of(dataset)
    if len(graphs) <= n_distractors:
        raise ConfigurationError(f"dataset of {len(graphs)} graphs cannot supply {n_distractors} distractors")
    tuples = [g.tuple for g in graphs]
    t = int(rng.integers(len(graphs)))
    distractors = _sample_distractors(t, tuples, n_distractors, len(graphs), rng)
    pos = int(rng.integers(n_distractors + 1))
    candidates = [graphs[j] for j in distractors]
    candidates.insert(pos, graphs[t])
    return Round(target=graphs[t], candidates=candidates, target_index=pos)


def _sample_round_indices(n_graphs, tuples, n_distractors, rng, target=None):
    t = int(rng.integers(n_graphs)) if target is None else target
    distractors = _sample_distractors(t, tuples, n_distractors, n_graphs, rng)
    pos = int(rng.integers(n_distractors + 1))
    cand = distractors[:pos] + [t] + distractors[pos:]
    return t, cand, pos


# ---------------------------------------------------------------------------
# Public single-round operations
# ---------------------------------------------------------------------------


def speak(speaker: Speaker, target: SceneGraph, vocab: Vocabulary, tau: float, rng, mode: str) -> Message:
    """Generate one message for a target graph."""
    if mode not in ("soft", "hard"):
        raise ConfigurationError(f"mode must be 'soft' or 'hard', got {mode!r}")
    if vocab != speaker.vocab:
        raise StructuralError("vocabulary does not match the speaker's")
    if mode == "soft" and tau <= 0:
        raise ConfigurationError("tau must be positive")
    H, A = graph_stacks([target])
    rows, _ = _speak_forward(speaker, H, A, tau, rng, mode, keep_cache=False)
    return Message(rows=rows[0], mode=mode)


def listen_score(listener: Listener, message: Message, candidates: list[SceneGraph]) -> np.ndarray:
    """Per-candidate match probabilities in (0,1); not normalized across candidates."""
    if not candidates:
        raise StructuralError("candidates must be non-empty")
    if message.rows.shape[1] != listener.vocab.size:
        raise StructuralError("message vocabulary does not match the listener's")
    H, A = graph_stacks(candidates)
    scores, _ = _listen_forward(listener, message.rows[None], H[None], A[None], keep_cache=False)
    return scores[0]


def round_loss(scores: np.ndarray, target_index: int) -> float:
    """Binary cross-entropy over candidates: target toward 1, distractors toward 0."""
    scores = np.asarray(scores, dtype=float)
    if not (0 <= target_index < scores.shape[0]):
        raise StructuralError(f"target_index {target_index} out of range")
    s = np.clip(scores, _CLAMP, 1.0 - _CLAMP)
    others = np.log(1.0 - s).sum() - np.log(1.0 - s[target_index])
    return float(-np.log(s[target_index]) - others)


# ---------------------------------------------------------------------------
# Training and evaluation
# ---------------------------------------------------------------------------


def split_dataset(graphs: list[SceneGraph], eval_fraction: float = 0.2):
    """Deterministic index split: trailing fraction held out for evaluation."""
    if not 0.0 <= eval_fraction < 1.0:
        raise ConfigurationError("eval_fraction must be in [0, 1)")
    n_eval = int(len(graphs) * eval_fraction)
    if n_eval == 0:
        return list(graphs), []
    return list(graphs[:-n_eval]), list(graphs[-n_eval:])


def train(dataset, config: TrainConfig, dims: AgentDims | None = None):
    """Jointly train a speaker/listener pair with Adam on soft-mode episodes.

    Returns (speaker, listener, log) where log has one row per epoch with
    keys epoch, mean_loss, train_accuracy. Deterministic given config.seed.
    """
    graphs = _graphs_of(dataset)
    if len(graphs) <= config.n_distractors:
        raise ConfigurationError(f"dataset of {len(graphs)} graphs cannot supply {config.n_distractors} distractors")
    dims = dims if dims is not None else AgentDims()
    if graphs[0].node_features.shape[1] != dims.node_dim:
        dims = AgentDims(
            node_dim=graphs[0].node_features.shape[1],
            gcn_hidden=dims.gcn_hidden,
            embed_dim=dims.embed_dim,
            gru_hidden=dims.gru_hidden,
            token_dim=dims.token_dim,
        )
    rng = np.random.default_rng(config.seed)
    store = ParamStore()
    speaker = Speaker.create(config.vocab, dims, config.encoder_kind, rng, store=store, prefix="speaker.")
    listener = Listener.create(config.vocab, dims, config.encoder_kind, rng, store=store, prefix="listener.")
    optimizer = nn.Adam(store, lr=config.lr)

    H_all, A_all = graph_stacks(graphs)
    tuples = [g.tuple for g in graphs]
    n = len(graphs)
    steps_per_epoch = max(1, n // config.batch_size)
    log = []
    for epoch in range(config.epochs):
        losses = []
        hits = 0
        rounds = 0
        for _ in range(steps_per_epoch):
            t_idx = np.empty(config.batch_size, dtype=int)
            cand_idx = np.empty((config.batch_size, config.n_distractors + 1), dtype=int)
            for b in range(config.batch_size):
                _, cand, pos = _sample_round_indices(n, tuples, config.n_distractors, rng)
                cand_idx[b] = cand
                t_idx[b] = pos
            H_t = H_all[cand_idx[np.arange(config.batch_size), t_idx]]
            A_t = A_all[cand_idx[np.arange(config.batch_size), t_idx]]
            H_c = H_all[cand_idx]
            A_c = A_all[cand_idx]
            store.zero_grad()
            loss, scores = episode(speaker, listener, H_t, A_t, H_c, A_c, t_idx, config.tau, rng, need_grad=True)
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite loss at epoch {epoch}, last good epoch {epoch - 1}")
            optimizer.step()
            losses.append(loss)
            hits += int(np.sum(np.argmax(scores, axis=1) == t_idx))
            rounds += config.batch_size
        log.append(
            {
                "epoch": epoch,
                "mean_loss": float(np.mean(losses)),
                "train_accuracy": hits / rounds,
            }
        )
    return speaker, listener, log


def evaluate(speaker: Speaker, listener: Listener, dataset, config: TrainConfig, rng, n_rounds: int | None = None):
    """Hard-mode evaluation; returns (accuracy, MessageCorpus).

    With n_rounds unset, every graph is the target of exactly one round (in
    order); otherwise targets are sampled uniformly.
    """
    graphs = _graphs_of(dataset)
    if speaker.vocab != listener.vocab:
        raise StructuralError("speaker and listener vocabularies differ")
    if len(graphs) <= config.n_distractors:
        raise ConfigurationError(f"dataset of {len(graphs)} graphs cannot supply {config.n_distractors} distractors")
    H_all, A_all = graph_stacks(graphs)
    tuples = [g.tuple for g in graphs]
    n = len(graphs)
    targets = list(range(n)) if n_rounds is None else [int(rng.integers(n)) for _ in range(n_rounds)]

    records = []
    hits = 0
    chunk = 256
    for lo in range(0, len(targets), chunk):
        batch_targets = targets[lo : lo + chunk]
        B = len(batch_targets)
        t_idx = np.empty(B, dtype=int)
        cand_idx = np.empty((B, config.n_distractors + 1), dtype=int)
        for b, t in enumerate(batch_targets):
            _, cand, pos = _sample_round_indices(n, tuples, config.n_distractors, rng, target=t)
            cand_idx[b] = cand
            t_idx[b] = pos
        rows, _ = _speak_forward(speaker, H_all[batch_targets], A_all[batch_targets], config.tau, rng, "hard", keep_cache=False)
        scores, _ = _listen_forward(listener, rows, H_all[cand_idx], A_all[cand_idx], keep_cache=False)
        picks = np.argmax(scores, axis=1)
        hits += int(np.sum(picks == t_idx))
        token_ids = np.argmax(rows, axis=2)
        for b, t in enumerate(batch_targets):
            records.append((tuples[t].slots(), tuple(int(x) for x in token_ids[b])))
    accuracy = hits / len(targets) if targets else 0.0
    corpus = MessageCorpus(records=records, vocab_size=speaker.vocab.size)
    return accuracy, corpus


# ---------------------------------------------------------------------------
# Agent checkpoints
# ---------------------------------------------------------------------------


def save_agent(path: str, agent) -> None:
    """Write one agent's parameters in the shared checkpoint format."""
    scratch = ParamStore()
    for name, arr in sorted(agent.store.items()):
        if name.startswith(agent.prefix):
            scratch.add(name[len(agent.prefix) :], arr)
    dims = asdict(agent.dims)
    extra = {
        "role": agent.role,
        "vocab": {"size": agent.vocab.size, "length": agent.vocab.length},
        "encoder_kind": agent.encoder_kind,
    }
    nn.save_checkpoint(path, scratch, dims, extra)


def load_agent(path: str):
    """Load a speaker or listener checkpoint written by save_agent."""
    from .errors import IncompatibleDataError

    arrays, dims_dict, obj = nn.load_checkpoint(path)
    role = obj.get("role")
    if role not in ("speaker", "listener"):
        raise IncompatibleDataError(f"{path}: unknown agent role {role!r}")
    dims = AgentDims(**dims_dict)
    vocab = Vocabulary(**obj["vocab"])
    kind = obj["encoder_kind"]
    store = ParamStore()
    for name in sorted(arrays):
        store.add(name, arrays[name])
    cls = Speaker if role == "speaker" else Listener
    agent = cls(store, "", dims, vocab, kind)
    reference = cls.create(vocab, dims, kind, np.random.default_rng(0))
    missing = set(reference.store.names()) - set(store.names())
    if missing:
        raise IncompatibleDataError(f"{path}: checkpoint is missing arrays {sorted(missing)}")
    return agent
