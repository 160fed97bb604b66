"""Property tests for the spec-level invariants that hold for all inputs."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from tabletalk import game, metrics, nn, scenegen

token_seqs = st.lists(st.integers(min_value=0, max_value=4), min_size=0, max_size=8)


@given(token_seqs, token_seqs)
def test_levenshtein_symmetric_and_bounded(s, t):
    d = metrics.levenshtein(s, t)
    assert d == metrics.levenshtein(t, s)
    assert abs(len(s) - len(t)) <= d <= max(len(s), len(t))


@given(token_seqs, token_seqs, token_seqs)
def test_levenshtein_triangle(a, b, c):
    assert metrics.levenshtein(a, c) <= metrics.levenshtein(a, b) + metrics.levenshtein(b, c)


@given(st.integers(0, 2**32 - 1), st.integers(2, 12))
def test_spearman_range(seed, n):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 5, size=n).astype(float)
    y = rng.integers(0, 5, size=n).astype(float)
    if len(set(x)) < 2 or len(set(y)) < 2:
        return
    assert -1.0 - 1e-12 <= metrics.spearman(x, y) <= 1.0 + 1e-12


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_scene_graph_edges_cover_knn(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 9))
    k = int(rng.integers(1, n - 1))
    centroids = rng.uniform(0, 1, size=(n, 2))
    edges = scenegen.knn_edges(centroids, k)
    for u, v in edges:
        assert 0 <= u < v < n
    # every node's k nearest (with the tie rule) appear in its adjacency
    for i in range(n):
        dists = np.linalg.norm(centroids - centroids[i], axis=1)
        nearest = sorted((j for j in range(n) if j != i), key=lambda j: (dists[j], j))[:k]
        adj = {a if b == i else b for a, b in edges if i in (a, b)}
        assert set(nearest) <= adj


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_attention_weights_are_distribution(seed):
    rng = np.random.default_rng(seed)
    n, h = int(rng.integers(1, 7)), int(rng.integers(1, 9))
    H = rng.standard_normal((n, h))
    _, w = nn.attention_pool(H, rng.standard_normal(h), rng.standard_normal((h, h)))
    assert np.all(w >= 0)
    assert abs(w.sum() - 1.0) < 1e-9


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_normalized_adjacency_symmetric(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 9))
    edges = {(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.4}
    A = nn.normalize_adjacency(edges, n)
    assert np.array_equal(A, A.T)
    assert np.all(np.isfinite(A))


@given(st.integers(0, 2**32 - 1), st.integers(2, 6))
@settings(max_examples=30, deadline=None)
def test_round_loss_nonnegative(seed, n_cand):
    rng = np.random.default_rng(seed)
    scores = rng.uniform(1e-6, 1 - 1e-6, size=n_cand)
    t = int(rng.integers(n_cand))
    assert game.round_loss(scores, t) >= 0.0


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_gumbel_softmax_rows_are_distributions(seed):
    rng = np.random.default_rng(seed)
    logits = rng.standard_normal(int(rng.integers(2, 10))) * 3
    y = nn.gumbel_softmax(logits, float(rng.uniform(0.05, 3.0)), rng)
    assert abs(y.sum() - 1.0) < 1e-9
    assert np.all(y > 0)
