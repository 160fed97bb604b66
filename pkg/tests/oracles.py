"""Independent brute-force oracles used to pin expected values.

Everything here is deliberately written as the dumbest correct computation
(explicit loops, full tables) and stays independent of the implementation
paths it checks.
"""

import numpy as np


def knn_edges_bruteforce(centroids, k):
    """All-pairs kNN with ties broken toward the lower node index."""
    n = len(centroids)
    edges = set()
    for i in range(n):
        dists = []
        for j in range(n):
            if j == i:
                continue
            d = float(np.sqrt(((centroids[i] - centroids[j]) ** 2).sum()))
            dists.append((d, j))
        dists.sort()
        for _, j in dists[:k]:
            edges.add((min(i, j), max(i, j)))
    return edges


def normalized_adjacency_dense(edges, n):
    """Loop-built D^-1/2 (A+I) D^-1/2 reference."""
    a = [[0.0] * n for _ in range(n)]
    for i in range(n):
        a[i][i] = 1.0
    for u, v in edges:
        a[u][v] = 1.0
        a[v][u] = 1.0
    deg = [sum(row) for row in a]
    out = [[a[i][j] / np.sqrt(deg[i] * deg[j]) for j in range(n)] for i in range(n)]
    return np.array(out)


def average_ranks_bruteforce(values):
    """O(n^2) average ranks: rank = #smaller + (1 + #equal) / 2."""
    ranks = []
    for v in values:
        smaller = sum(1 for w in values if w < v)
        equal = sum(1 for w in values if w == v)
        ranks.append(smaller + (1 + equal) / 2.0)
    return ranks


def pearson_bruteforce(x, y):
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y))
    vx = sum((a - mx) ** 2 for a in x)
    vy = sum((b - my) ** 2 for b in y)
    return cov / np.sqrt(vx * vy)


def spearman_bruteforce(x, y):
    return pearson_bruteforce(average_ranks_bruteforce(list(x)), average_ranks_bruteforce(list(y)))


def levenshtein_full_table(s, t):
    """Classic full (m+1) x (n+1) DP table."""
    m, n = len(s), len(t)
    table = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(m + 1):
        table[i][0] = i
    for j in range(n + 1):
        table[0][j] = j
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            cost = 0 if s[i - 1] == t[j - 1] else 1
            table[i][j] = min(table[i - 1][j] + 1, table[i][j - 1] + 1, table[i - 1][j - 1] + cost)
    return table[m][n]


def hamming_bruteforce(a, b):
    return sum(1 for x, y in zip(a, b) if x != y)


def topsim_bruteforce(records):
    """Full pairwise enumeration plus the brute-force rank correlation."""
    d_c = []
    d_m = []
    for i in range(len(records)):
        for j in range(i + 1, len(records)):
            d_c.append(hamming_bruteforce(records[i][0], records[j][0]))
            d_m.append(levenshtein_full_table(records[i][1], records[j][1]))
    return spearman_bruteforce(d_c, d_m)


def context_independence_bruteforce(records):
    """Independent co-occurrence table built with plain dicts."""
    counts = {}
    for concept, tokens in records:
        for value in set(concept):
            for t in tokens:
                counts[(value, t)] = counts.get((value, t), 0) + 1
    concepts = sorted({c for c, _ in counts}, key=str)
    tokens = sorted({t for _, t in counts})
    total = 0.0
    for c in concepts:
        c_total = sum(counts.get((c, t), 0) for t in tokens)
        best_t, best_pc = None, -1.0
        for t in tokens:
            t_total = sum(counts.get((c2, t), 0) for c2 in concepts)
            pc = counts.get((c, t), 0) / t_total
            if pc > best_pc:
                best_pc, best_t = pc, t
        pm = counts.get((c, best_t), 0) / c_total
        total += pm * best_pc
    return total / len(concepts)


def four_sigma_binomial(count, n, p):
    """|count - n p| within 4 binomial standard deviations."""
    sigma = np.sqrt(n * p * (1 - p))
    return abs(count - n * p) <= 4 * sigma
