"""Language metrics computed from a harvested message corpus.

All operations are pure functions of the corpus: topographic similarity
(rank correlation between concept-space and message-space pairwise
distances), context independence (stability of the concept <-> token
mapping), Zipf rank-frequency curve, cumulative token coverage, and the raw
token histogram.

Concept-space distance is Hamming over tuple slots; message-space distance
is Levenshtein over token sequences.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DegenerateCorpusError, StructuralError

# topsim is quadratic in corpus size; bigger corpora are subsampled first
_TOPSIM_MAX_RECORDS = 2000
_TOPSIM_SAMPLE_SEED = 0


@dataclass
class MessageCorpus:
    """(concept slots, token sequence) pairs harvested at evaluation time.

    Slot tuples may come from ConceptTuple.slots() or any other fixed-width
    description; all records must share the slot count and token length.
    """

    records: list[tuple[tuple, tuple[int, ...]]]
    vocab_size: int

    def __post_init__(self):
        if self.vocab_size < 1:
            raise ConfigurationError("vocab_size must be positive")
        normalized = []
        length = None
        n_slots = None
        for concept, tokens in self.records:
            concept = tuple(concept)
            tokens = tuple(int(t) for t in tokens)
            if length is None:
                length, n_slots = len(tokens), len(concept)
            if len(tokens) != length:
                raise StructuralError("all token sequences must share one length")
            if len(concept) != n_slots:
                raise StructuralError("all concept tuples must share one slot count")
            if any(t < 0 or t >= self.vocab_size for t in tokens):
                raise StructuralError(f"token id out of range for vocab size {self.vocab_size}")
            normalized.append((concept, tokens))
        self.records = normalized

    def __len__(self) -> int:
        return len(self.records)

    @property
    def message_length(self) -> int:
        return len(self.records[0][1]) if self.records else 0


def save_corpus(corpus: MessageCorpus, path: str) -> None:
    with open(path, "w") as fh:
        for concept, tokens in corpus.records:
            fh.write(json.dumps({"tuple": list(concept), "tokens": list(tokens)}, sort_keys=True) + "\n")


def load_corpus(path: str, vocab_size: int) -> MessageCorpus:
    records = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            records.append((tuple(rec["tuple"]), tuple(rec["tokens"])))
    return MessageCorpus(records=records, vocab_size=vocab_size)


def hamming(a, b) -> int:
    """Number of differing slots between two equal-width concept tuples."""
    sa = a.slots() if hasattr(a, "slots") else tuple(a)
    sb = b.slots() if hasattr(b, "slots") else tuple(b)
    if len(sa) != len(sb):
        raise StructuralError("concept tuples must have the same slot count")
    return sum(1 for x, y in zip(sa, sb) if x != y)


def levenshtein(s, t) -> int:
    """Minimal insert/delete/substitute edit count, O(|s| |t|) DP."""
    s, t = tuple(s), tuple(t)
    if len(s) < len(t):
        s, t = t, s
    previous = list(range(len(t) + 1))
    for i in range(1, len(s) + 1):
        current = [i] + [0] * len(t)
        for j in range(1, len(t) + 1):
            cost = 0 if s[i - 1] == t[j - 1] else 1
            current[j] = min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost)
        previous = current
    return previous[len(t)]


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """Ranks starting at 1; ties get the mean of their rank range."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=float)
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Spearman rank correlation with average ranks for ties."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise StructuralError("spearman needs two equal-length vectors of length >= 2")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    vx = float(np.dot(dx, dx))
    vy = float(np.dot(dy, dy))
    if vx == 0.0 or vy == 0.0:
        raise DegenerateCorpusError("correlation undefined: a rank vector is constant")
    return float(np.dot(dx, dy) / np.sqrt(vx * vy))


def topsim(corpus: MessageCorpus) -> float:
    """Rank correlation between pairwise concept and message distances."""
    records = corpus.records
    if len(records) > _TOPSIM_MAX_RECORDS:
        rng = np.random.default_rng(_TOPSIM_SAMPLE_SEED)
        keep = rng.choice(len(records), size=_TOPSIM_MAX_RECORDS, replace=False)
        records = [records[i] for i in sorted(keep)]
    if len(records) < 3:
        raise StructuralError("topsim needs at least 3 records")
    d_c = []
    d_m = []
    for i in range(len(records)):
        ci, mi = records[i]
        for j in range(i + 1, len(records)):
            cj, mj = records[j]
            d_c.append(hamming(ci, cj))
            d_m.append(levenshtein(mi, mj))
    if len(set(d_c)) < 2:
        raise DegenerateCorpusError("topsim undefined: all concept distances identical")
    if len(set(d_m)) < 2:
        raise DegenerateCorpusError("topsim undefined: all message distances identical")
    return spearman(np.array(d_c, dtype=float), np.array(d_m, dtype=float))


def context_independence(corpus: MessageCorpus) -> float:
    """Mean over concepts of p_m(best token | concept) * p_c(concept | best token).

    Co-occurrences are counted between each record's distinct slot values and
    every token position of its message; probabilities are unsmoothed
    empirical frequencies; argmax ties break toward the lower token id.
    """
    if not corpus.records:
        raise StructuralError("corpus must be non-empty")
    pair_counts: Counter = Counter()
    concept_totals: Counter = Counter()
    token_totals: Counter = Counter()
    for concept, tokens in corpus.records:
        for value in set(concept):
            for t in tokens:
                pair_counts[(value, t)] += 1
                concept_totals[value] += 1
                token_totals[t] += 1
    concepts = sorted(concept_totals, key=str)
    total = 0.0
    for c in concepts:
        best_t = None
        best_pc = -1.0
        for t in sorted(token_totals):
            pc = pair_counts[(c, t)] / token_totals[t]
            if pc > best_pc:
                best_pc = pc
                best_t = t
        pm = pair_counts[(c, best_t)] / concept_totals[c]
        total += pm * best_pc
    return total / len(concepts)


def zipf_curve(corpus: MessageCorpus) -> list[tuple[int, int]]:
    """Token counts sorted descending with 1-based ranks; zero counts omitted."""
    if not corpus.records:
        raise StructuralError("corpus must be non-empty")
    counts = Counter()
    for _, tokens in corpus.records:
        counts.update(tokens)
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(rank + 1, count) for rank, (_, count) in enumerate(ordered)]


def cumulative_coverage(corpus: MessageCorpus, threshold: float) -> int:
    """Smallest number of top-ranked tokens covering >= threshold of all tokens."""
    if not 0.0 < threshold <= 1.0:
        raise ConfigurationError("threshold must be in (0, 1]")
    curve = zipf_curve(corpus)
    total = sum(count for _, count in curve)
    need = threshold * total
    acc = 0
    for rank, count in curve:
        acc += count
        if acc >= need:
            return rank
    return len(curve)


def token_histogram(corpus: MessageCorpus) -> list[int]:
    """Count per token id, zeros included, length vocab_size."""
    hist = [0] * corpus.vocab_size
    for _, tokens in corpus.records:
        for t in tokens:
            hist[t] += 1
    return hist


@dataclass
class MetricsReport:
    """All evaluation measures for one experiment configuration.

    topsim is None when the corpus was degenerate (all pairwise concept or
    message distances identical), which happens for fully collapsed languages.
    """

    accuracy: float
    topsim: float | None
    ci: float
    zipf: list[tuple[int, int]]
    coverage90: int
    histogram: list[int]
    config: dict

    def __post_init__(self):
        if self.topsim is not None and not -1.0 <= self.topsim <= 1.0:
            raise StructuralError("topsim out of [-1, 1]")
        if not 0.0 <= self.ci <= 1.0:
            raise StructuralError("ci out of [0, 1]")

    def to_json(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "topsim": self.topsim,
            "ci": self.ci,
            "zipf": [list(rc) for rc in self.zipf],
            "coverage90": self.coverage90,
            "histogram": list(self.histogram),
            "config": self.config,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "MetricsReport":
        return cls(
            accuracy=obj["accuracy"],
            topsim=obj["topsim"],
            ci=obj["ci"],
            zipf=[tuple(rc) for rc in obj["zipf"]],
            coverage90=obj["coverage90"],
            histogram=list(obj["histogram"]),
            config=dict(obj["config"]),
        )


def compute_report(accuracy: float, corpus: MessageCorpus, config: dict) -> MetricsReport:
    """Run every corpus metric and bundle the results.

    A degenerate corpus (collapsed language) yields topsim=None rather than
    an error so that sweep evaluation can record the outcome.
    """
    try:
        ts = topsim(corpus)
    except DegenerateCorpusError:
        ts = None
    return MetricsReport(
        accuracy=accuracy,
        topsim=ts,
        ci=context_independence(corpus),
        zipf=zipf_curve(corpus),
        coverage90=cumulative_coverage(corpus, 0.9),
        histogram=token_histogram(corpus),
        config=config,
    )
