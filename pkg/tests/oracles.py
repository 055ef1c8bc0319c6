"""Independent reference implementations used only by the tests."""
import itertools
import math

import numpy as np


def brute_force_shapley(model, x, background, cls):
    """Shapley values from the permutation definition, one forward pass per hybrid."""
    W = len(x)

    def value(coalition):
        total = 0.0
        for b in background:
            hybrid = [x[j] if j in coalition else b[j] for j in range(W)]
            total += model.forward(hybrid)[cls] if hasattr(model, "forward") else \
                model.predict_proba(np.array([hybrid]))[0][cls]
        return total / len(background)

    cache = {}

    def v(coalition):
        key = frozenset(coalition)
        if key not in cache:
            cache[key] = value(key)
        return cache[key]

    phi = [0.0] * W
    for order in itertools.permutations(range(W)):
        seen = set()
        for j in order:
            before = v(seen)
            seen.add(j)
            phi[j] += v(seen) - before
    n = math.factorial(W)
    return [p / n for p in phi], v(set())


def naive_element(values, seqs, t):
    """Position scan; the hits are summed with correct rounding."""
    hits = []
    for row, seq in zip(values, seqs):
        for j in range(len(seq)):
            if seq[j] == t:
                hits.append(float(row[j]))
    return math.fsum(hits)


def naive_pattern_utility(seqs, per_position, pattern, mode, scope=None):
    """Scan every window of every sequence; returns per-sequence list or aggregated value.

    ``per_position(i, j)`` gives the utility of position j in sequence i.
    """
    n = len(pattern)
    per_seq = []
    for i, s in enumerate(seqs):
        scores = []
        for q in range(len(s) - n + 1):
            if list(s[q:q + n]) == list(pattern):
                scores.append(sum(per_position(i, q + k) for k in range(n)))
        if scores:
            per_seq.append(max(scores) if mode == "unique" else sum(scores))
    if scope is None or scope == "database-sum":
        return float(sum(per_seq))
    return max(per_seq) if per_seq else 0.0


def naive_candidates(seqs, max_len):
    out = set()
    for s in seqs:
        for i in range(len(s)):
            for j in range(i + 1, len(s) + 1):
                w = tuple(s[i:j])
                if len(w) <= max_len and all(w[k] != w[k + 1] for k in range(len(w) - 1)):
                    out.add(w)
    return out
