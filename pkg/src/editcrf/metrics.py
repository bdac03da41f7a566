"""Reference string-similarity measures for filtering and baselines."""

import math
from collections import Counter

from .edits import tokens


def jaro(x: str, y: str) -> float:
    """Jaro similarity in [0, 1].

    Matching window is floor(max(|x|, |y|) / 2) - 1; the score averages
    m/|x|, m/|y|, and (m - t)/m where t counts half-transpositions.
    Two empty strings score 1 by convention; no matches scores 0.
    """
    if x == y:
        return 1.0
    if not x or not y:
        return 0.0
    window = max(len(x), len(y)) // 2 - 1
    x_flags = [False] * len(x)
    y_flags = [False] * len(y)
    matches = 0
    for i, cx in enumerate(x):
        lo = max(0, i - window)
        hi = min(len(y), i + window + 1)
        for j in range(lo, hi):
            if not y_flags[j] and y[j] == cx:
                x_flags[i] = y_flags[j] = True
                matches += 1
                break
    if matches == 0:
        return 0.0
    x_matched = [c for c, f in zip(x, x_flags) if f]
    y_matched = [c for c, f in zip(y, y_flags) if f]
    half_transpositions = sum(a != b for a, b in zip(x_matched, y_matched))
    t = half_transpositions / 2.0
    m = float(matches)
    return (m / len(x) + m / len(y) + (m - t) / m) / 3.0


def cosine_tokens(x: str, y: str) -> float:
    """Cosine of raw token-count vectors after case folding.

    Tokenization uses the same separator class as the edit operations;
    a string with no tokens scores 0 against anything.
    """
    cx = Counter(tokens(x))
    cy = Counter(tokens(y))
    if not cx or not cy:
        return 0.0
    dot = sum(cx[t] * cy[t] for t in cx.keys() & cy.keys())
    nx = math.sqrt(sum(v * v for v in cx.values()))
    ny = math.sqrt(sum(v * v for v in cy.values()))
    return dot / (nx * ny)


def levenshtein(x: str, y: str) -> int:
    """Unit-cost insert/delete/substitute distance."""
    if len(x) < len(y):
        x, y = y, x
    previous = list(range(len(y) + 1))
    for i, cx in enumerate(x, start=1):
        current = [i] + [0] * len(y)
        for j, cy in enumerate(y, start=1):
            current[j] = min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + (cx != cy),
            )
        previous = current
    return previous[len(y)]
