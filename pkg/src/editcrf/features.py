"""Input predicates, feature extraction, and lexicon construction.

A feature is a conjunction of one input predicate with one transition
parameter group.  Predicates are evaluated at the source cell (i, j) of a
step, so single-character operations behave exactly like classic edit
distance costs; the landing is available to callers that want it.
"""

from collections import Counter
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, Tuple

from .edits import fold, is_separator, tokens

# Canonical predicate order.  "bias" is always active and is appended to
# every enabled predicate set.
PREDICATES = (
    "same",
    "different",
    "same-alphabetic",
    "different-alphabetic",
    "same-numeric",
    "different-numeric",
    "punctuation-x",
    "punctuation-y",
    "alphabet-mismatch",
    "number-mismatch",
    "end-of-x",
    "end-of-y",
    "same-next-character",
    "different-next-character",
    "bias",
)

# Short aliases accepted in CLI feature lists.
PREDICATE_ALIASES = {
    "s": "same",
    "d": "different",
    "salp": "same-alphabetic",
    "dalp": "different-alphabetic",
    "snum": "same-numeric",
    "dnum": "different-numeric",
}


def _is_punct(ch: str) -> bool:
    return not ch.isalnum() and not ch.isspace()


def eval_predicate(name: str, x: str, y: str, i: int, j: int) -> int:
    """Evaluate one input predicate at cell (i, j); returns 0 or 1.

    Character-comparing predicates are 0 at the end of either string
    because there is no character to compare; end-of-x / end-of-y are the
    boundary indicators themselves.
    """
    if not (0 <= i <= len(x) and 0 <= j <= len(y)):
        raise ValueError(f"positions ({i}, {j}) out of range")
    if name == "bias":
        return 1
    if name == "end-of-x":
        return int(i == len(x))
    if name == "end-of-y":
        return int(j == len(y))
    if name in ("same-next-character", "different-next-character"):
        if i + 1 >= len(x) or j + 1 >= len(y):
            return 0
        same = fold(x[i + 1]) == fold(y[j + 1])
        return int(same if name == "same-next-character" else not same)
    if i >= len(x) or j >= len(y):
        return 0
    cx, cy = x[i], y[j]
    if name == "same":
        return int(fold(cx) == fold(cy))
    if name == "different":
        return int(fold(cx) != fold(cy))
    if name == "same-alphabetic":
        return int(cx.isalpha() and cy.isalpha() and fold(cx) == fold(cy))
    if name == "different-alphabetic":
        return int(cx.isalpha() and cy.isalpha() and fold(cx) != fold(cy))
    if name == "same-numeric":
        return int(cx.isdigit() and cy.isdigit() and cx == cy)
    if name == "different-numeric":
        return int(cx.isdigit() and cy.isdigit() and cx != cy)
    if name == "punctuation-x":
        return int(_is_punct(cx))
    if name == "punctuation-y":
        return int(_is_punct(cy))
    if name == "alphabet-mismatch":
        return int(cx.isalpha() != cy.isalpha())
    if name == "number-mismatch":
        return int(cx.isdigit() != cy.isdigit())
    raise ValueError(f"unknown predicate {name!r}")


def normalize_predicates(names: Iterable[str]) -> Tuple[str, ...]:
    """Resolve aliases, validate, add bias, and return in canonical order."""
    resolved = set()
    for name in names:
        full = PREDICATE_ALIASES.get(name, name)
        if full not in PREDICATES:
            raise ValueError(f"unknown predicate {name!r}")
        resolved.add(full)
    resolved.add("bias")
    return tuple(p for p in PREDICATES if p in resolved)


def extract(model, x, y, i, j, landing, from_state, op, to_state) -> Dict[int, float]:
    """Sparse feature vector for one candidate step.

    One active feature per active input predicate, conjoined with the
    parameter group of the (from_state, op, to_state) transition; the
    group's bias feature is always active.  Predicates are evaluated at
    the source cell (i, j).
    """
    group = model.group_of_transition(from_state, op, to_state)
    if group is None:
        raise ValueError(f"({from_state}, {op!r}, {to_state}) is not a model transition")
    vec: Dict[int, float] = {}
    for p_idx, pred in enumerate(model.predicates):
        if eval_predicate(pred, x, y, i, j):
            vec[model.feature_id(group, p_idx)] = 1.0
    return vec


@dataclass(frozen=True)
class LexiconSet:
    """A named set of lowercase tokens used by lexicon skip edits."""

    name: str
    words: FrozenSet[str]

    def __post_init__(self):
        for w in self.words:
            if not w:
                raise ValueError("lexicon words must be non-empty")
            if any(is_separator(c) for c in w):
                raise ValueError(f"lexicon word {w!r} contains a separator")


def build_lexicon(
    corpus: Iterable[str],
    top_k: int,
    stoplist: FrozenSet[str] = frozenset(),
    name: str = "default",
) -> LexiconSet:
    """The top_k most frequent case-folded tokens across the corpus.

    Stoplist entries are removed before ranking.  Ties are broken
    lexicographically so the result is deterministic.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    counts: Counter = Counter()
    for s in corpus:
        counts.update(tokens(s))
    stop = {t.lower() for t in stoplist}
    ranked = sorted(
        (t for t in counts if t not in stop),
        key=lambda t: (-counts[t], t),
    )
    return LexiconSet(name=name, words=frozenset(ranked[:top_k]))
