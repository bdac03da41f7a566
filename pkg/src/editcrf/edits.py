"""Edit-operation semantics over string position pairs.

Each operation maps a lattice position pair (i, j) to the set of positions
it may land on.  Every landing consumes at least one symbol from x, from y,
or from both, so repeated application always terminates and the induced
edit lattice is acyclic.
"""

from typing import NamedTuple, Optional, FrozenSet, Tuple

# Word separators used by every word-level operation.  Periods are not
# separators, so abbreviated tokens such as "proc." stay intact.
SEPARATOR_CHARS = frozenset(',;:()"')

INSERT = "insert"
DELETE = "delete"
SUBSTITUTE = "substitute"
SWAP = "swap-two-characters"
SKIP_ANY_X = "skip-any-word-x"
SKIP_ANY_Y = "skip-any-word-y"
SKIP_LEX_X = "skip-word-in-lexicon-x"
SKIP_LEX_Y = "skip-word-in-lexicon-y"
SKIP_PRES_X = "skip-word-if-present-in-other-string-x"
SKIP_PRES_Y = "skip-word-if-present-in-other-string-y"
SKIP_PAREN_X = "skip-parenthesized-x"
SKIP_PAREN_Y = "skip-parenthesized-y"
DELETE_TO_WORD_END_X = "delete-until-end-of-word-x"
ABBREV = "abbreviation-expand"

_REGISTRY = (
    INSERT,
    DELETE,
    SUBSTITUTE,
    SWAP,
    SKIP_ANY_X,
    SKIP_ANY_Y,
    SKIP_LEX_X,
    SKIP_LEX_Y,
    SKIP_PRES_X,
    SKIP_PRES_Y,
    SKIP_PAREN_X,
    SKIP_PAREN_Y,
    DELETE_TO_WORD_END_X,
    ABBREV,
)

# Operations whose landings are not bounded by the (i+2, j+2) window.
WORD_LEVEL_OPS = frozenset(
    (
        SKIP_ANY_X,
        SKIP_ANY_Y,
        SKIP_LEX_X,
        SKIP_LEX_Y,
        SKIP_PRES_X,
        SKIP_PRES_Y,
        SKIP_PAREN_X,
        SKIP_PAREN_Y,
        DELETE_TO_WORD_END_X,
        ABBREV,
    )
)

# Operations that consult the model lexicon.
LEXICON_OPS = frozenset((SKIP_LEX_X, SKIP_LEX_Y))


class Landing(NamedTuple):
    i_next: int
    j_next: int


def registry() -> Tuple[str, ...]:
    """All registered edit-operation names, in canonical order."""
    return _REGISTRY


def is_separator(ch: str) -> bool:
    return ch.isspace() or ch in SEPARATOR_CHARS


def fold(ch: str) -> str:
    """Case-fold a single character for comparison."""
    low = ch.lower()
    return low if len(low) == 1 else ch


def fold_token(token: str) -> str:
    return "".join(fold(c) for c in token)


def word_span(s: str, p: int) -> Optional[Tuple[int, int]]:
    """Span of the word starting at position p, or None.

    A word starts at p when s[p] is a non-separator and p is either 0 or
    preceded by a separator.  The span is the maximal run of non-separator
    characters beginning there.
    """
    if not 0 <= p <= len(s):
        raise ValueError(f"position {p} out of range for string of length {len(s)}")
    if p == len(s) or is_separator(s[p]):
        return None
    if p > 0 and not is_separator(s[p - 1]):
        return None
    end = p
    while end < len(s) and not is_separator(s[end]):
        end += 1
    return (p, end)


def tokens(s: str) -> Tuple[str, ...]:
    """Case-folded words of s under the separator class above."""
    out = []
    p = 0
    while p < len(s):
        span = word_span(s, p)
        if span is None:
            p += 1
            continue
        out.append(fold_token(s[span[0] : span[1]]))
        p = span[1]
    return tuple(out)


def _skip_to(s: str, end: int) -> int:
    """Consume at most one following separator after a skipped region."""
    if end < len(s) and is_separator(s[end]):
        return end + 1
    return end


def _paren_end(s: str, start: int) -> Optional[int]:
    """Position just past the ')' matching the '(' at start, or len(s) if
    the parenthesis is unbalanced."""
    if start >= len(s) or s[start] != "(":
        return None
    depth = 0
    for k in range(start, len(s)):
        if s[k] == "(":
            depth += 1
        elif s[k] == ")":
            depth -= 1
            if depth == 0:
                return k + 1
    return len(s)


def _word_run_end(s: str, p: int) -> Optional[int]:
    """End of the non-separator run containing p; None on separators."""
    if p >= len(s) or is_separator(s[p]):
        return None
    end = p
    while end < len(s) and not is_separator(s[end]):
        end += 1
    return end


def _abbrev_match(tx: str, ty: str) -> bool:
    """True when token tx abbreviates token ty.

    Two forms are recognized: a dotted prefix ("proc." for "proceedings")
    and an all-caps form whose letters appear in order in ty starting at
    its first character ("DEPT" for "department").
    """
    if len(tx) >= 2 and tx.endswith("."):
        stem = fold_token(tx[:-1])
        fy = fold_token(ty)
        return bool(stem) and fy.startswith(stem) and len(stem) < len(fy)
    if len(tx) >= 2 and tx.isalpha() and tx.isupper():
        fx = fold_token(tx)
        fy = fold_token(ty)
        if len(fx) >= len(fy) or not fy or fx[0] != fy[0]:
            return False
        pos = 0
        for c in fx:
            pos = fy.find(c, pos)
            if pos < 0:
                return False
            pos += 1
        return True
    return False


def apply_edit(
    op: str,
    x: str,
    y: str,
    i: int,
    j: int,
    lexicon: FrozenSet[str] = frozenset(),
) -> Tuple[Landing, ...]:
    """Landings of op at positions (i, j); empty when inapplicable.

    Pure and deterministic.  Word skips consume the word plus at most one
    following separator so the remainder stays aligned at a word start.
    Character comparisons are case-insensitive.
    """
    if not (0 <= i <= len(x) and 0 <= j <= len(y)):
        raise ValueError(f"positions ({i}, {j}) out of range for |x|={len(x)}, |y|={len(y)}")
    if op == INSERT:
        return (Landing(i, j + 1),) if j < len(y) else ()
    if op == DELETE:
        return (Landing(i + 1, j),) if i < len(x) else ()
    if op == SUBSTITUTE:
        return (Landing(i + 1, j + 1),) if i < len(x) and j < len(y) else ()
    if op == SWAP:
        if (
            i + 1 < len(x)
            and j + 1 < len(y)
            and fold(x[i]) == fold(y[j + 1])
            and fold(x[i + 1]) == fold(y[j])
            and fold(x[i]) != fold(x[i + 1])
        ):
            return (Landing(i + 2, j + 2),)
        return ()
    if op in (SKIP_ANY_X, SKIP_LEX_X, SKIP_PRES_X):
        span = word_span(x, i)
        if span is None:
            return ()
        word = fold_token(x[span[0] : span[1]])
        if op == SKIP_LEX_X and word not in lexicon:
            return ()
        if op == SKIP_PRES_X and word not in tokens(y):
            return ()
        return (Landing(_skip_to(x, span[1]), j),)
    if op in (SKIP_ANY_Y, SKIP_LEX_Y, SKIP_PRES_Y):
        span = word_span(y, j)
        if span is None:
            return ()
        word = fold_token(y[span[0] : span[1]])
        if op == SKIP_LEX_Y and word not in lexicon:
            return ()
        if op == SKIP_PRES_Y and word not in tokens(x):
            return ()
        return (Landing(i, _skip_to(y, span[1])),)
    if op == SKIP_PAREN_X:
        end = _paren_end(x, i)
        return (Landing(_skip_to(x, end), j),) if end is not None else ()
    if op == SKIP_PAREN_Y:
        end = _paren_end(y, j)
        return (Landing(i, _skip_to(y, end)),) if end is not None else ()
    if op == DELETE_TO_WORD_END_X:
        end = _word_run_end(x, i)
        return (Landing(end, j),) if end is not None else ()
    if op == ABBREV:
        span_x = word_span(x, i)
        span_y = word_span(y, j)
        if span_x is None or span_y is None:
            return ()
        tx = x[span_x[0] : span_x[1]]
        ty = y[span_y[0] : span_y[1]]
        if not _abbrev_match(tx, ty):
            return ()
        return (Landing(_skip_to(x, span_x[1]), _skip_to(y, span_y[1])),)
    raise ValueError(f"unknown edit operation {op!r}")
