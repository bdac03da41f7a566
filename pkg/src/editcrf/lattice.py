"""Exact inference over the (i, j, state) edit lattice of one string pair.

All quantities live in natural-log space.  The forward pass sums alignment
mass in anti-diagonal order; the backward pass completes it so that edge
posteriors and expected feature counts come from alpha + potential + beta
minus the relevant log-partition.  A max-product pass recovers the single
best alignment with a deterministic tie-breaking rule, and a brute-force
enumerator over tiny inputs serves as an independent oracle.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import edits
from .engine import Batch, expectations
from .errors import DegenerateInputError, NoPathError
from .features import extract
from .model import Q0, FsmModel

Constraint = Union[str, int]


@dataclass(frozen=True)
class BeamConfig:
    """Per-anti-diagonal pruning width; None means unlimited (exact)."""

    width: Optional[int] = None

    def __post_init__(self):
        if self.width is not None and self.width < 1:
            raise ValueError("beam width must be >= 1 when finite")


def _beam_width(beam) -> Optional[int]:
    if beam is None:
        return None
    if isinstance(beam, BeamConfig):
        return beam.width
    width = int(beam)
    if width < 1:
        raise ValueError("beam width must be >= 1 when finite")
    return width


@dataclass(frozen=True)
class Alignment:
    """A complete alignment: edits, landed positions, and visited states.

    Positions are the cumulative consumption points of each step, so the
    final entries equal (|x|, |y|).  All states lie in one subset.
    """

    edits: Tuple[str, ...]
    ix: Tuple[int, ...]
    iy: Tuple[int, ...]
    states: Tuple[int, ...]
    score: float


class Lattice:
    """Forward (and optionally backward) tables for one pair."""

    def __init__(self, model: FsmModel, x: str, y: str, beam=None):
        self.model = model
        self.x = x
        self.y = y
        self.beam = _beam_width(beam)
        self.batch = Batch(model, [(x, y)])
        self.w = self.batch.edge_weights(model.params)
        self.alpha, self.pruned = self.batch.forward(self.w, self.beam)
        self.beta: Optional[np.ndarray] = None

    def run_backward(self) -> "Lattice":
        if self.beta is None:
            self.beta = self.batch.backward(self.w)
        return self

    def _node(self, i: int, j: int, state: int) -> Optional[int]:
        g = self.batch.graphs[0]
        if state == Q0:
            return 0 if (i, j) == (0, 0) else None
        s_idx = self.batch.runtime.state_index.get(state)
        if s_idx is None or not (0 <= i <= g.nx and 0 <= j <= g.ny):
            return None
        return 1 + (i * (g.ny + 1) + j) * g.n_states + s_idx

    def alpha_at(self, i: int, j: int, state: int) -> float:
        node = self._node(i, j, state)
        return float(self.alpha[node]) if node is not None else -np.inf

    def beta_at(self, i: int, j: int, state: int) -> float:
        if self.beta is None:
            raise ValueError("backward pass has not been run")
        node = self._node(i, j, state)
        return float(self.beta[node]) if node is not None else -np.inf


def log_potential(model: FsmModel, x, y, i, j, landing, from_state, op, to_state) -> float:
    """Dot product of the weights with the step's feature vector."""
    allowed = edits.apply_edit(op, x, y, i, j, lexicon=model.lexicon_union)
    if tuple(landing) not in [tuple(l) for l in allowed]:
        raise ValueError(f"{tuple(landing)} is not a landing of {op!r} at ({i}, {j})")
    vec = extract(model, x, y, i, j, landing, from_state, op, to_state)
    return float(sum(model.params[fid] * v for fid, v in vec.items()))


def forward(model: FsmModel, x: str, y: str, beam=None) -> Lattice:
    """Fill alpha in anti-diagonal order; exact when beam is unlimited."""
    return Lattice(model, x, y, beam=beam)


def backward(model: FsmModel, x: str, y: str) -> Lattice:
    """Forward plus backward tables (beta = 0 at accepting nodes)."""
    return Lattice(model, x, y).run_backward()


def log_partition(lattice: Lattice) -> float:
    lz0, lz1 = lattice.batch.log_partitions(lattice.alpha)
    total = float(np.logaddexp(lz0[0], lz1[0]))
    if not np.isfinite(total):
        raise NoPathError("no complete alignment reaches an accepting node")
    return total


def constrained_log_partition(lattice: Lattice, z: int) -> float:
    if z not in (0, 1):
        raise ValueError("constraint label must be 0 or 1")
    lz0, lz1 = lattice.batch.log_partitions(lattice.alpha)
    value = float(lz1[0] if z == 1 else lz0[0])
    if not np.isfinite(value):
        raise NoPathError(f"no complete alignment inside subset S{z}")
    return value


def posterior_match(model: FsmModel, x: str, y: str, beam=None) -> float:
    """p(match | x, y): the S1 share of total alignment mass."""
    lattice = forward(model, x, y, beam=beam)
    lz0, lz1 = lattice.batch.log_partitions(lattice.alpha)
    total = np.logaddexp(lz0[0], lz1[0])
    if not np.isfinite(total):
        raise NoPathError("no complete alignment reaches an accepting node")
    return float(np.exp(lz1[0] - total))


def expected_feature_counts(
    model: FsmModel, x: str, y: str, constraint: Constraint = "all"
) -> np.ndarray:
    """Posterior-expected feature counts, optionally within one subset."""
    lattice = backward(model, x, y)
    batch, w = lattice.batch, lattice.w
    lz0, lz1 = batch.log_partitions(lattice.alpha)
    if constraint == "all":
        ref = np.array([np.logaddexp(lz0[0], lz1[0])])
        mask = None
    elif constraint in (0, 1):
        ref = np.array([lz1[0] if constraint == 1 else lz0[0]])
        mask = batch.subset == constraint
    else:
        raise ValueError(f"constraint must be 'all', 0, or 1, got {constraint!r}")
    if not np.isfinite(ref[0]):
        raise NoPathError(f"no complete alignment under constraint {constraint!r}")
    return batch.posterior_counts(w, lattice.alpha, lattice.beta, ref, mask)


def _path_edge_indices(parent: np.ndarray, src: np.ndarray, node: int) -> List[int]:
    out = []
    while parent[node] >= 0:
        k = int(parent[node])
        out.append(k)
        node = int(src[k])
    out.reverse()
    return out


def _path_key(batch: Batch, parent, node) -> Tuple[int, Tuple[str, ...], Tuple[int, ...]]:
    ks = _path_edge_indices(parent, batch.src, node)
    ops = tuple(batch.model.ops[batch.op_idx[k]] for k in ks)
    states = tuple(
        batch.runtime.states[batch.graphs[0].node_cell(int(batch.dst[k]))[2]] for k in ks
    )
    return (len(ks), ops, states)


def viterbi(model: FsmModel, x: str, y: str, constraint: Constraint = "all") -> Alignment:
    """Maximum-score complete alignment under the constraint.

    Ties are broken deterministically: shorter alignments first, then
    lexicographically by operation-name sequence, then by state ids.
    """
    batch = Batch(model, [(x, y)])
    w = batch.edge_weights(model.params)
    alignment, _ = viterbi_on_batch(batch, w, constraint)
    return alignment


def viterbi_on_batch(
    batch: Batch, w: np.ndarray, constraint: Constraint = "all"
) -> Tuple[Alignment, List[int]]:
    """Max-product pass over a single-pair batch with explicit potentials.

    Returns the best alignment and the indices of its batch edges, which
    lets callers accumulate feature counts without re-extraction.
    """
    model = batch.model
    if constraint == "all":
        mask = np.ones(batch.n_edges, dtype=bool)
    elif constraint in (0, 1):
        mask = batch.subset == constraint
    else:
        raise ValueError(f"constraint must be 'all', 0, or 1, got {constraint!r}")
    score = np.full(batch.n_nodes, -np.inf)
    score[0] = 0.0
    parent = np.full(batch.n_nodes, -1, dtype=np.int64)
    length = np.zeros(batch.n_nodes, dtype=np.int64)

    def candidate_key(k: int) -> Tuple[int, Tuple[str, ...], Tuple[int, ...]]:
        base = _path_key(batch, parent, int(batch.src[k]))
        op = model.ops[batch.op_idx[k]]
        state = batch.runtime.states[batch.graphs[0].node_cell(int(batch.dst[k]))[2]]
        return (base[0] + 1, base[1] + (op,), base[2] + (state,))

    for k in range(batch.n_edges):
        if not mask[k]:
            continue
        s = score[batch.src[k]]
        if s == -np.inf:
            continue
        cand = s + w[k]
        d = int(batch.dst[k])
        if cand > score[d]:
            score[d] = cand
            parent[d] = k
            length[d] = length[batch.src[k]] + 1
        elif cand == score[d] and candidate_key(k) < _path_key(batch, parent, d):
            parent[d] = k
            length[d] = length[batch.src[k]] + 1
    if constraint == "all":
        acc = np.concatenate([batch.acc0[0], batch.acc1[0]])
    else:
        acc = (batch.acc1 if constraint == 1 else batch.acc0)[0]
    best = None
    for node in acc:
        node = int(node)
        if score[node] == -np.inf:
            continue
        if best is None or score[node] > score[best] or (
            score[node] == score[best]
            and _path_key(batch, parent, node) < _path_key(batch, parent, best)
        ):
            best = node
    if best is None:
        raise NoPathError(f"no complete alignment under constraint {constraint!r}")
    ks = _path_edge_indices(parent, batch.src, best)
    g = batch.graphs[0]
    ops, ix, iy, states = [], [], [], []
    for k in ks:
        i, j, s_idx = g.node_cell(int(batch.dst[k]))
        ops.append(model.ops[batch.op_idx[k]])
        ix.append(i)
        iy.append(j)
        states.append(batch.runtime.states[s_idx])
    alignment = Alignment(
        edits=tuple(ops),
        ix=tuple(ix),
        iy=tuple(iy),
        states=tuple(states),
        score=float(score[best]),
    )
    return alignment, ks


def viterbi_subset_scores(model: FsmModel, x: str, y: str) -> Tuple[float, float]:
    """Best-path log-scores in (S0, S1); -inf when a subset has no path."""
    out = []
    for z in (0, 1):
        try:
            out.append(viterbi(model, x, y, constraint=z).score)
        except NoPathError:
            out.append(-np.inf)
    return out[0], out[1]


def viterbi_match_score(model: FsmModel, x: str, y: str) -> float:
    """Match probability from the ratio of best-path exponentiated scores."""
    v0, v1 = viterbi_subset_scores(model, x, y)
    total = np.logaddexp(v0, v1)
    if not np.isfinite(total):
        raise NoPathError("no complete alignment in either subset")
    return float(np.exp(v1 - total))


def alignment_feature_counts(model: FsmModel, x: str, y: str, alignment: Alignment) -> np.ndarray:
    """Dense feature counts accumulated along one alignment's steps."""
    counts = np.zeros(model.n_features)
    i, j, state = 0, 0, Q0
    for op, i2, j2, to in zip(alignment.edits, alignment.ix, alignment.iy, alignment.states):
        vec = extract(model, x, y, i, j, (i2, j2), state, op, to)
        for fid, v in vec.items():
            counts[fid] += v
        i, j, state = i2, j2, to
    return counts


def enumerate_alignments(model: FsmModel, x: str, y: str) -> List[Tuple[Alignment, float]]:
    """Exhaustively list all complete alignments with their log-scores.

    Independent of the dynamic program: walks transitions and landings
    directly, scoring each step with :func:`log_potential`.  Guarded to
    tiny inputs without word-level operations.
    """
    if len(x) > 4 or len(y) > 4:
        raise ValueError("enumeration is limited to strings of length <= 4")
    blocked = set(model.ops) & edits.WORD_LEVEL_OPS
    if blocked:
        raise ValueError(
            "enumeration is not supported with word-level operations: "
            + ", ".join(sorted(blocked))
        )
    if not x and not y:
        raise DegenerateInputError("both strings are empty; no non-empty alignment exists")
    trans_from: Dict[int, List] = {}
    for t in model.topology.transitions:
        trans_from.setdefault(t.frm, []).append(t)
    results: List[Tuple[Alignment, float]] = []

    def rec(i, j, state, ops, ix, iy, states, score):
        if i == len(x) and j == len(y) and state != Q0:
            alignment = Alignment(
                edits=tuple(ops), ix=tuple(ix), iy=tuple(iy), states=tuple(states), score=score
            )
            results.append((alignment, score))
            return
        for t in trans_from.get(state, ()):
            for landing in edits.apply_edit(t.op, x, y, i, j, lexicon=model.lexicon_union):
                lp = log_potential(model, x, y, i, j, landing, t.frm, t.op, t.to)
                rec(
                    landing.i_next,
                    landing.j_next,
                    t.to,
                    ops + [t.op],
                    ix + [landing.i_next],
                    iy + [landing.j_next],
                    states + [t.to],
                    score + lp,
                )

    rec(0, 0, Q0, [], [], [], [], 0.0)
    return results
