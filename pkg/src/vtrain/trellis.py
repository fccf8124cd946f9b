"""Log-domain Viterbi scores, tie-set backtracking, and canonical path selection.

Score ties are declared with a log-space band: two log scores a <= b tie when
b - a <= log_tie_tolerance, i.e. when the likelihood ratio is within the band.
The band is invariant under the per-column renormalization applied for range
control. Backtracking stores whole tie sets rather than single backpointers
because node detection quantifies over them.

The canonical path is the reverse-lexicographic maximum of the alignment set,
realized by greedy largest-index backtracking from the end. That greedy walk
attains the maximum because membership of a path in the alignment set only
constrains adjacent pairs through the tie sets, so any locally maximal choice
extends to a full path; the enumeration oracle in the tests discharges this.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass

import numpy as np

from .errors import AllPathsImpossible, InstanceTooLarge, StateUnreachable

DEFAULT_TIE_TOL = 1e-9
ENUMERATION_BOUND = 10**6

__all__ = [
    "ScoreTrellis",
    "Alignment",
    "log_lambda",
    "build_trellis",
    "canonical_alignment",
    "constrained_alignment",
    "enumerate_alignments",
    "reverse_lex_max",
    "dump_trellis_csv",
]


@dataclass(frozen=True)
class Alignment:
    """A state path together with its own joint log likelihood."""

    path: np.ndarray
    log_likelihood: float

    def __post_init__(self):
        path = np.asarray(self.path, dtype=int)
        path.setflags(write=False)
        object.__setattr__(self, "path", path)

    def __len__(self):
        return len(self.path)


@dataclass(frozen=True)
class ScoreTrellis:
    """Scores log delta_u(l) plus the maximizing-predecessor tie sets.

    ``tie_mask[u, j, l]`` is True when state l is a maximizing predecessor of
    state j across step u -> u+1. ``log_emission`` and ``log_transition`` are
    retained so paths can be rescored without the model at hand.
    """

    log_delta: np.ndarray
    tie_mask: np.ndarray
    log_initial_row: np.ndarray
    log_emission: np.ndarray
    log_transition: np.ndarray
    log_tie_tolerance: float

    @property
    def n(self):
        return self.log_delta.shape[0]

    @property
    def n_states(self):
        return self.log_delta.shape[1]

    def tie_set(self, u, j):
        """t(u, j): maximizing predecessors of state j at step u -> u+1."""
        return tuple(int(l) for l in np.nonzero(self.tie_mask[u, j])[0])

    def terminal_states(self):
        """States attaining the maximal terminal score, within the tie band."""
        last = self.log_delta[-1]
        best = last.max()
        if best == -np.inf:
            raise AllPathsImpossible("all terminal scores are -inf")
        return tuple(int(l) for l in np.nonzero(last >= best - self.log_tie_tolerance)[0])

    def rescore(self, path):
        """Joint log likelihood of a path under the trellis' own matrices."""
        path = np.asarray(path, dtype=int)
        n = len(path)
        total = self.log_initial_row[path[0]] + self.log_emission[0, path[0]]
        if n > 1:
            total += self.log_transition[path[:-1], path[1:]].sum()
            total += self.log_emission[np.arange(1, n), path[1:]].sum()
        return float(total)


def log_lambda(path, obs, model, initial_row=None):
    """Joint log likelihood of (path, obs): log of the initial weight, the
    transition product, and the emission product. -inf for impossible paths."""
    path = np.asarray(path, dtype=int)
    obs = np.asarray(obs, dtype=float)
    if path.shape != obs.shape:
        raise ValueError("path and observations must have equal length")
    init = np.asarray(initial_row, dtype=float) if initial_row is not None else model.initial
    with np.errstate(divide="ignore"):
        log_init = np.log(init)
    logf = model.log_emission_matrix(obs)
    total = log_init[path[0]] + logf[0, path[0]]
    if len(path) > 1:
        logP = model.log_transition()
        total += logP[path[:-1], path[1:]].sum()
        total += logf[np.arange(1, len(path)), path[1:]].sum()
    return float(total)


def build_trellis(obs, model, initial_row=None, tie_tol=DEFAULT_TIE_TOL):
    """Run the score recursion over obs.

    ``initial_row`` defaults to the model's initial distribution; passing a
    transition row restarts the recursion as if the chain were just pinned at
    that row's state, which is how segment-local alignments are produced.
    """
    obs = np.asarray(obs, dtype=float)
    n = obs.shape[0]
    if n < 1:
        raise ValueError("need at least one observation")
    K = model.n_states
    init = np.asarray(initial_row, dtype=float) if initial_row is not None else model.initial
    with np.errstate(divide="ignore"):
        log_init = np.log(init)
    logP = model.log_transition()
    logf = model.log_emission_matrix(obs)

    log_delta = np.empty((n, K))
    tie_mask = np.zeros((max(n - 1, 0), K, K), dtype=bool)
    col = log_init + logf[0]
    offset = 0.0
    shift = col.max()
    if shift == -np.inf:
        raise AllPathsImpossible("no state has positive initial weight and density at step 0")
    col = col - shift
    offset += shift
    log_delta[0] = col + offset
    with np.errstate(invalid="ignore"):
        for u in range(n - 1):
            scores = col[:, None] + logP  # [l, j]
            best = scores.max(axis=0)
            alive = best > -np.inf
            tie_mask[u, alive] = (scores.T[alive] >= (best[alive] - tie_tol)[:, None])
            nxt = best + logf[u + 1]
            shift = nxt.max()
            if shift == -np.inf:
                raise AllPathsImpossible(f"score column at step {u + 1} is identically zero")
            col = nxt - shift
            offset += shift
            log_delta[u + 1] = col + offset

    log_delta.setflags(write=False)
    tie_mask.setflags(write=False)
    return ScoreTrellis(
        log_delta=log_delta,
        tie_mask=tie_mask,
        log_initial_row=log_init,
        log_emission=logf,
        log_transition=logP,
        log_tie_tolerance=tie_tol,
    )


def _greedy_backtrack(trellis, end_u, end_state):
    path = np.empty(end_u + 1, dtype=int)
    path[end_u] = end_state
    for u in range(end_u - 1, -1, -1):
        candidates = np.nonzero(trellis.tie_mask[u, path[u + 1]])[0]
        if candidates.size == 0:
            raise AllPathsImpossible(f"no admissible predecessor at step {u}")
        path[u] = candidates[-1]
    return path


def canonical_alignment(trellis):
    """Reverse-lexicographic maximum of the alignment set.

    Backtracks from the end, at each step taking the largest state index in
    the admissible tie set; the terminal state is the largest index among the
    score maximizers.
    """
    end_state = trellis.terminal_states()[-1]
    path = _greedy_backtrack(trellis, trellis.n - 1, end_state)
    return Alignment(path=path, log_likelihood=trellis.rescore(path))


def constrained_alignment(trellis, u, l):
    """Reverse-lex maximal path over steps 0..u forced to end in state l."""
    if trellis.log_delta[u, l] == -np.inf:
        raise StateUnreachable(f"state {l} has zero score at step {u}")
    path = _greedy_backtrack(trellis, u, l)
    return Alignment(path=path, log_likelihood=trellis.rescore(path[: u + 1]))


def reverse_lex_max(paths):
    """Maximum under the order that compares the last differing position."""
    return max(paths, key=lambda p: tuple(reversed(tuple(p))))


def enumerate_alignments(obs, model, cap=ENUMERATION_BOUND, tie_tol=DEFAULT_TIE_TOL, initial_row=None):
    """Exhaustively score all state paths; the test oracle for the alignment set.

    Returns every path whose log likelihood is within ``tie_tol`` of the
    maximum, as Alignment values.
    """
    obs = np.asarray(obs, dtype=float)
    n = obs.shape[0]
    K = model.n_states
    if K**n > cap:
        raise InstanceTooLarge(f"{K}^{n} paths exceed the cap of {cap}")
    init = np.asarray(initial_row, dtype=float) if initial_row is not None else model.initial
    with np.errstate(divide="ignore"):
        log_init = np.log(init)
    logP = model.log_transition()
    logf = model.log_emission_matrix(obs)
    paths = np.array(list(itertools.product(range(K), repeat=n)), dtype=int)
    scores = log_init[paths[:, 0]] + logf[0, paths[:, 0]]
    for t in range(1, n):
        scores = scores + logP[paths[:, t - 1], paths[:, t]] + logf[t, paths[:, t]]
    best = scores.max()
    if best == -np.inf:
        raise AllPathsImpossible("every path has zero likelihood")
    keep = np.nonzero(scores >= best - tie_tol)[0]
    return [Alignment(path=paths[i], log_likelihood=float(scores[i])) for i in keep]


def dump_trellis_csv(trellis, path):
    """Debug dump: one row per (step, state) with the score and the tie set
    of maximizing predecessors feeding that state (empty at step 0)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["u", "state", "log_delta", "tie_set"])
        for u in range(trellis.n):
            for j in range(trellis.n_states):
                ties = "" if u == 0 else "|".join(str(l) for l in trellis.tie_set(u - 1, j))
                writer.writerow([u, j, repr(float(trellis.log_delta[u, j])), ties])
