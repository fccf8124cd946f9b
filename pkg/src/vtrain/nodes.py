"""Detection of observations that pin the alignment to a state.

Position u is an order-r node for state l when the score of l, continued
through the best partial path over the next r observations, dominates every
competitor uniformly over destination states. Order-0 nodes are the familiar
"all backtracking funnels through l here" case; higher orders let the pin
take effect r steps later, which removes the positivity constraint on l's
transition row. Node status at (u, r) depends on observations up to u+r only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trellis import DEFAULT_TIE_TOL, build_trellis

__all__ = [
    "NodeRecord",
    "partial_max_matrix",
    "partial_max_likelihood",
    "t_r_set",
    "is_node",
    "detect_nodes",
]


@dataclass(frozen=True)
class NodeRecord:
    """An order-``order`` node for ``state`` at 0-based position ``position``."""

    position: int
    state: int
    order: int


def _maxplus_step(left, emis_row, logP):
    """(max,+) product: best continuation through one more observation.

    left[.., i, q] is a best partial log likelihood ending in q; the result
    picks the best q to emit the new observation and hop to j.
    """
    with np.errstate(invalid="ignore"):
        return (left[..., :, None] + (emis_row[:, None] + logP)[None, :, :]).max(axis=-2)


def partial_max_matrix(trellis, u, r):
    """(K, K) matrix of the best log likelihood of bridging state i at step u
    to state j at step u+r+1 through any intermediate word, weighting the r
    intermediate emissions. r = 0 gives the plain log transition matrix."""
    if u + r > trellis.n - 1:
        raise ValueError(f"order {r} at position {u} needs observations beyond the sequence")
    logP = trellis.log_transition
    out = logP[None, :, :]
    for step in range(1, r + 1):
        out = _maxplus_step(out, trellis.log_emission[u + step], logP)
    return out[0]


def partial_max_likelihood(trellis, u, i, j, r):
    """Scalar accessor for one (i, j) bridge value."""
    return float(partial_max_matrix(trellis, u, r)[i, j])


def _dominant_rows(scores, tie_tol):
    """Boolean vector: rows that attain every column maximum within the band.

    Columns whose maximum is -inf constrain nothing (0 >= 0 likelihoods).
    """
    colmax = scores.max(axis=0)
    live = colmax > -np.inf
    if not live.any():
        return np.ones(scores.shape[0], dtype=bool)
    return np.all(scores[:, live] >= colmax[live] - tie_tol, axis=1)


def is_node(trellis, u, l, r, tie_tol=None):
    """Whether position u (0-based) is an order-r node for state l.

    Needs observations through u+r only. The final position is admitted for
    order 0 (the criterion then asserts dominance over any continuation),
    which is how order-0 barriers ending a sequence are checked.
    """
    tol = trellis.log_tie_tolerance if tie_tol is None else tie_tol
    if not (0 <= u <= trellis.n - 1 and u + r <= trellis.n - 1):
        raise ValueError(f"order {r} at position {u} is out of range for n={trellis.n}")
    scores = trellis.log_delta[u][:, None] + partial_max_matrix(trellis, u, r)
    return bool(_dominant_rows(scores, tol)[l])


def t_r_set(trellis, u, j, r, tie_tol=None):
    """Order-r generalization of the tie sets: states l whose score, bridged
    over r-1 intermediate observations into state j, dominates all others.
    r = 1 coincides with the trellis tie sets."""
    if r < 1:
        raise ValueError("order must be >= 1")
    tol = trellis.log_tie_tolerance if tie_tol is None else tie_tol
    scores = trellis.log_delta[u] + partial_max_matrix(trellis, u, r - 1)[:, j]
    best = scores.max()
    if best == -np.inf:
        return tuple(range(trellis.n_states))
    return tuple(int(l) for l in np.nonzero(scores >= best - tol)[0])


def detect_nodes(obs, model, r_max, tie_tol=DEFAULT_TIE_TOL, trellis=None):
    """All (position, state) pairs that are nodes of some order <= r_max,
    each reported at its minimal order, sorted by position.

    Higher orders for a reported pair follow from order monotonicity. The
    sweep over orders is batched across positions: the bridge matrices for
    every position advance one observation per round.
    """
    obs = np.asarray(obs, dtype=float)
    n = obs.shape[0]
    if not 0 <= r_max < n:
        raise ValueError("r_max must lie in [0, n)")
    if trellis is None:
        trellis = build_trellis(obs, model, tie_tol=tie_tol)
    K = model.n_states
    logP = trellis.log_transition
    n_pos = n - 1
    if n_pos <= 0:
        return []
    # bridge[u] holds the (K, K) partial-max matrix of order r for position u
    bridge = np.broadcast_to(logP, (n_pos, K, K)).copy()
    found: dict[tuple[int, int], int] = {}
    for r in range(r_max + 1):
        valid = n_pos if r == 0 else min(n_pos, n - r)
        if valid <= 0:
            break
        if r > 0:
            emis = trellis.log_emission[r : r + valid]  # row u+r for position u
            with np.errstate(invalid="ignore"):
                bridge[:valid] = (
                    bridge[:valid, :, :, None] + (emis[:, :, None] + logP[None, :, :])[:, None, :, :]
                ).max(axis=2)
        scores = trellis.log_delta[:valid, :, None] + bridge[:valid]
        colmax = scores.max(axis=1)
        live = colmax > -np.inf
        ok = np.all(
            (scores >= (colmax - tie_tol)[:, None, :]) | ~live[:, None, :],
            axis=2,
        )
        for u, l in zip(*np.nonzero(ok)):
            found.setdefault((int(u), int(l)), r)
    records = [NodeRecord(position=u, state=l, order=r) for (u, l), r in found.items()]
    records.sort(key=lambda rec: (rec.position, rec.state, rec.order))
    return records
