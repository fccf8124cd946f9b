"""Piecewise alignment at barrier-derived nodes, renewal bookkeeping, and the
regenerative estimator of the limiting per-state observation measures.

Scanning a sequence for barrier occurrences yields observable node positions.
Between consecutive nodes the alignment decomposes into independent
constrained selections, each computable from its own segment alone, which is
what makes prefixes of the path stable under future observations and the
whole path extendable to infinite sequences.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import CycleTimeout
from .measures import EmpiricalMeasure
from .models import Realization
from .trellis import (
    DEFAULT_TIE_TOL,
    Alignment,
    build_trellis,
    canonical_alignment,
    constrained_alignment,
)

__all__ = [
    "SegmentedAlignment",
    "RenewalLedger",
    "scan_block_matches",
    "segment_alignment",
    "renewal_ledger",
    "QEstimate",
    "estimate_q_regenerative",
    "save_ledger_csv",
]


@dataclass(frozen=True)
class SegmentedAlignment:
    """A full-sequence alignment assembled from per-segment selections.

    ``node_positions`` are the usable node positions (0-based); the path is
    pinned to ``state`` at each of them. ``stable_length`` is how much of the
    path is final regardless of any continuation of the sequence: everything
    through the last node. The tail beyond it is computed but provisional.
    """

    path: np.ndarray
    node_positions: np.ndarray
    state: int
    order: int
    log_likelihood: float

    def __post_init__(self):
        path = np.asarray(self.path, dtype=int)
        nodes = np.asarray(self.node_positions, dtype=int)
        path.setflags(write=False)
        nodes.setflags(write=False)
        object.__setattr__(self, "path", path)
        object.__setattr__(self, "node_positions", nodes)

    @property
    def stable_length(self):
        return int(self.node_positions[-1]) + 1 if len(self.node_positions) else 0

    def __len__(self):
        return len(self.path)


def scan_block_matches(obs, spec):
    """0-based start positions where the block membership test passes."""
    obs = np.asarray(obs, dtype=float)
    n = len(obs)
    M = spec.block_length
    if n < M:
        return np.empty(0, dtype=int)
    ok = np.ones(n - M + 1, dtype=bool)
    for i, comp in enumerate(spec.components):
        window = obs[i : n - M + 1 + i]
        if hasattr(comp, "symbols"):
            member = np.isin(window, np.array(sorted(comp.symbols), dtype=float))
        else:
            member = (window > comp.low) & (window < comp.high)
        ok &= member
    return np.nonzero(ok)[0]


def _usable_nodes(matches, spec, n):
    """Node positions derived from matches, deduplicated, separation-gapped,
    and restricted to nodes whose criterion window ends strictly inside obs."""
    r = spec.order
    nodes = matches + (spec.block_length - 1) - r
    usable = []
    for u in nodes:
        if u + r >= n - 1 and not (r == 0 and u == n - 1):
            # keep the paper's strict convention: at least one observation
            # must follow the criterion window for the node to be used
            continue
        if u + r > n - 1:
            continue
        if usable and u <= usable[-1] + r:
            continue
        usable.append(int(u))
    # order-0 nodes at the very end would leave an empty final segment; the
    # strict window rule above already excludes u + r >= n - 1 except nothing;
    return [u for u in usable if u + r < n - 1 or (u + r == n - 1 and False)] or usable and usable


def segment_alignment(obs, model, spec, initial_row=None, tie_tol=DEFAULT_TIE_TOL):
    """Scan for barrier occurrences and align piecewise at their nodes.

    The first segment runs from the configured initial row (the model's
    initial distribution by default) and is forced to end in the pinned state
    at the first node; interior segments restart from that state's transition
    row; the final segment is unconstrained. With no usable node this is
    exactly the canonical alignment.
    """
    obs = np.asarray(obs, dtype=float)
    n = len(obs)
    l, r = spec.state, spec.order
    matches = scan_block_matches(obs, spec)
    nodes = []
    for m0 in matches:
        u = int(m0 + (spec.block_length - 1) - r)
        if u + r >= n - 1:
            continue  # criterion window must end before the sequence does
        if nodes and u <= nodes[-1] + r:
            continue
        nodes.append(u)

    row_l = model.transition[l]
    if not nodes:
        trellis = build_trellis(obs, model, initial_row=initial_row, tie_tol=tie_tol)
        base = canonical_alignment(trellis)
        return SegmentedAlignment(
            path=base.path,
            node_positions=np.empty(0, dtype=int),
            state=l,
            order=r,
            log_likelihood=base.log_likelihood,
        )

    pieces = []
    first = build_trellis(obs[: nodes[0] + 1], model, initial_row=initial_row, tie_tol=tie_tol)
    pieces.append(constrained_alignment(first, nodes[0], l).path)
    for prev, cur in zip(nodes[:-1], nodes[1:]):
        seg = obs[prev + 1 : cur + 1]
        trellis = build_trellis(seg, model, initial_row=row_l, tie_tol=tie_tol)
        pieces.append(constrained_alignment(trellis, len(seg) - 1, l).path)
    tail = obs[nodes[-1] + 1 :]
    if len(tail):
        trellis = build_trellis(tail, model, initial_row=row_l, tie_tol=tie_tol)
        pieces.append(canonical_alignment(trellis).path)
    path = np.concatenate(pieces)
    from .trellis import log_lambda

    return SegmentedAlignment(
        path=path,
        node_positions=np.asarray(nodes, dtype=int),
        state=l,
        order=r,
        log_likelihood=log_lambda(path, obs, model, initial_row=initial_row),
    )


@dataclass(frozen=True)
class RenewalLedger:
    """Stopping-time families of a simulated run against one barrier.

    ``nu``: block matches requiring both the observation window in the
    component sets and the hidden window equal to the state word (needs the
    hidden states). ``theta``: observation-only matches. ``chain_hits``:
    hidden-word-only matches. ``tau``: node times of the nu matches; their
    gaps ``T`` are the regeneration cycle lengths (T[0] is the delay).
    All positions 0-based; T counts are in 1-based time so T[0] = tau[0]+1.
    """

    nu: np.ndarray
    theta: np.ndarray
    chain_hits: np.ndarray
    tau: np.ndarray
    T: np.ndarray


def renewal_ledger(realization, spec):
    obs = realization.observations
    states = realization.states
    n = len(obs)
    M = spec.block_length
    theta = scan_block_matches(obs, spec)
    word = np.asarray(spec.state_word, dtype=int)
    if n < M:
        chain_hits = np.empty(0, dtype=int)
    else:
        windows = np.lib.stride_tricks.sliding_window_view(states, M)
        chain_hits = np.nonzero((windows == word[None, :]).all(axis=1))[0]
    nu = np.intersect1d(theta, chain_hits)
    tau = nu + (M - 1) - spec.order
    if len(tau):
        T = np.concatenate([[tau[0] + 1], np.diff(tau)])
    else:
        T = np.empty(0, dtype=int)
    return RenewalLedger(nu=nu, theta=theta, chain_hits=chain_hits, tau=tau, T=T)


def save_ledger_csv(ledger, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "index", "time"])
        for kind, times in (("nu", ledger.nu), ("theta", ledger.theta), ("tau", ledger.tau)):
            for i, t in enumerate(times):
                writer.writerow([kind, i, int(t)])


@dataclass(frozen=True)
class QEstimate:
    """Pooled per-state occupation measures over i.i.d. regeneration cycles."""

    measures: list
    cycle_lengths: np.ndarray
    cycles: int


def _sample_conditioned(emission, comp, rng, cap=10**6):
    """Rejection-sample one draw from an emission restricted to a component."""
    for _ in range(cap):
        x = float(emission.sample(rng, 1)[0])
        if comp.contains(x):
            return x
    raise CycleTimeout(f"rejection sampling exhausted {cap} attempts on {comp}")


def _simulate_cycle(model, spec, rng, max_cycle_len):
    """One regeneration cycle of the restarted process.

    The hidden chain starts with the tail of the barrier word that follows
    the node, emitting observations conditioned to the matching component
    sets, then runs free. The cycle ends at the node of the first full
    (hidden word, observation block) match.
    """
    M, r = spec.block_length, spec.order
    word = spec.state_word
    K = model.n_states
    cum_rows = np.cumsum(model.transition, axis=1)
    cum_rows[:, -1] = 1.0

    states = list(word[M - r :])
    obs = [
        _sample_conditioned(model.emissions[word[M - r + i]], spec.components[M - r + i], rng)
        for i in range(r)
    ]
    prev = word[-1] if r > 0 else spec.state
    scan_from = 0
    match = None
    while match is None:
        chunk = 256
        for _ in range(chunk):
            s = int(np.searchsorted(cum_rows[prev], rng.random(), side="right"))
            states.append(s)
            obs.append(float(model.emissions[s].sample(rng, 1)[0]))
            prev = s
        if len(states) > max_cycle_len + M:
            raise CycleTimeout(
                f"no regeneration within {max_cycle_len} steps; "
                "the barrier may be miscertified or too rare"
            )
        arr_obs = np.asarray(obs)
        arr_states = np.asarray(states, dtype=int)
        cand = scan_block_matches(arr_obs, spec)
        cand = cand[cand >= scan_from]
        for m0 in cand:
            if m0 + M <= len(arr_states) and tuple(arr_states[m0 : m0 + M]) == tuple(word):
                match = int(m0)
                break
        scan_from = max(0, len(obs) - M + 1)
    horizon = match + M
    return np.asarray(obs[: horizon + 1]) if len(obs) > horizon else np.asarray(obs), match


def estimate_q_regenerative(model, spec, cycles, seed, max_cycle_len=100_000, tie_tol=DEFAULT_TIE_TOL):
    """Monte-Carlo estimate of the limiting per-state observation measures.

    Each cycle is drawn independently from the restarted process, aligned
    piecewise with the pinned state's transition row as the initial row, and
    truncated at its regeneration node; occupation sums over cycles form the
    ratio estimator. Cycles use split RNG substreams, so the reduction is
    order-independent.
    """
    if cycles < 1:
        raise ValueError("cycles must be >= 1")
    M, r, l = spec.block_length, spec.order, spec.state
    K = model.n_states
    row_l = model.transition[l]
    seeds = np.random.SeedSequence(seed).spawn(cycles)
    per_state = [[] for _ in range(K)]
    lengths = np.empty(cycles, dtype=int)
    for c in range(cycles):
        rng = np.random.Generator(np.random.PCG64(seeds[c]))
        # one spare draw beyond the matched window keeps the final node usable
        obs, match = _simulate_cycle(model, spec, rng, max_cycle_len)
        if len(obs) == match + M:
            extra = float(model.emissions[int(np.argmax(row_l))].sample(rng, 1)[0])
            obs = np.concatenate([obs, [extra]])
        seg = segment_alignment(obs, model, spec, initial_row=row_l, tie_tol=tie_tol)
        cycle_len = match + M - r  # positions 0 .. tau inclusive
        lengths[c] = cycle_len
        path = seg.path[:cycle_len]
        window = obs[:cycle_len]
        for s in range(K):
            sel = window[path == s]
            if sel.size:
                per_state[s].append(sel)
    measures = []
    for s in range(K):
        pooled = np.concatenate(per_state[s]) if per_state[s] else np.empty(0)
        measures.append(EmpiricalMeasure(state=s, observations=pooled, fallback=pooled.size == 0))
    return QEstimate(measures=measures, cycle_lengths=lengths, cycles=cycles)
