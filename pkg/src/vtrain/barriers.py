"""Barrier blocks: verification and constructive search.

A barrier is a product set of observation blocks such that any block drawn
from it forces a node at a fixed offset from the block end, no matter what
observations precede the block. Separated barriers additionally cannot
overlap a shifted copy of themselves within the node order, which is what
makes them usable as alignment restart points.

Verification quantifies over all prefixes. For discrete alphabets that
universal quantifier is closed out exactly: the node criterion sees the
prefix only through the renormalized score column, so we compute the set of
reachable columns (quotiented by rounding) as a fixed point and check the
criterion against every one. For continuous observations only sampling is
available, and a pass is reported as inconclusive rather than certified.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    BarrierRefuted,
    HypothesisLllFails,
    InstanceTooLarge,
    NoClusterFound,
)
from .models import DiscreteTable, simulate
from .nodes import _dominant_rows, is_node
from .trellis import DEFAULT_TIE_TOL, build_trellis

__all__ = [
    "SymbolSet",
    "Interval",
    "BarrierSpec",
    "BarrierCertificate",
    "verify_barrier",
    "construct_barrier_set",
    "separate_barriers",
    "is_shift_separated",
    "barrier_to_dict",
    "barrier_from_dict",
    "load_barrier",
    "save_barrier",
]

_ROUND_DECIMALS = 9


@dataclass(frozen=True)
class SymbolSet:
    """A finite set of discrete symbols; one component of a barrier block."""

    symbols: frozenset

    def __post_init__(self):
        object.__setattr__(self, "symbols", frozenset(int(z) for z in self.symbols))

    def contains(self, x):
        return float(x).is_integer() and int(x) in self.symbols

    def intersects(self, other):
        return bool(self.symbols & other.symbols)

    def example(self):
        return float(min(self.symbols))

    def to_json(self):
        return sorted(self.symbols)


@dataclass(frozen=True)
class Interval:
    """An open interval component for continuous 1-D observations."""

    low: float
    high: float

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError(f"empty interval ({self.low}, {self.high})")

    def contains(self, x):
        return self.low < x < self.high

    def intersects(self, other):
        return max(self.low, other.low) < min(self.high, other.high)

    def example(self):
        lo = self.low if math.isfinite(self.low) else self.high - 1.0
        hi = self.high if math.isfinite(self.high) else self.low + 1.0
        if not math.isfinite(self.low) and not math.isfinite(self.high):
            return 0.0
        return 0.5 * (lo + hi)

    def to_json(self):
        return {
            "low": self.low if math.isfinite(self.low) else None,
            "high": self.high if math.isfinite(self.high) else None,
        }


@dataclass(frozen=True)
class BarrierSpec:
    """A certified-or-candidate barrier: component sets, the emitting state
    word, the pinned state, and the node order. The node sits ``order``
    positions before the block end (so the state word there equals ``state``).
    """

    components: tuple
    state_word: tuple
    state: int
    order: int
    separated: bool = False
    certificate: str | None = None

    def __post_init__(self):
        components = tuple(self.components)
        word = tuple(int(s) for s in self.state_word)
        object.__setattr__(self, "components", components)
        object.__setattr__(self, "state_word", word)
        if len(word) != len(components):
            raise ValueError("state word and component list differ in length")
        if not 0 <= self.order < len(components):
            raise ValueError("order must lie in [0, block length)")
        if word[len(components) - self.order - 1] != self.state:
            raise ValueError("state word does not place the pinned state at the node offset")

    @property
    def block_length(self):
        return len(self.components)

    @property
    def node_offset(self):
        """0-based offset of the node within the block."""
        return self.block_length - self.order - 1

    def is_discrete(self):
        return all(isinstance(c, SymbolSet) for c in self.components)

    def contains_block(self, block):
        return len(block) == self.block_length and all(
            c.contains(x) for c, x in zip(self.components, block)
        )


@dataclass(frozen=True)
class BarrierCertificate:
    """Outcome of verification. ``certified`` only ever comes from the exact
    discrete closure; a sampled pass is ``inconclusive``."""

    status: str  # "certified" | "inconclusive" | "refuted"
    method: str
    checks: int
    detail: str = ""
    counterexample: dict | None = None

    @property
    def passed(self):
        return self.status in ("certified", "inconclusive")


def check_barrier_feasible(spec, model):
    """Positivity of the state word and of every component under its emitter."""
    problems = []
    word = spec.state_word
    if model.initial[word[0]] <= 0 and not (model.transition[:, word[0]] > 0).any():
        problems.append(f"state {word[0]} is never entered")
    for a, b in zip(word[:-1], word[1:]):
        if model.transition[a, b] <= 0:
            problems.append(f"transition {a}->{b} along the state word has zero probability")
    for i, (comp, s) in enumerate(zip(spec.components, word)):
        if isinstance(comp, SymbolSet):
            em = model.emissions[s]
            mass = sum(em.probabilities[z] for z in comp.symbols if z < len(em.probabilities))
        else:
            mass = _interval_mass(model.emissions[s], comp)
        if mass <= 0:
            problems.append(f"component {i} has zero mass under state {s}")
    return problems


def _interval_mass(em, interval):
    lo, hi = interval.low, interval.high
    if isinstance(em, DiscreteTable):
        return sum(p for z, p in enumerate(em.probabilities) if lo < z < hi)
    if em.family == "gaussian":
        from scipy.stats import norm

        sd = math.sqrt(em.variance)
        return norm.cdf(hi, em.mean, sd) - norm.cdf(lo, em.mean, sd)
    # exponential half lines
    sign = 1.0 if em.orientation == "positive" else -1.0
    a, b = sorted((sign * lo, sign * hi))
    a, b = max(a, 0.0), max(b, 0.0)
    return math.exp(-em.rate * a) - math.exp(-em.rate * b) if b > a else 0.0


# -- discrete closure certification -------------------------------------------

def _discrete_tables(model):
    emissions = model.emissions
    if not all(isinstance(em, DiscreteTable) for em in emissions):
        return None
    V = max(em.alphabet_size for em in emissions)
    E = np.zeros((V, model.n_states))
    for l, em in enumerate(emissions):
        E[: em.alphabet_size, l] = em.probabilities
    return E


def _norm_col(col):
    m = col.max()
    if m == -np.inf:
        return None
    return col - m


def _key(arr):
    return np.round(arr, _ROUND_DECIMALS).tobytes()


class _ClosureBudget(Exception):
    pass


def _reachable_prefix_columns(log_init, logP, logfD, cap):
    """Fixed point of normalized score columns over all observation prefixes."""
    V = logfD.shape[0]
    seen = {}
    frontier = []
    for z in range(V):
        col = _norm_col(log_init + logfD[z])
        if col is None:
            continue
        k = _key(col)
        if k not in seen:
            seen[k] = (col, (None, z))
            frontier.append(col)
    while frontier:
        nxt = []
        for col in frontier:
            base = (col[:, None] + logP).max(axis=0)
            for z in range(V):
                new = _norm_col(base + logfD[z])
                if new is None:
                    continue
                k = _key(new)
                if k not in seen:
                    if len(seen) >= cap:
                        raise _ClosureBudget(f"prefix-column closure exceeded {cap} states")
                    seen[k] = (new, (_key(col), z))
                    nxt.append(new)
        frontier = nxt
    return seen


def _prefix_of(seen, key):
    symbols = []
    while key is not None:
        _, (parent, z) = seen[key]
        symbols.append(z)
        key = parent
    return symbols[::-1]


def _advance_through_sets(states, components, logP, logfD, cap):
    """Push a set of (column, provenance) through successive symbol sets."""
    for idx, comp in enumerate(components):
        nxt = {}
        for col, prov in states.values():
            base = (col[:, None] + logP).max(axis=0) if col is not None else None
            for z in sorted(comp.symbols):
                new_raw = (base + logfD[z]) if base is not None else None
                new = _norm_col(new_raw) if new_raw is not None else None
                if new is None:
                    continue
                k = _key(new)
                if k not in nxt:
                    if len(nxt) >= cap:
                        raise _ClosureBudget(f"block-column set exceeded {cap} states at component {idx}")
                    nxt[k] = (new, prov + (z,))
        states = nxt
    return states


def _suffix_matrices(components, logP, logfD, cap):
    """All normalized bridge matrices over choices from the trailing sets."""
    states = {_key(logP): (logP - logP.max(), ())}
    for comp in reversed(components):
        nxt = {}
        for mat, prov in states.values():
            for z in sorted(comp.symbols):
                A = logP + logfD[z][None, :]  # hop into q then emit z... see below
                # bridge extension: new[i, j] = max_q p_iq f_q(z) mat[q, j]
                with np.errstate(invalid="ignore"):
                    new = (A[:, :, None] + mat[None, :, :]).max(axis=1)
                m = new.max()
                if m == -np.inf:
                    continue
                new = new - m
                k = _key(new)
                if k not in nxt:
                    if len(nxt) >= cap:
                        raise _ClosureBudget(f"suffix-matrix set exceeded {cap} states")
                    nxt[k] = (new, (z,) + prov)
        states = nxt
    return states


def _verify_discrete_closure(spec, model, tie_tol, cap):
    E = _discrete_tables(model)
    with np.errstate(divide="ignore"):
        logfD = np.log(E)
        log_init = np.log(model.initial)
    logP = model.log_transition()
    M, r, l = spec.block_length, spec.order, spec.state

    prefix_cols = _reachable_prefix_columns(log_init, logP, logfD, cap)
    checks = 0

    # Columns at the node position, for every reachable prefix (incl. empty).
    starts = {None: (None, ())}  # sentinel: consume the first block symbol from the initial row
    node_states = {}
    first = spec.components[0]
    for z in sorted(first.symbols):
        col = _norm_col(log_init + logfD[z])
        if col is not None:
            node_states.setdefault(_key(col), (col, ("", z)))
    for key, (col, _) in prefix_cols.items():
        base = (col[:, None] + logP).max(axis=0)
        for z in sorted(first.symbols):
            new = _norm_col(base + logfD[z])
            if new is not None:
                node_states.setdefault(_key(new), (new, (key, z)))
    node_states = _advance_through_sets(node_states, spec.components[1 : M - r], logP, logfD, cap)
    suffix = _suffix_matrices(spec.components[M - r :], logP, logfD, cap)

    for col, col_prov in node_states.values():
        for mat, mat_prov in suffix.values():
            checks += 1
            scores = col[:, None] + mat
            if not _dominant_rows(scores, tie_tol)[l]:
                origin, consumed = col_prov[0], list(col_prov[1:])
                prefix = [] if origin == "" else _prefix_of(prefix_cols, origin)
                block = consumed + list(mat_prov)
                return BarrierCertificate(
                    status="refuted",
                    method="discrete-closure",
                    checks=checks,
                    detail="node criterion fails for a reachable prefix",
                    counterexample={"prefix": prefix, "block": block},
                )
    return BarrierCertificate(
        status="certified",
        method="discrete-closure",
        checks=checks,
        detail=f"{len(prefix_cols)} prefix columns, {len(node_states)} node columns, {len(suffix)} bridge matrices",
    )


def _enumerate_blocks(spec, cap):
    if spec.is_discrete():
        pools = [sorted(c.symbols) for c in spec.components]
        total = 1
        for p in pools:
            total *= len(p)
        blocks = itertools.product(*pools)
        if total > cap:
            blocks = itertools.islice(blocks, cap)
        return [list(map(float, b)) for b in blocks]
    return None


def _verify_discrete_direct(spec, model, tie_tol, prefix_len, block_cap=2048):
    """Literal check over all short prefixes; a cross-check on the closure."""
    V = max(em.alphabet_size for em in model.emissions)
    M, r, l = spec.block_length, spec.order, spec.state
    node_u = spec.node_offset
    checks = 0
    blocks = _enumerate_blocks(spec, block_cap)
    for w in range(prefix_len + 1):
        for prefix in itertools.product(range(V), repeat=w):
            for block in blocks:
                obs = np.array(list(map(float, prefix)) + block)
                checks += 1
                try:
                    trellis = build_trellis(obs, model, tie_tol=tie_tol)
                except Exception:
                    continue  # dead prefixes force nothing
                if not is_node(trellis, w + node_u, l, r):
                    return BarrierCertificate(
                        status="refuted",
                        method="discrete-direct",
                        checks=checks,
                        detail=f"node criterion fails at prefix length {w}",
                        counterexample={"prefix": list(prefix), "block": block},
                    )
    return BarrierCertificate(status="inconclusive", method="discrete-direct", checks=checks)


def _interval_samples(comp, rng, k=4):
    lo, hi = comp.low, comp.high
    vals = []
    span_lo = lo if math.isfinite(lo) else (hi - 10.0 if math.isfinite(hi) else -10.0)
    span_hi = hi if math.isfinite(hi) else (lo + 10.0 if math.isfinite(lo) else 10.0)
    vals.extend(rng.uniform(span_lo, span_hi, size=k))
    eps = 1e-9 * max(1.0, abs(span_lo), abs(span_hi))
    if math.isfinite(lo):
        vals.append(lo + eps)
    if math.isfinite(hi):
        vals.append(hi - eps)
    if not math.isfinite(hi):
        vals.append(span_hi + 90.0)
    if not math.isfinite(lo):
        vals.append(span_lo - 90.0)
    return [v for v in vals if comp.contains(v)]


def _verify_sampled(spec, model, tie_tol, trials, seed, max_prefix=10):
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    M, r, l = spec.block_length, spec.order, spec.state
    node_u = spec.node_offset
    checks = 0
    trial = 0
    while checks < trials:
        w = int(rng.integers(0, max_prefix + 1))
        prefix = simulate(model, w, seed=int(rng.integers(0, 2**32)) ).observations if w else np.empty(0)
        block = []
        for comp in spec.components:
            if isinstance(comp, SymbolSet):
                block.append(float(rng.choice(sorted(comp.symbols))))
            else:
                choices = _interval_samples(comp, rng)
                block.append(float(choices[int(rng.integers(0, len(choices)))]))
        obs = np.concatenate([prefix, np.asarray(block)])
        checks += 1
        trial += 1
        try:
            trellis = build_trellis(obs, model, tie_tol=tie_tol)
        except Exception:
            continue
        if not is_node(trellis, w + node_u, l, r):
            return BarrierCertificate(
                status="refuted",
                method="sampled",
                checks=checks,
                detail=f"node criterion fails for a sampled prefix of length {w}",
                counterexample={"prefix": prefix.tolist(), "block": block},
            )
    return BarrierCertificate(
        status="inconclusive",
        method="sampled",
        checks=checks,
        detail="sampling found no counterexample; continuous verification cannot certify",
    )


def verify_barrier(
    spec,
    model,
    trials=10_000,
    exhaustive_prefix_len=2,
    tie_tol=DEFAULT_TIE_TOL,
    closure_cap=20_000,
    seed=0,
):
    """Check that every block drawn from the spec forces the claimed node.

    Discrete specs are checked literally over all prefixes up to
    ``exhaustive_prefix_len`` and then certified by the reachable-column
    closure; a closure-budget overflow degrades the result to inconclusive.
    Continuous specs are sampled (``trials`` prefixes plus interval extremes)
    and can at best be inconclusive. A counterexample always refutes.
    """
    problems = check_barrier_feasible(spec, model)
    if problems:
        return BarrierCertificate(
            status="refuted", method="feasibility", checks=0, detail="; ".join(problems)
        )
    if spec.is_discrete() and _discrete_tables(model) is not None:
        direct = _verify_discrete_direct(spec, model, tie_tol, exhaustive_prefix_len)
        if direct.status == "refuted":
            return direct
        try:
            closure = _verify_discrete_closure(spec, model, tie_tol, closure_cap)
        except _ClosureBudget as exc:
            return BarrierCertificate(
                status="inconclusive",
                method="discrete-closure",
                checks=direct.checks,
                detail=str(exc),
            )
        return replace(closure, checks=closure.checks + direct.checks)
    return _verify_sampled(spec, model, tie_tol, trials, seed)


# -- constructive search (discrete alphabets) ---------------------------------

def _dominance_sets(model):
    """Per-state symbol sets where a state strictly out-scores all others.

    Uses the best incoming transition probability as each state's weight; the
    margin is half the smallest attained strict gap, so every strictly
    dominant symbol survives.
    """
    E = _discrete_tables(model)
    if E is None:
        raise ValueError("dominance sets require discrete emissions")
    V, K = E.shape
    p_star = model.transition.max(axis=0)  # best probability of entering each state
    weighted = E * p_star[None, :]
    gaps = []
    winners = {}
    for l in range(K):
        others = np.delete(weighted, l, axis=1).max(axis=1)
        strict = weighted[:, l] > others
        if not strict.any():
            raise HypothesisLllFails(l)
        ratios = others[strict] / weighted[strict, l]
        gaps.append(1.0 - ratios.max())
        winners[l] = strict
    eps = 0.5 * min(gaps)
    sets = []
    for l in range(K):
        others = np.delete(weighted, l, axis=1).max(axis=1)
        ok = others < (1.0 - eps) * weighted[:, l]
        sets.append(frozenset(int(z) for z in np.nonzero(ok)[0]))
    return sets, eps, p_star


def _max_ratio_bound(model):
    """Largest ratio of the best incoming probability to any positive entry."""
    p_star = model.transition.max(axis=0)
    P = model.transition
    mask = P > 0
    return float((p_star[None, :][np.broadcast_to(mask, P.shape)] / P[mask]).max())


def _clusters(model):
    """All clusters: state sets whose supports share symbols seen by exactly them."""
    E = _discrete_tables(model)
    V, K = E.shape
    seen_by = [frozenset(int(l) for l in np.nonzero(E[z] > 0)[0]) for z in range(V)]
    candidates = {s for s in seen_by if s}
    clusters = []
    for C in candidates:
        shared = [z for z in range(V) if C <= seen_by[z]]
        if shared and all(seen_by[z] == C for z in shared):
            clusters.append((C, frozenset(shared)))
    clusters.sort(key=lambda item: (-len(item[0]), sorted(item[0])))
    return clusters


def _positive_power(adj, limit):
    """Smallest m with all entries of the boolean matrix power positive."""
    cur = adj.copy()
    for m in range(1, limit + 1):
        if cur.all():
            return m
        cur = cur @ adj
    return None


def _max_prob_path_matrix(logQ, m):
    """Best log-probability of m-step paths inside the cluster, all pairs."""
    out = logQ.copy()
    for _ in range(m - 1):
        with np.errstate(invalid="ignore"):
            out = (out[:, :, None] + logQ[None, :, :]).max(axis=1)
    return out


def _best_path(logQ, m, end=None, start=None):
    """One maximal-probability m-transition path inside the cluster.

    Exactly one of start/end fixes an endpoint; the free endpoint is chosen
    to maximize the path probability (smallest index on ties).
    """
    Kc = logQ.shape[0]
    # forward DP over path prefixes
    if start is not None:
        best = np.full(Kc, -np.inf)
        best[start] = 0.0
        choices = []
        for _ in range(m):
            scores = best[:, None] + logQ
            choices.append(scores.argmax(axis=0))
            best = scores.max(axis=0)
        end_state = int(best.argmax())
        path = [end_state]
        for back in reversed(choices):
            path.append(int(back[path[-1]]))
        path = path[::-1]
        return path  # length m+1, starts at `start`
    best = np.full(Kc, -np.inf)
    best[end] = 0.0
    choices = []
    for _ in range(m):
        scores = logQ + best[None, :]
        choices.append(scores.argmax(axis=1))
        best = scores.max(axis=1)
    start_state = int(best.argmax())
    path = [start_state]
    for back in reversed(choices):
        path.append(int(back[path[-1]]))
    return path  # length m+1, ends at `end`


def _shortest_entry_path(model, cluster, target):
    """Shortest positive-probability path b_0..b_R with b_0 in the cluster
    and b_R = target; returns the list [b_0, ..., b_R], R >= 1 minimal."""
    K = model.n_states
    adj = model.transition > 0
    # BFS backwards from target
    dist = {target: 0}
    parent = {}
    frontier = [target]
    while frontier:
        nxt = []
        for v in frontier:
            for u in range(K):
                if adj[u, v] and u not in dist:
                    dist[u] = dist[v] + 1
                    parent[u] = v
                    nxt.append(u)
        frontier = nxt
    candidates = []
    if target in cluster and adj[target, target]:
        candidates.append((1, target, [target, target]))
    for c in sorted(cluster):
        d = dist.get(c)
        if c == target or d is None or d < 1:
            continue
        path = [c]
        while path[-1] != target:
            path.append(parent[path[-1]])
        candidates.append((d, c, path))
    if not candidates:
        raise NoClusterFound(f"no positive path from cluster {sorted(cluster)} to state {target}")
    candidates.sort(key=lambda item: (item[0], item[1]))
    return candidates[0][2]


def construct_barrier_set(model):
    """Build a barrier for a discrete-alphabet model.

    Requires every state to strictly dominate on some symbol and some cluster
    whose internal transition structure mixes (a power of the cluster's
    sub-stochastic matrix is entrywise positive); either failing raises the
    corresponding error. When a symbol reveals its state outright the result
    is the one-component order-0 barrier; otherwise the block is assembled
    from buffer symbols shared across the cluster, a run of maximal-transition
    cycles anchored at one state, and connector symbols, with the cycle count
    chosen so the dominance margin beats the bookkeeping constants.
    """
    E = _discrete_tables(model)
    if E is None:
        raise ValueError("construct_barrier_set requires discrete emissions")
    V, K = E.shape
    X_sets, eps, p_star = _dominance_sets(model)
    clusters = _clusters(model)
    if not clusters:
        raise NoClusterFound("no set of states shares a detectable support intersection")
    chosen = None
    for C, shared in clusters:
        idx = sorted(C)
        adj = model.transition[np.ix_(idx, idx)] > 0
        m = _positive_power(adj, limit=max(1, len(idx) ** 2))
        if m is not None:
            chosen = (idx, shared, m)
            break
    if chosen is None:
        raise NoClusterFound("no cluster has an entrywise-positive sub-stochastic power")
    cluster, shared, m = chosen

    # Fast path: a symbol emitted by exactly one state pins that state with
    # order 0 and needs no construction at all.
    seen_by = [frozenset(int(l) for l in np.nonzero(E[z] > 0)[0]) for z in range(V)]
    for z in range(V):
        if len(seen_by[z]) == 1:
            l = next(iter(seen_by[z]))
            return BarrierSpec(
                components=(SymbolSet(frozenset({z})),),
                state_word=(l,),
                state=l,
                order=0,
            )

    with np.errstate(divide="ignore"):
        logP = np.log(model.transition)
    A = _max_ratio_bound(model)

    # Buffer symbols: shared across the cluster, invisible outside it.
    z_hat = sorted(shared)
    dens = E[np.ix_(z_hat, cluster)]
    delta = float(dens.min())
    k_bound = float(dens.max())
    union_X = frozenset().union(*X_sets)
    z_plain = [z for z in z_hat if z not in union_X]
    if z_plain:
        Z = frozenset(z_plain)
        q1 = cluster[0]
    else:
        q1 = None
        for s in cluster:
            inter = [z for z in z_hat if z in X_sets[s]]
            if inter:
                Z = frozenset(inter)
                q1 = s
                break
        if q1 is None:
            raise NoClusterFound("buffer symbols vanish from every dominance set")

    # Greedy chain of maximal incoming transitions until a state repeats.
    chain = [q1]
    while True:
        col = model.transition[:, chain[-1]]
        nxt = int(col.argmax())
        if nxt in chain:
            T = chain.index(nxt)
            chain.append(nxt)
            break
        chain.append(nxt)
    U = len(chain) - 1  # chain[U] == chain[T]
    L = U - T
    anchor = chain[T]
    s_cycle = [chain[U - i] for i in range(1, L + 1)]  # s_1 .. s_L, s_L == anchor
    a_seq = [chain[T - i] for i in range(1, T + 1)]  # a_1 .. a_P, ends at the chain start
    P_len = len(a_seq)

    b_path = _shortest_entry_path(model, cluster, anchor)  # [b_0, ..., b_R]
    R = len(b_path) - 1

    logQ = logP[np.ix_(cluster, cluster)]
    qmat = _max_prob_path_matrix(logQ, m)
    log_qmin = float(qmat.min())
    # smallest k with (1-eps)^(k-1) < qmin^2 (delta/k_bound)^(2m) A^(-R)
    rhs = 2.0 * log_qmin + 2.0 * m * math.log(delta / k_bound) - R * math.log(A) if A > 0 else 0.0
    k = max(2, math.floor(rhs / math.log1p(-eps)) + 1)
    while (k - 1) * math.log1p(-eps) >= rhs:
        k += 1

    pos = {s: i for i, s in enumerate(cluster)}
    v_local = _best_path(logQ, m, end=pos[b_path[0]])
    v_states = [cluster[i] for i in v_local[:-1]]  # v_0 .. v_{m-1}, then b_0
    attach = a_seq[-1] if P_len else anchor
    u_local = _best_path(logQ, m, start=pos[attach])
    u_states = [cluster[i] for i in u_local[1:]]  # u_1 .. u_m

    word = (
        v_states
        + b_path[:-1]  # b_0 .. b_{R-1}
        + [anchor]  # b_R
        + s_cycle * (2 * k)
        + a_seq
        + u_states
    )
    comps = (
        [SymbolSet(Z)] * (m + 1)
        + [SymbolSet(X_sets[b]) for b in b_path[1:-1]]
        + [SymbolSet(X_sets[anchor])]
        + [SymbolSet(X_sets[s]) for s in (s_cycle * (2 * k))[:-1]]
        + [SymbolSet(X_sets[anchor])]
        + [SymbolSet(X_sets[a]) for a in a_seq]
        + [SymbolSet(Z)] * m
    )
    order = k * L + P_len + m
    spec = BarrierSpec(
        components=tuple(comps),
        state_word=tuple(word),
        state=anchor,
        order=order,
    )
    problems = check_barrier_feasible(spec, model)
    if problems:
        raise BarrierRefuted("constructed block violates positivity: " + "; ".join(problems))
    return spec


# -- separation ----------------------------------------------------------------

def is_shift_separated(spec):
    """True when no right shift by 1..order can land a block back inside the
    component product (checked via pairwise component disjointness)."""
    comps = spec.components
    M = spec.block_length
    for w in range(1, spec.order + 1):
        if all(comps[j].intersects(comps[j + w]) for j in range(M - w)):
            return False
    return True


def separate_barriers(spec, model):
    """Prove the spec separated or extend it by one leading component.

    The extension prepends the dominance set of a state that (a) can precede
    the block's first emitter and (b) is observationally disjoint from the
    first component, which breaks every overlapping shift.
    """
    if is_shift_separated(spec):
        return replace(spec, separated=True)
    if not spec.is_discrete():
        raise ValueError("separation extension is implemented for discrete alphabets only")
    X_sets, _, _ = _dominance_sets(model)
    first_state = spec.state_word[0]
    first_comp = spec.components[0]
    for q0 in range(model.n_states):
        if q0 == spec.state:
            continue
        cand = SymbolSet(X_sets[q0])
        if not cand.symbols or cand.intersects(first_comp):
            continue
        if model.transition[q0, first_state] <= 0:
            continue
        extended = BarrierSpec(
            components=(cand,) + spec.components,
            state_word=(q0,) + spec.state_word,
            state=spec.state,
            order=spec.order,
        )
        if is_shift_separated(extended):
            return replace(extended, separated=True)
    raise BarrierRefuted("no disjoint leading component makes the barrier separated")


# -- serialization --------------------------------------------------------------

def barrier_to_dict(spec):
    return {
        "M": spec.block_length,
        "sets": [c.to_json() for c in spec.components],
        "q": list(spec.state_word),
        "l": spec.state,
        "r": spec.order,
        "separated": spec.separated,
        "certificate": spec.certificate,
    }


def barrier_from_dict(d):
    comps = []
    for c in d["sets"]:
        if isinstance(c, dict):
            lo = -math.inf if c.get("low") is None else float(c["low"])
            hi = math.inf if c.get("high") is None else float(c["high"])
            comps.append(Interval(lo, hi))
        else:
            comps.append(SymbolSet(frozenset(c)))
    return BarrierSpec(
        components=tuple(comps),
        state_word=tuple(d["q"]),
        state=int(d["l"]),
        order=int(d["r"]),
        separated=bool(d.get("separated", False)),
        certificate=d.get("certificate"),
    )


def load_barrier(path):
    with open(path) as fh:
        return barrier_from_dict(json.load(fh))


def save_barrier(spec, path):
    Path(path).write_text(json.dumps(barrier_to_dict(spec), indent=2) + "\n")
