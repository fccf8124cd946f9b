"""Model representation, validation, and simulation of the hidden chain and observations.

States are indexed 0..K-1 throughout the package. All downstream probability
computation happens in log space, so emission models expose ``log_density`` as
the primary interface; densities of zero are represented by ``-inf`` exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ModelValidationError

PROB_ATOL = 1e-12

__all__ = [
    "DiscreteTable",
    "Gaussian",
    "Exponential",
    "EmissionModel",
    "HmmModel",
    "Realization",
    "validate_model",
    "model_diagnostics",
    "simulate",
    "log_density",
    "stationary_distribution",
    "model_to_dict",
    "model_from_dict",
    "load_model",
    "save_model",
    "save_realization_csv",
]


@dataclass(frozen=True)
class DiscreteTable:
    """Emission over a finite alphabet {0..V-1} with an explicit probability row."""

    probabilities: tuple

    family = "discrete"

    def __post_init__(self):
        object.__setattr__(self, "probabilities", tuple(float(p) for p in self.probabilities))

    @property
    def alphabet_size(self):
        return len(self.probabilities)

    def check(self):
        errs = []
        probs = np.asarray(self.probabilities)
        if probs.size == 0:
            errs.append("discrete table is empty")
            return errs
        if (probs < 0).any():
            errs.append(f"discrete probability negative at symbol {int(np.argmin(probs))}")
        if abs(probs.sum() - 1.0) > PROB_ATOL:
            errs.append(f"discrete probabilities sum to {probs.sum()!r}, not 1")
        return errs

    def log_density(self, x):
        if isinstance(x, float) and not float(x).is_integer():
            return -math.inf
        z = int(x)
        if z != x or z < 0 or z >= len(self.probabilities):
            return -math.inf
        p = self.probabilities[z]
        return math.log(p) if p > 0 else -math.inf

    def log_density_array(self, xs):
        xs = np.asarray(xs)
        z = xs.astype(int)
        ok = (z == xs) & (z >= 0) & (z < len(self.probabilities))
        out = np.full(xs.shape, -np.inf)
        probs = np.asarray(self.probabilities)
        with np.errstate(divide="ignore"):
            vals = np.log(probs[np.where(ok, z, 0)])
        out[ok] = vals[ok]
        return out

    def sample(self, rng, size):
        cum = np.cumsum(self.probabilities)
        cum[-1] = 1.0
        return np.searchsorted(cum, rng.random(size), side="right").astype(float)

    def support_descriptor(self):
        return {"kind": "symbols", "symbols": [i for i, p in enumerate(self.probabilities) if p > 0]}

    def params(self):
        return {"probabilities": list(self.probabilities)}


@dataclass(frozen=True)
class Gaussian:
    """Normal emission; the variance is treated as known by the estimators."""

    mean: float
    variance: float

    family = "gaussian"

    def check(self):
        if not self.variance > 0:
            return [f"gaussian variance {self.variance!r} is not positive"]
        return []

    def log_density(self, x):
        return -0.5 * ((x - self.mean) ** 2 / self.variance) - 0.5 * math.log(2.0 * math.pi * self.variance)

    def log_density_array(self, xs):
        xs = np.asarray(xs, dtype=float)
        return -0.5 * ((xs - self.mean) ** 2 / self.variance) - 0.5 * math.log(2.0 * math.pi * self.variance)

    def sample(self, rng, size):
        return rng.normal(self.mean, math.sqrt(self.variance), size)

    def support_descriptor(self):
        return {"kind": "interval", "low": None, "high": None}

    def params(self):
        return {"mean": self.mean, "variance": self.variance}


@dataclass(frozen=True)
class Exponential:
    """Exponential emission on a half line.

    ``positive`` orientation has density rate*exp(-rate*x) for x >= 0;
    ``negative`` mirrors it onto x <= 0 (density rate*exp(rate*x)).
    """

    rate: float
    orientation: str = "positive"

    family = "exponential"

    def check(self):
        errs = []
        if not self.rate > 0:
            errs.append(f"exponential rate {self.rate!r} is not positive")
        if self.orientation not in ("positive", "negative"):
            errs.append(f"unknown exponential orientation {self.orientation!r}")
        return errs

    def log_density(self, x):
        if self.orientation == "positive":
            return math.log(self.rate) - self.rate * x if x >= 0 else -math.inf
        return math.log(self.rate) + self.rate * x if x <= 0 else -math.inf

    def log_density_array(self, xs):
        xs = np.asarray(xs, dtype=float)
        if self.orientation == "positive":
            out = math.log(self.rate) - self.rate * xs
            out[xs < 0] = -np.inf
        else:
            out = math.log(self.rate) + self.rate * xs
            out[xs > 0] = -np.inf
        return out

    def sample(self, rng, size):
        draws = rng.exponential(1.0 / self.rate, size)
        return draws if self.orientation == "positive" else -draws

    def support_descriptor(self):
        if self.orientation == "positive":
            return {"kind": "interval", "low": 0.0, "high": None}
        return {"kind": "interval", "low": None, "high": 0.0}

    def params(self):
        return {"rate": self.rate, "orientation": self.orientation}


EmissionModel = DiscreteTable | Gaussian | Exponential


def log_density(emission, x):
    """Natural log of the emission density at x; exactly -inf off support."""
    return emission.log_density(x)


def _transition_diagnostics(transition):
    errs = []
    K = transition.shape[0]
    if transition.shape != (K, K):
        return [f"transition matrix shape {transition.shape} is not square"]
    if (transition < 0).any():
        i, j = np.unravel_index(int(np.argmin(transition)), transition.shape)
        errs.append(f"transition entry ({i},{j}) is negative")
    sums = transition.sum(axis=1)
    for i in range(K):
        if abs(sums[i] - 1.0) > PROB_ATOL:
            errs.append(f"transition row {i} sums to {sums[i]!r}, not 1")
    return errs


def _chain_structure_diagnostics(transition):
    """Reachability check for irreducibility plus a cycle-length gcd for aperiodicity."""
    K = transition.shape[0]
    adj = transition > 0
    reach = adj | np.eye(K, dtype=bool)
    for _ in range(max(1, int(np.ceil(np.log2(max(K, 2)))))):
        reach = reach @ reach
    errs = []
    if not reach.all():
        i, j = np.unravel_index(int(np.argmin(reach)), reach.shape)
        errs.append(f"chain is reducible: state {j} unreachable from state {i}")
        return errs
    # BFS levels from state 0; gcd over edges of (level[u]+1-level[v]) gives the period.
    level = np.full(K, -1)
    level[0] = 0
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.nonzero(adj[u])[0]:
                if level[v] < 0:
                    level[v] = level[u] + 1
                    nxt.append(int(v))
        frontier = nxt
    g = 0
    for u in range(K):
        for v in np.nonzero(adj[u])[0]:
            g = math.gcd(g, int(level[u] + 1 - level[v]))
    if g != 1:
        errs.append(f"chain is periodic with period {g}")
    return errs


def model_diagnostics(transition, initial, emissions):
    """All violated invariants of a prospective model, with indices; empty when valid."""
    transition = np.asarray(transition, dtype=float)
    initial = np.asarray(initial, dtype=float)
    errs = []
    K = transition.shape[0]
    errs.extend(_transition_diagnostics(transition))
    if initial.shape != (K,):
        errs.append(f"initial distribution has length {initial.shape}, expected {K}")
    else:
        if (initial < 0).any():
            errs.append(f"initial entry {int(np.argmin(initial))} is negative")
        if abs(initial.sum() - 1.0) > PROB_ATOL:
            errs.append(f"initial distribution sums to {initial.sum()!r}, not 1")
    if len(emissions) != K:
        errs.append(f"{len(emissions)} emission models for {K} states")
    for l, em in enumerate(emissions):
        errs.extend(f"state {l}: {msg}" for msg in em.check())
    if not errs:
        errs.extend(_chain_structure_diagnostics(transition))
    return errs


@dataclass(frozen=True)
class HmmModel:
    """K-state chain with a row-stochastic transition matrix, an initial
    distribution, and one emission model per state. Immutable once built;
    construction validates and raises ModelValidationError on any violation."""

    transition: np.ndarray
    initial: np.ndarray
    emissions: tuple

    def __post_init__(self):
        transition = np.array(self.transition, dtype=float)
        initial = np.array(self.initial, dtype=float)
        emissions = tuple(self.emissions)
        diags = model_diagnostics(transition, initial, emissions)
        if diags:
            raise ModelValidationError(diags)
        transition.setflags(write=False)
        initial.setflags(write=False)
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "emissions", emissions)

    @property
    def n_states(self):
        return len(self.emissions)

    def log_transition(self):
        with np.errstate(divide="ignore"):
            return np.log(self.transition)

    def log_initial(self):
        with np.errstate(divide="ignore"):
            return np.log(self.initial)

    def log_emission_matrix(self, obs):
        """(n, K) matrix of log f_l(x_u)."""
        return np.stack([em.log_density_array(obs) for em in self.emissions], axis=1)

    def replace_emissions(self, emissions):
        return HmmModel(self.transition, self.initial, tuple(emissions))

    def is_iid_mixture(self, atol=PROB_ATOL):
        """True when every transition row equals the first (observations i.i.d.)."""
        return bool(np.all(np.abs(self.transition - self.transition[0]) <= atol))


def validate_model(model):
    """Return the model unchanged when all invariants hold.

    Kept as the functional surface over the constructor check so callers can
    re-validate models deserialized or rebuilt elsewhere.
    """
    diags = model_diagnostics(model.transition, model.initial, model.emissions)
    if diags:
        raise ModelValidationError(diags)
    return model


def stationary_distribution(model):
    """Stationary row vector of the transition matrix, via the eigenproblem.

    The initial distribution is not forced to be stationary; this helper serves
    callers that want the standing stationarity assumption.
    """
    vals, vecs = np.linalg.eig(model.transition.T)
    idx = int(np.argmin(np.abs(vals - 1.0)))
    v = np.real(vecs[:, idx])
    v = np.abs(v)
    return v / v.sum()


@dataclass(frozen=True)
class Realization:
    """A simulated run: hidden states, observations, and the seed that made it."""

    states: np.ndarray
    observations: np.ndarray
    seed: int

    def __post_init__(self):
        states = np.asarray(self.states, dtype=int)
        observations = np.asarray(self.observations, dtype=float)
        if states.shape != observations.shape:
            raise ValueError("states and observations must have equal length")
        states.setflags(write=False)
        observations.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "observations", observations)

    def __len__(self):
        return len(self.states)


def _streams(seed, n_states):
    """One substream for the chain, one per state for emissions.

    The split is part of the reproducibility contract: stream 0 drives the
    initial draw and all transitions, stream l+1 drives emissions of state l.
    """
    children = np.random.SeedSequence(seed).spawn(n_states + 1)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def simulate(model, n, seed):
    """Simulate n steps; a pure function of (model, n, seed)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    K = model.n_states
    streams = _streams(seed, K)
    chain_rng = streams[0]
    cum_rows = np.cumsum(model.transition, axis=1)
    cum_rows[:, -1] = 1.0
    cum_init = np.cumsum(model.initial)
    cum_init[-1] = 1.0
    u = chain_rng.random(n)
    states = np.empty(n, dtype=int)
    states[0] = np.searchsorted(cum_init, u[0], side="right")
    for t in range(1, n):
        states[t] = np.searchsorted(cum_rows[states[t - 1]], u[t], side="right")
    observations = np.empty(n, dtype=float)
    for l in range(K):
        idx = np.nonzero(states == l)[0]
        if idx.size:
            observations[idx] = model.emissions[l].sample(streams[l + 1], idx.size)
    return Realization(states=states, observations=observations, seed=seed)


# -- serialization ------------------------------------------------------------

def _emission_to_dict(em):
    return {"family": em.family, "params": em.params(), "support": em.support_descriptor()}


def _emission_from_dict(d):
    family = d["family"]
    params = d["params"]
    if family == "discrete":
        return DiscreteTable(tuple(params["probabilities"]))
    if family == "gaussian":
        return Gaussian(float(params["mean"]), float(params["variance"]))
    if family == "exponential":
        return Exponential(float(params["rate"]), params.get("orientation", "positive"))
    raise ModelValidationError([f"unknown emission family {family!r}"])


def model_to_dict(model):
    return {
        "states": model.n_states,
        "transition": model.transition.tolist(),
        "initial": model.initial.tolist(),
        "emissions": [_emission_to_dict(em) for em in model.emissions],
    }


def model_from_dict(d):
    emissions = tuple(_emission_from_dict(e) for e in d["emissions"])
    model = HmmModel(np.asarray(d["transition"], dtype=float), np.asarray(d["initial"], dtype=float), emissions)
    if "states" in d and int(d["states"]) != model.n_states:
        raise ModelValidationError([f"declared {d['states']} states but {model.n_states} emissions"])
    return model


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def save_model(model, path):
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n")


def save_realization_csv(realization, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "state", "observation"])
        for t, (s, x) in enumerate(zip(realization.states, realization.observations)):
            writer.writerow([t, int(s), repr(float(x))])
