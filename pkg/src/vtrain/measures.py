"""Per-state observation collections and the binned comparisons built on them."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .models import DiscreteTable

__all__ = [
    "EmpiricalMeasure",
    "empirical_measures",
    "BinSpec",
    "alphabet_bins",
    "range_bins",
    "pooled_range_bins",
    "histogram",
    "tv_distance",
    "sup_bin_distance",
    "save_measures_csv",
]


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Multiset of observations attributed to one state by an alignment.

    When a state never appears in the alignment the measure is formally
    undefined; ``fallback`` marks that case and binning substitutes the
    default reference measure (uniform over the alphabet, or standard normal).
    """

    state: int
    observations: np.ndarray
    fallback: bool = False

    def __post_init__(self):
        obs = np.asarray(self.observations, dtype=float)
        obs.setflags(write=False)
        object.__setattr__(self, "observations", obs)

    @property
    def count(self):
        return len(self.observations)

    def integrate(self, fn):
        """Multiset average of a bounded function."""
        if self.fallback or self.count == 0:
            raise ValueError(f"measure for state {self.state} is a fallback placeholder")
        return float(np.mean(fn(self.observations)))


def empirical_measures(path, obs, n_states):
    """Split obs into per-state multisets according to the alignment path."""
    path = np.asarray(path, dtype=int)
    obs = np.asarray(obs, dtype=float)
    if path.shape != obs.shape:
        raise ValueError("path and observations must have equal length")
    out = []
    for l in range(n_states):
        sub = obs[path == l]
        out.append(EmpiricalMeasure(state=l, observations=sub, fallback=sub.size == 0))
    return out


@dataclass(frozen=True)
class BinSpec:
    """Either one bin per symbol (edges None) or half-open real bins."""

    edges: np.ndarray | None
    alphabet_size: int | None = None

    def __post_init__(self):
        if (self.edges is None) == (self.alphabet_size is None):
            raise ValueError("exactly one of edges/alphabet_size must be given")
        if self.edges is not None:
            edges = np.asarray(self.edges, dtype=float)
            edges.setflags(write=False)
            object.__setattr__(self, "edges", edges)

    @property
    def n_bins(self):
        return self.alphabet_size if self.edges is None else len(self.edges) - 1

    def bounds(self, b):
        if self.edges is None:
            return float(b), float(b)
        return float(self.edges[b]), float(self.edges[b + 1])


def alphabet_bins(alphabet_size):
    return BinSpec(edges=None, alphabet_size=alphabet_size)


def range_bins(low, high, n_bins=64):
    return BinSpec(edges=np.linspace(low, high, n_bins + 1))


def pooled_range_bins(arrays, n_bins=64, lo_pct=0.1, hi_pct=99.9):
    """Fixed equal-width binning over the pooled central percentile range."""
    pooled = np.concatenate([np.asarray(a, dtype=float).ravel() for a in arrays])
    lo, hi = np.percentile(pooled, [lo_pct, hi_pct])
    if not hi > lo:
        lo, hi = lo - 0.5, hi + 0.5
    return range_bins(lo, hi, n_bins)


def _fallback_masses(bins):
    if bins.edges is None:
        return np.full(bins.n_bins, 1.0 / bins.n_bins)
    from scipy.stats import norm

    masses = np.diff(norm.cdf(bins.edges))
    total = masses.sum()
    return masses / total if total > 0 else np.full(bins.n_bins, 1.0 / bins.n_bins)


def histogram(measure, bins):
    """Normalized bin masses of a measure (or raw array) under a BinSpec.

    Real-valued bins clip outliers into the end bins so masses always sum to
    one over the configured comparison window.
    """
    if isinstance(measure, EmpiricalMeasure):
        if measure.fallback or measure.count == 0:
            return _fallback_masses(bins)
        data = measure.observations
    else:
        data = np.asarray(measure, dtype=float)
        if data.size == 0:
            return _fallback_masses(bins)
    if bins.edges is None:
        counts = np.bincount(data.astype(int), minlength=bins.alphabet_size).astype(float)
        if counts.size > bins.alphabet_size:
            raise ValueError("observation outside the declared alphabet")
    else:
        idx = np.clip(np.searchsorted(bins.edges, data, side="right") - 1, 0, bins.n_bins - 1)
        counts = np.bincount(idx, minlength=bins.n_bins).astype(float)
    return counts / counts.sum()


def tv_distance(h1, h2):
    return 0.5 * float(np.abs(np.asarray(h1) - np.asarray(h2)).sum())


def sup_bin_distance(h1, h2):
    return float(np.abs(np.asarray(h1) - np.asarray(h2)).max())


def default_bins_for_model(model, arrays=None, n_bins=64):
    """Alphabet bins for all-discrete models, pooled percentile bins otherwise."""
    if all(isinstance(em, DiscreteTable) for em in model.emissions):
        return alphabet_bins(max(em.alphabet_size for em in model.emissions))
    if not arrays:
        raise ValueError("continuous binning needs data to fix the range")
    return pooled_range_bins(arrays, n_bins=n_bins)


def save_measures_csv(measures, bins, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["state", "bin_low", "bin_high", "mass"])
        for measure in measures:
            masses = histogram(measure, bins)
            for b, mass in enumerate(masses):
                lo, hi = bins.bounds(b)
                writer.writerow([measure.state, repr(lo), repr(hi), repr(float(mass))])
