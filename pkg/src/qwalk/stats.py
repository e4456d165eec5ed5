"""Ensemble statistics and Gaussian-limit checks.

Dynamics are exact; everything here is double precision, computed from
exact end states.
"""

import math
from collections import Counter
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np
from scipy.special import ndtr

from .errors import InvalidInput

_SQRT2 = math.sqrt(2.0)


# -- ensemble summary --------------------------------------------------------

@dataclass(frozen=True)
class EnsembleSummary:
    """Mergeable statistics of an ensemble of trajectories after ``n`` steps.

    ``mean``/``m2`` are moments of the end position (tile V_n in 1D, exact
    v_n in 2D) over trajectories that did not stop; ``m2`` is the sum of
    outer products of deviations, merged with the parallel update of Chan et al.
    """
    model: str
    n: int
    count: int = 0
    stopped: int = 0
    mean: tuple = ()
    m2: tuple = ()
    tile_histogram: dict = field(default_factory=dict)
    label_counts: tuple = (0, 0)
    transitions: tuple = ((0, 0), (0, 0))
    steps_label0: int = 0
    steps_total: int = 0
    samples: tuple = None

    @classmethod
    def empty(cls, model, n, retain=False):
        return cls(model, n, samples=() if retain else None)

    @property
    def dim(self):
        return 1 if self.model == "1d" else 2

    @property
    def completed(self):
        return self.count - self.stopped

    @property
    def covariance(self):
        w = self.completed
        if w < 2:
            return np.full((self.dim, self.dim), np.nan)
        return np.array(self.m2, dtype=float) / (w - 1)

    @property
    def label_mass(self):
        if self.count == 0:
            return (0.0, 0.0)
        return (self.label_counts[0] / self.count, self.label_counts[1] / self.count)

    def drift_estimate(self):
        return tuple(m / self.n for m in self.mean) if self.n and self.mean else ()

    def occupation_fraction(self):
        """Fraction of all performed steps taken from label-0 tiles."""
        return self.steps_label0 / self.steps_total if self.steps_total else float("nan")

    def lyapunov_estimate(self, A0, A1):
        if not self.steps_total:
            return float("nan")
        f = self.occupation_fraction()
        return f * math.log(A0) + (1 - f) * math.log(A1)

    def scaled_samples(self, D):
        """Retained end positions mapped to (v_n - n D) / sqrt(n)."""
        if self.samples is None:
            raise InvalidInput("summary was built without retained samples")
        arr = np.asarray(self.samples, dtype=float).reshape(-1, self.dim)
        D = np.asarray([float(d) for d in np.atleast_1d(D)])
        return (arr - self.n * D) / math.sqrt(self.n)

    def merge(self, other):
        if (self.model, self.n) != (other.model, other.n):
            raise InvalidInput("cannot merge summaries of different runs")
        wa, wb = self.completed, other.completed
        if wb == 0:
            mean, m2 = self.mean, self.m2
        elif wa == 0:
            mean, m2 = other.mean, other.m2
        else:
            ma, mb = np.array(self.mean), np.array(other.mean)
            w = wa + wb
            delta = mb - ma
            mean = ma + delta * (wb / w)
            m2 = np.array(self.m2) + np.array(other.m2) + np.outer(delta, delta) * (wa * wb / w)
            mean, m2 = tuple(mean.tolist()), tuple(map(tuple, m2.tolist()))
        hist = Counter(self.tile_histogram)
        hist.update(other.tile_histogram)
        if self.samples is None or other.samples is None:
            samples = None
        else:
            samples = self.samples + other.samples
        return replace(
            self,
            count=self.count + other.count,
            stopped=self.stopped + other.stopped,
            mean=mean,
            m2=m2,
            tile_histogram=dict(sorted(hist.items())),
            label_counts=(self.label_counts[0] + other.label_counts[0],
                          self.label_counts[1] + other.label_counts[1]),
            transitions=tuple(tuple(a + b for a, b in zip(ra, rb))
                              for ra, rb in zip(self.transitions, other.transitions)),
            steps_label0=self.steps_label0 + other.steps_label0,
            steps_total=self.steps_total + other.steps_total,
            samples=samples,
        )

    def to_json(self, **extra):
        cov = self.covariance
        out = {
            "model": self.model,
            "n": self.n,
            "count": self.count,
            "mean": list(self.mean),
            "cov": [[None if math.isnan(v) else v for v in row] for row in cov.tolist()],
            "label_mass": list(self.label_mass),
            "label_counts": list(self.label_counts),
            "stopped": self.stopped,
            "transitions": [list(r) for r in self.transitions],
            "steps_label0": self.steps_label0,
            "steps_total": self.steps_total,
        }
        out.update(extra)
        return out


def batch_summary(model, n, positions, tiles, end_labels, stopped=0, transitions=None,
                  steps_label0=0, steps_total=0, retain=False):
    """Summarise one batch of finished (non-stopped) trajectories."""
    positions = np.asarray(positions, dtype=float)
    dim = 1 if model == "1d" else 2
    positions = positions.reshape(-1, dim)
    w = positions.shape[0]
    if w:
        mean = positions.mean(axis=0)
        dev = positions - mean
        m2 = dev.T @ dev
        mean, m2 = tuple(mean.tolist()), tuple(map(tuple, m2.tolist()))
    else:
        mean, m2 = (), ()
    end_labels = np.asarray(end_labels)
    n1 = int(np.count_nonzero(end_labels))
    if transitions is None:
        transitions = np.zeros((2, 2), dtype=np.int64)
    samples = None
    if retain:
        samples = tuple(positions[:, 0].tolist()) if dim == 1 else tuple(map(tuple, positions.tolist()))
    return EnsembleSummary(
        model, n,
        count=w + int(stopped),
        stopped=int(stopped),
        mean=mean,
        m2=m2,
        tile_histogram=dict(sorted(Counter(tiles).items())),
        label_counts=(w - n1, n1),
        transitions=tuple(tuple(int(v) for v in row) for row in np.asarray(transitions)),
        steps_label0=int(steps_label0),
        steps_total=int(steps_total),
        samples=samples,
    )


def scaled_fluctuation(end_position, n, D):
    """(v_n - n D) / sqrt(n); the subtraction is exact, only the result is rounded."""
    if n < 1:
        raise InvalidInput("n must be >= 1")
    v = np.atleast_1d(np.asarray(end_position, dtype=object))
    D = np.atleast_1d(np.asarray(D, dtype=object))
    root = math.sqrt(n)
    return np.array([float(Fraction(a) - n * Fraction(d)) / root for a, d in zip(v, D)])


# -- Gaussian reference CDFs -------------------------------------------------

def gaussian_cdf_1d(y, sigma2):
    if sigma2 <= 0:
        raise InvalidInput("variance must be positive")
    if y == math.inf:
        return 1.0
    if y == -math.inf:
        return 0.0
    return 0.5 * math.erfc(-y / (math.sqrt(sigma2) * _SQRT2))


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)
_TAIL = 10.0
_PANELS = 40


def gaussian_cdf_2d(z, cov):
    """P(S1 <= z1, S2 <= z2) for S ~ N(0, cov).

    Integrates the conditional normal CDF of S2 against the marginal density
    of S1 (standardised, truncated at 10 standard deviations) with composite
    Gauss-Legendre quadrature.  ``z`` may be a 2-vector or an (m, 2) array.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (2, 2) or not np.allclose(cov, cov.T, rtol=0, atol=1e-14 * np.abs(cov).max()):
        raise InvalidInput("covariance must be a symmetric 2x2 matrix")
    a, b, c = cov[0, 0], cov[0, 1], cov[1, 1]
    cond = c - b * b / a if a > 0 else -1.0
    if a <= 0 or cond <= 0:
        raise InvalidInput("covariance is not positive definite")
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    z = np.atleast_2d(z)
    sa, sc = math.sqrt(a), math.sqrt(cond)
    slope = b / sa
    upper = np.clip(z[:, 0] / sa, -_TAIL, _TAIL)
    z2 = z[:, 1]
    # the conditional CDF jumps near u* = z2 / slope when the correlation is strong;
    # one panel boundary sits there
    with np.errstate(divide="ignore", invalid="ignore"):
        kink = np.where(slope != 0, z2 / slope, -_TAIL)
    kink = np.clip(np.nan_to_num(kink, nan=-_TAIL, posinf=_TAIL, neginf=-_TAIL), -_TAIL, upper)
    total = np.zeros(len(z))
    for lo, hi, panels in ((np.full(len(z), -_TAIL), kink, _PANELS), (kink, upper, _PANELS)):
        width = (hi - lo) / panels
        for k in range(panels):
            left = lo + k * width
            u = left[:, None] + (width[:, None] / 2) * (_GL_NODES[None, :] + 1)
            with np.errstate(invalid="ignore"):
                inner = ndtr((z2[:, None] - slope * u) / sc)
            inner = np.where(np.isposinf(z2)[:, None], 1.0, inner)
            f = np.exp(-0.5 * u * u) / math.sqrt(2 * math.pi) * inner
            total += (width / 2) * (f @ _GL_WEIGHTS)
    total = np.where(z[:, 0] / sa <= -_TAIL, 0.0, total)
    total = np.clip(total, 0.0, 1.0)
    return float(total[0]) if single else total


# -- empirical CDFs and KS distances ----------------------------------------

class EmpiricalCdf:
    """Weighted empirical CDF of 1D samples."""

    def __init__(self, values, weights=None):
        values = np.asarray(values, dtype=float).ravel()
        if values.size == 0:
            raise InvalidInput("empirical CDF needs at least one sample")
        if weights is None:
            weights = np.ones_like(values)
        weights = np.asarray(weights, dtype=float).ravel()
        order = np.argsort(values, kind="stable")
        values, weights = values[order], weights[order]
        self.points, inverse = np.unique(values, return_inverse=True)
        w = np.zeros(len(self.points))
        np.add.at(w, inverse, weights)
        self.total = w.sum()
        self.after = np.cumsum(w) / self.total
        self.before = np.concatenate(([0.0], self.after[:-1]))

    @classmethod
    def from_histogram(cls, histogram, n, D):
        """ECDF of (V - n D)/sqrt(n) from a tile -> count map."""
        tiles = np.array(list(histogram.keys()), dtype=object)
        counts = np.array(list(histogram.values()), dtype=float)
        z = scaled_fluctuation(tiles, n, [D] * len(tiles)) if len(tiles) else []
        return cls(z, counts)

    def __call__(self, y):
        idx = np.searchsorted(self.points, y, side="right")
        return np.where(idx > 0, self.after[np.maximum(idx - 1, 0)], 0.0)


def ks_distance(samples, model_cdf):
    """Exact sup |F_emp - F| for continuous ``model_cdf``, evaluated at the jump points."""
    ecdf = samples if isinstance(samples, EmpiricalCdf) else EmpiricalCdf(samples)
    F = np.array([model_cdf(float(y)) for y in ecdf.points])
    return float(max(np.max(np.abs(ecdf.after - F)), np.max(np.abs(ecdf.before - F))))


def ecdf_2d_grid(samples, g1, g2):
    """Fraction of samples in (-inf, g1[i]] x (-inf, g2[j]] on a tensor grid, as [i, j]."""
    samples = np.asarray(samples, dtype=float).reshape(-1, 2)
    if samples.shape[0] == 0:
        raise InvalidInput("empirical CDF needs at least one sample")
    i = np.searchsorted(g1, samples[:, 0], side="left")
    j = np.searchsorted(g2, samples[:, 1], side="left")
    counts = np.zeros((len(g1) + 1, len(g2) + 1))
    np.add.at(counts, (i, j), 1)
    return counts.cumsum(0).cumsum(1)[:-1, :-1] / samples.shape[0]


def ks_distance_2d(samples, cov, grid=201, span=4.0, at_samples=False):
    """Max |F_emp - Phi_cov| over a grid spanning +-``span`` empirical standard deviations.

    With ``at_samples`` the maximum is taken over the sample points instead.
    Returns ``(distance, (g1, g2, emp, model))``; the grid arrays are None
    in sample mode.
    """
    samples = np.asarray(samples, dtype=float).reshape(-1, 2)
    if samples.shape[0] == 0:
        raise InvalidInput("KS distance needs at least one sample")
    if at_samples:
        s = samples
        emp = np.array([np.mean((s[:, 0] <= a) & (s[:, 1] <= b)) for a, b in s])
        model = gaussian_cdf_2d(s, cov)
        return float(np.max(np.abs(emp - model))), (None, None, emp, model)
    sd = samples.std(axis=0)
    g1 = np.linspace(-span * sd[0], span * sd[0], grid)
    g2 = np.linspace(-span * sd[1], span * sd[1], grid)
    emp = ecdf_2d_grid(samples, g1, g2)
    G1, G2 = np.meshgrid(g1, g2, indexing="ij")
    model = gaussian_cdf_2d(np.column_stack([G1.ravel(), G2.ravel()]), cov).reshape(grid, grid)
    return float(np.max(np.abs(emp - model))), (g1, g2, emp, model)


# -- label-resolved structure ------------------------------------------------

def conditional_label_histograms(summary, env):
    """Split the end-tile relative frequencies by the label of the end tile.

    Frequencies are relative to all trajectories, so mass0 + mass1 equals
    the non-stopped fraction.
    """
    hist = ({}, {})
    total = summary.count
    for tile, c in summary.tile_histogram.items():
        hist[env.label_at(tile)][tile] = c / total
    mass0 = sum(hist[0].values())
    mass1 = sum(hist[1].values())
    return hist[0], hist[1], mass0, mass1


def label_curve_distance(hist0, hist1, stretch):
    """L1 distance between the label-0 tile-frequency curve and ``stretch`` times the label-1 curve.

    Each curve is linearly interpolated from its own tiles onto every tile of
    the common range and the absolute difference is summed over tiles.
    """
    if not hist0 or not hist1:
        raise InvalidInput("both label histograms must be nonempty")
    k0, f0 = np.array(sorted(hist0)), np.array([hist0[k] for k in sorted(hist0)])
    k1, f1 = np.array(sorted(hist1)), np.array([hist1[k] for k in sorted(hist1)])
    lo, hi = min(k0[0], k1[0]), max(k0[-1], k1[-1])
    tiles = np.arange(lo, hi + 1)
    c0 = np.interp(tiles, k0, f0, left=0.0, right=0.0)
    c1 = np.interp(tiles, k1, f1, left=0.0, right=0.0)
    return float(np.abs(c0 - float(stretch) * c1).sum())


def empirical_alpha(transition_counts):
    """Row-normalised 2x2 label transition frequencies; an empty row becomes None."""
    counts = np.asarray(transition_counts, dtype=float)
    if counts.shape != (2, 2):
        raise InvalidInput("transition counts must be 2x2")
    rows = []
    for row in counts:
        s = row.sum()
        rows.append(None if s == 0 else (row / s).tolist())
    return rows


def total_variation(p, q):
    """Half the L1 distance between two tile -> probability maps."""
    keys = set(p) | set(q)
    return 0.5 * sum(abs(float(p.get(k, 0)) - float(q.get(k, 0))) for k in keys)
