"""Walk driven by expanding circle maps x -> A x mod 1 in a quenched 1D environment.

Tiles [k, k+1) form a Markov partition for both maps, so the tile index
V_n is itself a Markov chain: from tile k the walk moves to k + l with
probability 1/A_{omega(k)} for l = 0, ..., A_{omega(k)} - 1.
"""

import decimal
import math
from contextlib import nullcontext
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import rng
from .bigrat import DEFAULT_DENOMINATOR_1D, ExactPoint, affine_step, sample_point
from .environment import as_fraction
from .errors import EnvironmentExhausted, InvalidInput, StoppedProcess
from .parallel import map_chunks
from .stats import EnsembleSummary, batch_summary

EXACT_MAX_STEPS = 2000
FLOAT_DIGITS = 40


@dataclass(frozen=True)
class Params1D:
    A0: int
    A1: int
    p0: Fraction

    def __post_init__(self):
        for name in ("A0", "A1"):
            a = getattr(self, name)
            if not isinstance(a, (int, np.integer)) or a < 2:
                raise InvalidInput(f"{name} must be an integer >= 2, got {a!r}")
        object.__setattr__(self, "p0", as_fraction(self.p0))
        if not 0 < self.p0 < 1:
            raise InvalidInput(f"p0 must lie strictly between 0 and 1, got {self.p0}")

    @property
    def p1(self):
        return 1 - self.p0

    @property
    def A(self):
        return (int(self.A0), int(self.A1))

    @property
    def max_jump(self):
        return max(self.A) - 1

    def swapped(self):
        return Params1D(self.A1, self.A0, self.p1)


# reference parameters: doubling and tripling maps on a fair coin-flip field
DOUBLING_TRIPLING = Params1D(2, 3, Fraction(1, 2))


@dataclass(frozen=True)
class WalkState1D:
    V: int
    x: ExactPoint
    step_count: int = 0
    counts: tuple = (0, 0)   # applications of A0 and of A1 so far

    def position(self):
        return self.V + Fraction(self.x.numerators[0], self.x.denominator)

    def log_derivative(self, params):
        return self.counts[0] * math.log(params.A0) + self.counts[1] * math.log(params.A1)


def initial_state(x, V=0):
    return WalkState1D(V, x)


def step_deterministic(env, params, state):
    """One exact step V' = V + [A x], x' = A x - [A x] with A = A_{omega(V)}."""
    label = env.label_at(state.V)
    a = params.A[label]
    (jump,), x = affine_step(a, state.x)
    counts = (state.counts[0] + (label == 0), state.counts[1] + (label == 1))
    new = WalkState1D(state.V + jump, x, state.step_count + 1, counts)
    if x.numerators[0] == 0:
        raise StoppedProcess(new)
    return new


def step_markov(env, params, V, stream):
    """Jump from tile V by a uniform draw from {0, ..., A_{omega(V)} - 1}."""
    return V + stream.uniform_below(params.A[env.label_at(V)])


def gamma_row(env, params, k):
    """Row k of the transition matrix as ``[(target, probability), ...]``."""
    a = params.A[env.label_at(k)]
    return [(k + l, Fraction(1, a)) for l in range(a)]


# -- exact distribution propagation -----------------------------------------

def _float_context(digits):
    # exponent range wide enough for tail probabilities like 3**-100000
    return decimal.Context(prec=digits, Emin=decimal.MIN_EMIN, Emax=decimal.MAX_EMAX)


@dataclass(frozen=True)
class DistributionVector:
    """Probability vector over tiles ``offset, offset+1, ...``.

    Exact vectors store integer numerators over a shared denominator.
    Inexact ones (``exact=False``) store ``decimal.Decimal`` entries with
    ``digits`` significant digits and denominator 1.
    """
    offset: int
    numerators: tuple
    denominator: int
    exact: bool = True
    digits: int = 0

    @classmethod
    def point_mass(cls, k=0):
        return cls(k, (1,), 1)

    @classmethod
    def from_weights(cls, weights, offset=0):
        weights = [as_fraction(w) for w in weights]
        den = math.lcm(*(w.denominator for w in weights)) if weights else 1
        return cls(offset, tuple(w.numerator * (den // w.denominator) for w in weights), den)

    def _context(self):
        return nullcontext() if self.exact else decimal.localcontext(_float_context(self.digits))

    def _ratio(self, a, b):
        return Fraction(a, b) if self.exact else a / b

    @property
    def weights(self):
        with self._context():
            return [self._ratio(u, self.denominator) for u in self.numerators]

    def __len__(self):
        return len(self.numerators)

    def total(self):
        with self._context():
            return self._ratio(sum(self.numerators), self.denominator)

    def items(self):
        """``(tile, probability)`` for every tile of the stored window."""
        return [(self.offset + i, w) for i, w in enumerate(self.weights)]

    def mean(self):
        with self._context():
            s = sum(i * u for i, u in enumerate(self.numerators))
            return self.offset * self.total() + self._ratio(s, self.denominator)

    def variance(self):
        with self._context():
            tot = sum(self.numerators)
            s1 = sum(i * u for i, u in enumerate(self.numerators))
            s2 = sum(i * i * u for i, u in enumerate(self.numerators))
            # shift-invariant, normalised by the actual mass
            return self._ratio(s2, tot) - self._ratio(s1, tot) ** 2

    def trimmed(self):
        nums = list(self.numerators)
        lo = 0
        while lo < len(nums) - 1 and nums[lo] == 0:
            lo += 1
        hi = len(nums)
        while hi > lo + 1 and nums[hi - 1] == 0:
            hi -= 1
        return DistributionVector(self.offset + lo, tuple(nums[lo:hi]), self.denominator, self.exact, self.digits)

    def reduced(self):
        if not self.exact:
            return self
        g = math.gcd(self.denominator, *self.numerators)
        if g <= 1:
            return self
        return DistributionVector(self.offset, tuple(u // g for u in self.numerators), self.denominator // g)


def propagate_distribution(env, params, rho0, n, mode="exact", digits=FLOAT_DIGITS,
                           max_exact_steps=EXACT_MAX_STEPS):
    """Compute rho0 Gamma^n.

    ``mode="exact"`` keeps exact rationals (capped at ``max_exact_steps``).
    ``mode="float"`` uses decimal floating point with ``digits`` significant
    digits and an unbounded exponent range; every entry is a sum of
    positive terms, so its relative error stays below about 3 n 10**-digits.
    """
    if n < 0:
        raise InvalidInput("n must be nonnegative")
    if mode not in ("exact", "float"):
        raise InvalidInput(f"unknown mode {mode!r}")
    if mode == "exact" and max_exact_steps is not None and n > max_exact_steps:
        raise InvalidInput(f"exact propagation is capped at n={max_exact_steps}; use mode='float'")
    if rho0.offset < 0:
        raise InvalidInput("distribution offset must be nonnegative")
    need = rho0.offset + len(rho0) + n * params.max_jump
    if n > 0 and need > env.extent[0]:
        raise EnvironmentExhausted(f"propagation needs extent >= {need}, environment has {env.extent[0]}")
    if mode == "float":
        with decimal.localcontext(_float_context(digits)):
            return _propagate(env, params, rho0, n, digits)
    return _propagate(env, params, rho0, n, 0)


def _propagate(env, params, rho0, n, digits):
    exact = digits == 0
    A = np.array(params.A, dtype=np.int64)
    amax = int(A.max())
    labels = env.flat
    off = rho0.offset
    if exact:
        L = math.lcm(*params.A)
        factor = np.array([L // a for a in params.A], dtype=object)
        nums = np.array(rho0.numerators, dtype=object)
        den = rho0.denominator
    else:
        inverse = np.array([1 / decimal.Decimal(a) for a in params.A], dtype=object)
        nums = np.array(rho0.weights, dtype=object)
        if rho0.exact:
            nums = np.array([decimal.Decimal(w.numerator) / w.denominator for w in nums], dtype=object)
        den = 1

    for step in range(n):
        m = len(nums)
        lab = labels[off:off + m].astype(np.intp)
        a = A[lab]
        if exact:
            share = nums * factor[lab]
            den *= L
        else:
            share = nums * inverse[lab]
        out = np.zeros(m + amax - 1, dtype=object)
        for l in range(amax):
            out[l:l + m] += np.where(a > l, share, 0)
        nums = out
        if exact and step % 64 == 63:
            g = math.gcd(den, *nums.tolist())
            if g > 1:
                nums = nums // g
                den //= g

    if exact:
        return DistributionVector(off, tuple(int(u) for u in nums), int(den)).trimmed().reduced()
    return DistributionVector(off, tuple(+u for u in nums), 1, False, digits).trimmed()


# -- closed forms ------------------------------------------------------------

def analytic_alpha_star(params):
    """Tiling-averaged one-step label transition matrix."""
    p = (params.p0, params.p1)
    alpha = []
    for i in (0, 1):
        stay = Fraction(1, params.A[i])
        row = []
        for j in (0, 1):
            if i == j:
                row.append(stay + (1 - stay) * p[i])
            else:
                row.append((1 - stay) * p[j])
        alpha.append(tuple(row))
    return tuple(alpha)


def equilibrium_p(alpha):
    """Label-0 weight of the stationary vector of a 2x2 stochastic matrix."""
    a01, a10 = alpha[0][1], alpha[1][0]
    if a01 <= 0 or a10 <= 0:
        raise InvalidInput("transition matrix is reducible; stationary vector is not unique")
    return Fraction(a10) / (a01 + a10)


def analytic_p(params):
    A0, A1, p0, p1 = params.A0, params.A1, params.p0, params.p1
    return p0 * A0 * (A1 - 1) / (A0 * A1 - p1 * A1 - p0 * A0)


def analytic_drift(params):
    p = analytic_p(params)
    return (p * params.A0 + (1 - p) * params.A1 - 1) / 2


def square_sum(m):
    """sum_{k=0}^{m-1} k^2."""
    return Fraction((m - 1) * m * (2 * m - 1), 6)


def analytic_variance(params):
    """Variance per step of the i.i.d. surrogate walk whose jump law mixes both labels.

    Second moment of the mixed uniform jump minus the squared drift.
    """
    if params.A0 > params.A1:
        params = params.swapped()
    p = analytic_p(params)
    D = analytic_drift(params)
    second = p / params.A0 * square_sum(params.A0) + (1 - p) / params.A1 * square_sum(params.A1)
    return second - D * D


def analytic_lyapunov(params):
    p = analytic_p(params)
    return float(p) * math.log(params.A0) + float(1 - p) * math.log(params.A1)


@dataclass(frozen=True)
class Analytic1D:
    p: Fraction
    D: Fraction
    sigma2: Fraction
    lam: float
    alpha_star: tuple


def analytic_1d(params):
    return Analytic1D(analytic_p(params), analytic_drift(params), analytic_variance(params),
                      analytic_lyapunov(params), analytic_alpha_star(params))


# -- ensembles ---------------------------------------------------------------

def required_extent(params, n):
    return n * params.max_jump + 1


def _markov_chunk(task):
    env, params, n, seed, start, stop, alpha_step, retain = task
    idx = np.arange(start, stop, dtype=np.uint64)
    keys = rng.stream_keys(seed, idx)
    A = np.array(params.A, dtype=np.uint64)
    labels = env.flat
    V = np.zeros(stop - start, dtype=np.int64)
    zeros = np.zeros(stop - start, dtype=np.int64)
    trans = np.zeros((2, 2), dtype=np.int64)
    for s in range(n):
        lab = labels[V]
        zeros += lab == 0
        jump = rng.uniform_below_vec(keys, s, A[lab])
        V += jump.astype(np.int64)
        if s == alpha_step:
            np.add.at(trans, (lab.astype(np.intp), labels[V].astype(np.intp)), 1)
    return _summarize(V, labels, n, trans, zeros.sum(), n * len(V), retain)


def _deterministic_chunk(task):
    env, params, n, seed, start, stop, alpha_step, retain, q = task
    points = [sample_point(rng.Substream(seed, i), 1, q).numerators[0] for i in range(start, stop)]
    A = params.A
    labels = env.flat
    trans = np.zeros((2, 2), dtype=np.int64)
    if max(A) * q < (1 << 63):
        V = np.zeros(stop - start, dtype=np.int64)
        x = np.array(points, dtype=np.int64)
        Aarr = np.array(A, dtype=np.int64)
        alive = np.ones(stop - start, dtype=bool)
        zeros = np.zeros(stop - start, dtype=np.int64)
        steps = 0
        for s in range(n):
            lab = labels[V]
            zeros += (lab == 0) & alive
            steps += int(alive.sum())
            y = Aarr[lab] * x
            jump, x_new = np.divmod(y, q)
            V = np.where(alive, V + jump, V)
            x = np.where(alive, x_new, x)
            if s == alpha_step:
                mask = alive
                np.add.at(trans, (lab[mask].astype(np.intp), labels[V[mask]].astype(np.intp)), 1)
            alive &= x != 0
        return _summarize(V, labels, n, trans, zeros.sum(), steps, retain, stopped=~alive)
    ends, zeros, stopped = [], [], []
    steps = 0
    for u in points:
        state = WalkState1D(0, ExactPoint((u,), q))
        halted = False
        for s in range(n):
            before = env.label_at(state.V)
            try:
                state = step_deterministic(env, params, state)
            except StoppedProcess:
                halted = True
                break
            if s == alpha_step:
                trans[before, env.label_at(state.V)] += 1
        ends.append(state.V)
        zeros.append(state.counts[0])
        steps += sum(state.counts)
        stopped.append(halted)
    return _summarize(np.array(ends, dtype=np.int64), labels, n, trans, sum(zeros), steps, retain,
                      stopped=np.array(stopped, dtype=bool))


def _summarize(V, labels, n, trans, steps_label0, steps_total, retain, stopped=None):
    if stopped is not None:
        V = V[~stopped]
    return batch_summary("1d", n, V, V.tolist(), labels[V],
                         stopped=0 if stopped is None else int(stopped.sum()),
                         transitions=trans, steps_label0=steps_label0, steps_total=steps_total,
                         retain=retain)


def run_ensemble_1d(env, params, n, count, mode="markov", master_seed=0, denominator=None,
                    workers=1, alpha_step=None, retain_samples=False, chunk_size=None):
    """Run ``count`` independent trajectories of ``n`` steps from tile 0.

    Trajectory i draws all of its randomness from substream ``(master_seed, i)``
    and chunks are reduced in index order, so the summary does not depend on
    ``workers``.  ``alpha_step`` records label transitions made at that step.
    """
    if mode not in ("markov", "deterministic"):
        raise InvalidInput(f"unknown mode {mode!r}")
    if env.dim != 1:
        raise InvalidInput("1D walk needs a 1D environment")
    if n < 0 or count < 0:
        raise InvalidInput("n and count must be nonnegative")
    if env.extent[0] < required_extent(params, n):
        raise EnvironmentExhausted(
            f"n={n} needs environment extent >= {required_extent(params, n)}, have {env.extent[0]}")
    q = denominator or DEFAULT_DENOMINATOR_1D
    if chunk_size is None:
        chunk_size = 1 << 16 if mode == "markov" else 1 << 14
    bounds = [(s, min(count, s + chunk_size)) for s in range(0, count, chunk_size)]
    if mode == "markov":
        tasks = [(env, params, n, master_seed, a, b, alpha_step, retain_samples) for a, b in bounds]
        fn = _markov_chunk
    else:
        tasks = [(env, params, n, master_seed, a, b, alpha_step, retain_samples, q) for a, b in bounds]
        fn = _deterministic_chunk
    summary = EnsembleSummary.empty("1d", n, retain=retain_samples)
    for batch in map_chunks(fn, tasks, workers):
        summary = summary.merge(batch)
    return summary


def trajectory_1d(env, params, x, n, trace_every=1):
    """Single exact trajectory; returns the final state and ``(step, V)`` samples."""
    if env.extent[0] < required_extent(params, n):
        raise EnvironmentExhausted(
            f"n={n} needs environment extent >= {required_extent(params, n)}, have {env.extent[0]}")
    state = WalkState1D(0, x)
    trace = []
    for s in range(1, n + 1):
        state = step_deterministic(env, params, state)
        if s % trace_every == 0 or s == n:
            trace.append((s, state.V))
    return state, trace
