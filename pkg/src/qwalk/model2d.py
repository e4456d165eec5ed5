"""Walk driven by hyperbolic toral automorphisms in a quenched 2D environment.

Unit-square tiles are not a Markov partition here, so trajectories are
computed exactly; the effective label dynamics below is a one-step
overlap-area approximation.
"""

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import rng
from .bigrat import DEFAULT_DENOMINATOR_2D, ExactPoint, affine_step, sample_point
from .environment import as_fraction
from .errors import EnvironmentExhausted, InvalidInput
from .geometry import check_unimodular, jump_distribution
from .model1d import equilibrium_p
from .parallel import map_chunks
from .stats import EnsembleSummary, batch_summary


def _matrix(M):
    if isinstance(M, str):
        M = parse_matrix(M)
    return tuple(tuple(int(v) for v in row) for row in M)


def parse_matrix(text):
    """Parse ``"a,b;c,d"`` into ``((a, b), (c, d))``."""
    try:
        rows = [[int(v) for v in row.split(",")] for row in text.strip().split(";")]
    except ValueError as exc:
        raise InvalidInput(f"bad matrix {text!r}; expected the form 'a,b;c,d'") from exc
    if len(rows) != 2 or any(len(r) != 2 for r in rows):
        raise InvalidInput(f"bad matrix {text!r}; expected the form 'a,b;c,d'")
    return tuple(tuple(r) for r in rows)


@dataclass(frozen=True)
class Params2D:
    A0: tuple
    A1: tuple
    p0: Fraction

    def __post_init__(self):
        object.__setattr__(self, "A0", _matrix(self.A0))
        object.__setattr__(self, "A1", _matrix(self.A1))
        object.__setattr__(self, "p0", as_fraction(self.p0))
        check_unimodular(self.A0)
        check_unimodular(self.A1)
        if not 0 < self.p0 < 1:
            raise InvalidInput(f"p0 must lie strictly between 0 and 1, got {self.p0}")

    @property
    def p1(self):
        return 1 - self.p0

    @property
    def A(self):
        return (self.A0, self.A1)

    @property
    def max_row_sum(self):
        return max(sum(row) for M in self.A for row in M)


# reference parameters: the cat map and a second positive unimodular map, fair field
CAT_PAIR = Params2D(((2, 1), (1, 1)), ((3, 1), (2, 1)), Fraction(1, 2))


@dataclass(frozen=True)
class WalkState2D:
    V: tuple
    x: ExactPoint
    step_count: int = 0
    boundary_hit: bool = False

    def position(self):
        q = self.x.denominator
        return tuple(v + Fraction(u, q) for v, u in zip(self.V, self.x.numerators))


def step_deterministic_2d(env, params, state):
    """V' = V + [A x], x' = A x mod 1 with A = A_{omega(V)}; flags a zero coordinate."""
    M = params.A[env.label_at(state.V)]
    jump, x = affine_step(M, state.x)
    V = (state.V[0] + jump[0], state.V[1] + jump[1])
    return WalkState2D(V, x, state.step_count + 1, state.boundary_hit or x.is_boundary())


# -- closed forms ------------------------------------------------------------

def self_overlaps(params):
    """Area of A_i(unit square) inside the starting tile, for i = 0, 1."""
    return tuple(dict(jump_distribution(M)).get((0, 0), Fraction(0)) for M in params.A)


def analytic_alpha_star_2d(params):
    """Effective label transition matrix and the self-overlaps it is built from."""
    s = self_overlaps(params)
    p = (params.p0, params.p1)
    alpha = tuple(
        tuple(s[i] + (1 - s[i]) * p[i] if i == j else (1 - s[i]) * p[j] for j in (0, 1))
        for i in (0, 1)
    )
    return alpha, s


def equilibrium_p_2d(alpha):
    return equilibrium_p(alpha)


def component_drifts(params):
    """Mean jump (A_i - 1)(1/2, 1/2) of each map from a uniform start."""
    half = Fraction(1, 2)
    return tuple(
        tuple((sum(row) - 1) * half for row in M)
        for M in params.A
    )


def drift_2d(params):
    alpha, _ = analytic_alpha_star_2d(params)
    p = equilibrium_p_2d(alpha)
    D0, D1 = component_drifts(params)
    return tuple(p * a + (1 - p) * b for a, b in zip(D0, D1))


@dataclass(frozen=True)
class Analytic2D:
    alpha_star: tuple
    self_overlap: tuple
    p: Fraction
    D0: tuple
    D1: tuple
    D: tuple = field(default=())


def analytic_2d(params):
    alpha, s = analytic_alpha_star_2d(params)
    p = equilibrium_p_2d(alpha)
    D0, D1 = component_drifts(params)
    return Analytic2D(alpha, s, p, D0, D1, tuple(p * a + (1 - p) * b for a, b in zip(D0, D1)))


# -- ensembles ---------------------------------------------------------------

def required_extent(params, n):
    return n * params.max_row_sum + 1


def _walk(labels, width, height, mats, u1, u2, q, n):
    """Inner loop on plain ints; returns (V1, V2, u1, u2, hit)."""
    V1 = V2 = 0
    hit = False
    for _ in range(n):
        if V1 >= width or V2 >= height:
            raise EnvironmentExhausted(f"tile {(V1, V2)} outside environment of extent {(width, height)}")
        a, b, c, d = mats[labels[V2 * width + V1]]
        j1, u1_new = divmod(a * u1 + b * u2, q)
        j2, u2 = divmod(c * u1 + d * u2, q)
        u1 = u1_new
        V1 += j1
        V2 += j2
        if u1 == 0 or u2 == 0:
            hit = True
            break
    return V1, V2, u1, u2, hit


def _chunk_2d(task):
    env, params, n, seed, start, stop, q, retain = task
    labels = env.label_bytes
    width, height = env.extent
    mats = tuple(M[0] + M[1] for M in params.A)
    ends, tiles, end_labels = [], [], []
    stopped = 0
    for i in range(start, stop):
        x = sample_point(rng.Substream(seed, i), 2, q)
        V1, V2, u1, u2, hit = _walk(labels, width, height, mats, x.numerators[0], x.numerators[1], q, n)
        if hit:
            stopped += 1
            continue
        ends.append((V1 + u1 / q, V2 + u2 / q))
        tiles.append((V1, V2))
        end_labels.append(labels[V2 * width + V1] if V1 < width and V2 < height else 0)
    positions = np.array(ends, dtype=float).reshape(-1, 2)
    return batch_summary("2d", n, positions, tiles, np.array(end_labels, dtype=np.uint8),
                         stopped=stopped, retain=retain)


def run_ensemble_2d(env, params, n, count, master_seed=0, denominator=None, workers=1,
                    retain_samples=True, chunk_size=256):
    """Exact deterministic trajectories from uniform starts in tile (0, 0).

    Trajectory i samples its start from substream ``(master_seed, i)``;
    the result is independent of ``workers``.  Trajectories whose fractional
    part hits a tile boundary are counted in ``stopped`` and left out of the
    moments.
    """
    if env.dim != 2:
        raise InvalidInput("2D walk needs a 2D environment")
    if n < 0 or count < 0:
        raise InvalidInput("n and count must be nonnegative")
    need = required_extent(params, n)
    if min(env.extent) < need:
        raise EnvironmentExhausted(f"n={n} needs environment extent >= {need} per axis, have {env.extent}")
    q = denominator or DEFAULT_DENOMINATOR_2D
    bounds = [(s, min(count, s + chunk_size)) for s in range(0, count, chunk_size)]
    tasks = [(env, params, n, master_seed, a, b, q, retain_samples) for a, b in bounds]
    summary = EnsembleSummary.empty("2d", n, retain=retain_samples)
    for batch in map_chunks(_chunk_2d, tasks, workers):
        summary = summary.merge(batch)
    return summary


def trajectory_2d(env, params, x, n):
    """Exact trajectory of length ``n`` from ``x`` in tile (0, 0); returns all states."""
    state = WalkState2D((0, 0), x)
    states = [state]
    for _ in range(n):
        state = step_deterministic_2d(env, params, state)
        states.append(state)
    return states
