"""Fixed-denominator exact points on the circle and the torus.

Integer-matrix maps taken mod 1 never change the denominator of a rational
point, so a trajectory can be carried as integer numerators over one fixed
denominator with no rounding and no growth in integer size.
"""

from dataclasses import dataclass

from .errors import InvalidInput

DEFAULT_DENOMINATOR_2D = 1 << 128
# Mersenne prime: coprime to every multiplier, so x -> A x mod 1 permutes
# the grid instead of collapsing dyadic points onto 0 (as 2**k would with
# even A), and A * numerator still fits a signed 64-bit word.
DEFAULT_DENOMINATOR_1D = (1 << 61) - 1


@dataclass(frozen=True)
class ExactPoint:
    numerators: tuple
    denominator: int

    @property
    def dim(self):
        return len(self.numerators)

    def is_boundary(self):
        """True when some coordinate is exactly 0."""
        return any(u == 0 for u in self.numerators)

    def __str__(self):
        parts = [f"{u}/{self.denominator}" for u in self.numerators]
        return parts[0] if len(parts) == 1 else "(" + ", ".join(parts) + ")"


def make_point(numerators, denominator):
    if isinstance(numerators, int):
        numerators = (numerators,)
    numerators = tuple(int(u) for u in numerators)
    denominator = int(denominator)
    if denominator < 2:
        raise InvalidInput(f"denominator must be >= 2, got {denominator}")
    if not numerators:
        raise InvalidInput("a point needs at least one coordinate")
    for u in numerators:
        if not 0 <= u < denominator:
            raise InvalidInput(f"numerator {u} outside [0, {denominator})")
    return ExactPoint(numerators, denominator)


def affine_step(M, x):
    """Apply an integer matrix to ``x`` and split into tile jump and fractional part.

    Returns ``(jump, frac)`` with ``M x = jump + frac`` exactly.  ``M`` is a
    d x d nested sequence of ints; a bare int is accepted for d = 1.
    """
    if isinstance(M, int):
        M = ((M,),)
    d = x.dim
    if len(M) != d or any(len(row) != d for row in M):
        raise InvalidInput(f"matrix shape does not match point dimension {d}")
    q = x.denominator
    jump = []
    frac = []
    for row in M:
        j, r = divmod(sum(a * u for a, u in zip(row, x.numerators)), q)
        jump.append(j)
        frac.append(r)
    return tuple(jump), ExactPoint(tuple(frac), q)


def to_decimal(x, digits):
    """Round-half-even decimal rendering of a 1D point (or one coordinate)."""
    if isinstance(x, ExactPoint):
        if x.dim != 1:
            return "(" + ", ".join(to_decimal(ExactPoint((u,), x.denominator), digits)
                                   for u in x.numerators) + ")"
        num, den = x.numerators[0], x.denominator
    else:
        num, den = x.numerator, x.denominator
    if digits < 1:
        raise InvalidInput("digits must be >= 1")
    sign = "-" if num < 0 else ""
    num = abs(num)
    scaled, rem = divmod(num * 10 ** digits, den)
    if 2 * rem > den or (2 * rem == den and scaled % 2 == 1):
        scaled += 1
    whole, part = divmod(scaled, 10 ** digits)
    return f"{sign}{whole}.{part:0{digits}d}"


def sample_point(stream, dim, denominator):
    """Uniform point on the grid ``{1, ..., q-1}^dim / q`` (0 is a fixed point, so excluded)."""
    return ExactPoint(tuple(stream.big_below(denominator - 1) + 1 for _ in range(dim)), denominator)
