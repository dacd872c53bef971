"""Circle points, arcs, and orientation-preserving circle maps via monotone lifts.

The circle is parametrized as R/Z: positions live in [0, 1) and the metric is
d(x, y) = min(|x - y|, 1 - |x - y|), so d <= 1/2 always.  Every map is
represented by its lift F: R -> R, a strictly increasing function with
F(x + 1) = F(x) + 1 (degree one, orientation preserving).  Supported map
families:

    Rotation(alpha)              F(x) = x + alpha
    SinePerturbed(a, b)          F(x) = x + a + (b / 2*pi*f) * sin(2*pi*f*x),
                                 |b| < 1, harmonic count f >= 1
    Composition([m1, ..., mk])   m1 o m2 o ... o mk  (mk applied first)
    Power(base, n)               n-fold composition, n may be negative
    Inverse(base)                lazily inverted by bracketed Newton/bisection

Inverses have no closed form in the sine family, so inverse evaluation solves
F(x) = y by monotone bisection on a bracketing window refined with Newton
steps.  All evaluation methods accept plain floats or numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Union

import numpy as np

FloatLike = Union[float, np.ndarray]

# Inverse solves target |F(x) - y| <= TOL_INV within MAX_INVERSE_ITER rounds.
TOL_INV = 1e-12
MAX_INVERSE_ITER = 200
# Below this, finite-precision derivative estimates cannot separate a
# multiplier from 1, so fixed points are tagged neutral.
TOL_NEUTRAL = 1e-6


class ConvergenceFailure(RuntimeError):
    """Inverse evaluation failed to reach TOL_INV within MAX_INVERSE_ITER."""


class CirclePoint(float):
    """A point of R/Z.  Construction reduces mod 1, so 0 <= value < 1."""

    def __new__(cls, value: float) -> "CirclePoint":
        return super().__new__(cls, float(value) % 1.0)

    def distance_to(self, other: float) -> float:
        return circle_distance(float(self), float(other))

    def __repr__(self) -> str:
        return f"CirclePoint({float(self)!r})"


def circle_distance(x: float, y: float) -> float:
    """Metric d(x, y) = min(|x - y| mod 1, 1 - |x - y| mod 1) on R/Z."""
    d = (x - y) % 1.0
    return min(d, 1.0 - d)


def circle_distance_array(x: FloatLike, y: FloatLike) -> np.ndarray:
    d = np.mod(np.asarray(x, dtype=float) - y, 1.0)
    return np.minimum(d, 1.0 - d)


@dataclass(frozen=True)
class Arc:
    """Oriented arc traversed counterclockwise from `start`, length in (0, 1].

    Length 1 is the full circle.  Membership is half open:
    x in arc  iff  (x - start) mod 1 < length.
    """

    start: float
    length: float

    def __post_init__(self) -> None:
        if not 0.0 < self.length <= 1.0:
            raise ValueError(f"arc length must be in (0, 1], got {self.length}")
        object.__setattr__(self, "start", float(self.start) % 1.0)
        object.__setattr__(self, "length", float(self.length))

    @property
    def end(self) -> float:
        return (self.start + self.length) % 1.0

    @property
    def midpoint(self) -> CirclePoint:
        return CirclePoint(self.start + 0.5 * self.length)

    def contains(self, x: float) -> bool:
        return (float(x) - self.start) % 1.0 < self.length

    def contains_array(self, xs: FloatLike) -> np.ndarray:
        return np.mod(np.asarray(xs, dtype=float) - self.start, 1.0) < self.length

    def contains_arc(self, other: "Arc") -> bool:
        if self.length >= 1.0:
            return True
        offset = (other.start - self.start) % 1.0
        return offset + other.length <= self.length

    def shrunk(self, margin: float) -> "Arc":
        if 2.0 * margin >= self.length:
            raise ValueError("margin swallows the arc")
        return Arc(self.start + margin, self.length - 2.0 * margin)

    def translated(self, t: float) -> "Arc":
        return Arc(self.start + t, self.length)

    def grid(self, n: int) -> np.ndarray:
        return np.mod(self.start + self.length * np.arange(n) / n, 1.0)

    def to_json(self) -> dict:
        return {"start": self.start, "length": self.length}

    @staticmethod
    def from_json(obj: dict) -> "Arc":
        return Arc(float(obj["start"]), float(obj["length"]))


# ---------------------------------------------------------------------------
# Lift maps
# ---------------------------------------------------------------------------


class LiftMap:
    """Base class: an orientation-preserving circle homeomorphism.

    Subclasses implement `lift` and `deriv`; everything else (circle
    evaluation, inverses, bounds) is generic.  Instances are immutable and
    safe to share across threads; all operations are pure.
    """

    def lift(self, x: FloatLike) -> FloatLike:
        raise NotImplementedError

    def deriv(self, x: FloatLike) -> FloatLike:
        raise NotImplementedError

    def __call__(self, x: FloatLike) -> FloatLike:
        return self.lift(x) % 1.0

    # -- structure ----------------------------------------------------------

    def inverse(self) -> "LiftMap":
        return Inverse(self)

    def as_translation(self) -> float | None:
        """Exact translation amount when the map is built from rotations only."""
        return None

    def displacement_bound(self) -> float:
        """Bound on sup |F(x) - x|, used to bracket inverse evaluations."""
        raise NotImplementedError

    def deriv_bounds(self) -> tuple[float, float]:
        """(lower, upper) bounds on the derivative over the whole circle."""
        raise NotImplementedError

    def second_deriv_bound(self) -> float:
        """Bound on sup |F''|, used for Lipschitz inflation of grid maxima."""
        raise NotImplementedError

    # -- inverse evaluation --------------------------------------------------

    def inverse_lift(self, y: FloatLike) -> FloatLike:
        """Solve F(x) = y on the lift by bracketed Newton + bisection."""
        scalar = np.isscalar(y) or np.ndim(y) == 0
        yy = np.atleast_1d(np.asarray(y, dtype=float))
        d = self.displacement_bound()
        lo = yy - d - 1e-9
        hi = yy + d + 1e-9
        x = yy.copy()
        iters = 0
        # Newton phase; derivative is bounded away from 0 for all families.
        for _ in range(12):
            fx = self.lift(x) - yy
            if np.all(np.abs(fx) <= 0.5 * TOL_INV):
                break
            x = np.clip(x - fx / self.deriv(x), lo, hi)
            iters += 1
        fx = self.lift(x) - yy
        bad = np.abs(fx) > 0.5 * TOL_INV
        if np.any(bad):
            blo, bhi = lo[bad], hi[bad]
            yb = yy[bad]
            while iters < MAX_INVERSE_ITER and np.max(bhi - blo) > 0.25 * TOL_INV:
                mid = 0.5 * (blo + bhi)
                too_low = self.lift(mid) < yb
                blo = np.where(too_low, mid, blo)
                bhi = np.where(too_low, bhi, mid)
                iters += 1
            x[bad] = 0.5 * (blo + bhi)
            if np.any(np.abs(self.lift(x[bad]) - yb) > 10.0 * TOL_INV):
                raise ConvergenceFailure(
                    f"inverse residual above {TOL_INV} after {iters} iterations"
                )
        return float(x[0]) if scalar else x

    def inverse_eval(self, y: FloatLike) -> FloatLike:
        return self.inverse_lift(y) % 1.0

    # -- serialization -------------------------------------------------------

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Rotation(LiftMap):
    alpha: float

    def lift(self, x: FloatLike) -> FloatLike:
        return x + self.alpha

    def deriv(self, x: FloatLike) -> FloatLike:
        if np.isscalar(x) or np.ndim(x) == 0:
            return 1.0
        return np.ones_like(np.asarray(x, dtype=float))

    def inverse(self) -> LiftMap:
        return Rotation(-self.alpha)

    def inverse_lift(self, y: FloatLike) -> FloatLike:
        return y - self.alpha

    def as_translation(self) -> float | None:
        return self.alpha

    def displacement_bound(self) -> float:
        return abs(self.alpha)

    def deriv_bounds(self) -> tuple[float, float]:
        return (1.0, 1.0)

    def second_deriv_bound(self) -> float:
        return 0.0

    def to_json(self) -> dict:
        return {"kind": "rotation", "alpha": self.alpha}


@dataclass(frozen=True)
class SinePerturbed(LiftMap):
    """F(x) = x + a + (b / w) sin(w x) with w = 2*pi*harmonics and |b| < 1.

    The derivative 1 + b cos(w x) stays positive, so the map is a
    diffeomorphism.  harmonics=m makes the map commute with the rotation
    by 1/m.
    """

    a: float
    b: float
    harmonics: int = 1

    def __post_init__(self) -> None:
        if not abs(self.b) < 1.0:
            raise ValueError(f"|b| must be < 1 for a diffeomorphism, got {self.b}")
        if self.harmonics < 1:
            raise ValueError("harmonics must be >= 1")

    @property
    def _w(self) -> float:
        return 2.0 * math.pi * self.harmonics

    def lift(self, x: FloatLike) -> FloatLike:
        w = self._w
        return x + self.a + (self.b / w) * np.sin(w * x)

    def deriv(self, x: FloatLike) -> FloatLike:
        w = self._w
        return 1.0 + self.b * np.cos(w * x)

    def displacement_bound(self) -> float:
        return abs(self.a) + abs(self.b) / self._w

    def deriv_bounds(self) -> tuple[float, float]:
        return (1.0 - abs(self.b), 1.0 + abs(self.b))

    def second_deriv_bound(self) -> float:
        return abs(self.b) * self._w

    def to_json(self) -> dict:
        out = {"kind": "sine", "a": self.a, "b": self.b}
        if self.harmonics != 1:
            out["harmonics"] = self.harmonics
        return out


def _flatten(maps: Sequence[LiftMap]) -> tuple[LiftMap, ...]:
    flat: list[LiftMap] = []
    for m in maps:
        if isinstance(m, Composition):
            flat.extend(m.maps)
        else:
            flat.append(m)
    return tuple(flat)


@dataclass(frozen=True)
class Composition(LiftMap):
    """maps[0] o maps[1] o ... o maps[-1]; the last entry is applied first.

    Nested compositions are flattened at construction.
    """

    maps: tuple[LiftMap, ...]

    def __init__(self, maps: Sequence[LiftMap]):
        object.__setattr__(self, "maps", _flatten(maps))

    def lift(self, x: FloatLike) -> FloatLike:
        for m in reversed(self.maps):
            x = m.lift(x)
        return x

    def deriv(self, x: FloatLike) -> FloatLike:
        total = 1.0
        for m in reversed(self.maps):
            total = total * m.deriv(x)
            x = m.lift(x)
        return total

    def inverse(self) -> LiftMap:
        return Composition([m.inverse() for m in reversed(self.maps)])

    def inverse_lift(self, y: FloatLike) -> FloatLike:
        for m in self.maps:
            y = m.inverse_lift(y)
        return y

    def as_translation(self) -> float | None:
        total = 0.0
        for m in self.maps:
            t = m.as_translation()
            if t is None:
                return None
            total += t
        return total

    def displacement_bound(self) -> float:
        return sum(m.displacement_bound() for m in self.maps)

    def deriv_bounds(self) -> tuple[float, float]:
        lo = hi = 1.0
        for m in self.maps:
            mlo, mhi = m.deriv_bounds()
            lo *= mlo
            hi *= mhi
        return (lo, hi)

    def second_deriv_bound(self) -> float:
        # |D2(f o g)| <= M2_f (sup Dg)^2 + sup Df * M2_g, folded pairwise.
        bound = 0.0
        dlo, dhi = 1.0, 1.0
        for m in reversed(self.maps):
            mlo, mhi = m.deriv_bounds()
            bound = m.second_deriv_bound() * dhi * dhi + mhi * bound
            dlo *= mlo
            dhi *= mhi
        return bound

    def to_json(self) -> dict:
        return {"kind": "composition", "maps": [m.to_json() for m in self.maps]}


@dataclass(frozen=True)
class Power(LiftMap):
    base: LiftMap
    exponent: int

    def _factor(self) -> LiftMap:
        return self.base if self.exponent >= 0 else self.base.inverse()

    def lift(self, x: FloatLike) -> FloatLike:
        t = self.base.as_translation()
        if t is not None:
            return x + self.exponent * t
        f = self._factor()
        for _ in range(abs(self.exponent)):
            x = f.lift(x)
        return x

    def deriv(self, x: FloatLike) -> FloatLike:
        f = self._factor()
        total = 1.0
        for _ in range(abs(self.exponent)):
            total = total * f.deriv(x)
            x = f.lift(x)
        return total

    def inverse(self) -> LiftMap:
        return Power(self.base, -self.exponent)

    def inverse_lift(self, y: FloatLike) -> FloatLike:
        t = self.base.as_translation()
        if t is not None:
            return y - self.exponent * t
        f = self._factor()
        for _ in range(abs(self.exponent)):
            y = f.inverse_lift(y)
        return y

    def as_translation(self) -> float | None:
        t = self.base.as_translation()
        return None if t is None else self.exponent * t

    def displacement_bound(self) -> float:
        return abs(self.exponent) * self.base.displacement_bound()

    def deriv_bounds(self) -> tuple[float, float]:
        lo, hi = self._factor().deriv_bounds()
        n = abs(self.exponent)
        return (lo**n, hi**n)

    def second_deriv_bound(self) -> float:
        n = abs(self.exponent)
        if n == 0:
            return 0.0
        f = self._factor()
        return Composition([f] * n).second_deriv_bound()

    def to_json(self) -> dict:
        return {"kind": "power", "base": self.base.to_json(), "exponent": self.exponent}


@dataclass(frozen=True)
class Inverse(LiftMap):
    base: LiftMap

    def lift(self, x: FloatLike) -> FloatLike:
        return self.base.inverse_lift(x)

    def deriv(self, x: FloatLike) -> FloatLike:
        pre = self.base.inverse_lift(x)
        return 1.0 / self.base.deriv(pre)

    def inverse(self) -> LiftMap:
        return self.base

    def inverse_lift(self, y: FloatLike) -> FloatLike:
        return self.base.lift(y)

    def as_translation(self) -> float | None:
        t = self.base.as_translation()
        return None if t is None else -t

    def displacement_bound(self) -> float:
        return self.base.displacement_bound()

    def deriv_bounds(self) -> tuple[float, float]:
        lo, hi = self.base.deriv_bounds()
        return (1.0 / hi, 1.0 / lo)

    def second_deriv_bound(self) -> float:
        # |(f^-1)''| = |f'' o f^-1| * ((f^-1)')^3 <= M2 / lo^3
        lo, _ = self.base.deriv_bounds()
        return self.base.second_deriv_bound() / lo**3

    def to_json(self) -> dict:
        return {"kind": "inverse", "base": self.base.to_json()}


def map_from_json(obj: dict) -> LiftMap:
    kind = obj.get("kind")
    if kind == "rotation":
        return Rotation(float(obj["alpha"]))
    if kind == "sine":
        return SinePerturbed(float(obj["a"]), float(obj["b"]), int(obj.get("harmonics", 1)))
    if kind == "composition":
        return Composition([map_from_json(m) for m in obj["maps"]])
    if kind == "power":
        return Power(map_from_json(obj["base"]), int(obj["exponent"]))
    if kind == "inverse":
        return Inverse(map_from_json(obj["base"]))
    raise ValueError(f"unknown map kind: {kind!r}")


# ---------------------------------------------------------------------------
# Map-level operations
# ---------------------------------------------------------------------------


def eval_map(f: LiftMap, x: float) -> CirclePoint:
    """Circle evaluation F(x) mod 1; independent of the lift representative."""
    return CirclePoint(f.lift(float(x)))


def deriv_map(f: LiftMap, x: float) -> float:
    return float(f.deriv(float(x)))


def inverse_eval(f: LiftMap, y: float) -> CirclePoint:
    """Point x with d(f(x), y) <= TOL_INV, via the lift's bracketed solve."""
    return CirclePoint(f.inverse_lift(float(y)))


class RotationNumberEstimate(NamedTuple):
    value: float
    n_iters: int


def rotation_number(f: LiftMap, n_iters: int) -> RotationNumberEstimate:
    """Mean lift displacement (F^n(0) - 0) / n.

    Error is O(1/n) for circle homeomorphisms.  Maps built purely from
    rotations short-circuit to their exact translation amount.
    """
    if n_iters < 1:
        raise ValueError("n_iters must be >= 1")
    t = f.as_translation()
    if t is not None:
        return RotationNumberEstimate(t, n_iters)
    x = 0.0
    for _ in range(n_iters):
        x = f.lift(x)
    return RotationNumberEstimate(x / n_iters, n_iters)


class FixedPoint(NamedTuple):
    point: CirclePoint
    derivative: float
    stability: str  # "attracting" | "repelling" | "neutral"


def _classify(derivative: float) -> str:
    if abs(derivative - 1.0) <= TOL_NEUTRAL:
        return "neutral"
    return "attracting" if derivative < 1.0 else "repelling"


def find_fixed_points(f: LiftMap, grid_n: int) -> list[FixedPoint]:
    """Roots of F(x) - x = m (integer m) on [0, 1), sorted by position.

    Scans the displacement on a grid of `grid_n` cells and bisects every sign
    change down to TOL_INV.  Fixed-point-free maps (e.g. irrational
    rotations) return an empty list.
    """
    if grid_n < 16:
        raise ValueError("grid_n must be >= 16")
    xs = np.linspace(0.0, 1.0, grid_n + 1)
    disp = np.asarray(f.lift(xs)) - xs
    roots: list[float] = []
    for m in range(math.ceil(disp.min()), math.floor(disp.max()) + 1):
        g = disp - m
        for i in range(grid_n):
            if g[i] == 0.0:
                roots.append(xs[i])
                continue
            if g[i] * g[i + 1] < 0.0:
                lo, hi = xs[i], xs[i + 1]
                glo = g[i]
                while hi - lo > TOL_INV:
                    mid = 0.5 * (lo + hi)
                    gm = f.lift(mid) - mid - m
                    if gm == 0.0:
                        lo = hi = mid
                        break
                    if (gm > 0) == (glo > 0):
                        lo, glo = mid, gm
                    else:
                        hi = mid
                roots.append(0.5 * (lo + hi))
        if g[grid_n] == 0.0 and xs[grid_n] % 1.0 not in roots:
            roots.append(xs[grid_n] % 1.0)
    # Deduplicate mod 1 at well below any grid scale.
    cleaned: list[float] = []
    for r in sorted(p % 1.0 for p in roots):
        if not cleaned or (r - cleaned[-1]) > 1e-9:
            cleaned.append(r)
    if len(cleaned) >= 2 and (cleaned[0] + 1.0 - cleaned[-1]) <= 1e-9:
        cleaned.pop()
    out = []
    for r in cleaned:
        d = float(f.deriv(r))
        out.append(FixedPoint(CirclePoint(r), d, _classify(d)))
    return out
