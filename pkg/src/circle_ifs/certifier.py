"""Margin-backed certificates of robust forward-and-backward minimality.

For a pair (g1, g2) with g1 an irrational rotation and g2 a diffeomorphism
with rational rotation number not conjugate to a rotation, minimality of the
generated semigroup follows from four checkable conditions built around an
attracting fixed point p of g2 with one-sided basin A = (p, p + eps):

  (1) closure(B) is covered by h_1(B), ..., h_k(B) with h_i = g1^{n_i} o g2,
      where B = (g2^2(p+eps), g2(p+eps));
  (2) g1^{n_i}(closure(D)) sits inside (p + delta, p + eps) for every i,
      where D = (p, g2(p+eps)) and |delta - eps| > |p - g2(p+eps)|;
  (3) Dh_i < lambda < 1 on (p + delta, p + eps);
  (4) finitely many rotation images T_i(B) cover the circle, and so do
      inverse images S_i^{-1}(B).

Every condition is verified with an explicit arc-length margin (derivative
margins are Lipschitz-inflated grid maxima, not formal interval bounds), and
the margins convert into a conservative C^1 perturbation radius.  The same
pipeline applied to (g1^-1, g2^-1) yields the backward certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .circle_maps import (
    Arc,
    CirclePoint,
    Composition,
    LiftMap,
    Power,
    Rotation,
    SinePerturbed,
    TOL_INV,
    circle_distance,
    find_fixed_points,
    map_from_json,
)
from .ifs_core import IFS
from .symbolic import Word

C_SAFETY = 0.1


class NoAttractingSide(RuntimeError):
    """No fixed point admits a one-sided contracting basin."""


class RationalRotation(ValueError):
    """The rotation factor must have (numerically) irrational rotation number."""


class SearchExhausted(RuntimeError):
    def __init__(self, stage: str, message: str, partial=None):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.partial = partial


class ContractionFails(RuntimeError):
    """The inflated derivative bound is not below 1."""


class CoverGap(RuntimeError):
    """A nested-selection step found no covering arc (margin erosion)."""


class NestedLimitViolation(RuntimeError):
    """The approximant missed the lambda^n * |B| guarantee."""


class LengthExceeded(RuntimeError):
    def __init__(self, message: str, survivors: tuple[float, ...] = ()):
        super().__init__(message)
        self.survivors = survivors


# ---------------------------------------------------------------------------
# Basin location
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BasinData:
    """Attracting-side data for g2: the point p, the one-sided basin
    A = (p, p+eps) where 0 < Dg2 < 1 with margin deriv_margin, the return
    gap delta, and the derived arcs B and D."""

    p: float
    eps: float
    delta: float
    arc_A: Arc
    arc_B: Arc
    arc_D: Arc
    deriv_margin: float

    def to_json(self) -> dict:
        return {
            "p": self.p,
            "eps": self.eps,
            "delta": self.delta,
            "arc_A": self.arc_A.to_json(),
            "arc_B": self.arc_B.to_json(),
            "arc_D": self.arc_D.to_json(),
            "deriv_margin": self.deriv_margin,
        }

    @staticmethod
    def from_json(obj: dict) -> "BasinData":
        return BasinData(
            p=float(obj["p"]),
            eps=float(obj["eps"]),
            delta=float(obj["delta"]),
            arc_A=Arc.from_json(obj["arc_A"]),
            arc_B=Arc.from_json(obj["arc_B"]),
            arc_D=Arc.from_json(obj["arc_D"]),
            deriv_margin=float(obj["deriv_margin"]),
        )


def _local_iterate(g: LiftMap, p: float) -> Callable[[float], float]:
    """g in coordinates relative to its fixed point p: t -> g(p + t) - p."""
    shift = float(g.lift(p)) - p
    offset = round(shift)
    if abs(shift - offset) > 1e-7:
        raise NoAttractingSide(f"{p} is not a fixed point (lift defect {shift - offset:.2e})")
    return lambda t: float(g.lift(p + t)) - p - offset


def locate_basin(
    g2: LiftMap,
    grid_n: int = 4096,
    deriv_margin: float = 0.01,
    min_eps: float = 1e-3,
) -> BasinData:
    """Find an attracting-side fixed point of g2 and its basin geometry.

    Picks the fixed point with the longest right-sided interval on which the
    derivative stays below 1 - deriv_margin (grid resolution 1/grid_n), then
    sets delta to the midpoint of the admissible interval
    (0, eps - |p - g2(p+eps)|) and computes B and D from g2 evaluations.
    """
    fps = find_fixed_points(g2, grid_n)
    if not fps:
        raise NoAttractingSide("map has no fixed points")
    step = 1.0 / grid_n
    best: tuple[float, float] | None = None  # (eps, p)
    for fp in fps:
        p = float(fp.point)
        xs = p + step * np.arange(1, grid_n)
        ds = np.asarray(g2.deriv(xs))
        bad = np.flatnonzero(ds > 1.0 - deriv_margin)
        good = int(bad[0]) if len(bad) else grid_n - 1
        eps = good * step
        if eps >= min_eps and (best is None or eps > best[0] + 1e-15):
            best = (eps, p)
    if best is None:
        raise NoAttractingSide(
            f"no fixed point has a right basin of length >= {min_eps} "
            f"with derivative margin {deriv_margin}"
        )
    eps, p = best
    local = _local_iterate(g2, p)
    d1 = local(eps)  # g2(p + eps) relative to p
    if not 0.0 < d1 < eps:
        raise NoAttractingSide("basin edge is not pulled strictly inward")
    b0 = local(d1)
    if not 0.0 < b0 < d1:
        raise NoAttractingSide("second iterate left the basin")
    delta = 0.5 * (eps - d1)
    if not b0 > delta:
        raise NoAttractingSide(
            f"B starts at {b0:.6f} inside the return gap delta={delta:.6f}"
        )
    return BasinData(
        p=p,
        eps=eps,
        delta=delta,
        arc_A=Arc(p, eps),
        arc_B=Arc(p + b0, d1 - b0),
        arc_D=Arc(p, d1),
        deriv_margin=deriv_margin,
    )


# ---------------------------------------------------------------------------
# Condition (1)-(2): covering words
# ---------------------------------------------------------------------------


def _require_rotation(g1: LiftMap, q_max: int = 64, tol: float = 1e-9) -> float:
    alpha = g1.as_translation()
    if alpha is None:
        raise RationalRotation("the first generator must be built from rotations")
    frac = alpha % 1.0
    for q in range(1, q_max + 1):
        if abs(frac * q - round(frac * q)) < tol:
            raise RationalRotation(
                f"rotation number is approximately {round(frac * q)}/{q}; "
                "an irrational rotation is required"
            )
    return alpha


@dataclass(frozen=True)
class CoverWords:
    exponents: tuple[int, ...]
    h_maps: tuple[LiftMap, ...]
    margin_cover: float  # condition (1) worst overlap slack
    margin_window: float  # condition (2) worst containment slack


def search_cover_words(
    g1: LiftMap,
    g2: LiftMap,
    basin: BasinData,
    n_max: int = 10_000,
    min_margin: float = 1e-4,
    window_frac: float = 0.05,
) -> CoverWords:
    """Smallest greedy family h_i = g1^{n_i} o g2 satisfying (1) and (2).

    Admissible exponents place the rotated closure(D) inside
    (p + delta, p + eps), staying window_frac of the window away from its
    edges so the condition-(2) margin is macroscopic.  A greedy
    left-to-right pass then covers closure(B) by the translated copies of
    g2(B), maximizing reach; reach ties are bucketed at a quarter arc so
    the smallest workable exponent wins (small exponents keep the
    perturbation amplification down).
    """
    alpha = _require_rotation(g1)
    if basin.arc_B.length >= 1.0:
        # Homeomorphism images of proper arcs stay proper, so a full-circle
        # B can never be covered the stated way; the basin geometry also
        # cannot produce one.
        raise SearchExhausted("cover_words", "degenerate full-circle B")
    p, eps, delta = basin.p, basin.eps, basin.delta
    local = _local_iterate(g2, p)
    d1 = basin.arc_D.length
    b1 = d1
    b0 = (basin.arc_B.start - p) % 1.0  # g2 sends B's top endpoint here
    c1 = b0
    c0 = local(b0)
    if not 0.0 < c0 < c1:
        raise SearchExhausted("cover_words", "image of B under g2 is degenerate")
    w_lo, w_hi = delta, eps - d1
    pad = max(min_margin, window_frac * (w_hi - w_lo))
    if w_hi - w_lo <= 2.0 * pad:
        raise SearchExhausted(
            "cover_words", f"return window ({w_lo:.6f}, {w_hi:.6f}) is too thin"
        )
    ns = np.arange(1, n_max + 1)
    betas = np.mod(ns * alpha, 1.0)
    ok = (betas >= w_lo + pad) & (betas <= w_hi - pad)
    ns, betas = ns[ok], betas[ok]
    if len(ns) == 0:
        raise SearchExhausted("cover_words", f"no exponent <= {n_max} lands in the window")
    starts = c0 + betas
    ends = c1 + betas
    bucket = 0.25 * (c1 - c0)
    overlap_demand = max(min_margin, 0.05 * (c1 - c0))

    picks: list[int] = []
    cur = b0
    while True:
        adm = np.flatnonzero((starts <= cur - overlap_demand) & (ends > cur))
        if len(adm) == 0:
            raise SearchExhausted(
                "cover_words",
                f"cover stalls at {cur:.6f} of [{b0:.6f}, {b1:.6f}]",
                partial=[int(ns[i]) for i in picks],
            )
        best_end = float(np.max(ends[adm]))
        top = adm[ends[adm] >= best_end - bucket]
        best = top[np.argmin(ns[top])]
        picks.append(int(best))
        cur = float(ends[best])
        if cur >= b1 + min_margin:
            break

    chain_margins = [b0 - float(starts[picks[0]])]
    for prev, nxt in zip(picks, picks[1:]):
        chain_margins.append(float(ends[prev]) - float(starts[nxt]))
    chain_margins.append(float(ends[picks[-1]]) - b1)
    m1 = min(chain_margins)
    m2 = min(min(float(betas[i]) - w_lo, w_hi - float(betas[i])) for i in picks)
    exponents = tuple(int(ns[i]) for i in picks)
    h_maps = tuple(Composition([Power(g1, n), g2]) for n in exponents)
    return CoverWords(exponents, h_maps, m1, m2)


# ---------------------------------------------------------------------------
# Condition (3): uniform contraction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContractionResult:
    lam: float
    margin: float
    grid_n: int
    inflation: float


def verify_contraction(
    h_maps: Sequence[LiftMap], basin: BasinData, grid_n: int = 1024
) -> ContractionResult:
    """lambda = sup of Dh_i over (p + delta, p + eps), grid max plus a
    Lipschitz-of-derivative inflation C * spacing / 2.  Fails if >= 1."""
    xs = basin.p + np.linspace(basin.delta, basin.eps, grid_n + 1)
    worst = 0.0
    c_bound = 0.0
    for h in h_maps:
        worst = max(worst, float(np.max(np.asarray(h.deriv(xs)))))
        c_bound = max(c_bound, h.second_deriv_bound())
    spacing = (basin.eps - basin.delta) / grid_n
    inflation = 0.5 * c_bound * spacing
    lam = worst + inflation
    if lam >= 1.0:
        raise ContractionFails(f"inflated derivative bound {lam:.6f} >= 1")
    return ContractionResult(lam, 1.0 - lam, grid_n, inflation)


# ---------------------------------------------------------------------------
# Condition (4): global circle cover by rotated copies of B
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GlobalCover:
    forward_exponents: tuple[int, ...]
    backward_exponents: tuple[int, ...]
    margin: float


def _greedy_circle_cover(
    offsets: np.ndarray, length: float, min_margin: float, stage: str
) -> tuple[list[int], float]:
    """Cover the circle by arcs (offset_m, offset_m + length), anchored at
    exponent 0, greedily maximizing reach with quarter-arc reach buckets
    (smallest exponent wins inside a bucket).  Returns (picks, margin).
    """
    if length >= 1.0:
        return [0], 1.0  # a full-circle arc covers unconditionally
    rel = np.mod(offsets - offsets[0], 1.0)
    bucket = 0.25 * length
    overlap_demand = max(min_margin, 0.1 * length)
    close_by = max(min_margin, 0.5 * bucket)  # demanded closing overlap
    picks = [0]
    cur = length
    while cur < 1.0 + close_by:
        adm = np.flatnonzero((rel <= cur - overlap_demand) & (rel + length > cur))
        if len(adm) == 0:
            raise SearchExhausted(
                stage, f"circle cover stalls at {cur:.6f}", partial=picks
            )
        reach = rel[adm] + length
        best_reach = float(np.max(reach))
        top = adm[reach >= best_reach - bucket]
        best = top[np.argmin(top)]
        if int(best) in picks:
            raise SearchExhausted(stage, f"circle cover loops at {cur:.6f}", partial=picks)
        picks.append(int(best))
        cur = float(rel[best] + length)
    overlaps = []
    for prev, nxt in zip(picks, picks[1:]):
        overlaps.append(float(rel[prev]) + length - float(rel[nxt]))
    overlaps.append(cur - 1.0)  # closing overlap with the anchor arc
    return picks, min(overlaps)


def verify_global_cover(
    g1: LiftMap, arc_b: Arc, n_max: int = 10_000, min_margin: float = 1e-4
) -> GlobalCover:
    """Rotation exponents covering the circle by copies of B, both by
    forward images T_i(B) = B + m_i*alpha and by inverse images
    S_i^{-1}(B) = B - m_i*alpha, each with pairwise overlap margin."""
    alpha = _require_rotation(g1)
    ms = np.arange(0, n_max + 1)
    fwd_offsets = np.mod(arc_b.start + ms * alpha, 1.0)
    bwd_offsets = np.mod(arc_b.start - ms * alpha, 1.0)
    fwd_picks, fwd_margin = _greedy_circle_cover(
        fwd_offsets, arc_b.length, min_margin, "global_cover"
    )
    bwd_picks, bwd_margin = _greedy_circle_cover(
        bwd_offsets, arc_b.length, min_margin, "global_cover"
    )
    return GlobalCover(
        tuple(int(ms[i]) for i in fwd_picks),
        tuple(int(ms[i]) for i in bwd_picks),
        min(fwd_margin, bwd_margin),
    )


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------

MARGIN_KEYS = ("cover_overlap", "return_window", "contraction", "circle_cover")


@dataclass(frozen=True)
class Certificate:
    direction: str  # "forward" | "backward"
    label: str
    generators: tuple[dict, dict]  # JSON descriptors of the certified pair
    basin: BasinData
    cover_exponents: tuple[int, ...]
    lam: float
    global_forward_exponents: tuple[int, ...]
    global_backward_exponents: tuple[int, ...]
    margins: dict
    radius: float

    def generator_maps(self) -> tuple[LiftMap, LiftMap]:
        return map_from_json(self.generators[0]), map_from_json(self.generators[1])

    def h_maps(self) -> tuple[LiftMap, ...]:
        g1, g2 = self.generator_maps()
        return tuple(Composition([Power(g1, n), g2]) for n in self.cover_exponents)

    def to_json(self) -> dict:
        return {
            "direction": self.direction,
            "label": self.label,
            "generators": list(self.generators),
            "basin": self.basin.to_json(),
            "cover_exponents": list(self.cover_exponents),
            "lambda": self.lam,
            "global_forward_exponents": list(self.global_forward_exponents),
            "global_backward_exponents": list(self.global_backward_exponents),
            "margins": {k: self.margins[k] for k in MARGIN_KEYS},
            "radius": self.radius,
        }

    @staticmethod
    def from_json(obj: dict) -> "Certificate":
        return Certificate(
            direction=obj["direction"],
            label=obj.get("label", ""),
            generators=(obj["generators"][0], obj["generators"][1]),
            basin=BasinData.from_json(obj["basin"]),
            cover_exponents=tuple(int(n) for n in obj["cover_exponents"]),
            lam=float(obj["lambda"]),
            global_forward_exponents=tuple(int(n) for n in obj["global_forward_exponents"]),
            global_backward_exponents=tuple(int(n) for n in obj["global_backward_exponents"]),
            margins={k: float(obj["margins"][k]) for k in MARGIN_KEYS},
            radius=float(obj["radius"]),
        )


@dataclass(frozen=True)
class CertificatePair:
    forward: Certificate
    backward: Certificate

    @property
    def radius(self) -> float:
        return min(self.forward.radius, self.backward.radius)

    def to_json(self) -> dict:
        return {
            "schema": 1,
            "label": self.forward.label,
            "radius": self.radius,
            "forward": self.forward.to_json(),
            "backward": self.backward.to_json(),
        }

    @staticmethod
    def from_json(obj: dict) -> "CertificatePair":
        return CertificatePair(
            Certificate.from_json(obj["forward"]), Certificate.from_json(obj["backward"])
        )


def _perturbation_radius(
    cover: CoverWords,
    contraction: ContractionResult,
    gcov: GlobalCover,
    g1: LiftMap,
    g2: LiftMap,
    c_safety: float,
) -> float:
    """Conservative C^1 radius keeping every margin positive.

    A C^1 perturbation of size eta moves an L-letter composition by at most
    eta * L in C^0 (rotation factors have unit Lipschitz constant; the
    envelope holds while eta * L stays small, which c_safety enforces) and
    moves its derivative by at most eta * L * (1 + M2 * L / 2) where M2
    bounds the generators' second derivatives.  Arc margins divide by the
    first amplification, the contraction margin by the second.
    """
    l_max = max(
        max(cover.exponents) + 1,
        max(gcov.forward_exponents),
        max(gcov.backward_exponents),
        1,
    )
    m2_bound = max(g1.second_deriv_bound(), g2.second_deriv_bound())
    a0 = float(l_max)
    a1 = l_max * (1.0 + 0.5 * m2_bound * l_max)
    return c_safety * min(
        cover.margin_cover / a0,
        cover.margin_window / a0,
        gcov.margin / a0,
        contraction.margin / a1,
    )


def _certify_direction(
    g1: LiftMap,
    g2: LiftMap,
    direction: str,
    label: str,
    n_max: int,
    fixed_grid: int,
    contraction_grid: int,
    deriv_margin: float,
    min_margin: float,
    c_safety: float,
) -> Certificate:
    basin = locate_basin(g2, fixed_grid, deriv_margin)
    cover = search_cover_words(g1, g2, basin, n_max, min_margin)
    contraction = verify_contraction(cover.h_maps, basin, contraction_grid)
    gcov = verify_global_cover(g1, basin.arc_B, n_max, min_margin)
    radius = _perturbation_radius(cover, contraction, gcov, g1, g2, c_safety)
    margins = {
        "cover_overlap": cover.margin_cover,
        "return_window": cover.margin_window,
        "contraction": contraction.margin,
        "circle_cover": gcov.margin,
    }
    return Certificate(
        direction=direction,
        label=label,
        generators=(g1.to_json(), g2.to_json()),
        basin=basin,
        cover_exponents=cover.exponents,
        lam=contraction.lam,
        global_forward_exponents=gcov.forward_exponents,
        global_backward_exponents=gcov.backward_exponents,
        margins=margins,
        radius=radius,
    )


def certify_robust_minimality(
    g1: LiftMap,
    g2: LiftMap,
    *,
    n_max: int = 10_000,
    fixed_grid: int = 4096,
    contraction_grid: int = 1024,
    deriv_margin: float = 0.01,
    min_margin: float = 1e-4,
    c_safety: float = C_SAFETY,
    label: str = "",
) -> CertificatePair:
    """Forward and backward certificates for the pair (g1, g2).

    The backward pass runs the identical pipeline on (g1^-1, g2^-1); a
    failure there invalidates the pair (exceptions propagate with the
    failing stage).
    """
    forward = _certify_direction(
        g1, g2, "forward", label, n_max, fixed_grid, contraction_grid,
        deriv_margin, min_margin, c_safety,
    )
    backward = _certify_direction(
        g1.inverse(), g2.inverse(), "backward", label, n_max, fixed_grid,
        contraction_grid, deriv_margin, min_margin, c_safety,
    )
    return CertificatePair(forward, backward)


# ---------------------------------------------------------------------------
# Re-verification with frozen words
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Reverification:
    margins: dict
    lam: float
    valid: bool


def _power_chain(f: LiftMap, xs: np.ndarray, exponents: Sequence[int]) -> dict[int, np.ndarray]:
    """Values of f^m(xs) for every requested m >= 0, via one incremental pass.

    Rotation-built maps short-circuit to direct translation; everything else
    shares a single iteration chain up to max(exponents).
    """
    wanted = sorted(set(int(m) for m in exponents))
    t = f.as_translation()
    if t is not None:
        return {m: xs + m * t for m in wanted}
    out: dict[int, np.ndarray] = {}
    cur = np.array(xs, dtype=float)
    done = 0
    for m in wanted:
        for _ in range(m - done):
            cur = np.asarray(f.lift(cur))
        done = m
        out[m] = cur.copy()
    return out


def reverify_certificate(
    cert: Certificate,
    f1: LiftMap | None = None,
    f2: LiftMap | None = None,
    contraction_grid: int = 1024,
) -> Reverification:
    """Re-evaluate conditions (1)-(4) with the certificate's frozen words.

    With f1/f2 omitted the stored generators are used, which must reproduce
    the stored margins to within 1e-12 (determinism).  Supplying perturbed
    maps re-checks the same combinatorial data under perturbation; all
    margins positive means the certificate survives.  Rotation-power
    families are evaluated along shared incremental chains, so the cost is
    linear in the largest exponent.
    """
    s1, s2 = cert.generator_maps()
    f1 = s1 if f1 is None else f1
    f2 = s2 if f2 is None else f2
    basin = cert.basin
    p, eps, delta = basin.p, basin.eps, basin.delta
    d_len = basin.arc_D.length
    rb0 = (basin.arc_B.start - p) % 1.0
    rb1 = rb0 + basin.arc_B.length

    # (1) closure(B) covered by h_i = f1^{n_i} o f2 images, in stored order.
    base = np.asarray(f2.lift(np.array([p + rb0, p + rb1])), dtype=float)
    images1 = _power_chain(f1, base, cert.cover_exponents)
    spans = []
    for n in cert.cover_exponents:
        lo, hi = images1[n]
        start = (lo - p) % 1.0
        spans.append((start, start + (hi - lo)))
    chain = [rb0 - spans[0][0]]
    for (s_prev, e_prev), (s_next, _) in zip(spans, spans[1:]):
        chain.append(e_prev - s_next)
    chain.append(spans[-1][1] - rb1)
    m1 = min(chain)

    # (2) rotated closure(D) inside (p + delta, p + eps).
    images2 = _power_chain(f1, np.array([p, p + d_len]), cert.cover_exponents)
    m2 = math.inf
    for n in cert.cover_exponents:
        lo, hi = images2[n]
        start = (lo - p) % 1.0
        m2 = min(m2, start - delta, eps - (start + (hi - lo)))

    # (3) contraction on (p + delta, p + eps): the derivative of
    # f1^{n} o f2 accumulates along one shared chain.
    xs = p + np.linspace(delta, eps, contraction_grid + 1)
    deriv = np.asarray(f2.deriv(xs), dtype=float)
    pos = np.asarray(f2.lift(xs), dtype=float)
    worst = 0.0
    trans = f1.as_translation()
    remaining = sorted(set(cert.cover_exponents))
    done = 0
    for n in remaining:
        if trans is None:
            for _ in range(n - done):
                deriv = deriv * np.asarray(f1.deriv(pos))
                pos = np.asarray(f1.lift(pos))
        done = n
        worst = max(worst, float(np.max(deriv)))
    c_bound = max(
        Composition([Power(f1, n), f2]).second_deriv_bound()
        for n in cert.cover_exponents
    )
    lam = worst + 0.5 * c_bound * (eps - delta) / contraction_grid
    m3 = 1.0 - lam

    # (4) circle covers in stored order, forward and inverse families.
    m4 = math.inf
    b_ends = np.array([basin.arc_B.start, basin.arc_B.start + basin.arc_B.length])
    for exponents, mapper in (
        (cert.global_forward_exponents, f1),
        (cert.global_backward_exponents, f1.inverse()),
    ):
        values = _power_chain(mapper, b_ends, exponents)
        spans = [(values[m][0], values[m][1] - values[m][0]) for m in exponents]
        anchor = spans[0][0]
        rel = [((lo - anchor) % 1.0, length) for lo, length in spans]
        cur = rel[0][1]
        chain = []
        for r, length in rel[1:]:
            chain.append(cur - r)
            cur = r + length
        chain.append(cur - 1.0)
        m4 = min(m4, min(chain) if chain else spans[0][1])

    margins = {
        "cover_overlap": float(m1),
        "return_window": float(m2),
        "contraction": float(m3),
        "circle_cover": float(m4),
    }
    valid = bool(all(v > 0.0 for v in margins.values()))
    return Reverification(margins, float(lam), valid)


def check_certificate(cert: Certificate, tol: float = 1e-12) -> tuple[bool, Reverification]:
    """Recompute margins from the stored generators and compare to the
    stored values.  Fails when a margin drifts beyond tol or is not positive."""
    rev = reverify_certificate(cert)
    ok = rev.valid and abs(rev.lam - cert.lam) <= tol
    for k in MARGIN_KEYS:
        ok = ok and abs(rev.margins[k] - cert.margins[k]) <= tol
    return bool(ok), rev


# ---------------------------------------------------------------------------
# Nested-limit construction
# ---------------------------------------------------------------------------


def _contains_closed(arc: Arc, x: float, tol: float) -> bool:
    offset = (float(x) - arc.start) % 1.0
    return offset <= arc.length + tol or offset >= 1.0 - tol


@dataclass(frozen=True)
class NestedLimitResult:
    word: Word
    approximant: CirclePoint
    bound: float
    error: float


def nested_limit(
    h_maps: Sequence[LiftMap],
    basin: BasinData,
    x: float,
    n_levels: int,
    lam: float,
    y: float | None = None,
) -> NestedLimitResult:
    """Select indices i_1..i_n with x in h_{i_1} o ... o h_{i_n}(B) and
    return the approximant h_{i_1} o ... o h_{i_n}(y).

    The covering condition guarantees a valid index at every level (ties
    break toward the lowest index); the returned error is certified to be
    at most lambda^n * |B|.  Each level adds one inverse evaluation, so the
    containment test is inflated by a matching multiple of TOL_INV.
    """
    arc_b = basin.arc_B
    images = []
    for h in h_maps:
        lo = float(h.lift(arc_b.start))
        hi = float(h.lift(arc_b.start + arc_b.length))
        images.append(Arc(lo % 1.0, hi - lo))
    z = float(x) % 1.0
    if not _contains_closed(arc_b, z, 4.0 * TOL_INV):
        raise ValueError("x must lie in the closure of B")
    indices: list[int] = []
    for level in range(n_levels):
        tol = 4.0 * TOL_INV * (level + 1)
        for i, arc in enumerate(images):
            if _contains_closed(arc, z, tol):
                indices.append(i)
                z = float(h_maps[i].inverse_lift(z)) % 1.0
                break
        else:
            raise CoverGap(f"no covering arc contains the level-{level} pullback")
    y0 = float(arc_b.midpoint) if y is None else float(y) % 1.0
    approx = y0
    for i in reversed(indices):
        approx = float(h_maps[i].lift(approx)) % 1.0
    bound = lam**n_levels * arc_b.length
    error = circle_distance(approx, float(x) % 1.0)
    if error > bound + 1e-9:
        raise NestedLimitViolation(f"error {error:.3e} exceeds bound {bound:.3e}")
    word = Word(tuple(i + 1 for i in indices), max(len(h_maps), 1))
    return NestedLimitResult(word, CirclePoint(approx), bound, error)


# ---------------------------------------------------------------------------
# Universal words
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniversalWordResult:
    word: Word
    capture_times: tuple[int, ...]  # per grid index; time t means word[:t]
    target: Arc
    shrunk_target: Arc
    z_grid: int
    fine_verified: bool

    def capture_time_for(self, ifs: IFS, z: float) -> int | None:
        """First t <= |word| with the prefix branch sending z into the target."""
        pos = float(z) % 1.0
        if self.target.contains(pos):
            return 0
        for t, a in enumerate(self.word.letters, start=1):
            pos = float(ifs.generators[a - 1].lift(pos)) % 1.0
            if self.target.contains(pos):
                return t
        return None


def _largest_cluster(sorted_pos: np.ndarray, span_cap: float) -> tuple[float, float]:
    """(start, span) of the largest circular run fitting inside span_cap."""
    n = len(sorted_pos)
    doubled = np.concatenate([sorted_pos, sorted_pos + 1.0])
    hi = np.searchsorted(doubled, sorted_pos + span_cap, side="right")
    counts = np.minimum(hi - np.arange(n), n)
    best = int(np.argmax(counts))
    last = doubled[best + counts[best] - 1]
    return float(sorted_pos[best]), float(last - sorted_pos[best])


def _bfs_arc_to_target(
    ifs: IFS,
    lo: float,
    span: float,
    goal: Arc,
    depth_cap: int,
    node_cap: int,
) -> tuple[int, ...] | None:
    """Shortest word sending the arc (lo, lo+span) inside the goal arc.

    Breadth-first over arc states with visited-state quantization for
    pruning only; the goal test always uses the exact tracked endpoints, so
    any returned word is valid.
    """
    from collections import deque

    def is_goal(state_lo: float, state_span: float) -> bool:
        return (state_lo - goal.start) % 1.0 + state_span <= goal.length

    if is_goal(lo, span):
        return ()
    quantum = 1 << 21
    seen = {(round(lo * quantum), round(span * quantum))}
    queue = deque([(lo, span, ())])
    nodes = 0
    while queue:
        cur_lo, cur_span, word = queue.popleft()
        if len(word) >= depth_cap:
            continue
        for a, g in enumerate(ifs.generators, start=1):
            new_lo_lift = float(g.lift(cur_lo))
            new_span = float(g.lift(cur_lo + cur_span)) - new_lo_lift
            new_lo = new_lo_lift % 1.0
            new_word = word + (a,)
            if is_goal(new_lo, new_span):
                return new_word
            key = (round(new_lo * quantum), round(new_span * quantum))
            if key in seen:
                continue
            seen.add(key)
            nodes += 1
            if nodes > node_cap:
                return None
            queue.append((new_lo, new_span, new_word))
    return None


def find_universal_word(
    ifs: IFS,
    target: Arc,
    z_grid: int = 1000,
    max_len: int = 500,
    *,
    shrink_frac: float = 0.1,
    bfs_depth: int = 64,
    bfs_nodes: int = 200_000,
    fine_factor: int = 10,
    retries: int = 3,
) -> UniversalWordResult:
    """Word sigma such that every grid point z enters the target at some
    prefix time t(z) <= |sigma|.

    Greedy growth: repeatedly find the shortest suffix sending the largest
    surviving cluster into the target shrunk by a safety margin (so the grid
    property extrapolates between grid points), capturing stragglers
    opportunistically after every letter.  The property is then verified on
    a fine_factor-times finer grid against the full target; any fine points
    that slipped through are appended as survivors and the greedy loop
    resumes, up to `retries` rounds.
    """
    if target.length >= 1.0:
        return UniversalWordResult(
            Word((), ifs.k), tuple([0] * z_grid), target, target, z_grid, True
        )
    shrunk = target.shrunk(shrink_frac * target.length)
    gens = ifs.generators

    pos = np.arange(z_grid) / z_grid
    capture = np.full(z_grid, -1, dtype=np.int64)
    capture[shrunk.contains_array(pos)] = 0
    letters: list[int] = []

    def survivors_of(positions: np.ndarray, caps: np.ndarray) -> np.ndarray:
        return np.flatnonzero(caps < 0)

    def greedy(positions: np.ndarray, caps: np.ndarray) -> None:
        while True:
            alive = survivors_of(positions, caps)
            if len(alive) == 0:
                return
            if len(letters) > max_len:
                raise LengthExceeded(
                    f"word exceeded max_len={max_len} with {len(alive)} survivors",
                    survivors=tuple(float(v) for v in np.sort(positions[alive])[:32]),
                )
            srt = np.sort(positions[alive])
            lo, span = _largest_cluster(srt, 0.8 * shrunk.length)
            suffix = _bfs_arc_to_target(ifs, lo, span, shrunk, bfs_depth, bfs_nodes)
            if suffix is None:
                # Fall back to steering the single worst straggler.
                lo = float(srt[0])
                suffix = _bfs_arc_to_target(ifs, lo, 0.0, shrunk, bfs_depth, bfs_nodes)
                if suffix is None:
                    raise LengthExceeded(
                        "suffix search exhausted",
                        survivors=tuple(float(v) for v in srt[:32]),
                    )
            for a in suffix:
                g = gens[a - 1]
                alive = survivors_of(positions, caps)
                positions[alive] = np.mod(g.lift(positions[alive]), 1.0)
                letters.append(a)
                hit = alive[shrunk.contains_array(positions[alive])]
                caps[hit] = len(letters)

    greedy(pos, capture)

    fine_verified = False
    for _ in range(retries):
        fine_n = z_grid * fine_factor
        fine_pos = np.arange(fine_n) / fine_n
        entered = target.contains_array(fine_pos)
        cur = fine_pos.copy()
        for a in letters:
            cur = np.mod(gens[a - 1].lift(cur), 1.0)
            entered |= target.contains_array(cur)
        missing = np.flatnonzero(~entered)
        if len(missing) == 0:
            fine_verified = True
            break
        # Track the laggards from their current positions and keep growing.
        extra_pos = cur[missing]
        extra_cap = np.full(len(missing), -1, dtype=np.int64)
        greedy(extra_pos, extra_cap)
    if not fine_verified:
        raise LengthExceeded("fine-grid verification kept failing")
    return UniversalWordResult(
        word=Word(tuple(letters), ifs.k),
        capture_times=tuple(int(t) for t in capture),
        target=target,
        shrunk_target=shrunk,
        z_grid=z_grid,
        fine_verified=True,
    )


# ---------------------------------------------------------------------------
# C^1 perturbations
# ---------------------------------------------------------------------------


def c1_distance(f: LiftMap, g: LiftMap, grid_n: int = 512) -> float:
    """sup |F - G| + sup |DF - DG| on a grid (the C^1 gauge used throughout)."""
    xs = np.arange(grid_n) / grid_n
    d0 = float(np.max(np.abs(np.asarray(f.lift(xs)) - np.asarray(g.lift(xs)))))
    d1 = float(np.max(np.abs(np.asarray(f.deriv(xs)) - np.asarray(g.deriv(xs)))))
    return d0 + d1


def perturb_map(g: LiftMap, size: float, rng: np.random.Generator) -> LiftMap:
    """Post-compose g with a random phase-shifted sine bump of C^1 size `size`.

    The bump is R_{-c} o SinePerturbed(u, v) o R_c, whose C^1 distance from
    the identity is exactly linear in (u, v), so a single rescale lands the
    requested size.
    """
    if size <= 0.0:
        return g
    u = float(rng.uniform(-1.0, 1.0))
    v = float(rng.uniform(-1.0, 1.0))
    c = float(rng.random())
    if u == 0.0 and v == 0.0:
        u = 1.0

    def bumped(scale: float) -> LiftMap:
        return Composition(
            [Rotation(-c), SinePerturbed(u * scale, v * scale), Rotation(c), g]
        )

    probe = 1e-3
    measured = c1_distance(bumped(probe), g)
    scale = size * probe / measured
    out = bumped(scale)
    achieved = c1_distance(out, g)
    if achieved > 0:
        out = bumped(scale * size / achieved)
    return out
