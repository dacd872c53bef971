"""Constructive periodic points of the semigroup.

A synchronizing branch contracts some arc U into itself, so the branch
composition has a fixed point in U (monotone bisection finds it).  With an
attracting record (g, a, basin) in hand, a periodic point inside any
prescribed arc J comes from the three-stage composition G o g^m o F:

    F sends part of J into the basin of a,
    g^m pulls that image into a small neighborhood (a - d, a + d),
    G returns the neighborhood into a closed V inside J,

so the composite maps V into itself and has a fixed point there.  Running
the same construction on the inverse IFS and reversing the word yields
repelling periodic points of the forward system.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .circle_maps import (
    Arc,
    CirclePoint,
    Composition,
    LiftMap,
    TOL_NEUTRAL,
    circle_distance,
    find_fixed_points,
)
from .ifs_core import IFS, branch_deriv
from .symbolic import SequenceModel, Word
from .synchronization import Unpolarized, detect_repellers, repeller_bracket_arcs

TOL_FIX = 1e-9


class HorizonExceeded(RuntimeError):
    """No self-mapped arc appeared within the sampled horizon."""


class StageExhausted(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[stage {stage}] {message}")
        self.stage = stage


@dataclass(frozen=True)
class PeriodicPointRecord:
    word: Word
    point: CirclePoint
    residual: float
    multiplier: float
    stability: str

    def to_json(self) -> dict:
        return {
            "word": self.word.to_json(),
            "point": float(self.point),
            "residual": self.residual,
            "multiplier": self.multiplier,
            "stability": self.stability,
        }


@dataclass(frozen=True)
class Attractor:
    """An attracting fixed point a of the branch composition g, together
    with the arc U it contracts and the interval attracted to a."""

    word: Word
    point: CirclePoint
    invariant_arc: Arc
    basin: Arc
    multiplier: float


def _word_lift(ifs: IFS, letters: Sequence[int], x: float) -> float:
    for a in letters:
        x = float(ifs.generators[a - 1].lift(x))
    return x


def _classify(multiplier: float) -> str:
    if abs(multiplier - 1.0) <= TOL_NEUTRAL:
        return "neutral"
    return "attracting" if multiplier < 1.0 else "repelling"


def _bisect_fixed_point(ifs: IFS, letters: Sequence[int], lo: float, hi: float) -> float:
    """Root of branch(x) = x on [lo, hi], assuming the branch maps the
    interval into itself (so the normalized displacement changes sign)."""
    k = np.floor(_word_lift(ifs, letters, lo) - lo)

    def disp(x: float) -> float:
        return _word_lift(ifs, letters, x) - k - x

    dlo = disp(lo)
    dhi = disp(hi)
    if dlo < 0.0 or dhi > 0.0:
        raise ValueError("interval is not mapped into itself")
    while hi - lo > 1e-13:
        mid = 0.5 * (lo + hi)
        if disp(mid) >= 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _banach_polish(ifs: IFS, letters: Sequence[int], q: float, rounds: int = 80) -> float:
    """Iterate the branch from q; converges to machine precision when the
    fixed point attracts."""
    for _ in range(rounds):
        nxt = _word_lift(ifs, letters, q) % 1.0
        if circle_distance(nxt, q) < 1e-15:
            return nxt
        q = nxt
    return q


def _newton_polish(ifs: IFS, letters: Sequence[int], q: float, rounds: int = 12) -> float:
    """Newton refinement of branch(q) = q for expanding words.

    A float64 point near a fixed point with multiplier D carries residual
    about D * ulp, so the iteration runs in extended precision and then the
    best representable float64 neighbor (smallest re-evaluated residual)
    is returned.
    """
    qq = np.longdouble(q)
    for _ in range(rounds):
        img = _word_lift_ld(ifs, letters, qq)
        k = np.floor(img - qq + np.longdouble(0.5))
        f = img - k - qq
        d = np.longdouble(branch_deriv(ifs, letters, float(qq % 1.0))) - 1.0
        if d == 0.0:
            break
        step = f / d
        if abs(float(step)) > 0.1:
            break
        qq = qq - step
        if abs(float(f)) < 1e-18:
            break
    center = float(np.mod(qq, 1.0))

    def resid(x: float) -> float:
        return circle_distance(_word_lift(ifs, letters, x) % 1.0, x)

    candidates = [center, np.nextafter(center, 0.0), np.nextafter(center, 1.0)]
    return min(candidates, key=resid)


def _word_lift_ld(ifs: IFS, letters: Sequence[int], x: np.longdouble) -> np.longdouble:
    for a in letters:
        x = _lift_ld(ifs.generators[a - 1], x)
    return x


def _lift_ld(g: LiftMap, x: np.longdouble) -> np.longdouble:
    """Extended-precision lift; falls back to float64 for numeric inverses."""
    from .circle_maps import Composition as Comp, Power, Rotation, SinePerturbed

    if isinstance(g, Rotation):
        return x + np.longdouble(g.alpha)
    if isinstance(g, SinePerturbed):
        w = np.longdouble(2.0 * np.pi * g.harmonics)
        return x + np.longdouble(g.a) + np.longdouble(g.b) / w * np.sin(w * x)
    if isinstance(g, Comp):
        for m in reversed(g.maps):
            x = _lift_ld(m, x)
        return x
    if isinstance(g, Power):
        f = g.base if g.exponent >= 0 else g.base.inverse()
        for _ in range(abs(g.exponent)):
            x = _lift_ld(f, x)
        return x
    return np.longdouble(g.lift(float(x)))


# ---------------------------------------------------------------------------
# Contracted invariant arcs
# ---------------------------------------------------------------------------


def find_contracted_fixed_arc(
    ifs: IFS,
    model: SequenceModel,
    seed: int,
    horizon: int = 512,
    m_levels: int = 7,
    stream: int = 0,
) -> Attractor:
    """Sample a branch, find a prefix length n and an arc U with
    branch(U) inside U, and solve the fixed point of the prefix composition.

    U is the largest complement component of the detected repeller brackets,
    shrunk slightly; the fixed point's attracted interval (between its
    neighboring fixed points of the composition) becomes the basin.  Once
    polarization confirms the synchronizing regime, a short prefix whose
    composition has a mildly attracting fixed point is preferred: strong
    contraction makes downstream composite fixed points unrepresentable in
    float64 (their reversed words expand residuals past tolerance).
    """
    w_full = model.sample(horizon, seed, stream=stream)
    schedule = [16, 24, 32, 48, 64, 96, 128, 192, 256, 384]
    lengths = [n for n in schedule if n <= horizon] or [horizon]
    if lengths[-1] < horizon:
        lengths.append(horizon)
    last_error = "branch never polarized"
    for n in lengths:
        prefix = w_full[:n]
        try:
            est = detect_repellers(ifs, prefix, m_levels=m_levels)
        except Unpolarized as exc:
            last_error = str(exc)
            continue
        mild = _mild_prefix_attractor(ifs, w_full)
        if mild is not None:
            return mild
        brackets = repeller_bracket_arcs(est)
        for u_arc in _complement_components(brackets):
            u_arc = u_arc.shrunk(min(1e-3, 0.05 * u_arc.length))
            lo = u_arc.start
            hi = u_arc.start + u_arc.length
            img_lo = _word_lift(ifs, prefix.letters, lo)
            img_hi = _word_lift(ifs, prefix.letters, hi)
            img_len = img_hi - img_lo
            rel = (img_lo - lo) % 1.0
            inside = rel + img_len <= u_arc.length and img_len < u_arc.length
            if not inside:
                continue
            q = _bisect_fixed_point(ifs, prefix.letters, lo, hi)
            q = _banach_polish(ifs, prefix.letters, q)
            residual = circle_distance(_word_lift(ifs, prefix.letters, q) % 1.0, q)
            if residual > TOL_FIX:
                continue
            mult = branch_deriv(ifs, prefix.letters, q)
            basin = _attracted_interval(ifs, prefix, q, u_arc)
            return Attractor(
                word=prefix,
                point=CirclePoint(q),
                invariant_arc=u_arc,
                basin=basin,
                multiplier=mult,
            )
        last_error = f"no self-mapped complement component at n={n}"
    raise HorizonExceeded(f"within horizon {horizon}: {last_error}")


def _mild_prefix_attractor(
    ifs: IFS,
    w_full: Word,
    band: tuple[float, float] = (0.02, 0.9),
    min_basin: float = 0.05,
) -> Attractor | None:
    """Shortest word prefix whose composition has an attracting fixed point
    with multiplier inside `band` and a macroscopic attracted interval.

    The attracted interval between neighboring fixed points is itself
    invariant (points move monotonically toward the attractor), so it
    doubles as the contracted arc U of the record.
    """
    for j in (4, 6, 8, 10, 12, 16, 20, 24, 32, 40, 48):
        if j > len(w_full):
            break
        prefix = w_full[:j]
        comp = Composition([ifs.generators[a - 1] for a in reversed(prefix.letters)])
        fps = find_fixed_points(comp, 1024)
        for fp in fps:
            if fp.stability != "attracting" or not band[0] <= fp.derivative <= band[1]:
                continue
            q = _banach_polish(ifs, prefix.letters, float(fp.point))
            residual = circle_distance(_word_lift(ifs, prefix.letters, q) % 1.0, q)
            if residual > TOL_FIX:
                continue
            basin = _attracted_interval(ifs, prefix, q, Arc(q - 0.25, 0.5))
            if basin.length < min_basin:
                continue
            lo = basin.start
            hi = basin.start + basin.length
            img_lo = _word_lift(ifs, prefix.letters, lo)
            img_hi = _word_lift(ifs, prefix.letters, hi)
            rel = (img_lo - lo) % 1.0
            if rel + (img_hi - img_lo) > basin.length:
                continue
            return Attractor(
                word=prefix,
                point=CirclePoint(q),
                invariant_arc=basin,
                basin=basin,
                multiplier=branch_deriv(ifs, prefix.letters, q),
            )
    return None


def _complement_components(brackets: list[Arc]) -> list[Arc]:
    """Connected components of the circle minus the bracket arcs, largest first."""
    if not brackets:
        return []
    spans = sorted((b.start, (b.start + b.length) % 1.0) for b in brackets)
    comps = []
    for (s0, e0), (s1, _) in zip(spans, spans[1:] + spans[:1]):
        length = (s1 - e0) % 1.0
        if length > 0.0:
            comps.append(Arc(e0, length))
    return sorted(comps, key=lambda a: -a.length)


def _attracted_interval(ifs: IFS, word: Word, q: float, fallback: Arc) -> Arc:
    """Open interval around q attracted to it under the word composition,
    bounded by the neighboring fixed points."""
    comp = Composition([ifs.generators[a - 1] for a in reversed(word.letters)])
    fps = find_fixed_points(comp, 2048)
    others = sorted(
        float(fp.point) for fp in fps if circle_distance(float(fp.point), q) > 1e-6
    )
    if not others:
        return fallback
    below = [p for p in others if p < q]
    above = [p for p in others if p > q]
    left = below[-1] if below else others[-1] - 1.0
    right = above[0] if above else others[0] + 1.0
    pad = min(1e-4, 0.01 * (right - left))
    return Arc(left + pad, (right - left) - 2.0 * pad)


# ---------------------------------------------------------------------------
# Periodic point in a prescribed interval
# ---------------------------------------------------------------------------


def _bfs_words(ifs: IFS, depth: int, node_cap: int) -> Iterator[tuple[int, ...]]:
    """All words in breadth-first lexicographic order, empty word first."""
    queue: deque[tuple[int, ...]] = deque([()])
    count = 0
    while queue:
        w = queue.popleft()
        yield w
        if len(w) >= depth:
            continue
        for a in range(1, ifs.k + 1):
            count += 1
            if count > node_cap:
                return
            queue.append(w + (a,))


def _arc_intersection(a: Arc, b: Arc) -> Arc | None:
    """Largest single arc contained in both (None when disjoint).

    In coordinates relative to a.start, b spans [rb, rb + |b|] and may also
    wrap around to cover [0, rb + |b| - 1]; both components are clipped to
    [0, |a|] and the longer one wins.
    """
    rb = (b.start - a.start) % 1.0
    candidates = []
    lo, hi = rb, min(a.length, rb + b.length)
    if lo < a.length and hi > lo:
        candidates.append((lo, hi))
    if rb + b.length > 1.0:
        lo, hi = 0.0, min(a.length, rb + b.length - 1.0)
        if hi > lo:
            candidates.append((lo, hi))
    if not candidates:
        return None
    lo, hi = max(candidates, key=lambda c: c[1] - c[0])
    return Arc(a.start + lo, hi - lo)


def periodic_in_interval(
    ifs: IFS,
    target: Arc,
    attractor: Attractor,
    *,
    bfs_depth: int = 12,
    bfs_nodes: int = 100_000,
    f_candidates: int = 40,
    g_candidates: int = 20,
    m_cap: int = 500,
    tol_fix: float = TOL_FIX,
) -> PeriodicPointRecord:
    """Fixed point of G o g^m o F inside the target arc.

    F and G are found by breadth-first search (empty word allowed, so arcs
    already meeting the basin need no transport); m is the smallest
    iterate pulling F(V) into the delta-neighborhood of the attractor, plus
    two for safety.  Stage failures raise StageExhausted with the stage name.
    """
    a = float(attractor.point)
    basin = attractor.basin
    g_letters = attractor.word.letters
    min_overlap = max(1e-6, 0.02 * target.length)

    f_tried = 0
    stage = "F"
    detail = "no image of the target met the basin"
    for f_word in _bfs_words(ifs, bfs_depth, bfs_nodes):
        if f_tried >= f_candidates:
            break
        lo = _word_lift(ifs, f_word, target.start)
        hi = _word_lift(ifs, f_word, target.start + target.length)
        if hi - lo >= 1.0:
            continue
        image = Arc(lo % 1.0, hi - lo)
        overlap = _arc_intersection(image, basin)
        if overlap is None or overlap.length < min_overlap:
            continue
        f_tried += 1
        core = overlap.shrunk(0.25 * overlap.length)
        # Lift representatives of the core endpoints inside [lo, hi], then
        # V = F^{-1}(core), a closed subarc of the target.
        c_lo_lift = core.start + np.floor(lo - core.start)
        if c_lo_lift < lo:
            c_lo_lift += 1.0
        c_hi_lift = c_lo_lift + core.length
        v_lo = _inverse_word_lift(ifs, f_word, c_lo_lift)
        v_hi = _inverse_word_lift(ifs, f_word, c_hi_lift)
        if not (
            target.start - 1e-9 <= v_lo < v_hi <= target.start + target.length + 1e-9
        ):
            detail = "pullback of the basin core left the target"
            continue
        v_arc = Arc(v_lo % 1.0, v_hi - v_lo)

        g_tried = 0
        g_found_any = False
        for g_word in _bfs_words(ifs, bfs_depth, bfs_nodes):
            if g_tried >= g_candidates:
                break
            pos = _word_lift(ifs, g_word, a) % 1.0
            inner = v_arc.shrunk(0.2 * v_arc.length)
            if not inner.contains(pos):
                continue
            g_found_any = True
            g_tried += 1
            delta = _delta_for(ifs, g_word, a, v_arc, basin)
            if delta is None:
                stage, detail = "G", "no neighborhood of the attractor maps into V"
                continue
            m = _pull_in_iterations(ifs, g_letters, c_lo_lift, c_hi_lift, a, delta, m_cap)
            if m is None:
                stage, detail = "m", f"g^m never entered the {delta:.2e}-neighborhood"
                continue
            letters = f_word + g_letters * (m + 2) + g_word
            try:
                q = _bisect_fixed_point(ifs, letters, v_lo, v_hi)
            except ValueError:
                stage, detail = "m", "composite failed to map V into itself"
                continue
            q = _banach_polish(ifs, letters, q)
            residual = circle_distance(_word_lift(ifs, letters, q) % 1.0, q)
            if residual > tol_fix:
                q = _newton_polish(ifs, letters, q)
                residual = circle_distance(_word_lift(ifs, letters, q) % 1.0, q)
                if residual > tol_fix:
                    stage, detail = "m", f"residual {residual:.2e} above tolerance"
                    continue
            mult = branch_deriv(ifs, letters, q)
            return PeriodicPointRecord(
                word=Word(letters, ifs.k),
                point=CirclePoint(q),
                residual=residual,
                multiplier=mult,
                stability=_classify(mult),
            )
        if not g_found_any:
            stage, detail = "G", "the attractor's orbit never entered V"
    raise StageExhausted(stage, detail)


def _inverse_word_lift(ifs: IFS, letters: Sequence[int], y: float) -> float:
    for a in reversed(letters):
        y = float(ifs.generators[a - 1].inverse_lift(y))
    return y


def _delta_for(
    ifs: IFS, g_word: Sequence[int], a: float, v_arc: Arc, basin: Arc
) -> float | None:
    """Largest tested delta with G((a-delta, a+delta)) inside V, capped so
    the neighborhood stays inside the attractor's basin."""
    rel_a = (a - basin.start) % 1.0
    edge = min(rel_a, basin.length - rel_a)
    delta = min(0.25 * v_arc.length, 0.5 * edge)
    for _ in range(40):
        lo = _word_lift(ifs, g_word, a - delta)
        hi = _word_lift(ifs, g_word, a + delta)
        if hi - lo < v_arc.length:
            rel = (lo % 1.0 - v_arc.start) % 1.0
            if rel + (hi - lo) <= v_arc.length:
                return delta
        delta *= 0.5
        if delta < 1e-12:
            break
    return None


def _pull_in_iterations(
    ifs: IFS,
    g_letters: Sequence[int],
    lo_lift: float,
    hi_lift: float,
    a: float,
    delta: float,
    m_cap: int,
) -> int | None:
    lo, hi = lo_lift, hi_lift
    for m in range(m_cap + 1):
        rel = (lo % 1.0 - (a - delta)) % 1.0
        if rel + (hi - lo) <= 2.0 * delta:
            return m
        lo = _word_lift(ifs, g_letters, lo)
        hi = _word_lift(ifs, g_letters, hi)
    return None


# ---------------------------------------------------------------------------
# Density sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    arc_index: int
    stability: str
    found: bool
    word_length: int
    residual: float
    multiplier: float
    error: str = ""


@dataclass(frozen=True)
class SweepReport:
    mesh: int
    rows: tuple[SweepRow, ...]
    records: tuple[PeriodicPointRecord, ...]

    def coverage(self, stability: str) -> float:
        hits = sum(1 for r in self.rows if r.stability == stability and r.found)
        return hits / self.mesh

    def to_csv_rows(self) -> list[tuple]:
        return [
            (r.arc_index, r.stability, int(r.found), r.word_length, r.residual, r.multiplier)
            for r in self.rows
        ]

    def to_json(self) -> dict:
        return {
            "mesh": self.mesh,
            "coverage": {
                "attracting": self.coverage("attracting"),
                "repelling": self.coverage("repelling"),
            },
            "rows": [
                {
                    "arc_index": r.arc_index,
                    "stability": r.stability,
                    "found": r.found,
                    "word_length": r.word_length,
                    "residual": r.residual,
                    "multiplier": r.multiplier,
                    "error": r.error,
                }
                for r in self.rows
            ],
        }


def _as_forward_repeller(ifs: IFS, record: PeriodicPointRecord) -> PeriodicPointRecord:
    """Convert an attracting record of the inverse IFS into a repelling
    record of the forward IFS: reverse the word, then polish the point on
    the expanding composition (extended precision plus best-neighbor
    selection keeps the re-evaluated residual at the ulp scale)."""
    letters = record.word.letters[::-1]
    q = _newton_polish(ifs, letters, float(record.point))
    residual = circle_distance(_word_lift(ifs, letters, q) % 1.0, q)
    mult = branch_deriv(ifs, letters, q)
    return PeriodicPointRecord(
        word=Word(letters, ifs.k),
        point=CirclePoint(q),
        residual=residual,
        multiplier=mult,
        stability=_classify(mult),
    )


def density_sweep(
    ifs: IFS,
    mesh: int,
    model: SequenceModel,
    seed: int,
    *,
    horizon: int = 512,
    threads: int = 1,
    **construction_kwargs,
) -> SweepReport:
    """Run the periodic-point construction on every arc of a mesh partition,
    both for the forward IFS (attracting records) and, through the inverse
    IFS with reversed words, for repelling records.  Per-arc failures are
    recorded, not raised."""
    inverse = ifs.inverse_ifs()
    try:
        attractor_f = find_contracted_fixed_arc(ifs, model, seed, horizon=horizon, stream=0)
        attractor_b = find_contracted_fixed_arc(inverse, model, seed, horizon=horizon, stream=1)
    except HorizonExceeded as exc:
        # No synchronizing branch: no hyperbolic periodic points to find.
        rows = tuple(
            SweepRow(i, side, False, 0, float("nan"), float("nan"), str(exc))
            for side in ("attracting", "repelling")
            for i in range(mesh)
        )
        return SweepReport(mesh=mesh, rows=rows, records=())

    def work(task: tuple[int, str]) -> tuple[SweepRow, PeriodicPointRecord | None]:
        i, side = task
        arc = Arc(i / mesh, 1.0 / mesh)
        try:
            if side == "attracting":
                rec = periodic_in_interval(ifs, arc, attractor_f, **construction_kwargs)
            else:
                inv_rec = periodic_in_interval(inverse, arc, attractor_b, **construction_kwargs)
                rec = _as_forward_repeller(ifs, inv_rec)
            return (
                SweepRow(i, side, True, len(rec.word), rec.residual, rec.multiplier),
                rec,
            )
        except (StageExhausted, HorizonExceeded) as exc:
            return SweepRow(i, side, False, 0, float("nan"), float("nan"), str(exc)), None

    tasks = [(i, side) for side in ("attracting", "repelling") for i in range(mesh)]
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, tasks))
    else:
        results = [work(t) for t in tasks]
    rows = tuple(r for r, _ in results)
    records = tuple(rec for _, rec in results if rec is not None)
    return SweepReport(mesh=mesh, rows=rows, records=records)
