"""Synchronization statistics, random repeller detection, and hitting tails.

For forward-and-backward minimal circle IFSs exactly one of three behaviors
occurs: all generators are simultaneously conjugate to rotations (no
synchronization beyond chance), or almost every branch contracts the
complement of ell >= 1 exceptional points r_1(omega), ..., r_ell(omega).
The detector below brackets those points by refining a dyadic arc partition
and keeping the arcs whose branch images stay macroscopic while everything
else collapses.

The hitting-time check compares the empirical probability that a random
orbit has missed a target arc by time n against (1 - p^ell)^(1 + floor(n/ell)),
where ell = r*s comes from covering the circle with inverse iterates of a
minimal map in the semigroup.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .circle_maps import Arc, CirclePoint, LiftMap, circle_distance_array, find_fixed_points
from .ifs_core import IFS, WordLike, _letters, _sample_letter_matrix, branch_lift_array
from .symbolic import SequenceModel, Word

# Polarization threshold: an arc counts as growing when its image length
# exceeds THETA_GROW times the largest image length at its level.  With a
# single repeller the largest image tends to 1 and this reduces to the
# absolute dichotomy test; with ell repellers the growing arcs share the
# circle, tending to 1/ell each.
THETA_GROW = 0.9

# Partition endpoints are offset by 1/3 so that dyadic repellers (such as a
# fixed point at 1/2) stay interior to one arc at every refinement level.
PARTITION_OFFSET = 1.0 / 3.0


class Unpolarized(RuntimeError):
    """Arc-image lengths never polarized along the supplied word."""


class NoMinimalGenerator(RuntimeError):
    """The designated map has a fixed point, so it cannot act minimally."""


class CoverSearchExhausted(RuntimeError):
    """Inverse iterates of the designated map failed to cover the circle."""


# ---------------------------------------------------------------------------
# Pairwise synchronization
# ---------------------------------------------------------------------------


def pair_distance_trajectory(
    ifs: IFS, w: WordLike, x: float, y: float
) -> list[float]:
    """d(f^n(x), f^n(y)) for n = 0..|w| along the branch of w."""
    letters = _letters(w)
    px, py = float(x) % 1.0, float(y) % 1.0
    out = [float(circle_distance_array(px, py))]
    for a in letters:
        g = ifs.generators[a - 1]
        px = float(g.lift(px)) % 1.0
        py = float(g.lift(py)) % 1.0
        out.append(float(circle_distance_array(px, py)))
    return out


@dataclass(frozen=True)
class SyncReport:
    ifs_label: str
    model: dict
    n_pairs: int
    horizon: int
    sync_fraction: float
    median_final_distance: float
    seed: int

    def to_json(self) -> dict:
        return {
            "ifs_label": self.ifs_label,
            "model": self.model,
            "n_pairs": self.n_pairs,
            "horizon": self.horizon,
            "sync_fraction": self.sync_fraction,
            "median_final_distance": self.median_final_distance,
            "seed": self.seed,
        }


def sync_fraction(
    ifs: IFS,
    model: SequenceModel,
    n: int,
    n_pairs: int,
    tol_sync: float,
    seed: int,
) -> SyncReport:
    """Fraction of sampled (omega, x, y) whose final distance is < tol_sync.

    Point pairs are drawn uniformly (stream 1), branch letters from the
    model (stream 0); with n = 0 this is just the empirical mass of pairs
    that start within tol_sync, the no-dynamics baseline (about 2*tol for
    uniform pairs).
    """
    if tol_sync <= 0.0:
        raise ValueError("tol_sync must be positive")
    key = np.array([seed % (1 << 64), 1], dtype=np.uint64)
    pair_rng = np.random.Generator(np.random.Philox(key=key))
    xs = pair_rng.random(n_pairs)
    ys = pair_rng.random(n_pairs)
    if n > 0:
        letters = _sample_letter_matrix(model, n_pairs, n, seed)
        gens = ifs.generators
        for step in range(n):
            col = letters[:, step]
            for a in range(1, ifs.k + 1):
                mask = col == a
                if np.any(mask):
                    xs[mask] = np.mod(gens[a - 1].lift(xs[mask]), 1.0)
                    ys[mask] = np.mod(gens[a - 1].lift(ys[mask]), 1.0)
    dist = circle_distance_array(xs, ys)
    return SyncReport(
        ifs_label=ifs.label,
        model=model.to_json(),
        n_pairs=n_pairs,
        horizon=n,
        sync_fraction=float(np.mean(dist < tol_sync)),
        median_final_distance=float(np.median(dist)),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Repeller detection by partition refinement
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RepellerEstimate:
    omega_prefix: Word
    levels: int
    points: tuple[CirclePoint, ...]
    ell_hat: int
    residual: float
    final_image_lengths: tuple[float, ...]

    def to_json(self) -> dict:
        return {
            "omega_prefix_length": len(self.omega_prefix),
            "levels": self.levels,
            "points": [float(p) for p in self.points],
            "ell_hat": self.ell_hat,
            "residual": self.residual,
            "final_image_lengths": list(self.final_image_lengths),
        }


def detect_repellers(
    ifs: IFS,
    w: WordLike,
    m_levels: int = 12,
    theta_grow: float = THETA_GROW,
    start_level: int = 3,
    max_candidates: int = 64,
) -> RepellerEstimate:
    """Bracket the branch's exceptional points by nested partition refinement.

    At level j the circle is split into 2^j arcs (endpoints offset by 1/3 so
    dyadic repellers stay interior); every arc is pushed through the full
    branch using endpoint images, exact for monotone maps.  Arcs whose image
    length exceeds theta_grow times the level maximum are kept and split for
    the next level.  The kept count must stabilize over the last three
    levels; all-rotation branches keep every arc, never stabilize, and raise
    Unpolarized.

    Returns one bracketing midpoint per kept arc at the finest level; the
    residual is the final arc length 2^-m_levels.
    """
    letters = _letters(w)
    word = w if isinstance(w, Word) else Word(letters, ifs.k)
    if m_levels < start_level + 3:
        raise ValueError("m_levels must exceed start_level + 2")
    cache: dict[float, float] = {}

    def images(points: list[float]) -> None:
        fresh = [p for p in points if p not in cache]
        if fresh:
            vals = branch_lift_array(ifs, letters, np.array(fresh))
            cache.update(zip(fresh, vals.tolist()))

    # Domain coordinates live on the lift in [offset, offset + 1].
    def endpoint(i: int, level: int) -> float:
        return PARTITION_OFFSET + i / (1 << level)

    kept: list[int] = list(range(1 << start_level))  # arc indices at current level
    counts: list[int] = []
    for level in range(start_level, m_levels + 1):
        pts = sorted({endpoint(i, level) for i in kept} | {endpoint(i + 1, level) for i in kept})
        images(pts)
        lengths = {
            i: cache[endpoint(i + 1, level)] - cache[endpoint(i, level)] for i in kept
        }
        top = max(lengths.values())
        grown = [i for i in kept if lengths[i] > theta_grow * top]
        if not grown:
            raise Unpolarized("no arc image exceeded the growth threshold")
        if len(grown) > max_candidates:
            raise Unpolarized(f"{len(grown)} growing arcs exceed the candidate cap")
        counts.append(len(grown))
        if level >= start_level + 2 and len(grown) / (1 << level) > 0.5:
            raise Unpolarized("growing arcs cover most of the circle (isometric branch?)")
        if level == m_levels:
            kept = grown
            final_lengths = [lengths[i] for i in grown]
            break
        kept = [c for i in grown for c in (2 * i, 2 * i + 1)]

    if len(counts) >= 3 and not (counts[-1] == counts[-2] == counts[-3]):
        raise Unpolarized(f"growing-arc count never stabilized: {counts}")
    ell = counts[-1]
    if min(final_lengths) <= theta_grow / ell * 0.5:
        raise Unpolarized("final bracketing arcs are not uniformly grown")
    points = tuple(
        CirclePoint(endpoint(i, m_levels) + 0.5 / (1 << m_levels)) for i in sorted(kept)
    )
    return RepellerEstimate(
        omega_prefix=word,
        levels=m_levels,
        points=points,
        ell_hat=ell,
        residual=2.0 ** -m_levels,
        final_image_lengths=tuple(final_lengths),
    )


def repeller_bracket_arcs(estimate: RepellerEstimate) -> list[Arc]:
    """The final-level bracketing arcs (one per detected point)."""
    half = 0.5 * estimate.residual
    return [Arc(float(p) - half, estimate.residual) for p in estimate.points]


# ---------------------------------------------------------------------------
# Trichotomy classification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrichotomyResult:
    case: str  # "case1" | "case2" | "case3" | "inconclusive"
    ell: int | None
    sync_report: SyncReport
    baseline: float
    baseline_sigma: float
    ell_counts: dict
    n_unpolarized: int
    minimality_checked: bool
    warnings: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "case": self.case,
            "ell": self.ell,
            "sync": self.sync_report.to_json(),
            "baseline": self.baseline,
            "baseline_sigma": self.baseline_sigma,
            "ell_counts": {str(k): v for k, v in sorted(self.ell_counts.items())},
            "n_unpolarized": self.n_unpolarized,
            "minimality_checked": self.minimality_checked,
            "warnings": list(self.warnings),
        }


def antonov_classify(
    ifs: IFS,
    model: SequenceModel,
    *,
    n_pairs: int = 500,
    sync_horizon: int = 2000,
    tol_sync: float = 1e-3,
    n_seeds: int = 20,
    word_length: int = 5000,
    m_levels: int = 10,
    majority: float = 0.8,
    seed: int = 0,
    check_minimality: bool = False,
    threads: int = 1,
) -> TrichotomyResult:
    """Empirical trichotomy: common-rotation behavior, or ell-point contraction.

    A two-sided 3-sigma test of the synchronized fraction against the
    no-dynamics baseline detects the rotation case; otherwise the modal
    bracketing count across seeds decides ell.  The verdict is inconclusive
    when the modal count falls short of the majority threshold.  The
    per-seed detections run on stream-split words and merge by seed index,
    so the result is independent of the thread count.
    """
    warnings: list[str] = []
    if check_minimality:
        from .ifs_core import minimality_estimate

        fwd = minimality_estimate(ifs, eps=0.05, start_grid=4, depth=3000)
        bwd = minimality_estimate(ifs.inverse_ifs(), eps=0.05, start_grid=4, depth=3000)
        if not (fwd.minimal and bwd.minimal):
            warnings.append(
                f"minimality estimate failed (forward={fwd.minimal}, backward={bwd.minimal})"
            )
    report = sync_fraction(ifs, model, sync_horizon, n_pairs, tol_sync, seed)
    baseline = min(1.0, 2.0 * tol_sync)
    sigma = math.sqrt(baseline * (1.0 - baseline) / n_pairs)
    if abs(report.sync_fraction - baseline) <= 3.0 * sigma:
        return TrichotomyResult(
            "case1", None, report, baseline, sigma, {}, 0, check_minimality, tuple(warnings)
        )
    def detect_one(s: int) -> int | None:
        w = model.sample(word_length, seed, stream=100 + s)
        try:
            return detect_repellers(ifs, w, m_levels=m_levels).ell_hat
        except Unpolarized:
            return None

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            ells = list(pool.map(detect_one, range(n_seeds)))
    else:
        ells = [detect_one(s) for s in range(n_seeds)]
    ell_counts: dict[int, int] = {}
    unpolarized = 0
    for ell in ells:
        if ell is None:
            unpolarized += 1
        else:
            ell_counts[ell] = ell_counts.get(ell, 0) + 1
    if not ell_counts:
        return TrichotomyResult(
            "inconclusive", None, report, baseline, sigma, ell_counts,
            unpolarized, check_minimality, tuple(warnings),
        )
    modal_ell, modal_count = max(ell_counts.items(), key=lambda kv: (kv[1], -kv[0]))
    if modal_count < majority * n_seeds:
        return TrichotomyResult(
            "inconclusive", None, report, baseline, sigma, ell_counts,
            unpolarized, check_minimality, tuple(warnings),
        )
    case = "case2" if modal_ell == 1 else "case3"
    return TrichotomyResult(
        case, modal_ell, report, baseline, sigma, ell_counts,
        unpolarized, check_minimality, tuple(warnings),
    )


# ---------------------------------------------------------------------------
# Hitting-time tail bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TailBoundRow:
    n: int
    empirical_miss: float
    bound: float
    stderr: float

    @property
    def dominated(self) -> bool:
        return self.empirical_miss <= self.bound + 3.0 * self.stderr


@dataclass(frozen=True)
class TailBoundReport:
    rows: tuple[TailBoundRow, ...]
    ell: int
    cover_count: int
    word_length: int
    p: float
    n_trials: int
    seed: int

    @property
    def dominated(self) -> bool:
        return all(r.dominated for r in self.rows)

    def to_csv_rows(self) -> list[tuple]:
        return [(r.n, r.empirical_miss, r.bound, r.stderr) for r in self.rows]

    def to_json(self) -> dict:
        return {
            "ell": self.ell,
            "cover_count": self.cover_count,
            "word_length": self.word_length,
            "p": self.p,
            "n_trials": self.n_trials,
            "seed": self.seed,
            "dominated": self.dominated,
            "rows": [
                {
                    "n": r.n,
                    "empirical_miss": r.empirical_miss,
                    "bound": r.bound,
                    "stderr": r.stderr,
                }
                for r in self.rows
            ],
        }


def covering_count(h: LiftMap, target: Arc, r_max: int = 10_000) -> int:
    """Smallest r with S^1 = union of h^{-1}(target), ..., h^{-r}(target).

    Arcs are pulled back through inverse endpoint evaluations (exact for
    monotone maps) and merged as intervals.
    """
    intervals: list[tuple[float, float]] = []
    lo_lift = float(target.start)
    hi_lift = lo_lift + target.length
    for r in range(1, r_max + 1):
        lo_lift = float(h.inverse_lift(lo_lift))
        hi_lift = float(h.inverse_lift(hi_lift))
        start = lo_lift % 1.0
        length = min(hi_lift - lo_lift, 1.0)
        if length >= 1.0:
            return r
        end = start + length
        if end <= 1.0:
            intervals.append((start, end))
        else:
            intervals.append((start, 1.0))
            intervals.append((0.0, end - 1.0))
        if _covers_unit_interval(intervals):
            return r
    raise CoverSearchExhausted(
        f"inverse iterates failed to cover the circle within r_max={r_max}"
    )


def _covers_unit_interval(intervals: list[tuple[float, float]]) -> bool:
    reach = 0.0
    for a, b in sorted(intervals):
        if a > reach:
            return False
        reach = max(reach, b)
        if reach >= 1.0:
            return True
    return reach >= 1.0


def hitting_tail_check(
    ifs: IFS,
    model: SequenceModel,
    target: Arc,
    x: float,
    n_grid: Sequence[int] | None = None,
    n_trials: int = 10_000,
    seed: int = 0,
    minimal_index: int = 0,
    minimal_word: Word | None = None,
) -> TailBoundReport:
    """Empirical miss probabilities against (1 - p^ell)^(1 + floor(n/ell)).

    The designated minimal map is a generator (s = 1) unless minimal_word
    supplies the word of a composite h, in which case s = |word| and
    ell = r*s counts letters.  Raises NoMinimalGenerator when the designated
    map has a fixed point.
    """
    if minimal_word is not None:
        from .circle_maps import Composition

        h: LiftMap = Composition(
            [ifs.generators[a - 1] for a in reversed(minimal_word.letters)]
        )
        s = len(minimal_word)
    else:
        h = ifs.generators[minimal_index]
        s = 1
    if find_fixed_points(h, 512):
        raise NoMinimalGenerator("designated map has a fixed point")
    r = covering_count(h, target)
    ell = r * s
    if n_grid is None:
        n_grid = [ell * i for i in range(1, 11)]
    n_grid = sorted(set(int(n) for n in n_grid))
    if not n_grid or n_grid[0] < 1:
        raise ValueError("n_grid entries must be >= 1")
    horizon = n_grid[-1]
    if target.length >= 1.0:
        rows = tuple(
            TailBoundRow(n, 0.0, (1.0 - model.p**ell) ** (1 + n // ell), 0.0)
            for n in n_grid
        )
        return TailBoundReport(rows, ell, r, s, model.p, n_trials, seed)

    letters = _sample_letter_matrix(model, n_trials, horizon, seed)
    pos = np.full(n_trials, float(x) % 1.0)
    hit_time = np.full(n_trials, np.iinfo(np.int64).max, dtype=np.int64)
    alive = hit_time == np.iinfo(np.int64).max
    gens = ifs.generators
    for step in range(1, horizon + 1):
        col = letters[:, step - 1]
        for a in range(1, ifs.k + 1):
            mask = alive & (col == a)
            if np.any(mask):
                pos[mask] = np.mod(gens[a - 1].lift(pos[mask]), 1.0)
        hits = alive & target.contains_array(pos)
        hit_time[hits] = step
        alive &= ~hits
        if not np.any(alive):
            break
    rows = []
    for n in n_grid:
        miss = float(np.mean(hit_time > n))
        bound = (1.0 - model.p**ell) ** (1 + n // ell)
        stderr = math.sqrt(miss * (1.0 - miss) / n_trials)
        rows.append(TailBoundRow(n, miss, bound, stderr))
    return TailBoundReport(tuple(rows), ell, r, s, model.p, n_trials, seed)
