"""IFS orbital branches, semigroup orbits, and density estimation.

Composition convention: a word w = (w_1, ..., w_n) acts by applying the
generator for w_1 first, i.e. the branch is f_{w_n} o ... o f_{w_1}.  The
hat composition reverses the order: f_{w_1} o ... o f_{w_n}, so the last
letter is applied first.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .circle_maps import CirclePoint, LiftMap, circle_distance_array, map_from_json
from .symbolic import Word

WordLike = Union[Word, Sequence[int]]

# Orbit points closer than this are merged during breadth-first enumeration;
# far below every epsilon of interest, prevents exponential blowup.
DEDUP_RES = 1e-9
ORBIT_CAP = 1_000_000


def _letters(w: WordLike) -> tuple[int, ...]:
    if isinstance(w, Word):
        return w.letters
    return tuple(int(a) for a in w)


@dataclass(frozen=True)
class IFS:
    """Finitely many orientation-preserving circle homeomorphisms."""

    generators: tuple[LiftMap, ...]
    label: str = ""

    def __init__(self, generators: Sequence[LiftMap], label: str = ""):
        object.__setattr__(self, "generators", tuple(generators))
        object.__setattr__(self, "label", label)
        if len(self.generators) < 1:
            raise ValueError("an IFS needs at least one generator")

    @property
    def k(self) -> int:
        return len(self.generators)

    def inverse_ifs(self) -> "IFS":
        """The IFS of the inverse maps (semigroup of inverses)."""
        lbl = f"{self.label}^-1" if self.label else ""
        return IFS([g.inverse() for g in self.generators], label=lbl)

    def to_json(self) -> dict:
        return {"label": self.label, "generators": [g.to_json() for g in self.generators]}

    @staticmethod
    def from_json(obj: dict) -> "IFS":
        return IFS([map_from_json(g) for g in obj["generators"]], obj.get("label", ""))


@dataclass(frozen=True)
class OrbitalBranch:
    """The branch along a fixed word prefix."""

    ifs: IFS
    word: Word

    def apply(self, x: float) -> CirclePoint:
        return branch_apply(self.ifs, self.word, x)

    def hat_apply(self, x: float) -> CirclePoint:
        """Hat composition: letters applied in reverse order."""
        return branch_apply(self.ifs, self.word.reversed(), x)


def branch_apply(
    ifs: IFS, w: WordLike, x: float, return_trajectory: bool = False
) -> CirclePoint | list[CirclePoint]:
    """Apply f_{w_n} o ... o f_{w_1} to x (first letter first).

    With return_trajectory=True, returns the n intermediate points
    [f^1(x), ..., f^n(x)].
    """
    pos = float(x) % 1.0
    gens = ifs.generators
    if not return_trajectory:
        for a in _letters(w):
            pos = gens[a - 1].lift(pos) % 1.0
        return CirclePoint(pos)
    traj: list[CirclePoint] = []
    for a in _letters(w):
        pos = gens[a - 1].lift(pos) % 1.0
        traj.append(CirclePoint(pos))
    return traj


def branch_apply_array(ifs: IFS, w: WordLike, xs: np.ndarray) -> np.ndarray:
    """Vectorized branch application on circle positions."""
    pos = np.mod(np.asarray(xs, dtype=float), 1.0)
    gens = ifs.generators
    for a in _letters(w):
        pos = np.mod(gens[a - 1].lift(pos), 1.0)
    return pos


def branch_lift_array(ifs: IFS, w: WordLike, xs: np.ndarray) -> np.ndarray:
    """Vectorized branch application on the lift (no mod), preserving order.

    Lift differences of the output give exact image arc lengths for
    monotone inputs.
    """
    vals = np.asarray(xs, dtype=float)
    gens = ifs.generators
    for a in _letters(w):
        vals = gens[a - 1].lift(vals)
    return vals


def branch_deriv(ifs: IFS, w: WordLike, x: float) -> float:
    """Chain-rule derivative of the branch at x."""
    pos = float(x) % 1.0
    total = 1.0
    for a in _letters(w):
        g = ifs.generators[a - 1]
        total *= float(g.deriv(pos))
        pos = g.lift(pos) % 1.0
    return total


# ---------------------------------------------------------------------------
# Hat-composition diameters
# ---------------------------------------------------------------------------


def hat_diameter_decay(ifs: IFS, w: WordLike, grid_n: int) -> list[float]:
    """Metric diameter of the hat-composition image of the circle, per n.

    The grid induces an arc partition of S^1 and the image of the circle
    under the hat branch is the union of the image arcs.  Their lift lengths
    telescope to exactly lift(1) - lift(0) = 1 for degree-one monotone
    lifts, so the union is the whole circle and the diameter is 1/2 at every
    n: these IFSs are never strongly fibred.  (The finite image *point set*
    can cluster near attractors; that is a grid artifact, so the arc union
    is what gets measured.)

    The telescoping closure is verified numerically for every n via the two
    closing endpoints; the full grid union is evaluated on a checkpoint
    schedule (about 16 prefixes plus the final one).  Returns |w| + 1
    entries (n = 0 included).
    """
    if grid_n < 3:
        raise ValueError("grid_n must be >= 3")
    letters = _letters(w)
    n_steps = len(letters)
    gens = ifs.generators
    for g in gens:
        if g.deriv_bounds()[0] <= 0.0:
            raise ValueError("generators must be orientation-preserving homeomorphisms")

    # Endpoint telescoping for every prefix, stacked: the block appended at
    # step j receives exactly the letters w_1..w_j on top, i.e. it becomes
    # the closing endpoints of the hat image for prefix length j.
    ends = np.empty(0, dtype=float)
    for j in range(n_steps, 0, -1):
        ends = np.concatenate([ends, [0.0, 1.0]])
        ends = gens[letters[j - 1] - 1].lift(ends)
    closures = ends[1::2] - ends[0::2]  # one per prefix n = N, N-1, ..., 1
    if np.any(np.abs(closures - 1.0) > 1e-9):
        raise ValueError("hat images fail the degree-one closure check")

    base = np.linspace(0.0, 1.0, grid_n + 1)
    diams = [0.5] * (n_steps + 1)
    diams[0] = _union_arc_diameter(base)
    stride = max(1, n_steps // 16)
    checkpoints = set(range(stride, n_steps + 1, stride)) | ({n_steps} if n_steps else set())
    for n in sorted(checkpoints):
        img = base
        for a in reversed(letters[:n]):  # hat order: last letter innermost
            img = gens[a - 1].lift(img)
        diams[n] = _union_arc_diameter(img)
    return diams


def _union_arc_diameter(lift_points: np.ndarray) -> float:
    """Diameter of the union of consecutive image arcs on the circle.

    For a monotone degree-one lift evaluated on a closed grid the arc
    lengths are the consecutive lift differences and sum to 1, so the union
    is the whole circle (diameter 1/2).  Monotonicity violations beyond
    float noise would indicate a malformed map.
    """
    diffs = np.diff(lift_points)
    if np.any(diffs < -1e-9):
        raise ValueError("image arcs are not monotone; map is not a homeomorphism")
    total = float(np.sum(np.maximum(diffs, 0.0)))
    if total >= 1.0 - 1e-9:
        return 0.5
    # Degenerate fallback: a single arc of length < 1.
    return min(total, 0.5)


# ---------------------------------------------------------------------------
# Semigroup orbits and minimality estimation
# ---------------------------------------------------------------------------


def _quantize(xs: np.ndarray, res: float = DEDUP_RES) -> np.ndarray:
    m = int(round(1.0 / res))
    return np.round(np.mod(xs, 1.0) / res).astype(np.int64) % m


def semigroup_orbit(
    ifs: IFS,
    x: float,
    depth: int,
    cap: int = ORBIT_CAP,
    dedup_res: float = DEDUP_RES,
    frontier_cap: int | None = None,
) -> np.ndarray:
    """Breadth-first orbit {h(x) : h a word of length 1..depth}, deduplicated.

    Generators expand in index order; within a level the first occurrence of
    a duplicated point wins, which makes the enumeration deterministic.  The
    orbit is truncated at `cap` points; `frontier_cap` optionally bounds the
    per-level frontier, keeping lexicographically earliest nodes (so pure
    first-generator words always survive).
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if cap < ifs.k:
        raise ValueError("cap must be at least the number of generators")
    frontier = np.array([float(x) % 1.0])
    seen: set[int] = set()
    collected: list[np.ndarray] = []
    total = 0
    for _ in range(depth):
        children = np.concatenate(
            [np.mod(g.lift(frontier), 1.0) for g in ifs.generators]
        )
        keys = _quantize(children, dedup_res)
        _, first_idx = np.unique(keys, return_index=True)
        first_idx.sort()
        children = children[first_idx]
        keys = keys[first_idx]
        fresh = np.fromiter((k not in seen for k in keys.tolist()), bool, len(keys))
        children = children[fresh]
        keys = keys[fresh]
        if len(children) == 0:
            break
        seen.update(keys.tolist())
        if total + len(children) > cap:
            children = children[: cap - total]
        collected.append(children)
        total += len(children)
        if total >= cap:
            break
        frontier = children
        if frontier_cap is not None and len(frontier) > frontier_cap:
            frontier = frontier[:frontier_cap]
    if not collected:
        return np.empty(0, dtype=float)
    return np.concatenate(collected)


@dataclass(frozen=True)
class MinimalityEstimate:
    minimal: bool
    worst_gap: float
    witness: CirclePoint | None

    def to_json(self) -> dict:
        return {
            "minimal": self.minimal,
            "worst_gap": self.worst_gap,
            "witness": None if self.witness is None else float(self.witness),
        }


def _coverage_gap(orbit_sorted: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Min circle distance from each target to the sorted orbit points."""
    idx = np.searchsorted(orbit_sorted, targets)
    n = len(orbit_sorted)
    left = orbit_sorted[(idx - 1) % n]
    right = orbit_sorted[idx % n]
    return np.minimum(
        circle_distance_array(targets, left), circle_distance_array(targets, right)
    )


def minimality_estimate(
    ifs: IFS,
    eps: float,
    start_grid: int = 16,
    depth: int = 10_000,
    cap: int = ORBIT_CAP,
    frontier_cap: int = 50_000,
) -> MinimalityEstimate:
    """Empirical minimality: from every start on a grid, the semigroup orbit
    must come within eps of every point of an eps/2-grid.

    Returns the worst covering gap over all starts and a failing start point
    if any.  Backward minimality is the same call on ifs.inverse_ifs().
    The grid/depth proxy can produce false negatives near slow recurrences;
    the reported gap makes that visible.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    n_targets = int(np.ceil(2.0 / eps))
    targets = np.arange(n_targets) / n_targets
    worst = 0.0
    for i in range(start_grid):
        start = i / start_grid
        frontier = np.array([start])
        seen: set[int] = set()
        points = [frontier.copy()]
        total = 1
        covered = np.zeros(n_targets, dtype=bool)
        gap_now = None
        for _ in range(depth):
            children = np.concatenate(
                [np.mod(g.lift(frontier), 1.0) for g in ifs.generators]
            )
            keys = _quantize(children)
            _, first_idx = np.unique(keys, return_index=True)
            first_idx.sort()
            children = children[first_idx]
            keys = keys[first_idx]
            fresh = np.fromiter((k not in seen for k in keys.tolist()), bool, len(keys))
            children = children[fresh]
            keys = keys[fresh]
            if len(children) == 0:
                break
            seen.update(keys.tolist())
            if total + len(children) > cap:
                children = children[: cap - total]
            points.append(children)
            total += len(children)
            srt = np.sort(children)
            todo = np.flatnonzero(~covered)
            if len(todo):
                gaps = _coverage_gap(srt, targets[todo])
                covered[todo[gaps <= eps]] = True
            if covered.all():
                gap_now = float(np.max(_coverage_gap(np.sort(np.concatenate(points)), targets)))
                break
            if total >= cap:
                break
            frontier = children
            if len(frontier) > frontier_cap:
                frontier = frontier[:frontier_cap]
        if gap_now is None:
            orbit = np.sort(np.concatenate(points))
            gap_now = float(np.max(_coverage_gap(orbit, targets)))
        worst = max(worst, gap_now)
        if not covered.all():
            return MinimalityEstimate(False, worst, CirclePoint(start))
    return MinimalityEstimate(True, worst, None)


@dataclass(frozen=True)
class DensityReport:
    fraction: float
    stderr: float
    n_samples: int
    seed: int

    def to_json(self) -> dict:
        return {
            "fraction": self.fraction,
            "stderr": self.stderr,
            "n_samples": self.n_samples,
            "seed": self.seed,
        }


def random_orbit_density(
    ifs: IFS,
    model,
    x: float,
    eps: float,
    n_max: int,
    n_samples: int,
    seed: int,
) -> DensityReport:
    """Fraction of sampled branches whose orbit of x is eps-dense by n_max.

    Density is measured against a fixed eps/2-grid (orbit within eps of every
    grid point).  Monte Carlo with binomial standard error; deterministic for
    a fixed seed.
    """
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    n_targets = int(np.ceil(2.0 / eps))
    targets = np.arange(n_targets) / n_targets
    letters = _sample_letter_matrix(model, n_samples, n_max, seed)
    pos = np.full(n_samples, float(x) % 1.0)
    track = np.empty((n_samples, n_max + 1), dtype=float)
    track[:, 0] = pos
    gens = ifs.generators
    for step in range(n_max):
        col = letters[:, step]
        for a in range(1, ifs.k + 1):
            mask = col == a
            if np.any(mask):
                pos[mask] = np.mod(gens[a - 1].lift(pos[mask]), 1.0)
        track[:, step + 1] = pos
    dense = 0
    for s in range(n_samples):
        orbit = np.sort(track[s])
        if float(np.max(_coverage_gap(orbit, targets))) <= eps:
            dense += 1
    frac = dense / n_samples
    stderr = float(np.sqrt(frac * (1.0 - frac) / n_samples))
    return DensityReport(frac, stderr, n_samples, seed)


def _sample_letter_matrix(model, n_rows: int, length: int, seed: int) -> np.ndarray:
    if hasattr(model, "sample_matrix"):
        return model.sample_matrix(n_rows, length, seed)
    rows = [model.sample(length, seed, stream=r).letters for r in range(n_rows)]
    return np.array(rows, dtype=np.int8)


def orbit_to_csv_rows(ifs: IFS, w: Word, x: float) -> list[tuple[int, int, float]]:
    """(n, letter, point) rows for an orbit dump."""
    rows: list[tuple[int, int, float]] = []
    pos = float(x) % 1.0
    for n, a in enumerate(w.letters, start=1):
        pos = float(ifs.generators[a - 1].lift(pos)) % 1.0
        rows.append((n, a, pos))
    return rows
