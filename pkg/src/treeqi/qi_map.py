"""Finite-truncation self-maps of the tree and their verification suite.

A map is stored as an explicit table over the ball of a given radius about
the root; images may be any valid addresses, arbitrarily deep.  Verification
measures the best single quasi-isometry constant exactly: every distance is
an integer, the per-pair binding constant is solved in closed form, and the
one irrational case (the square root from the lower bound) is rounded up to
the nearest 1/10^6, so reports are deterministic rationals.

Pair sets may be scanned exhaustively or sampled without replacement from a
seeded generator.  Either way pairs are processed in canonical (row-major
over the address-sorted domain) order, so a sample that happens to cover all
pairs reproduces the exhaustive result field for field.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Callable, Iterator

import numpy as np

from .errors import (
    BudgetExceededError,
    MapDomainError,
    PreconditionError,
    ShapeMismatchError,
)
from .tree_core import (
    DEFAULT_VERTEX_BUDGET,
    MAX_DEPTH,
    ROOT,
    TreeShape,
    Vertex,
    ball,
    distance,
    format_address,
    geodesic,
    validate_address,
)

# Denominator used when rounding the square root of the lower-bound solution
# up to a rational.  Reported constants are exact multiples of 1/SQRT_SCALE.
SQRT_SCALE = 10**6

DEFAULT_MAX_PAIRS = 10_000_000
DEFAULT_MAX_VIOLATIONS = 1000

_INF = 1 << 60


@lru_cache(maxsize=64)
def _cached_ball(degree: int, radius: int) -> tuple:
    return tuple(ball(TreeShape(degree), radius))


def _label_matrix(vertices) -> tuple[np.ndarray, np.ndarray]:
    """Pack addresses into a padded int16 matrix (pad value -1) plus depths."""
    pad = max((len(v) for v in vertices), default=0) or 1
    arr = np.full((len(vertices), pad), -1, dtype=np.int16)
    depths = np.empty(len(vertices), dtype=np.int16)
    for i, v in enumerate(vertices):
        depths[i] = len(v)
        if v:
            arr[i, : len(v)] = v
    return arr, depths


@lru_cache(maxsize=16)
def _domain_matrix(degree: int, radius: int) -> tuple[np.ndarray, np.ndarray]:
    return _label_matrix(_cached_ball(degree, radius))


def _pair_prefix_len(labels: np.ndarray, iu: np.ndarray, ju: np.ndarray) -> np.ndarray:
    """Common-prefix length for each row pair (iu[k], ju[k])."""
    a = labels[iu]
    b = labels[ju]
    plen = np.zeros(len(iu), dtype=np.int16)
    alive = np.ones(len(iu), dtype=bool)
    for k in range(labels.shape[1]):
        np.logical_and(alive, a[:, k] == b[:, k], out=alive)
        np.logical_and(alive, a[:, k] >= 0, out=alive)
        plen += alive
    return plen


def _matrix_prefix_len(labels: np.ndarray) -> np.ndarray:
    """All-pairs common-prefix length among the rows of `labels`."""
    n = labels.shape[0]
    plen = np.zeros((n, n), dtype=np.int16)
    alive = np.ones((n, n), dtype=bool)
    for k in range(labels.shape[1]):
        col = labels[:, k]
        np.logical_and(alive, col[:, None] == col[None, :], out=alive)
        np.logical_and(alive, (col >= 0)[:, None], out=alive)
        plen += alive
    return plen


def _unrank_pair(n: int, j: int) -> tuple[int, int]:
    """j-th pair in row-major upper-triangular order over n items."""
    lo, hi = 0, n - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if mid * (2 * n - mid - 1) // 2 <= j:
            lo = mid
        else:
            hi = mid - 1
    return lo, j - lo * (2 * n - lo - 1) // 2 + lo + 1


def sqrt_ceil_scaled(radicand: int) -> int:
    """Smallest integer n with n >= SQRT_SCALE * sqrt(radicand)."""
    t = radicand * SQRT_SCALE * SQRT_SCALE
    s = math.isqrt(t)
    return s if s * s == t else s + 1


def pair_min_C(delta: int, iota: int) -> Fraction:
    """Smallest C >= 1 satisfying both embedding inequalities for one pair.

    The upper bound needs C >= iota/(delta+1).  The lower bound needs
    C^2 + iota*C - delta >= 0, i.e. C at least the positive root; that root
    is rounded up to the nearest 1/SQRT_SCALE so the result stays rational.
    """
    best = Fraction(iota, delta + 1)
    if delta > 0:
        s = sqrt_ceil_scaled(iota * iota + 4 * delta)
        num = s - SQRT_SCALE * iota
        root = Fraction((num + 1) // 2, SQRT_SCALE)
        if root > best:
            best = root
    if best < 1:
        return Fraction(1)
    return best


@dataclass(frozen=True)
class PairSource:
    """How measure_qi picks vertex pairs: everything, or a seeded sample."""

    mode: str
    count: int | None = None
    seed: int | None = None

    @staticmethod
    def exhaustive() -> "PairSource":
        return PairSource("exhaustive")

    @staticmethod
    def sampled(count: int, seed: int) -> "PairSource":
        if count < 0:
            raise ValueError("sample count must be >= 0")
        return PairSource("sampled", count, seed)

    def describe(self) -> str:
        return "exhaustive" if self.mode == "exhaustive" else f"sampled:{self.count}"


EXHAUSTIVE = PairSource.exhaustive()


@dataclass
class Violation:
    x: Vertex
    y: Vertex
    kind: str  # upper | lower | geodesic | samedepth
    value: int
    at: Vertex | None = None

    def to_line(self) -> str:
        line = (
            f"violation x={format_address(self.x)} y={format_address(self.y)}"
            f" kind={self.kind} value={self.value}"
        )
        if self.at is not None:
            line += f" at={format_address(self.at)}"
        return line


def _fmt_opt(value) -> str:
    return "-" if value is None else str(value)


@dataclass
class VerificationReport:
    """Measured quasi-isometry data for one map over one pair set."""

    degree: int
    radius: int
    pair_mode: str
    pairs_checked: int
    sampling_seed: int | None
    best_single_C: Fraction
    witness: tuple[Vertex, Vertex] | None
    upper_pair: tuple[Fraction, Fraction]
    lower_pair: tuple[Fraction, Fraction]
    candidate_C: Fraction | None = None
    max_lca_depth: int | None = None
    violations: list[Violation] = field(default_factory=list)
    violations_total: int = 0
    coarse_surjectivity_radius: int | None = None
    target_radius: int | None = None
    order_preserving: bool | None = None
    order_violation: Vertex | None = None

    def measurement_fields(self) -> tuple:
        """Everything that must not depend on how pairs were enumerated."""
        return (
            self.pairs_checked,
            self.best_single_C,
            self.witness,
            self.upper_pair,
            self.lower_pair,
            self.candidate_C,
            tuple((v.x, v.y, v.kind, v.value) for v in self.violations),
            self.violations_total,
        )

    def to_lines(self, label: str = "verify") -> list[str]:
        lines = [
            f"report={label}",
            f"degree={self.degree}",
            f"radius={self.radius}",
            f"pairs={self.pair_mode}",
            f"pairs_checked={self.pairs_checked}",
            f"sampling_seed={_fmt_opt(self.sampling_seed)}",
            f"max_lca_depth={_fmt_opt(self.max_lca_depth)}",
            f"best_single_C={self.best_single_C}",
            f"witness_x={_fmt_opt(self.witness and format_address(self.witness[0]))}",
            f"witness_y={_fmt_opt(self.witness and format_address(self.witness[1]))}",
            f"upper_mult={self.upper_pair[0]}",
            f"upper_add={self.upper_pair[1]}",
            f"lower_mult={self.lower_pair[0]}",
            f"lower_add={self.lower_pair[1]}",
            f"candidate_C={_fmt_opt(self.candidate_C)}",
            f"coarse_surjectivity_radius={_fmt_opt(self.coarse_surjectivity_radius)}",
            f"target_radius={_fmt_opt(self.target_radius)}",
            "order_preserving=-"
            if self.order_preserving is None
            else f"order_preserving={'true' if self.order_preserving else 'false'}",
            f"order_witness={_fmt_opt(self.order_violation and format_address(self.order_violation))}",
            f"violations={self.violations_total}",
            f"violations_shown={len(self.violations)}",
        ]
        lines.extend(v.to_line() for v in self.violations)
        return lines

    def to_json_dict(self, label: str = "verify") -> dict:
        def frac(x):
            return None if x is None else str(x)

        return {
            "report": label,
            "degree": self.degree,
            "radius": self.radius,
            "pairs": self.pair_mode,
            "pairs_checked": self.pairs_checked,
            "sampling_seed": self.sampling_seed,
            "max_lca_depth": self.max_lca_depth,
            "best_single_C": frac(self.best_single_C),
            "witness_x": self.witness and format_address(self.witness[0]),
            "witness_y": self.witness and format_address(self.witness[1]),
            "upper_mult": frac(self.upper_pair[0]),
            "upper_add": frac(self.upper_pair[1]),
            "lower_mult": frac(self.lower_pair[0]),
            "lower_add": frac(self.lower_pair[1]),
            "candidate_C": frac(self.candidate_C),
            "coarse_surjectivity_radius": self.coarse_surjectivity_radius,
            "target_radius": self.target_radius,
            "order_preserving": self.order_preserving,
            "order_witness": self.order_violation and format_address(self.order_violation),
            "violations_total": self.violations_total,
            "violations": [
                {
                    "x": format_address(v.x),
                    "y": format_address(v.y),
                    "kind": v.kind,
                    "value": v.value,
                    "at": None if v.at is None else format_address(v.at),
                }
                for v in self.violations
            ],
        }


@dataclass(frozen=True, eq=True)
class FiniteTreeMap:
    """A self-map of the tree stored on the ball of the given radius.

    The table is total on the ball and has no other entries; images are any
    valid addresses.  Instances are immutable after construction.
    """

    shape: TreeShape
    domain_radius: int
    table: dict

    def __post_init__(self):
        dom = _cached_ball(self.shape.degree, self.domain_radius)
        if len(self.table) != len(dom) or any(v not in self.table for v in dom):
            missing = next((v for v in dom if v not in self.table), None)
            if missing is not None:
                raise MapDomainError(
                    f"table is missing domain vertex {format_address(missing)}"
                )
            extra = sorted(set(self.table) - set(dom))[0]
            raise MapDomainError(f"table has entry {format_address(extra)} outside the ball")
        for v in dom:
            validate_address(self.table[v], self.shape)

    @property
    def domain(self) -> tuple:
        """Domain vertices in address order."""
        return _cached_ball(self.shape.degree, self.domain_radius)

    @cached_property
    def domain_by_depth(self) -> tuple:
        return tuple(sorted(self.domain, key=lambda v: (len(v), v)))

    @cached_property
    def _image_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        return _label_matrix([self.table[v] for v in self.domain])

    def evaluate(self, v: Vertex) -> Vertex:
        if len(v) > self.domain_radius:
            raise MapDomainError(
                f"{format_address(v)} has depth {len(v)} > domain radius {self.domain_radius}"
            )
        try:
            return self.table[v]
        except KeyError:
            raise MapDomainError(f"{format_address(v)} is not a valid domain vertex") from None

    def __hash__(self):  # tables are dicts; maps are compared, never hashed
        raise TypeError("FiniteTreeMap is not hashable")


def evaluate(m: FiniteTreeMap, v: Vertex) -> Vertex:
    return m.evaluate(v)


# ---------------------------------------------------------------------------
# constructors


def map_from_function(shape: TreeShape, radius: int, fn: Callable[[Vertex], Vertex]) -> FiniteTreeMap:
    return FiniteTreeMap(shape, radius, {v: fn(v) for v in ball(shape, radius)})


def identity_map(shape: TreeShape, radius: int) -> FiniteTreeMap:
    return map_from_function(shape, radius, lambda v: v)


def constant_map(shape: TreeShape, radius: int, value: Vertex = ROOT) -> FiniteTreeMap:
    validate_address(value, shape)
    return map_from_function(shape, radius, lambda v: value)


def levelwise_permutation_map(shape: TreeShape, radius: int, perms) -> FiniteTreeMap:
    """Isometry applying one label permutation per level.

    perms[0] permutes the root's child labels (size d); perms[k] for k >= 1
    permutes the labels at depth k+1 (size d-1).
    """
    if len(perms) < radius:
        raise ValueError(f"need {radius} permutations, got {len(perms)}")
    for k in range(radius):
        want = shape.degree if k == 0 else shape.degree - 1
        if sorted(perms[k]) != list(range(want)):
            raise ValueError(f"perms[{k}] is not a permutation of range({want})")
    return map_from_function(
        shape, radius, lambda v: tuple(perms[i][a] for i, a in enumerate(v))
    )


def random_levelwise_permutation_map(shape: TreeShape, radius: int, seed: int) -> FiniteTreeMap:
    rng = random.Random(seed)
    perms = []
    for k in range(radius):
        p = list(range(shape.degree if k == 0 else shape.degree - 1))
        rng.shuffle(p)
        perms.append(p)
    return levelwise_permutation_map(shape, radius, perms)


def random_automorphism_map(shape: TreeShape, radius: int, seed: int) -> FiniteTreeMap:
    """Root-fixing automorphism of the ball: an independent child permutation
    at every vertex, drawn from one seeded stream in address order."""
    rng = random.Random(seed)
    table = {ROOT: ROOT}
    for v in ball(shape, radius):
        if len(v) == radius:
            continue
        perm = list(range(shape.child_label_count(v)))
        rng.shuffle(perm)
        fv = table[v]
        for a in range(len(perm)):
            table[v + (a,)] = fv + (perm[a],)
    return FiniteTreeMap(shape, radius, table)


def random_map(shape: TreeShape, radius: int, seed: int, *, fix_root: bool = False) -> FiniteTreeMap:
    """Arbitrary (generally non-embedding) map with images drawn from the ball."""
    rng = random.Random(seed)
    verts = ball(shape, radius)
    table = {v: verts[rng.randrange(len(verts))] for v in verts}
    if fix_root:
        table[ROOT] = ROOT
    return FiniteTreeMap(shape, radius, table)


def perturb_map_in_subtree(
    m: FiniteTreeMap, seed: int, *, max_step: int = 2, keep_prob: float = 0.5
) -> FiniteTreeMap:
    """Move each image at most max_step edges down into its own subtree.

    The root's image is left untouched so the result still fixes the root
    whenever the input does.  Deterministic for a fixed seed.
    """
    rng = random.Random(seed)
    shape = m.shape
    table = {}
    for v in m.domain:
        fv = m.table[v]
        if v == ROOT:
            table[v] = fv
            continue
        if rng.random() < keep_prob:
            table[v] = fv
            continue
        steps = 1 + rng.randrange(max_step)
        w = fv
        for _ in range(steps):
            if len(w) >= MAX_DEPTH:
                break
            w = w + (rng.randrange(shape.child_label_count(w)),)
        table[v] = w
    return FiniteTreeMap(shape, m.domain_radius, table)


# ---------------------------------------------------------------------------
# basic operations


def is_order_preserving(m: FiniteTreeMap) -> tuple[bool, Vertex | None]:
    """True iff every vertex's image descends from its parent's image.

    Returns the shallowest (then address-least) violating vertex otherwise.
    """
    t = m.table
    for v in m.domain_by_depth:
        if not v:
            continue
        fp = t[v[:-1]]
        if t[v][: len(fp)] != fp:
            return False, v
    return True, None


def sup_distance(m1: FiniteTreeMap, m2: FiniteTreeMap) -> int:
    """Max pointwise distance over the smaller of the two domains."""
    if m1.shape != m2.shape:
        raise ShapeMismatchError(
            f"cannot compare maps of degrees {m1.shape.degree} and {m2.shape.degree}"
        )
    r = min(m1.domain_radius, m2.domain_radius)
    t1, t2 = m1.table, m2.table
    return max(distance(t1[v], t2[v]) for v in _cached_ball(m1.shape.degree, r))


def compose(outer: FiniteTreeMap, inner: FiniteTreeMap) -> FiniteTreeMap:
    """outer after inner, restricted to the largest ball it stays total on.

    Vertices whose inner image leaves the outer domain are dropped together
    with everything at their depth or below, so the result is again total on
    a (possibly smaller) ball.
    """
    if outer.shape != inner.shape:
        raise ShapeMismatchError("composed maps must share a degree")
    eff = inner.domain_radius
    for v in inner.domain:
        if len(inner.table[v]) > outer.domain_radius:
            eff = min(eff, len(v) - 1)
    if eff < 0:
        raise MapDomainError(
            "empty effective domain: the root's inner image leaves the outer ball"
        )
    table = {v: outer.table[inner.table[v]] for v in ball(inner.shape, eff)}
    return FiniteTreeMap(inner.shape, eff, table)


def coarse_surjectivity_radius(
    m: FiniteTreeMap, target_radius: int, budget: int = DEFAULT_VERTEX_BUDGET
) -> int:
    """Max over the target ball of the distance to the nearest image point.

    For each target y and each ancestor prefix p of y that some image point
    extends, the distance to the closest image below p is depth(y) + (min
    image depth below p) - 2*depth(p); minimizing over p is exact because the
    true nearest image point realizes it at p = lca(y, image).
    """
    if target_radius < 0:
        raise ValueError("target radius must be >= 0")
    min_depth_below: dict = {}
    for w in m.table.values():
        dw = len(w)
        for k in range(dw + 1):
            p = w[:k]
            cur = min_depth_below.get(p)
            if cur is None or dw < cur:
                min_depth_below[p] = dw
    worst = 0
    for y in ball(m.shape, target_radius, budget):
        dy = len(y)
        best = None
        for k in range(dy + 1):
            md = min_depth_below.get(y[:k])
            if md is not None:
                cand = dy + md - 2 * k
                if best is None or cand < best:
                    best = cand
        worst = max(worst, best)
    return worst


# ---------------------------------------------------------------------------
# constant measurement


def _select_pairs(
    n: int, ps: PairSource, max_pairs: int
) -> tuple[np.ndarray, np.ndarray, int | None]:
    total = n * (n - 1) // 2
    if ps.mode == "exhaustive":
        if total > max_pairs:
            raise BudgetExceededError(
                f"{total} vertex pairs exceed the exhaustive budget {max_pairs};"
                " use a sampled pair source"
            )
        if total == 0:
            return np.empty(0, np.int32), np.empty(0, np.int32), None
        iu64, ju64 = np.triu_indices(n, k=1)
        return iu64.astype(np.int32), ju64.astype(np.int32), None
    k = min(ps.count or 0, total)
    rng = random.Random(ps.seed)
    picked = sorted(rng.sample(range(total), k)) if k else []
    iu = np.empty(k, np.int32)
    ju = np.empty(k, np.int32)
    for t, j in enumerate(picked):
        a, b = _unrank_pair(n, j)
        iu[t] = a
        ju[t] = b
    return iu, ju, ps.seed


def measure_qi(
    m: FiniteTreeMap,
    pair_source: PairSource = EXHAUSTIVE,
    *,
    candidate_C=None,
    max_lca_depth: int | None = None,
    max_violations: int = DEFAULT_MAX_VIOLATIONS,
    max_pairs: int = DEFAULT_MAX_PAIRS,
) -> VerificationReport:
    """Best single constant over the checked pairs, plus two-parameter fits.

    The two-parameter fits report the worst observed multiplicative ratio in
    each direction together with the additive residual that the remaining
    pairs (collapsed pairs, for the lower bound) still need.
    With candidate_C given, every checked pair is also tested against that
    constant and failures are listed in canonical order (capped).
    """
    cand = None if candidate_C is None else Fraction(candidate_C)
    if cand is not None and cand < 1:
        raise ValueError("candidate C must be >= 1")
    verts = m.domain
    n = len(verts)
    iu, ju, seed = _select_pairs(n, pair_source, max_pairs)

    dom_labels, dom_depths = _domain_matrix(m.shape.degree, m.domain_radius)
    dplen = _pair_prefix_len(dom_labels, iu, ju)
    if max_lca_depth is not None:
        keep = dplen <= max_lca_depth
        iu, ju, dplen = iu[keep], ju[keep], dplen[keep]
    ddist = dom_depths[iu].astype(np.int32) + dom_depths[ju] - 2 * dplen.astype(np.int32)
    img_labels, img_depths = m._image_matrix
    iplen = _pair_prefix_len(img_labels, iu, ju)
    idist = img_depths[iu].astype(np.int32) + img_depths[ju] - 2 * iplen.astype(np.int32)
    pairs_checked = int(len(iu))

    best = Fraction(1)
    witness = None
    up_mult = Fraction(1)
    low_mult = Fraction(1)
    up_add = Fraction(0)
    low_add = Fraction(0)
    violations: list[Violation] = []
    violations_total = 0

    if pairs_checked:
        shift = np.int64(1) << np.int64(20)
        key = ddist.astype(np.int64) * shift + idist.astype(np.int64)
        uniq = [int(k) for k in np.unique(key)]
        mask_low = (1 << 20) - 1
        pairs_di = [(k >> 20, k & mask_low) for k in uniq]

        best_keys = []
        for k, (delta, iota) in zip(uniq, pairs_di):
            c = pair_min_C(delta, iota)
            if c > best:
                best = c
                best_keys = [k]
            elif c == best:
                best_keys.append(k)
            if delta > 0 and iota > 0:
                up_mult = max(up_mult, Fraction(iota, delta))
                low_mult = max(low_mult, Fraction(delta, iota))
        for delta, iota in pairs_di:
            up_add = max(up_add, iota - up_mult * delta)
            low_add = max(low_add, Fraction(delta, 1) / low_mult - iota)
        up_add = max(up_add, Fraction(0))
        low_add = max(low_add, Fraction(0))

        first = int(np.flatnonzero(np.isin(key, np.array(best_keys, np.int64)))[0])
        witness = (verts[int(iu[first])], verts[int(ju[first])])

        if cand is not None:
            p, q = cand.numerator, cand.denominator
            bad_up = [k for k, (d, i) in zip(uniq, pairs_di) if i * q > p * (d + 1)]
            bad_low = [k for k, (d, i) in zip(uniq, pairs_di) if d * q * q - p * p > i * p * q]
            up_mask = np.isin(key, np.array(bad_up, np.int64)) if bad_up else None
            low_mask = np.isin(key, np.array(bad_low, np.int64)) if bad_low else None
            if up_mask is not None or low_mask is not None:
                if up_mask is None:
                    merged = low_mask
                elif low_mask is None:
                    merged = up_mask
                else:
                    merged = up_mask | low_mask
                idxs = np.flatnonzero(merged)
                violations_total = int(len(idxs))
                for t in idxs[:max_violations]:
                    kind = "upper" if up_mask is not None and up_mask[t] else "lower"
                    violations.append(
                        Violation(verts[int(iu[t])], verts[int(ju[t])], kind, int(idist[t]))
                    )

    return VerificationReport(
        degree=m.shape.degree,
        radius=m.domain_radius,
        pair_mode=pair_source.describe(),
        pairs_checked=pairs_checked,
        sampling_seed=seed,
        best_single_C=best,
        witness=witness,
        upper_pair=(up_mult, up_add),
        lower_pair=(low_mult, low_add),
        candidate_C=cand,
        max_lca_depth=max_lca_depth,
        violations=violations,
        violations_total=violations_total,
    )


def verify_map(
    m: FiniteTreeMap,
    pair_source: PairSource = EXHAUSTIVE,
    *,
    candidate_C=None,
    target_radius: int | None = None,
    max_lca_depth: int | None = None,
    max_violations: int = DEFAULT_MAX_VIOLATIONS,
    max_pairs: int = DEFAULT_MAX_PAIRS,
    budget: int = DEFAULT_VERTEX_BUDGET,
) -> VerificationReport:
    """measure_qi plus coarse surjectivity and the order-preservation flag."""
    rep = measure_qi(
        m,
        pair_source,
        candidate_C=candidate_C,
        max_lca_depth=max_lca_depth,
        max_violations=max_violations,
        max_pairs=max_pairs,
    )
    tr = m.domain_radius if target_radius is None else target_radius
    rep.coarse_surjectivity_radius = coarse_surjectivity_radius(m, tr, budget)
    rep.target_radius = tr
    ok, wit = is_order_preserving(m)
    rep.order_preserving = ok
    rep.order_violation = wit
    return rep


# ---------------------------------------------------------------------------
# property checks provable for honest quasi-isometries


def _iter_pairs(n: int, ps: PairSource) -> Iterator[tuple[int, int]]:
    total = n * (n - 1) // 2
    if ps.mode == "exhaustive":
        for i in range(n - 1):
            for j in range(i + 1, n):
                yield i, j
        return
    k = min(ps.count or 0, total)
    rng = random.Random(ps.seed)
    for j in sorted(rng.sample(range(total), k)) if k else []:
        yield _unrank_pair(n, j)


def check_geodesic_image(
    m: FiniteTreeMap,
    C,
    pair_source: PairSource = EXHAUSTIVE,
    *,
    max_violations: int = DEFAULT_MAX_VIOLATIONS,
) -> list[Violation]:
    """For each checked pair (u, v), every vertex on the geodesic between the
    images must be within C of the image of some vertex on the geodesic
    between u and v.  Returns the failures (u, v, offending image vertex).

    Uses the closest-point projection onto the image geodesic: for a point x
    with projection position p and height h, the distance from x to position
    t along the geodesic is h + |p - t|, so coverage reduces to a one-pass
    distance transform per pair.
    """
    Cf = Fraction(C)
    p, q = Cf.numerator, Cf.denominator
    verts = m.domain
    t = m.table
    violations: list[Violation] = []
    for i, j in _iter_pairs(len(verts), pair_source):
        u, v = verts[i], verts[j]
        fu, fv = t[u], t[v]
        mlen = distance(fu, fv)
        vals = [_INF] * (mlen + 1)
        for b in geodesic(u, v):
            x = t[b]
            d0 = distance(x, fu)
            d1 = distance(x, fv)
            pos = (d0 + mlen - d1) // 2
            h = (d0 + d1 - mlen) // 2
            if h < vals[pos]:
                vals[pos] = h
        best = [0] * (mlen + 1)
        run = _INF
        for tpos in range(mlen + 1):
            run = min(run + 1, vals[tpos])
            best[tpos] = run
        run = _INF
        for tpos in range(mlen, -1, -1):
            run = min(run + 1, vals[tpos])
            if run < best[tpos]:
                best[tpos] = run
        img_path = None
        for tpos in range(mlen + 1):
            if best[tpos] * q > p:
                if len(violations) >= max_violations:
                    return violations
                if img_path is None:
                    img_path = geodesic(fu, fv)
                violations.append(Violation(u, v, "geodesic", best[tpos], at=img_path[tpos]))
    return violations


def check_same_depth(
    m: FiniteTreeMap, C, *, max_violations: int = DEFAULT_MAX_VIOLATIONS
) -> list[Violation]:
    """Order-preserving maps only: whenever two same-depth vertices have
    nested images, both the vertices and the images must be within
    K = 4*C^3 + C of each other.  Returns the failures.
    """
    ok, wit = is_order_preserving(m)
    if not ok:
        raise PreconditionError(
            f"map is not order-preserving (witness {format_address(wit)})"
        )
    Cf = Fraction(C)
    K = 4 * Cf**3 + Cf
    if K >= 4 * MAX_DEPTH:  # no stored distance can reach the bound
        return []
    thr = float(K)
    verts = m.domain
    t = m.table
    dom_labels, _ = _domain_matrix(m.shape.degree, m.domain_radius)
    img_labels, img_depths = m._image_matrix
    index_by_depth: dict[int, list[int]] = {}
    for i, v in enumerate(verts):
        index_by_depth.setdefault(len(v), []).append(i)
    violations: list[Violation] = []
    for level in sorted(index_by_depth):
        if level == 0:
            continue
        idxs = np.array(index_by_depth[level], dtype=np.int64)
        if len(idxs) < 2:
            continue
        sub_img = img_labels[idxs]
        sub_depths = img_depths[idxs].astype(np.int32)
        plen_img = _matrix_prefix_len(sub_img)
        desc = plen_img == sub_depths[None, :]
        np.fill_diagonal(desc, False)
        if not desc.any():
            continue
        plen_dom = _matrix_prefix_len(dom_labels[idxs])
        ddom = 2 * (level - plen_dom.astype(np.int32))
        dimg = sub_depths[:, None] + sub_depths[None, :] - 2 * plen_img.astype(np.int32)
        # conservative float prefilter, then exact rational confirmation
        cand = desc & ((ddom > thr - 1.0) | (dimg > thr - 1.0))
        for a, b in np.argwhere(cand):
            dd, di = int(ddom[a, b]), int(dimg[a, b])
            if dd <= K and di <= K:
                continue
            if len(violations) >= max_violations:
                return violations
            value = di if di > K else dd
            violations.append(
                Violation(verts[int(idxs[a])], verts[int(idxs[b])], "samedepth", value)
            )
    return violations
