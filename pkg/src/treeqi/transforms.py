"""Constructive conversions between map families.

Two transforms, both for root-fixing maps:

* order-preserving normalization: replace each value by the deepest common
  ancestor of the images of the vertex's whole stored subtree.  The result
  respects ancestry unconditionally and stays within 3*C^3 + 2*C of a map
  whose measured constant is at most C.
* mixed-subtree approximation: rebuild an order-preserving map level by
  level with step depth D, sending each new vertex to the shallowest image
  of its class block that its own image descends from.  Validates the two
  construction conditions and three per-level distance invariants as it
  goes, and guarantees success once D reaches the derived threshold.

Both transforms take the promised constant C as input because every derived
constant is a function of it; they re-measure the actual ball constant and
warn (without aborting) when the promise is violated.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

from .errors import PreconditionError, ValidationFailure
from .mixed_builder import BuildTrace, ClassTrace, recover_class_subtree
from .qi_map import (
    EXHAUSTIVE,
    FiniteTreeMap,
    PairSource,
    is_order_preserving,
    measure_qi,
    sup_distance,
)
from .tree_core import ROOT, Vertex, d_children, distance, format_address, lca_pair

# Promise checks fall back to a fixed-seed sample above this many pairs so
# they stay affordable on large balls; the warning is best-effort anyway.
PROMISE_EXHAUSTIVE_PAIRS = 600_000
PROMISE_SAMPLE_COUNT = 50_000
PROMISE_SAMPLE_SEED = 0


class PromiseWarning(UserWarning):
    """The caller-promised constant understates the measured one."""


@dataclass(frozen=True)
class ConstantsBundle:
    """Constants derived from a promised quasi-isometry constant C.

    K_normalize   bound between a map and its order-preserving normalization
    K_samedepth   bound for same-depth vertices with nested images
    D_guaranteed  step depth at which the approximation always validates
    D_used        the step depth actually used (override or D_guaranteed)
    final_bound   bound between the input map and the approximation
    """

    C: Fraction
    K_normalize: Fraction
    K_samedepth: Fraction
    D_guaranteed: int
    D_used: int
    final_bound: Fraction

    def to_line(self) -> str:
        return (
            f"K_normalize={self.K_normalize} K_samedepth={self.K_samedepth}"
            f" D={self.D_used} bound={self.final_bound}"
        )

    def to_json_dict(self) -> dict:
        return {
            "C": str(self.C),
            "K_normalize": str(self.K_normalize),
            "K_samedepth": str(self.K_samedepth),
            "D_guaranteed": self.D_guaranteed,
            "D_used": self.D_used,
            "final_bound": str(self.final_bound),
        }


def constants(C, D_override: int | None = None) -> ConstantsBundle:
    Cf = Fraction(C)
    if Cf < 1:
        raise ValueError("C must be >= 1")
    k_norm = 3 * Cf**3 + 2 * Cf
    k_same = 4 * Cf**3 + Cf
    d_guaranteed = math.ceil(Cf * (Cf + k_same) + 1)
    if D_override is None:
        d_used = d_guaranteed
    else:
        if D_override < 1:
            raise ValueError("D override must be >= 1")
        d_used = int(D_override)
    return ConstantsBundle(
        C=Cf,
        K_normalize=k_norm,
        K_samedepth=k_same,
        D_guaranteed=d_guaranteed,
        D_used=d_used,
        final_bound=k_same + Cf * d_used + Cf,
    )


def measure_promise(m: FiniteTreeMap, promised) -> tuple[Fraction, bool, str]:
    """Measured ball constant, whether it honors the promise, and how it was
    measured (exhaustively, or sampled on large balls)."""
    n = len(m.domain)
    total = n * (n - 1) // 2
    if total <= PROMISE_EXHAUSTIVE_PAIRS:
        source = EXHAUSTIVE
        mode = "exhaustive"
    else:
        source = PairSource.sampled(PROMISE_SAMPLE_COUNT, PROMISE_SAMPLE_SEED)
        mode = source.describe()
    measured = measure_qi(m, source).best_single_C
    return measured, measured <= Fraction(promised), mode


def _warn_promise(name: str, measured: Fraction, promised: Fraction, mode: str) -> None:
    warnings.warn(
        f"{name}: promised C={promised} but the {mode} ball constant is {measured};"
        " derived bounds are not guaranteed",
        PromiseWarning,
        stacklevel=3,
    )


def normalize_order_preserving(
    f: FiniteTreeMap, C, *, check_promise: bool = True
) -> FiniteTreeMap:
    """Order-preserving map at bounded distance from f: each vertex goes to
    the deepest common ancestor of the images of its stored subtree.

    Requires f to fix the root.  When the promise C >= measured constant
    holds, the result is verified to stay within 3*C^3 + 2*C of f.
    """
    Cf = Fraction(C)
    if Cf < 1:
        raise ValueError("C must be >= 1")
    if f.table[ROOT] != ROOT:
        raise PreconditionError("normalization requires a root-fixing map")
    honest = True
    if check_promise:
        measured, honest, mode = measure_promise(f, Cf)
        if not honest:
            _warn_promise("normalize_order_preserving", measured, Cf, mode)
    table: dict = {}
    # address order is preorder, so the reversed order visits children first
    for v in reversed(f.domain):
        acc = f.table[v]
        if len(v) < f.domain_radius:
            for c in f.shape.children(v):
                acc = lca_pair(acc, table[c])
        table[v] = acc
    g = FiniteTreeMap(f.shape, f.domain_radius, table)
    ok, wit = is_order_preserving(g)
    if not ok:
        raise ValidationFailure(
            "normalize-order", f"normalized map broke ancestry at {format_address(wit)}"
        )
    if check_promise and honest:
        bound = 3 * Cf**3 + 2 * Cf
        sup = sup_distance(f, g)
        if sup > bound:
            raise ValidationFailure(
                "normalize-bound", f"normalization moved a point {sup} > bound {bound}"
            )
    return g


def approximate_by_mixed(
    g: FiniteTreeMap,
    C,
    D_override: int | None = None,
    *,
    check_promise: bool = True,
) -> tuple[FiniteTreeMap, ConstantsBundle, BuildTrace]:
    """Mixed-subtree map at bounded distance from an order-preserving g.

    Runs the level-by-level construction with step depth D_used, assigning
    each block vertex b to the shallowest image of the block that g(b)
    descends from; intermediate vertices collapse onto the class image.
    After each class the construction conditions (image set is a subtree
    boundary; shared images force a shared class member) and the per-level
    distance invariants are validated exactly; any failure raises
    ValidationFailure with the class location and the failed check.  With
    D_used >= D_guaranteed and an honest C the validation never fires.
    """
    bundle = constants(C, D_override)
    Cf = bundle.C
    ok, wit = is_order_preserving(g)
    if not ok:
        raise PreconditionError(
            f"approximation requires an order-preserving map (witness {format_address(wit)})"
        )
    if g.table[ROOT] != ROOT:
        raise PreconditionError("approximation requires a root-fixing map")
    step = bundle.D_used
    levels = g.domain_radius // step
    if levels < 1:
        raise PreconditionError(
            f"domain radius {g.domain_radius} holds no full level of depth {step}"
        )
    if check_promise:
        measured, honest, mode = measure_promise(g, Cf)
        if not honest:
            _warn_promise("approximate_by_mixed", measured, Cf, mode)
    K = bundle.K_samedepth
    fill_bound = bundle.final_bound
    shape = g.shape
    gt = g.table
    table = {ROOT: ROOT}
    trace = BuildTrace(shape.degree, step, levels, f"approximate:C={Cf}")
    current = [ROOT]
    for i in range(levels):
        groups: dict[Vertex, list[Vertex]] = {}
        for x in current:
            groups.setdefault(table[x], []).append(x)
        ordered = sorted(groups.items(), key=lambda kv: min(kv[1]))
        next_level: list[Vertex] = []
        for image_v, members in ordered:
            members = sorted(members)
            block = [c for x in members for c in d_children(x, step, shape)]
            targets = {gt[b] for b in block}
            assignment: dict = {}
            for b in block:
                # candidates are prefixes of g(b), hence a chain under
                # ancestry; the first hit is the unique shallowest one
                gb = gt[b]
                for k in range(len(gb) + 1):
                    prefix = gb[:k]
                    if prefix in targets:
                        assignment[b] = prefix
                        break
            by_image: dict[Vertex, list[Vertex]] = {}
            for b in block:
                by_image.setdefault(assignment[b], []).append(b)
            for a, srcs in sorted(by_image.items()):
                parents = {b[: len(b) - step] for b in srcs}
                if len(parents) > 1:
                    raise ValidationFailure(
                        "shared-parent",
                        f"image {format_address(a)} drawn from children of two class members",
                        level=i,
                        image=image_v,
                    )
            subtree, reason = recover_class_subtree(image_v, targets, shape)
            if reason is not None:
                raise ValidationFailure("subtree-boundary", reason, level=i, image=image_v)
            image_set = set(assignment.values())
            if image_set != targets:
                missing = sorted(targets - image_set)[0]
                raise ValidationFailure(
                    "subtree-boundary",
                    f"assigned images miss boundary vertex {format_address(missing)}",
                    level=i,
                    image=image_v,
                )
            for b in block:
                fb = assignment[b]
                gb = gt[b]
                if gb[: len(fb)] != fb:
                    raise ValidationFailure(
                        "target-containment",
                        f"g({format_address(b)}) left the subtree of {format_address(fb)}",
                        level=i,
                        image=image_v,
                    )
                if distance(fb, gb) > K:
                    raise ValidationFailure(
                        "target-distance",
                        f"{format_address(b)} assigned {distance(fb, gb)} > {K} from its g-image",
                        level=i,
                        image=image_v,
                    )
                table[b] = fb
            for x in members:
                frontier = [x]
                for _ in range(step - 1):
                    frontier = [c for u in frontier for c in shape.children(u)]
                    for w in frontier:
                        table[w] = image_v
                        if distance(image_v, gt[w]) > fill_bound:
                            raise ValidationFailure(
                                "fill-distance",
                                f"{format_address(w)} collapsed {distance(image_v, gt[w])}"
                                f" > {fill_bound} from its g-image",
                                level=i,
                                image=image_v,
                            )
            trace.classes.append(
                ClassTrace(
                    level=i,
                    image=image_v,
                    members=tuple(members),
                    subtree=tuple(sorted(subtree)),
                    boundary=tuple(sorted(targets)),
                    assignment={b: assignment[b] for b in block},
                )
            )
            next_level.extend(block)
        current = sorted(next_level)
    approx = FiniteTreeMap(shape, levels * step, table)
    sup = sup_distance(approx, g)
    if sup > fill_bound:
        raise ValidationFailure(
            "final-bound", f"approximation sits {sup} > bound {fill_bound} from the input"
        )
    return approx, bundle, trace
