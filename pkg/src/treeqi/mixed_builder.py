"""Level-by-level construction of deep mixed-subtree self-maps.

The construction fixes a step depth D and proceeds one level of depth D at a
time.  Vertices at depth i*D are grouped into classes by their current image
v; each class picks a finite subtree hanging at v and maps the D-children of
its members onto that subtree's boundary so that only children of the same
class member may share an image; everything strictly between two levels
collapses to the class image.  Policies own the free choices (which boundary
size, how the subtree grows, who absorbs the assignment surplus) and a
replayable trace records every choice made.

The structural verifier re-derives the classes from a finished map and
checks the construction invariants exhaustively on the stored ball.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from typing import Iterable

from .errors import MapFormatError, PolicyError
from .qi_map import FiniteTreeMap
from .tree_core import (
    DEFAULT_VERTEX_BUDGET,
    ROOT,
    FiniteSubtree,
    TreeShape,
    Vertex,
    ball,
    boundary,
    d_children,
    distance,
    format_address,
    insort_address,
    parse_address,
)


@dataclass(frozen=True)
class LevelClass:
    """One same-image class: the common image, the same-depth preimages, and
    all D-children of those preimages (the vertices about to be assigned)."""

    image: Vertex
    members: tuple
    block: tuple
    targets: frozenset | None = None


@dataclass
class ClassTrace:
    level: int
    image: Vertex
    members: tuple
    subtree: tuple
    boundary: tuple
    assignment: dict
    rng_draws: int = 0


@dataclass
class BuildTrace:
    """Complete record of the choices of one construction run."""

    degree: int
    step: int
    levels: int
    policy: str
    classes: list[ClassTrace] = field(default_factory=list)

    def to_text(self) -> str:
        lines = [
            f"tree-qi-trace v1 degree={self.degree} D={self.step}"
            f" levels={self.levels} policy={self.policy}"
        ]
        for c in self.classes:
            assign = ",".join(
                f"{format_address(b)}:{format_address(a)}" for b, a in c.assignment.items()
            )
            lines.append(
                f"class level={c.level}"
                f" image={format_address(c.image)}"
                f" members={'|'.join(format_address(v) for v in c.members)}"
                f" subtree={'|'.join(format_address(v) for v in c.subtree)}"
                f" boundary={'|'.join(format_address(v) for v in c.boundary)}"
                f" rng_draws={c.rng_draws}"
                f" assign={assign}"
            )
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "BuildTrace":
        lines = text.splitlines()
        if not lines:
            raise MapFormatError("empty trace", 1)
        head = lines[0].split()
        if len(head) != 6 or head[0] != "tree-qi-trace" or head[1] != "v1":
            raise MapFormatError("bad trace header", 1)
        fields = {}
        for tok in head[2:]:
            k, _, v = tok.partition("=")
            fields[k] = v
        try:
            trace = BuildTrace(
                int(fields["degree"]), int(fields["D"]), int(fields["levels"]), fields["policy"]
            )
        except (KeyError, ValueError) as e:
            raise MapFormatError(f"bad trace header: {e}", 1) from None
        for no, ln in enumerate(lines[1:], start=2):
            toks = ln.split()
            if not toks or toks[0] != "class":
                raise MapFormatError("expected a class line", no)
            kv = {}
            for tok in toks[1:]:
                k, _, v = tok.partition("=")
                kv[k] = v
            try:
                assignment = {}
                for pair in kv["assign"].split(","):
                    b, _, a = pair.partition(":")
                    assignment[parse_address(b)] = parse_address(a)
                trace.classes.append(
                    ClassTrace(
                        level=int(kv["level"]),
                        image=parse_address(kv["image"]),
                        members=tuple(parse_address(p) for p in kv["members"].split("|")),
                        subtree=tuple(parse_address(p) for p in kv["subtree"].split("|")),
                        boundary=tuple(parse_address(p) for p in kv["boundary"].split("|")),
                        assignment=assignment,
                        rng_draws=int(kv.get("rng_draws", "0")),
                    )
                )
            except (KeyError, ValueError) as e:
                raise MapFormatError(f"bad class line: {e}", no) from None
        return trace

    def by_class(self) -> dict:
        return {(c.level, c.image): c for c in self.classes}


@dataclass(frozen=True)
class MixedPolicy:
    """Strategy for the construction's free choices.

    minimal          smallest feasible boundary, leftmost growth, first-fit
    random           seeded uniform choices throughout (split per class)
    deepest_feasible largest feasible boundary, always extending the deepest
                     boundary vertex, so subtrees degenerate to deep chains
    explicit         replay a recorded trace verbatim
    """

    variant: str
    seed: int | None = None
    replay: BuildTrace | None = None

    def __post_init__(self):
        if self.variant not in ("minimal", "random", "deepest", "explicit"):
            raise ValueError(f"unknown policy variant {self.variant!r}")
        if self.variant == "random" and self.seed is None:
            raise ValueError("random policy needs a seed")
        if self.variant == "explicit" and self.replay is None:
            raise ValueError("explicit policy needs a trace to replay")

    @staticmethod
    def minimal() -> "MixedPolicy":
        return MixedPolicy("minimal")

    @staticmethod
    def random(seed: int) -> "MixedPolicy":
        return MixedPolicy("random", seed=seed)

    @staticmethod
    def deepest_feasible() -> "MixedPolicy":
        return MixedPolicy("deepest")

    @staticmethod
    def explicit(trace: BuildTrace) -> "MixedPolicy":
        return MixedPolicy("explicit", replay=trace)

    def describe(self) -> str:
        if self.variant == "random":
            return f"random:{self.seed}"
        if self.variant == "explicit":
            return "explicit"
        return self.variant


class _CountingRandom:
    """Seeded stream that counts how many draws a class consumed."""

    def __init__(self, seed: int):
        self._rng = random.Random(seed)
        self.calls = 0

    def randrange(self, n: int) -> int:
        self.calls += 1
        return self._rng.randrange(n)

    def choice(self, seq):
        self.calls += 1
        return seq[self._rng.randrange(len(seq))]

    def shuffle(self, seq) -> None:
        self.calls += 1
        self._rng.shuffle(seq)


def _class_seed(master_seed: int, level: int, image: Vertex) -> int:
    key = f"{master_seed}:{level}:{format_address(image)}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big")


def class_rng(policy: MixedPolicy, level: int, image: Vertex) -> _CountingRandom | None:
    if policy.variant != "random":
        return None
    return _CountingRandom(_class_seed(policy.seed, level, image))


def feasible_boundary_sizes(
    class_size: int, block_size: int, v_is_root: bool, shape: TreeShape
) -> list[int]:
    """All achievable boundary sizes between class_size and block_size.

    A subtree of size s hanging at v has boundary size base + (s-1)*(d-2)
    where base is d at the root and d-1 elsewhere, so the achievable sizes
    form an arithmetic progression intersected with the interval.
    """
    if class_size < 1:
        raise ValueError("class size must be >= 1")
    if block_size < class_size:
        raise ValueError("block size must be at least the class size")
    d = shape.degree
    base = d if v_is_root else d - 1
    lo = max(class_size, base)
    if lo > block_size:
        return []
    k0 = -((base - lo) // (d - 2)) if lo > base else 0
    out = []
    s = base + k0 * (d - 2)
    while s <= block_size:
        out.append(s)
        s += d - 2
    return out


def grow_subtree(
    v: Vertex,
    target_boundary: int,
    policy: MixedPolicy,
    shape: TreeShape,
    rng: _CountingRandom | None = None,
) -> FiniteSubtree:
    """Grow a subtree hanging at v until its boundary has the target size.

    Each added vertex grows the boundary by d-2, so the target must lie on
    the progression starting at the singleton's boundary size.  The minimal
    policy always extends the address-least boundary vertex (the leftmost
    branch); the deepest policy extends the deepest one; the random policy
    extends a uniformly chosen one.
    """
    if policy.variant == "explicit":
        raise PolicyError("the explicit policy supplies subtrees directly", image=v)
    d = shape.degree
    base = d if v == ROOT else d - 1
    if target_boundary < base or (target_boundary - base) % (d - 2):
        raise PolicyError(
            f"boundary size {target_boundary} is infeasible at {format_address(v)}", image=v
        )
    if policy.variant == "random" and rng is None:
        rng = _CountingRandom(policy.seed)
    steps = (target_boundary - base) // (d - 2)
    members = {v}
    if policy.variant == "random":
        # order-free pool with swap removal: uniform picks, deterministic per seed
        pool = shape.children(v)
        for _ in range(steps):
            idx = rng.randrange(len(pool))
            w = pool[idx]
            pool[idx] = pool[-1]
            pool.pop()
            members.add(w)
            pool.extend(shape.children(w))
    else:
        pool = sorted(shape.children(v))
        for _ in range(steps):
            if policy.variant == "minimal":
                w = pool.pop(0)
            else:  # deepest, address-least among the deepest
                w = max(pool, key=lambda u: (len(u), [-a for a in u]))
                pool.remove(w)
            members.add(w)
            for c in shape.children(w):
                insort_address(pool, c)
    return FiniteSubtree(members)


def check_assignment(cls: LevelClass, assignment: dict, boundary_vertices, step: int) -> None:
    """Raise PolicyError unless the assignment covers the whole boundary and
    only children of the same class member share an image."""
    bd = set(boundary_vertices)
    if set(assignment) != set(cls.block):
        raise PolicyError("assignment is not total on the class block", image=cls.image)
    used = set(assignment.values())
    if used != bd:
        raise PolicyError("assignment image differs from the subtree boundary", image=cls.image)
    sources: dict = {}
    for b in cls.block:
        sources.setdefault(assignment[b], []).append(b)
    for a, srcs in sources.items():
        parents = {b[: len(b) - step] for b in srcs}
        if len(parents) > 1:
            raise PolicyError(
                f"children of different class members share the image {format_address(a)}",
                image=cls.image,
            )


def assign_images(
    cls: LevelClass,
    boundary_vertices,
    step: int,
    policy: MixedPolicy,
    rng: _CountingRandom | None = None,
) -> dict:
    """Map the class block onto the boundary: surjective, and images shared
    only within one member's children.

    Boundary vertices are dealt one per member first (injectively), the
    surplus boundary vertices fill remaining child slots, and any children
    still unassigned fold onto a boundary vertex their own member already
    owns.  The minimal policy does all of this in address order; the random
    policy shuffles the deal and picks absorbers uniformly.
    """
    if policy.variant == "explicit":
        raise PolicyError("the explicit policy supplies assignments directly", image=cls.image)
    if policy.variant == "random" and rng is None:
        rng = _CountingRandom(policy.seed)
    bd = sorted(boundary_vertices)
    groups = []
    for x in cls.members:
        groups.append([b for b in cls.block if b[: len(b) - step] == x])
    if not (len(groups) <= len(bd) <= len(cls.block)):
        raise PolicyError(
            f"boundary size {len(bd)} outside [{len(groups)}, {len(cls.block)}]",
            image=cls.image,
        )
    deal = list(bd)
    if policy.variant == "random":
        rng.shuffle(deal)
    assignment: dict = {}
    owned: list[list[Vertex]] = [[] for _ in groups]
    next_slot = [0] * len(groups)

    for gi, group in enumerate(groups):
        a = deal[gi]
        assignment[group[0]] = a
        owned[gi].append(a)
        next_slot[gi] = 1
    for a in deal[len(groups) :]:
        if policy.variant == "random":
            open_groups = [gi for gi in range(len(groups)) if next_slot[gi] < len(groups[gi])]
            gi = rng.choice(open_groups)
        else:
            gi = next(g for g in range(len(groups)) if next_slot[g] < len(groups[g]))
        assignment[groups[gi][next_slot[gi]]] = a
        owned[gi].append(a)
        next_slot[gi] += 1
    for gi, group in enumerate(groups):
        for b in group[next_slot[gi] :]:
            if policy.variant == "random":
                assignment[b] = rng.choice(owned[gi])
            else:
                assignment[b] = min(owned[gi])
    check_assignment(cls, assignment, bd, step)
    return assignment


def _strict_descendants_within(x: Vertex, k: int, shape: TreeShape) -> list[Vertex]:
    out: list[Vertex] = []
    frontier = [x]
    for _ in range(k):
        frontier = [c for u in frontier for c in shape.children(u)]
        out.extend(frontier)
    return out


def build_mixed(
    shape: TreeShape,
    step: int,
    levels: int,
    policy: MixedPolicy,
    *,
    budget: int = DEFAULT_VERTEX_BUDGET,
) -> tuple[FiniteTreeMap, BuildTrace]:
    """Run the construction for the given number of depth-`step` levels.

    Returns the map on the ball of radius levels*step together with the
    trace of every class choice; replaying the trace with the explicit
    policy rebuilds the identical map.
    """
    if step < 1:
        raise ValueError("step depth must be >= 1")
    if levels < 0:
        raise ValueError("levels must be >= 0")
    radius = levels * step
    ball(shape, radius, budget)  # enforce the budget before any work
    replay = policy.replay.by_class() if policy.variant == "explicit" else None
    if replay is not None:
        head = policy.replay
        if (head.degree, head.step, head.levels) != (shape.degree, step, levels):
            raise PolicyError(
                "trace header does not match the requested construction parameters"
            )
    table = {ROOT: ROOT}
    trace = BuildTrace(shape.degree, step, levels, policy.describe())
    current = [ROOT]
    for i in range(levels):
        groups: dict[Vertex, list[Vertex]] = {}
        for x in current:
            groups.setdefault(table[x], []).append(x)
        ordered = sorted(groups.items(), key=lambda kv: min(kv[1]))
        next_level: list[Vertex] = []
        for image_v, members in ordered:
            members = sorted(members)
            block = [c for x in members for c in d_children(x, step, shape, budget)]
            cls = LevelClass(image_v, tuple(members), tuple(block))
            rng = class_rng(policy, i, image_v)
            if replay is not None:
                entry = replay.get((i, image_v))
                if entry is None:
                    raise PolicyError("trace has no entry for this class", level=i, image=image_v)
                subtree = FiniteSubtree(entry.subtree)
                if subtree.local_root != image_v:
                    raise PolicyError("recorded subtree hangs elsewhere", level=i, image=image_v)
                bd = boundary(subtree, shape)
                if tuple(bd) != tuple(entry.boundary):
                    raise PolicyError("recorded boundary is wrong", level=i, image=image_v)
                assignment = dict(entry.assignment)
                check_assignment(cls, assignment, bd, step)
                draws = entry.rng_draws
            else:
                feas = feasible_boundary_sizes(
                    len(members), len(block), image_v == ROOT, shape
                )
                if not feas:
                    raise PolicyError("no feasible boundary size", level=i, image=image_v)
                if policy.variant == "minimal":
                    target = feas[0]
                elif policy.variant == "deepest":
                    target = feas[-1]
                else:
                    target = feas[rng.randrange(len(feas))]
                subtree = grow_subtree(image_v, target, policy, shape, rng)
                bd = boundary(subtree, shape)
                assignment = assign_images(cls, bd, step, policy, rng)
                draws = rng.calls if rng else 0
            for b in block:
                table[b] = assignment[b]
            for x in members:
                for w in _strict_descendants_within(x, step - 1, shape):
                    table[w] = image_v
            trace.classes.append(
                ClassTrace(
                    level=i,
                    image=image_v,
                    members=tuple(members),
                    subtree=subtree.vertices,
                    boundary=tuple(bd),
                    assignment={b: assignment[b] for b in block},
                    rng_draws=draws,
                )
            )
            next_level.extend(block)
        current = sorted(next_level)
    return FiniteTreeMap(shape, radius, table), trace


# ---------------------------------------------------------------------------
# structural verification


@dataclass
class StructureWitness:
    kind: str
    level: int
    detail: str

    def to_line(self) -> str:
        return f"witness kind={self.kind} level={self.level} detail={self.detail}"


@dataclass
class MixedStructureReport:
    degree: int
    step: int
    radius: int
    levels: int
    passed: bool
    witnesses: list[StructureWitness]
    witness_total: int
    multiplicity_by_level: dict
    multiplicity_bound: int
    image_step_min: int | None
    image_step_max: int | None
    image_step_bound: int

    def to_lines(self) -> list[str]:
        mult = max(self.multiplicity_by_level.values()) if self.multiplicity_by_level else 0
        lines = [
            "report=mixed-structure",
            f"degree={self.degree}",
            f"D={self.step}",
            f"radius={self.radius}",
            f"levels={self.levels}",
            f"passed={'true' if self.passed else 'false'}",
            f"max_multiplicity={mult}",
            f"multiplicity_bound={self.multiplicity_bound}",
            f"image_step_min={'-' if self.image_step_min is None else self.image_step_min}",
            f"image_step_max={'-' if self.image_step_max is None else self.image_step_max}",
            f"image_step_bound={self.image_step_bound}",
            f"witnesses={self.witness_total}",
        ]
        lines.extend(w.to_line() for w in self.witnesses)
        return lines

    def to_json_dict(self) -> dict:
        return {
            "report": "mixed-structure",
            "degree": self.degree,
            "D": self.step,
            "radius": self.radius,
            "levels": self.levels,
            "passed": self.passed,
            "multiplicity_by_level": {str(k): v for k, v in self.multiplicity_by_level.items()},
            "multiplicity_bound": self.multiplicity_bound,
            "image_step_min": self.image_step_min,
            "image_step_max": self.image_step_max,
            "image_step_bound": self.image_step_bound,
            "witness_total": self.witness_total,
            "witnesses": [
                {"kind": w.kind, "level": w.level, "detail": w.detail} for w in self.witnesses
            ],
        }


def recover_class_subtree(
    image: Vertex, targets: Iterable[Vertex], shape: TreeShape
) -> tuple[set | None, str | None]:
    """The vertices below `image` that sit above every target, if that set is
    a finite subtree whose boundary is exactly the target set.

    Returns (subtree vertices, None) on success or (None, reason) when the
    targets cannot be such a boundary (image among targets, size formula
    broken, or an escape route past the deepest target).
    """
    targets = set(targets)
    if image in targets:
        return None, f"class image {format_address(image)} occurs among the images"
    d = shape.degree
    c = 2 if image == ROOT else 1
    num = len(targets) - c
    if num < 0 or num % (d - 2):
        return None, f"{len(targets)} boundary vertices fit no subtree size"
    expected = num // (d - 2) + 1
    max_depth = max(len(a) for a in targets)
    members: set = set()
    stack = [image]
    while stack:
        y = stack.pop()
        if y in targets:
            continue
        if len(y) >= max_depth:
            return None, f"subtree escapes past the deepest image below {format_address(y)}"
        members.add(y)
        if len(members) > expected:
            return None, "subtree exceeds the size its boundary implies"
        stack.extend(shape.children(y))
    bdry = {a for a in targets if a[:-1] in members}
    if bdry != targets:
        missing = sorted(targets - bdry)[0]
        return None, f"image {format_address(missing)} is not on the subtree boundary"
    return members, None


def verify_mixed_structure(
    m: FiniteTreeMap, step: int, *, max_witnesses: int = 100
) -> MixedStructureReport:
    """Exhaustively check the construction invariants on the stored ball.

    Per level (a multiple of the step depth): equal images force a shared
    D-parent and distinct images are never nested; no image repeats more
    than degree**step times; each D-parent/D-child image pair moves by a
    distance in [1, (degree**step)**2]; each class's image set must be
    recoverable as the boundary of the subtree spanned between the class
    image and the images; and everything strictly between two levels
    collapses onto the class image.
    """
    radius = m.domain_radius
    if step < 1 or radius % step:
        raise ValueError("domain radius must be a positive multiple of the step depth")
    levels = radius // step
    d = m.shape.degree
    K = d**step
    K2 = K * K
    t = m.table
    witnesses: list[StructureWitness] = []
    witness_total = 0

    def add(kind: str, level: int, detail: str) -> None:
        nonlocal witness_total
        witness_total += 1
        if len(witnesses) < max_witnesses:
            witnesses.append(StructureWitness(kind, level, detail))

    if t[ROOT] != ROOT:
        add("root-anchor", 0, f"root maps to {format_address(t[ROOT])}")

    by_depth: dict[int, list[Vertex]] = {}
    for v in m.domain:
        by_depth.setdefault(len(v), []).append(v)

    multiplicity = {0: 1}
    step_min: int | None = None
    step_max: int | None = None
    prev_classes: dict[Vertex, list[Vertex]] = {t[ROOT]: [ROOT]}

    for i in range(1, levels + 1):
        lv = i * step
        classes: dict[Vertex, list[Vertex]] = {}
        for v in by_depth[lv]:
            classes.setdefault(t[v], []).append(v)
        multiplicity[i] = max(len(g) for g in classes.values())
        if multiplicity[i] > K:
            add("multiplicity", i, f"{multiplicity[i]} same-image vertices exceed {K}")
        for image, grp in sorted(classes.items()):
            parents = {v[: lv - step] for v in grp}
            if len(parents) > 1:
                two = sorted(parents)[:2]
                add(
                    "shared-image-parent",
                    i,
                    f"image {format_address(image)} shared across"
                    f" {format_address(two[0])} and {format_address(two[1])}",
                )
        images = sorted(classes)
        for a, b in zip(images, images[1:]):
            if b[: len(a)] == a:
                add(
                    "image-ancestry",
                    i,
                    f"{format_address(a)} is an ancestor of {format_address(b)}",
                )
        for v in by_depth[lv]:
            dist_step = distance(t[v], t[v[: lv - step]])
            step_min = dist_step if step_min is None else min(step_min, dist_step)
            step_max = dist_step if step_max is None else max(step_max, dist_step)
            if not 1 <= dist_step <= K2:
                add(
                    "image-step",
                    i,
                    f"{format_address(v)} moved its image {dist_step}, outside [1, {K2}]",
                )
        for image, members in sorted(prev_classes.items()):
            block = [c for x in sorted(members) for c in d_children(x, step, m.shape)]
            targets = {t[b] for b in block}
            _, reason = recover_class_subtree(image, targets, m.shape)
            if reason is not None:
                add("class-subtree", i - 1, reason)
        for r in range(lv - step + 1, lv):
            for w in by_depth[r]:
                anchor = w[: lv - step]
                if t[w] != t[anchor]:
                    add(
                        "intermediate-fill",
                        i,
                        f"{format_address(w)} does not collapse onto its class image",
                    )
        prev_classes = classes

    return MixedStructureReport(
        degree=d,
        step=step,
        radius=radius,
        levels=levels,
        passed=witness_total == 0,
        witnesses=witnesses,
        witness_total=witness_total,
        multiplicity_by_level=multiplicity,
        multiplicity_bound=K,
        image_step_min=step_min,
        image_step_max=step_max,
        image_step_bound=K2,
    )
