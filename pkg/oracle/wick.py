# oracle/wick.py
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Dict, FrozenSet, Iterator, List, Optional, Sequence, Tuple

from oracle.kernel_expr import KernelExpr
from oracle.labels import OracleError, Pattern, TensorLabel, make_pattern

logger = logging.getLogger(__name__)

ONE = KernelExpr.constant(1)
INV = KernelExpr.s_power(-1)  # 1/(1-u)
INV2 = KernelExpr.s_power(-2)

ITO_KERNELS = {"1": ONE, "inv": INV}


@dataclass(frozen=True)
class ItoAtom:
    """
    ∫₀^upper k(u) dB_u^letter with k = 1 ("1") or 1/(1-u) ("inv").

    The rescaled Brownian increment B_a is ItoAtom(letter, "a", "1") and
    Z_a = ∫₀^a dB/(1-u) is ItoAtom(letter, "a", "inv").
    """
    letter: str
    upper: str
    kernel: str = "inv"

    def __post_init__(self):
        if self.kernel not in ITO_KERNELS:
            raise OracleError(f"Itô kernel must be one of {sorted(ITO_KERNELS)}, got '{self.kernel}'")


@dataclass
class MomentTerm:
    pattern: Pattern
    factors: Dict[str, KernelExpr]


def perfect_matchings(n: int) -> Iterator[List[Tuple[int, int]]]:
    """All pairings of range(n) (empty for odd n)."""
    if n % 2:
        return

    def rec(items):
        if not items:
            yield []
            return
        first, rest = items[0], items[1:]
        for k, other in enumerate(rest):
            for tail in rec(rest[:k] + rest[k + 1:]):
                yield [(first, other)] + tail

    yield from rec(list(range(n)))


def covariance(a: ItoAtom, b: ItoAtom) -> KernelExpr:
    """E[a b] / δ as a function of the smaller upper limit: ∫₀^{a∧b} k_a k_b du."""
    return (ITO_KERNELS[a.kernel] * ITO_KERNELS[b.kernel]).integral_from_zero()


def gaussian_moment(atoms: Sequence[ItoAtom], order: Sequence[str]) -> List[MomentTerm]:
    """
    Isserlis expansion of E[∏ atoms] for atoms with ordered upper limits.

    Args:
        atoms: Itô atoms (2 or 4 in practice)
        order: upper-limit variables from smallest to largest; resolves
            every a∧b

    Returns:
        one MomentTerm per pairing with its delta pattern and a KernelExpr
        per variable; an odd number of atoms gives []
    """
    rank = {v: n for n, v in enumerate(order)}
    missing = {a.upper for a in atoms} - set(rank)
    if missing:
        raise OracleError(f"upper limits {sorted(missing)} are missing from the declared order")
    terms = []
    for matching in perfect_matchings(len(atoms)):
        factors: Dict[str, KernelExpr] = {}
        pairs = []
        for x, y in matching:
            a, b = atoms[x], atoms[y]
            low = a.upper if rank[a.upper] <= rank[b.upper] else b.upper
            factors[low] = factors.get(low, ONE) * covariance(a, b)
            pairs.append((a.letter, b.letter))
        terms.append(MomentTerm(make_pattern(pairs), factors))
    return terms


# ordered-simplex integration


def _closure(names: Sequence[str], relations) -> Dict[str, set]:
    above = {v: set() for v in names}
    for lo, hi in relations:
        above[lo].add(hi)
    changed = True
    while changed:
        changed = False
        for v in names:
            extra = set()
            for w in above[v]:
                extra |= above[w]
            if not extra <= above[v]:
                above[v] |= extra
                changed = True
    return above


@lru_cache(maxsize=None)
def _integrate(kernels: Tuple[Tuple[str, KernelExpr], ...], relations: FrozenSet[Tuple[str, str]]) -> KernelExpr:
    names = [v for v, _ in kernels]
    kernel = dict(kernels)
    above = _closure(names, relations)
    if any(v in above[v] for v in names):
        return KernelExpr.zero()

    covers = {}
    for v in names:
        ups = above[v]
        covers[v] = sorted(w for w in ups if not any(w in above[u] for u in ups))
    for v in names:
        if len(covers[v]) > 1:
            w1, w2 = covers[v][0], covers[v][1]
            return _integrate(kernels, relations | {(w1, w2)}) + _integrate(kernels, relations | {(w2, w1)})

    children: Dict[str, List[str]] = {v: [] for v in names}
    roots = []
    for v in names:
        if covers[v]:
            children[covers[v][0]].append(v)
        else:
            roots.append(v)

    def value(v):
        out = kernel[v]
        for c in children[v]:
            out = out * value(c).integral_from_zero()
        return out

    result = ONE
    for root in roots:
        result = result * value(root).integral_from_zero()
    return result


def poset_integral(kernels: Dict[str, KernelExpr], relations) -> KernelExpr:
    """
    ∫ ∏_v kernel_v(v) over {0 < v < 1, lo < hi for every relation}.

    Variables with two incomparable upper covers are split into the two
    orderings of those covers until the Hasse diagram is a forest, which
    is then integrated from the leaves up. Roots stop at 1 - ε and the
    result is returned as a KernelExpr in ε, leaving the limit to the
    caller once every contribution has been summed.
    """
    items = tuple(sorted(kernels.items(), key=lambda kv: kv[0]))
    rels = frozenset((lo, hi) for lo, hi in relations)
    unknown = {v for pair in rels for v in pair} - set(kernels)
    if unknown:
        raise OracleError(f"relations mention unknown variables {sorted(unknown)}")
    return _integrate(items, rels)


# expectation of an iterated-integral monomial


@dataclass(frozen=True)
class Leg:
    """
    A Gaussian leg: "dB" is the Itô differential at `var`, "Z" is a fresh
    ∫₀^var dB_u/(1-u) below `var`.
    """
    letter: str
    var: str
    kind: str


@dataclass
class Integrand:
    """
    coefficient × label × ∫ ∏ kernels ∏ legs over the structural simplex.

    parents[v] is the variable bounding v from above (None: bounded by 1).
    fixed holds deltas already present before pairing (the a(0) = I of P).
    """
    coefficient: Fraction
    label: TensorLabel
    parents: Dict[str, Optional[str]]
    kernels: Dict[str, KernelExpr]
    legs: List[Leg] = field(default_factory=list)
    fixed: List[Tuple[str, str]] = field(default_factory=list)

    def is_ancestor(self, anc: str, v: str) -> bool:
        p = self.parents.get(v)
        while p is not None:
            if p == anc:
                return True
            p = self.parents.get(p)
        return False


def _excluded(term: Integrand, a: Leg, b: Leg) -> bool:
    # an Itô differential never pairs with a leg of its own integrand
    for d, o in ((a, b), (b, a)):
        if d.kind != "dB":
            continue
        if o.kind == "Z" and (o.var == d.var or term.is_ancestor(d.var, o.var)):
            return True
        if o.kind == "dB" and term.is_ancestor(d.var, o.var):
            return True
    return False


def _pairing_poset(term: Integrand, matching):
    kernels = dict(term.kernels)
    relations = {(v, p) for v, p in term.parents.items() if p is not None}
    alias: Dict[str, str] = {}

    def find(v):
        while v in alias:
            v = alias[v]
        return v

    for n, (x, y) in enumerate(matching):
        a, b = term.legs[x], term.legs[y]
        if a.kind == "Z" and b.kind == "Z":
            w = f"_w{n}"
            kernels[w] = INV2
            relations |= {(w, a.var), (w, b.var)}
        elif a.kind == "dB" and b.kind == "dB":
            v1, v2 = find(a.var), find(b.var)
            if v1 == v2:
                return None
            kernels[v1] = kernels[v1] * kernels.pop(v2)
            alias[v2] = v1
        else:
            z, d = (a, b) if a.kind == "Z" else (b, a)
            v = find(d.var)
            kernels[v] = kernels[v] * INV
            relations.add((v, z.var))
    relations = {(find(lo), find(hi)) for lo, hi in relations}
    if any(lo == hi for lo, hi in relations):
        return None
    return kernels, relations


def expectation(term: Integrand) -> Dict[Pattern, KernelExpr]:
    """
    Leading coefficient of E[term] per delta pattern, with roots cut at 1 - ε.

    Returns:
        {pattern: KernelExpr in ε}; empty for an odd number of legs
    """
    out: Dict[Pattern, KernelExpr] = {}
    for matching in perfect_matchings(len(term.legs)):
        if any(_excluded(term, term.legs[x], term.legs[y]) for x, y in matching):
            continue
        poset = _pairing_poset(term, matching)
        if poset is None:
            continue
        value = poset_integral(*poset)
        if not value:
            continue
        pairs = list(term.fixed) + [(term.legs[x].letter, term.legs[y].letter) for x, y in matching]
        key = make_pattern(pairs)
        out[key] = out.get(key, KernelExpr.zero()) + value * term.coefficient
    return {k: v for k, v in out.items() if v}
