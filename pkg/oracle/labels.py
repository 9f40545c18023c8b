# oracle/labels.py
import logging
from dataclasses import dataclass, replace
from fractions import Fraction
from itertools import permutations, product
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

logger = logging.getLogger(__name__)

LETTERS = "ijklpqrsuvwxyz"  # canonical renaming order
SLOT_LETTERS = "ijkl"  # slot n carries SLOT_LETTERS[n - 1]
FRESH_LETTERS = "pqrsuvwxyz"  # derivative and leg letters

DELTA3 = ("d(ij)d(kl)", "d(ik)d(jl)", "d(il)d(jk)")
DELTA15 = (
    "d(ij)d(kl)d(pq)", "d(ij)d(kp)d(lq)", "d(ij)d(kq)d(lp)",
    "d(ik)d(jl)d(pq)", "d(ik)d(jp)d(lq)", "d(ik)d(jq)d(lp)",
    "d(il)d(jk)d(pq)", "d(il)d(jp)d(kq)", "d(il)d(jq)d(kp)",
    "d(ip)d(jk)d(lq)", "d(ip)d(jl)d(kq)", "d(ip)d(jq)d(kl)",
    "d(iq)d(jk)d(lp)", "d(iq)d(jl)d(kp)", "d(iq)d(jp)d(kl)",
)

Pattern = FrozenSet[Tuple[str, str]]


class OracleError(Exception):
    """Custom exception for malformed case descriptors, labels and tables"""
    pass


def letter_rank(c: str) -> int:
    return LETTERS.index(c) if c in LETTERS else len(LETTERS) + ord(c)


@dataclass(frozen=True)
class Slot:
    """One tensor slot: φ_index with derivatives, or the varphi slot (index None)."""
    index: Optional[str]
    derivs: Tuple[str, ...] = ()

    @property
    def is_varphi(self) -> bool:
        return self.index is None

    def render(self) -> str:
        head = "V" if self.index is None else self.index
        return head + ("," + "".join(self.derivs) if self.derivs else "")

    def letters(self) -> List[str]:
        return ([] if self.index is None else [self.index]) + list(self.derivs)


@dataclass(frozen=True)
class Factor:
    """Extra coefficient: db^{c}_{m} = ∂_m b̄^c(0) or dda^{ab}_{mn} = ∂²_{mn} a^{ab}(0)."""
    kind: str
    upper: Tuple[str, ...]
    lower: Tuple[str, ...]

    def render(self) -> str:
        return f"{self.kind}^{{{''.join(self.upper)}}}_{{{''.join(self.lower)}}}"

    def letters(self) -> List[str]:
        return list(self.upper) + list(self.lower)


@dataclass(frozen=True)
class TensorLabel:
    slots: Tuple[Slot, ...]
    factors: Tuple[Factor, ...] = ()

    def render(self) -> str:
        body = "|".join(s.render() for s in self.slots)
        return "phi_{" + body + "}" + "".join("*" + f.render() for f in self.factors)

    __str__ = render

    def letters(self) -> List[str]:
        out = []
        for s in self.slots:
            out.extend(s.letters())
        for f in self.factors:
            out.extend(f.letters())
        return out

    def rename(self, mapping: Dict[str, str]) -> "TensorLabel":
        def m(c):
            return mapping.get(c, c)

        slots = tuple(
            Slot(None if s.index is None else m(s.index), tuple(m(c) for c in s.derivs)) for s in self.slots
        )
        factors = tuple(
            Factor(f.kind, tuple(m(c) for c in f.upper), tuple(m(c) for c in f.lower)) for f in self.factors
        )
        return TensorLabel(slots, factors)

    def swap_halves(self) -> "TensorLabel":
        """Exchange tensor slots (1,2) with (3,4)."""
        s = self.slots
        return replace(self, slots=(s[2], s[3], s[0], s[1]))

    def has_varphi(self) -> bool:
        return any(s.is_varphi for s in self.slots)


# parsing


def _parse_factor(text: str) -> Factor:
    kind, rest = text.split("^", 1)
    upper, lower = rest.split("_", 1)
    strip = lambda t: t.strip().strip("{}")  # noqa: E731
    if kind not in ("db", "dda"):
        raise OracleError(f"unknown factor '{kind}' in '{text}'")
    return Factor(kind, tuple(strip(upper)), tuple(strip(lower)))


def parse_label(text: str) -> TensorLabel:
    """
    Parse 'phi_{i,pq|jkl}*dda^{ij}_{pq}' and the compressed forms used in
    printed tables ('phi_{i,i|jj|k,k}', 'phi_{ijkl}', 'phi_{V,p|j|k|l}').

    In a group without '|', every character before the comma is its own
    slot and the comma attaches derivatives to the last of them.
    """
    text = text.strip().replace(" ", "")
    parts = text.split("*")
    head = parts[0]
    if not (head.startswith("phi_{") and head.endswith("}")):
        raise OracleError(f"label must look like phi_{{...}}: '{text}'")
    body = head[5:-1].replace(".", ",")
    slots: List[Slot] = []
    for group in body.split("|"):
        if not group:
            raise OracleError(f"empty slot group in '{text}'")
        names, _, derivs = group.partition(",")
        if not names:
            raise OracleError(f"slot group '{group}' has no index in '{text}'")
        for c in names[:-1]:
            slots.append(Slot(None if c == "V" else c))
        last = names[-1]
        slots.append(Slot(None if last == "V" else last, tuple(derivs)))
    if len(slots) != 4:
        raise OracleError(f"label needs 4 slots, got {len(slots)} in '{text}'")
    factors = tuple(_parse_factor(p) for p in parts[1:])
    return TensorLabel(tuple(slots), factors)


# delta patterns


def make_pattern(pairs: Iterable[Tuple[str, str]]) -> Pattern:
    return frozenset(tuple(sorted(p, key=letter_rank)) for p in pairs)


def pattern_key(pattern: Iterable[Tuple[str, str]]) -> str:
    pairs = sorted(
        (tuple(sorted(p, key=letter_rank)) for p in pattern),
        key=lambda p: (letter_rank(p[0]), letter_rank(p[1])),
    )
    return "".join(f"d({a}{b})" for a, b in pairs)


def parse_pattern(text: str) -> Pattern:
    text = text.replace(" ", "")
    if not text:
        return frozenset()
    pairs = []
    for chunk in text.split("d(")[1:]:
        inner = chunk.rstrip(")")
        if len(inner) != 2:
            raise OracleError(f"bad delta '{chunk}' in pattern '{text}'")
        pairs.append((inner[0], inner[1]))
    return make_pattern(pairs)


# canonical forms


def _variants(label: TensorLabel):
    slot_options = [sorted(set(permutations(s.derivs))) for s in label.slots]
    factor_options = [
        sorted(set(product(set(permutations(f.upper)), set(permutations(f.lower)))))
        if f.kind == "dda" else [(f.upper, f.lower)]
        for f in label.factors
    ]
    for derivs in product(*slot_options):
        slots = tuple(Slot(s.index, d) for s, d in zip(label.slots, derivs))
        for forms in product(*factor_options):
            factors = [Factor(f.kind, up, lo) for f, (up, lo) in zip(label.factors, forms)]
            for order in set(permutations(range(len(factors)))):
                yield TensorLabel(slots, tuple(factors[o] for o in order))


def _first_appearance(label: TensorLabel) -> TensorLabel:
    mapping: Dict[str, str] = {}
    for c in label.letters():
        if c not in mapping:
            if len(mapping) >= len(LETTERS):
                raise OracleError(f"too many distinct indices in {label}")
            mapping[c] = LETTERS[len(mapping)]
    return label.rename(mapping)


def canonical(label: TensorLabel) -> TensorLabel:
    """Lexicographically smallest renaming over the symmetric orderings of the label."""
    return min((_first_appearance(v) for v in _variants(label)), key=lambda lab: lab.render())


def contract(label: TensorLabel, pattern: Iterable[Tuple[str, str]]) -> TensorLabel:
    """
    Apply the Kronecker deltas of a pattern and canonicalize.

    Every index of the result must be a dummy index (appear exactly twice).
    """
    parent = {c: c for c in label.letters()}
    for a, b in pattern:
        parent.setdefault(a, a)
        parent.setdefault(b, b)

    def find(c):
        while parent[c] != c:
            parent[c] = parent[parent[c]]
            c = parent[c]
        return c

    for a, b in pattern:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb, key=letter_rank)] = min(ra, rb, key=letter_rank)
    contracted = label.rename({c: find(c) for c in parent})
    counts: Dict[str, int] = {}
    for c in contracted.letters():
        counts[c] = counts.get(c, 0) + 1
    free = sorted(c for c, n in counts.items() if n != 2)
    if free:
        raise OracleError(f"indices {free} are not fully contracted in {label} with {pattern_key(pattern)}")
    return canonical(contracted)


def _unused_letter(label: TensorLabel) -> str:
    used = set(label.letters())
    for c in LETTERS:
        if c not in used:
            return c
    raise OracleError(f"no free index letter left for {label}")


def substitute_varphi(label: TensorLabel) -> List[Tuple[Fraction, TensorLabel]]:
    """
    Rewrite varphi slots of a contracted label in terms of φ, ∂b̄ and ∂²φ.

    varphi(0) = ½ φ_{c,c} and ∂_m varphi(0) = ∂_m b̄^c φ_c + ½ φ_{c,mc}.
    """
    pending = [(Fraction(1), label)]
    done: List[Tuple[Fraction, TensorLabel]] = []
    while pending:
        coef, lab = pending.pop()
        pos = next((n for n, s in enumerate(lab.slots) if s.is_varphi), None)
        if pos is None:
            done.append((coef, canonical(lab)))
            continue
        slot = lab.slots[pos]
        c = _unused_letter(lab)

        def put(new_slot, extra=()):
            slots = list(lab.slots)
            slots[pos] = new_slot
            return TensorLabel(tuple(slots), lab.factors + tuple(extra))

        if not slot.derivs:
            pending.append((coef / 2, put(Slot(c, (c,)))))
        elif len(slot.derivs) == 1:
            m = slot.derivs[0]
            pending.append((coef, put(Slot(c), [Factor("db", (c,), (m,))])))
            pending.append((coef / 2, put(Slot(c, (m, c)))))
        else:
            raise OracleError(f"second derivatives of varphi are not tracked: {lab}")
    merged: Dict[str, Tuple[Fraction, TensorLabel]] = {}
    for coef, lab in done:
        key = lab.render()
        prev = merged.get(key, (Fraction(0), lab))[0]
        merged[key] = (prev + coef, lab)
    return [(c, lab) for c, lab in merged.values() if c]


def basis_of(patterns: Sequence[str]) -> str:
    """Name of the printed basis that holds every pattern, if any."""
    keys = set(patterns)
    if keys <= {""}:
        return "contracted"
    if keys <= set(DELTA3):
        return "delta3"
    if keys <= set(DELTA15):
        return "delta15"
    return "mixed"
