# oracle/cases.py
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from oracle.kernel_expr import DivergenceError, KernelExpr
from oracle.labels import (
    FRESH_LETTERS,
    SLOT_LETTERS,
    Factor,
    OracleError,
    Slot,
    TensorLabel,
    contract,
    parse_label,
    parse_pattern,
    pattern_key,
)
from oracle.tables import (
    GOLDEN_DIR,
    CoefficientTable,
    DiffReport,
    aggregate_and_compare,
    golden_names,
    load_golden,
)
from oracle.wick import ONE, Integrand, Leg, expectation

logger = logging.getLogger(__name__)

HALF = Fraction(1, 2)
QUARTER = Fraction(1, 4)
S = KernelExpr.s_power(1)  # (1 - v) at the slot variable

TARGETS = {"t2": Fraction(2), "t3": Fraction(3)}
SLOT_DEGREE = {"I": HALF, "K": HALF, "J": Fraction(1)}  # P halves count 1 as a whole
SLOT_SIGN = {"I": -1, "K": 1, "J": 1}
ATOM_DEGREE = {"phi1": HALF, "phi2": Fraction(1), "drift": Fraction(1), "a": Fraction(1)}

# slot n lives at SLOT_VARS[n - 1]; the inner slot of a half sits below its outer one
SLOT_VARS = ("r", "rho", "delta", "theta")

_PAIRS = ("II", "IK", "KI", "KK")
T2_CASES = [f"{a};{b}" for a in _PAIRS for b in _PAIRS] + [
    "II;P", "IK;P", "KI;P", "KK;P", "P;II", "P;IK", "P;KI", "P;KK", "P;P",
]
D3_CASES = [
    "JI;JI", "IJ;JI", "JI;IJ", "IJ;IJ", "JI;JK", "IJ;JK",
    "JI;KJ", "IJ;KJ", "JK;JI", "KJ;JI", "JK;IJ", "KJ;IJ",
    "JK;JK", "KJ;JK", "JK;KJ", "KJ;KJ", "JJ;II", "JJ;IK",
    "JJ;KI", "JJ;KK", "II;JJ", "IK;JJ", "KI;JJ", "KK;JJ", "JJ;P", "P;JJ",
]
_D25_BASE = [f"{a};{b}" for b in ("P", "II", "IK", "KI", "KK") for a in ("JI", "IJ", "JK", "KJ")]
D25_CASES = _D25_BASE + [";".join(reversed(w.split(";"))) for w in _D25_BASE]
D2_CASES = list(T2_CASES)

CASE_LISTS = {"t2": T2_CASES, "d3": D3_CASES, "d2.5": D25_CASES, "d2": D2_CASES}
GROUPS = ("lead", "all", "phi1", "phi2", "pairs", "drift", "a")


@dataclass(frozen=True)
class CaseDescriptor:
    """
    One combination of the Π ⊗ Π expansion and the expansions applied to it.

    word is "AB;CD" over {I, J, K} with "P" for a whole half, order is the
    targeted power of t, and directive names the Taylor expansions that
    supply the missing order (see directives_for).
    """
    word: str
    order: str = "t2"
    directive: str = "lead"

    @property
    def halves(self) -> Tuple[str, str]:
        first, second = self.word.split(";")
        return first, second

    @property
    def kinds(self) -> Tuple[str, ...]:
        out: List[str] = []
        for half in self.halves:
            out.extend(["P", "P"] if half == "P" else list(half))
        return tuple(out)

    @property
    def degree(self) -> Fraction:
        parts = (Fraction(1) if h == "P" else SLOT_DEGREE[h[0]] + SLOT_DEGREE[h[1]] for h in self.halves)
        return sum(parts, Fraction(0))

    @property
    def extra(self) -> Fraction:
        return TARGETS[self.order] - self.degree

    def __str__(self):
        return f"({self.word}) {self.order} [{self.directive}]"


def swap_word(word: str) -> str:
    first, second = word.split(";")
    return f"{second};{first}"


def _normalize_word(text: str) -> str:
    word = text.strip().strip("()").replace(" ", "").replace(".", ";").upper()
    if ";" not in word:
        if word == "PP":
            return "P;P"
        if len(word) == 4:
            return f"{word[:2]};{word[2:]}"
        if word.startswith("P") and len(word) == 3:
            return f"P;{word[1:]}"
        if word.endswith("P") and len(word) == 3:
            return f"{word[:2]};P"
        raise OracleError(f"cannot split case word '{text}' into two halves")
    halves = word.split(";")
    if len(halves) != 2:
        raise OracleError(f"case word '{text}' must have exactly two halves")
    for half in halves:
        if half == "P":
            continue
        if len(half) != 2 or any(c not in "IJK" for c in half):
            raise OracleError(f"half '{half}' of '{text}' must be P or two letters from I, J, K")
    return ";".join(halves)


def parse_case(text: str, order: str = "t2", directive: Optional[str] = None) -> CaseDescriptor:
    """
    Build a descriptor from 'II.II', '(II;IK)', 'JI;P' or 'PP'.

    Raises:
        OracleError: unknown word, order, or a directive that does not
            supply exactly the missing order
    """
    if order not in TARGETS:
        raise OracleError(f"order must be one of {sorted(TARGETS)}, got '{order}'")
    word = _normalize_word(text)
    lead = CaseDescriptor(word, order, "lead")
    if lead.extra < 0 or lead.extra > 1:
        raise OracleError(f"({word}) has degree {lead.degree} and does not reach {order}")
    if directive is None:
        directive = "lead" if lead.extra == 0 else "all"
    desc = CaseDescriptor(word, order, directive)
    expand_directive(desc)
    return desc


# directives


Atom = Tuple[str, int]


def _parse_atom(text: str) -> Atom:
    kind, _, slot = text.partition("@")
    if kind not in ATOM_DEGREE or not slot.isdigit() or not 1 <= int(slot) <= 4:
        raise OracleError(f"bad expansion atom '{text}' (expected phi1@n, phi2@n, drift@n or a@n)")
    return kind, int(slot)


def _p_half_start(desc: CaseDescriptor, slot: int) -> Optional[int]:
    half = desc.halves[(slot - 1) // 2]
    return 2 * ((slot - 1) // 2) + 1 if half == "P" else None


def _check_atoms(desc: CaseDescriptor, atoms: Sequence[Atom]):
    kinds = desc.kinds
    if len(set(atoms)) != len(atoms):
        raise OracleError(f"{desc}: repeated expansion atom in {atoms} (use phi2@n for a second derivative)")
    for kind, slot in atoms:
        slot_kind = kinds[slot - 1]
        if kind == "phi2" and slot_kind == "J":
            raise OracleError(f"{desc}: second derivatives of varphi are out of range")
        if kind == "drift" and slot_kind != "I":
            raise OracleError(f"{desc}: the drift expansion only applies to I slots, not slot {slot}")
        if kind == "a" and slot_kind == "J":
            raise OracleError(f"{desc}: slot {slot} carries no diffusion coefficient")
    degree = sum((ATOM_DEGREE[k] for k, _ in atoms), Fraction(0))
    if degree != desc.extra:
        raise OracleError(f"{desc}: expansions add order {degree} but {desc.extra} is needed")


def directives_for(desc: CaseDescriptor) -> List[str]:
    """Every atomic directive that lifts the case to its target order."""
    kinds = desc.kinds
    extra = desc.extra
    if extra == 0:
        return ["lead"]
    if extra == HALF:
        return [f"phi1@{n}" for n in range(1, 5)]
    if extra != 1:
        raise OracleError(f"{desc}: no expansion supplies order {extra}")
    out = [f"phi2@{n}" for n in range(1, 5) if kinds[n - 1] != "J"]
    out += [f"phi1@{a}+phi1@{b}" for a, b in combinations(range(1, 5), 2)]
    out += [f"drift@{n}" for n in range(1, 5) if kinds[n - 1] == "I"]
    out += _a_places(desc)
    return out


def _a_places(desc: CaseDescriptor) -> List[str]:
    out = []
    for n, kind in enumerate(desc.kinds, start=1):
        if kind in ("I", "K"):
            out.append(f"a@{n}")
        elif kind == "P" and _p_half_start(desc, n) == n:
            out.append(f"a@{n}")
    return out


def expand_directive(desc: CaseDescriptor) -> List[List[Atom]]:
    """
    Resolve a directive into products of expansion atoms.

    Accepts group names (lead, all, phi1, phi2, pairs, drift, a), atomic
    directives such as 'phi1@1+phi1@3' and comma-separated lists of both.
    """
    out: List[List[Atom]] = []
    for part in desc.directive.replace(" ", "").split(","):
        if not part:
            continue
        if part in GROUPS:
            names = _group(desc, part)
        else:
            names = [part]
        for name in names:
            atoms = [] if name == "lead" else sorted(_parse_atom(a) for a in name.split("+"))
            _check_atoms(desc, atoms)
            out.append(atoms)
    if not out:
        raise OracleError(f"{desc}: empty directive")
    return out


def _group(desc: CaseDescriptor, group: str) -> List[str]:
    every = directives_for(desc)
    if group == "all":
        return every
    prefix = {"lead": "lead", "phi1": "phi1@", "phi2": "phi2@", "drift": "drift@", "a": "a@"}
    if group == "pairs":
        return [d for d in every if "+" in d]
    picked = [d for d in every if d.startswith(prefix[group]) and "+" not in d]
    if not picked:
        raise OracleError(f"{desc}: directive group '{group}' does not apply")
    return picked


# integrand construction


class _Builder:
    """Leading-order integrand of a case, then expansions applied slot by slot."""

    def __init__(self, desc: CaseDescriptor):
        self.desc = desc
        self.coefficient = Fraction(1)
        self.slots: List[Slot] = []
        self.factors: List[Factor] = []
        self.parents: Dict[str, Optional[str]] = {}
        self.kernels: Dict[str, KernelExpr] = {}
        self.legs: List[Leg] = []
        self.fixed: List[Tuple[str, str]] = []
        self.vars: List[str] = []
        self._fresh = iter(FRESH_LETTERS)

        for h, half in enumerate(desc.halves):
            inner, outer = SLOT_VARS[2 * h], SLOT_VARS[2 * h + 1]
            letters = SLOT_LETTERS[2 * h], SLOT_LETTERS[2 * h + 1]
            self._var(outer, None)
            if half == "P":
                # (t/2) φ_a φ_b a^{ab} at one time, a(0) = I
                self.coefficient *= HALF
                self.slots += [Slot(letters[0]), Slot(letters[1])]
                self.vars += [outer, outer]
                self.fixed.append(letters)
                continue
            self._var(inner, outer)
            for kind, var, letter in zip(half, (inner, outer), letters):
                self.vars.append(var)
                self.coefficient *= SLOT_SIGN[kind]
                if kind == "J":
                    self.slots.append(Slot(None))
                else:
                    self.slots.append(Slot(letter))
                    self.legs.append(Leg(letter, var, "Z" if kind == "I" else "dB"))

    def _var(self, name: str, parent: Optional[str], kernel: KernelExpr = ONE):
        self.parents[name] = parent
        self.kernels[name] = kernel

    def fresh(self) -> str:
        try:
            return next(self._fresh)
        except StopIteration:
            raise OracleError(f"{self.desc}: ran out of index letters")

    def _leading_leg(self, slot: int, kind: str) -> Leg:
        letter, var = SLOT_LETTERS[slot - 1], self.vars[slot - 1]
        for leg in self.legs:
            if leg.letter == letter and leg.var == var and leg.kind == kind:
                return leg
        raise OracleError(f"{self.desc}: slot {slot} has no leading {kind} leg")

    def _derive(self, slot: int, letters: Sequence[str]):
        old = self.slots[slot - 1]
        self.slots[slot - 1] = Slot(old.index, old.derivs + tuple(letters))
        for m in letters:
            self.legs.append(Leg(m, self.vars[slot - 1], "Z"))

    def apply(self, kind: str, slot: int):
        var = self.vars[slot - 1]
        slot_kind = self.desc.kinds[slot - 1]
        c = SLOT_LETTERS[slot - 1]
        if kind == "phi1":
            self._derive(slot, [self.fresh()])
            self.kernels[var] = self.kernels[var] * S
        elif kind == "phi2":
            self._derive(slot, [self.fresh(), self.fresh()])
            self.kernels[var] = self.kernels[var] * S * S
            self.coefficient *= HALF
        elif kind == "drift":
            # X/(1-v) picks up ∫ ∂_m b̄^c G^m dη below the slot
            self.legs.remove(self._leading_leg(slot, "Z"))
            eta = f"eta{slot}"
            self._var(eta, var)
            m = self.fresh()
            self.legs.append(Leg(m, eta, "Z"))
            self.factors.append(Factor("db", (c,), (m,)))
        elif slot_kind == "P":
            start = _p_half_start(self.desc, slot)
            pair = (SLOT_LETTERS[start - 1], SLOT_LETTERS[start])
            self.fixed.remove(pair)
            m, n = self.fresh(), self.fresh()
            self.legs += [Leg(m, var, "Z"), Leg(n, var, "Z")]
            self.kernels[var] = self.kernels[var] * S * S
            self.factors.append(Factor("dda", pair, (m, n)))
            self.coefficient *= HALF
        elif slot_kind == "I":
            # σ inside G expanded to ½∂²σ = ¼∂²a
            self.legs.remove(self._leading_leg(slot, "Z"))
            eta = f"eta{slot}"
            self._var(eta, var, S)
            m, n, alpha = self.fresh(), self.fresh(), self.fresh()
            self.legs += [Leg(alpha, eta, "dB"), Leg(m, eta, "Z"), Leg(n, eta, "Z")]
            self.factors.append(Factor("dda", (c, alpha), (m, n)))
            self.coefficient *= QUARTER
        else:
            leading = self._leading_leg(slot, "dB")
            alpha = self.fresh()
            m, n = self.fresh(), self.fresh()
            self.legs[self.legs.index(leading)] = Leg(alpha, var, "dB")
            self.legs += [Leg(m, var, "Z"), Leg(n, var, "Z")]
            self.kernels[var] = self.kernels[var] * S * S
            self.factors.append(Factor("dda", (c, alpha), (m, n)))
            self.coefficient *= QUARTER

    def integrand(self) -> Integrand:
        return Integrand(
            coefficient=self.coefficient,
            label=TensorLabel(tuple(self.slots), tuple(self.factors)),
            parents=dict(self.parents),
            kernels=dict(self.kernels),
            legs=list(self.legs),
            fixed=list(self.fixed),
        )


def build_integrand(desc: CaseDescriptor, atoms: Sequence[Atom]) -> Integrand:
    builder = _Builder(desc)
    for kind, slot in sorted(atoms, key=lambda a: (a[1], a[0])):
        builder.apply(kind, slot)
    return builder.integrand()


# evaluation


def cutoff_terms(desc: CaseDescriptor) -> Dict[Tuple[str, str], KernelExpr]:
    """Unlimited (ε-dependent) coefficients per (label, pattern), summed over the directive."""
    acc: Dict[Tuple[str, str], KernelExpr] = {}
    for atoms in expand_directive(desc):
        term = build_integrand(desc, atoms)
        label = term.label.render()
        for pattern, expr in expectation(term).items():
            key = (label, pattern_key(pattern))
            acc[key] = acc.get(key, KernelExpr.zero()) + expr
    return acc


def _limits(acc: Dict[Tuple[str, str], KernelExpr], desc: CaseDescriptor) -> CoefficientTable:
    table = CoefficientTable()
    try:
        for (label, pattern), expr in acc.items():
            table.add(label, pattern, expr.limit_at_zero())
        return table
    except DivergenceError:
        logger.warning(f"⚠️ {desc}: raw entries diverge separately, taking limits in contracted form")
    merged: Dict[str, KernelExpr] = {}
    for (label, pattern), expr in acc.items():
        key = contract(parse_label(label), parse_pattern(pattern)).render()
        merged[key] = merged.get(key, KernelExpr.zero()) + expr
    table = CoefficientTable()
    for label, expr in merged.items():
        try:
            table.add(label, "", expr.limit_at_zero())
        except DivergenceError as e:
            raise DivergenceError(f"{desc}: {label} keeps a singular part {expr.singular_part()}") from e
    return table


@lru_cache(maxsize=None)
def _eval_cached(desc: CaseDescriptor) -> CoefficientTable:
    return _limits(cutoff_terms(desc), desc)


def eval_case(desc: CaseDescriptor) -> CoefficientTable:
    """
    Exact coefficient of t^order in E[Π ⊗ Π] restricted to one case.

    Args:
        desc: case word, target order and expansion directive

    Returns:
        raw table over (label, δ pattern), or a contracted table when
        singular parts only cancel after contraction

    Raises:
        DivergenceError: singular parts left after contraction
        OracleError: invalid descriptor
    """
    expand_directive(desc)
    table = _eval_cached(desc)
    logger.debug(f"✅ Oracle case {desc} evaluated ({len(table)} entries)")
    return table.copy()


def evaluate_cases(descs: Sequence[CaseDescriptor], workers: int = 1) -> List[CoefficientTable]:
    """Evaluate independent cases, merged back in the given order."""
    if workers <= 1 or len(descs) <= 1:
        return [eval_case(d) for d in descs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(eval_case, descs))


# totals


def case_list(name: str) -> List[str]:
    if name not in CASE_LISTS:
        raise OracleError(f"unknown case list '{name}', expected one of {sorted(CASE_LISTS)}")
    return list(CASE_LISTS[name])


def _total(words: Sequence[str], order: str, workers: int, form: str) -> CoefficientTable:
    tables = evaluate_cases([parse_case(w, order) for w in words], workers)
    total = CoefficientTable()
    for table in tables:
        if form == "substituted":
            table = table.substituted()
        elif form == "contracted":
            table = table.contracted()
        total = total + table
    return total


def pipi_t2(workers: int = 1) -> CoefficientTable:
    """t² coefficient of E[Π ⊗ Π]: the raw sum of the 25 leading cases."""
    return _total(T2_CASES, "t2", workers, "raw")


def theta_total(workers: int = 1) -> CoefficientTable:
    """Θ̂ = ½ × the t² coefficient of E[Π ⊗ Π]."""
    return pipi_t2(workers).scale(HALF)


def s1_total(workers: int = 1) -> CoefficientTable:
    return _total(D3_CASES, "t3", workers, "substituted")


def s2_total(workers: int = 1) -> CoefficientTable:
    return _total(D25_CASES, "t3", workers, "substituted")


def s3_total(workers: int = 1) -> CoefficientTable:
    return _total(D2_CASES, "t3", workers, "substituted")


def xi_total(workers: int = 1) -> CoefficientTable:
    """Ξ̂ = ½ (𝒮₁ + 𝒮₂ + 𝒮₃) in substituted contracted form."""
    return (s1_total(workers) + s2_total(workers) + s3_total(workers)).scale(HALF)


TOTALS = {
    "pipi_t2": pipi_t2,
    "theta": theta_total,
    "s1": s1_total,
    "s2": s2_total,
    "s3": s3_total,
    "xi": xi_total,
}


def slot_swap_report(word: str, order: str) -> DiffReport:
    """Compare (AB;CD) against (CD;AB) after exchanging tensor slots, in contracted form."""
    desc = parse_case(word, order)
    mirror = parse_case(swap_word(desc.word), order)
    got = eval_case(desc).contracted().swapped()
    return aggregate_and_compare([got], eval_case(mirror).contracted(), name=f"swap {desc.word} <-> {mirror.word}")


# audit against the shipped reference tables


@dataclass
class AuditResult:
    reports: List[DiffReport] = field(default_factory=list)

    @property
    def mismatches(self) -> int:
        return len(self.failing())

    @property
    def malformed(self) -> int:
        return sum(1 for r in self.reports if r.malformed)

    @property
    def errors(self) -> int:
        return sum(1 for r in self.reports if r.errors)

    def failing(self) -> List[str]:
        """Names of the reports counted as mismatches."""
        return [r.name for r in self.reports if r.errors or (not r.ok and not r.malformed)]

    def to_dict(self) -> Dict:
        return {
            "rows": len(self.reports),
            "mismatches": self.mismatches,
            "malformed": self.malformed,
            "errors": self.errors,
            "reports": [r.to_dict() for r in self.reports],
        }


def _in_form(table: CoefficientTable, form: str) -> CoefficientTable:
    if form == "contracted":
        return table.contracted()
    if form == "substituted":
        return table.substituted()
    return table


def audit_golden(
    names: Optional[Sequence[str]] = None,
    include_totals: bool = True,
    workers: int = 1,
    directory: Path = GOLDEN_DIR,
) -> AuditResult:
    """
    Recompute every shipped reference row and report each disagreement.

    Rows flagged malformed are recomputed and listed but never counted as
    mismatches. A row the oracle cannot evaluate, or one with printed
    entries the loader had to drop, becomes an error report that counts
    as a mismatch.
    """
    result = AuditResult()
    for name in names or golden_names(directory):
        golden = load_golden(name, directory)
        for row in golden.rows:
            title = f"{name}: ({row.case}) [{row.directive or 'all'}]"
            try:
                desc = parse_case(row.case, golden.order, row.directive)
                got = _in_form(eval_case(desc), row.compare)
                want = _in_form(row.table, row.compare)
            except (OracleError, DivergenceError) as e:
                result.reports.append(
                    DiffReport(name=title, malformed=row.malformed, note=row.note, errors=[str(e)] + row.dropped)
                )
                logger.error(f"❌ {title}: not comparable ({e})")
                continue
            report = aggregate_and_compare([got], want, name=title)
            report.malformed = row.malformed
            report.note = row.note
            report.errors = list(row.dropped)
            if row.dropped:
                logger.error(f"❌ {title}: {len(row.dropped)} printed entries could not be read")
            result.reports.append(report)
        if include_totals:
            for key, expected in golden.totals.items():
                if key not in TOTALS:
                    logger.warning(f"⚠️ {name}: unknown total '{key}' skipped")
                    continue
                got = TOTALS[key](workers)
                form = "raw" if key == "pipi_t2" else "substituted"
                result.reports.append(
                    aggregate_and_compare([_in_form(got, form)], _in_form(expected, form), name=f"{name}: total {key}")
                )
    logger.info(
        f"📊 Audit: {len(result.reports)} rows, {result.mismatches} mismatches "
        f"({result.errors} errors), {result.malformed} flagged malformed"
    )
    return result
