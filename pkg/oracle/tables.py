# oracle/tables.py
import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Tuple, Union

from oracle.labels import (
    OracleError,
    TensorLabel,
    basis_of,
    canonical,
    contract,
    parse_label,
    parse_pattern,
    pattern_key,
    substitute_varphi,
)

logger = logging.getLogger(__name__)

GOLDEN_DIR = Path(__file__).parent / "golden"

LabelLike = Union[str, TensorLabel]


def _label_text(label: LabelLike, contracted: bool = False) -> str:
    lab = label if isinstance(label, TensorLabel) else parse_label(label)
    # contracted entries are keyed by their canonical renaming
    return canonical(lab).render() if contracted else lab.render()


def _pattern_text(pattern) -> str:
    if isinstance(pattern, str):
        return pattern_key(parse_pattern(pattern))
    return pattern_key(pattern)


def parse_value(text) -> Fraction:
    """'7/48', '-1/12', '0' or an int; floats are rejected."""
    if isinstance(text, bool) or isinstance(text, float):
        raise OracleError(f"coefficients must be exact rationals, got {text!r}")
    try:
        return Fraction(str(text).replace(" ", ""))
    except (ValueError, ZeroDivisionError) as e:
        raise OracleError(f"bad rational '{text}'") from e


class CoefficientTable:
    """
    Exact coefficients keyed by (tensor label, Kronecker-delta pattern).

    Labels and patterns are stored in their rendered canonical text so
    that tables compare, hash and serialize without further work. A
    contracted table carries the empty pattern on every entry.
    """

    def __init__(self, entries: Dict[Tuple[str, str], Fraction] = None):
        self.entries: Dict[Tuple[str, str], Fraction] = {}
        for (label, pattern), value in (entries or {}).items():
            self.add(label, pattern, value)

    def add(self, label: LabelLike, pattern, value) -> "CoefficientTable":
        pattern = _pattern_text(pattern)
        key = (_label_text(label, contracted=not pattern), pattern)
        total = self.entries.get(key, Fraction(0)) + (value if isinstance(value, Fraction) else parse_value(value))
        if total:
            self.entries[key] = total
        else:
            self.entries.pop(key, None)
        return self

    def get(self, label: LabelLike, pattern="") -> Fraction:
        pattern = _pattern_text(pattern)
        return self.entries.get((_label_text(label, contracted=not pattern), pattern), Fraction(0))

    def items(self) -> Iterator[Tuple[Tuple[str, str], Fraction]]:
        return iter(sorted(self.entries.items()))

    def __len__(self):
        return len(self.entries)

    def __bool__(self):
        return bool(self.entries)

    def __eq__(self, other):
        if not isinstance(other, CoefficientTable):
            return NotImplemented
        return self.entries == other.entries

    def __add__(self, other: "CoefficientTable") -> "CoefficientTable":
        out = self.copy()
        for (label, pattern), value in other.entries.items():
            out.add(label, pattern, value)
        return out

    def __sub__(self, other: "CoefficientTable") -> "CoefficientTable":
        return self + other.scale(-1)

    def __repr__(self):
        return f"CoefficientTable({len(self)} entries, basis={self.basis})"

    def copy(self) -> "CoefficientTable":
        out = CoefficientTable()
        out.entries = dict(self.entries)
        return out

    def scale(self, factor) -> "CoefficientTable":
        factor = Fraction(factor)
        out = CoefficientTable()
        for key, value in self.entries.items():
            if value * factor:
                out.entries[key] = value * factor
        return out

    @property
    def basis(self) -> str:
        return basis_of([p for _, p in self.entries])

    # rewriting

    def contracted(self) -> "CoefficientTable":
        """Apply every δ pattern to its label and merge equal canonical labels."""
        out = CoefficientTable()
        for (label, pattern), value in self.entries.items():
            out.add(contract(parse_label(label), parse_pattern(pattern)), "", value)
        return out

    def substituted(self) -> "CoefficientTable":
        """Contracted form with every varphi slot rewritten through φ, ∂b̄ and ∂²φ."""
        out = CoefficientTable()
        for (label, _), value in self.contracted().entries.items():
            for coef, lab in substitute_varphi(parse_label(label)):
                out.add(lab, "", value * coef)
        return out

    def swapped(self) -> "CoefficientTable":
        """Exchange the (1,2) and (3,4) tensor slots of every label."""
        out = CoefficientTable()
        for (label, pattern), value in self.entries.items():
            out.add(parse_label(label).swap_halves(), pattern, value)
        return out

    def restricted(self, labels: Iterable[str]) -> "CoefficientTable":
        keep = {_label_text(lab) for lab in labels}
        return CoefficientTable({k: v for k, v in self.entries.items() if k[0] in keep})

    # serialization

    def to_dict(self) -> Dict:
        return {
            "basis": self.basis,
            "entries": [
                {"label": label, "pattern": pattern, "value": str(value)}
                for (label, pattern), value in self.items()
            ],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "CoefficientTable":
        if "entries" not in data:
            raise OracleError("coefficient table JSON needs an 'entries' list")
        table = cls()
        for entry in data["entries"]:
            table.add(entry["label"], entry.get("pattern", ""), parse_value(entry["value"]))
        declared = data.get("basis")
        if declared and table and declared != table.basis:
            logger.warning(f"⚠️ Declared basis '{declared}' but entries span '{table.basis}'")
        return table

    def to_json(self, path: Union[str, Path]):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "CoefficientTable":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# comparison


@dataclass
class DiffRow:
    label: str
    pattern: str
    computed: Fraction
    expected: Fraction

    def to_dict(self) -> Dict:
        return {
            "label": self.label,
            "pattern": self.pattern,
            "computed": str(self.computed),
            "expected": str(self.expected),
        }


@dataclass
class DiffReport:
    rows: List[DiffRow] = field(default_factory=list)
    compared: int = 0
    name: str = ""
    malformed: bool = False
    note: str = ""
    errors: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.rows and not self.errors

    def to_dict(self) -> Dict:
        return {
            "name": self.name,
            "ok": self.ok,
            "compared": self.compared,
            "malformed": self.malformed,
            "note": self.note,
            "errors": list(self.errors),
            "mismatches": [r.to_dict() for r in self.rows],
        }


def aggregate_and_compare(
    tables: Iterable[CoefficientTable],
    expected: CoefficientTable,
    name: str = "",
) -> DiffReport:
    """
    Sum tables exactly and list every entry where the sum differs from expected.

    Mismatches are data: nothing is raised and nothing is accepted silently.
    """
    total = CoefficientTable()
    for table in tables:
        total = total + table
    keys = sorted(set(total.entries) | set(expected.entries))
    report = DiffReport(compared=len(keys), name=name)
    for key in keys:
        got = total.entries.get(key, Fraction(0))
        want = expected.entries.get(key, Fraction(0))
        if got != want:
            report.rows.append(DiffRow(key[0], key[1], got, want))
    if report.rows:
        logger.warning(f"⚠️ {name or 'table'}: {len(report.rows)} of {len(keys)} entries differ")
    else:
        logger.info(f"✅ {name or 'table'}: {len(keys)} entries agree")
    return report


# golden reference tables


@dataclass
class GoldenRow:
    """One printed row: a case, the expansion it covers and its coefficients."""
    case: str
    directive: Optional[str]
    table: CoefficientTable
    compare: str = "raw"
    malformed: bool = False
    note: str = ""
    dropped: List[str] = field(default_factory=list)
    corrected: List[str] = field(default_factory=list)


@dataclass
class GoldenFile:
    name: str
    order: str
    rows: List[GoldenRow]
    totals: Dict[str, CoefficientTable] = field(default_factory=dict)


def _golden_row(data: Dict) -> GoldenRow:
    """
    Parse one printed row.

    Entries that cannot be read are kept as raw text in `dropped` so the
    audit can report them; `malformed` only mirrors the row's own flag for
    rows whose printed coefficient list does not fit the pattern basis.
    Entries carrying a "printed" pattern or "printed_value" are corrections
    of the source text and are listed in `corrected`.
    """
    table = CoefficientTable()
    dropped, corrected = [], []
    compare = data.get("compare", "raw")
    for entry in data.get("entries", []):
        raw = json.dumps(entry, sort_keys=True, ensure_ascii=False)
        try:
            label, pattern = entry["label"], entry.get("pattern", "")
            if compare != "raw":
                # printed typos show up as indices that do not pair off
                contract(parse_label(label), parse_pattern(pattern))
            table.add(label, pattern, parse_value(entry["value"]))
        except (OracleError, KeyError, ValueError) as e:
            dropped.append(f"{raw}: {e}")
            where = f"({data.get('case')}) [{data.get('directive')}]"
            logger.warning(f"⚠️ Dropped golden entry for {where}: {raw} ({e})")
            continue
        if "printed" in entry or "printed_value" in entry:
            corrected.append(raw)
    return GoldenRow(
        case=data["case"],
        directive=data.get("directive"),
        table=table,
        compare=compare,
        malformed=bool(data.get("malformed")),
        note=data.get("note", ""),
        dropped=dropped,
        corrected=corrected,
    )



def load_golden(name: str, directory: Path = GOLDEN_DIR) -> GoldenFile:
    """
    Load a shipped reference table.

    Args:
        name: file stem under oracle/golden (e.g. "leading_t2")
        directory: override for tests

    Raises:
        OracleError: when the file is missing or not a golden table
    """
    path = Path(directory) / f"{name}.json"
    if not path.exists():
        raise OracleError(f"no golden table named '{name}' in {directory}")
    data = json.loads(path.read_text(encoding="utf-8"))
    if "rows" not in data:
        raise OracleError(f"{path} is not a golden table (missing 'rows')")
    rows = [_golden_row(r) for r in data["rows"]]
    totals = {key: CoefficientTable.from_dict(t) for key, t in data.get("totals", {}).items()}
    bad = sum(r.malformed for r in rows)
    dropped = sum(len(r.dropped) for r in rows)
    logger.info(
        f"📊 Loaded golden '{name}': {len(rows)} rows, {len(totals)} totals, "
        f"{bad} flagged malformed, {dropped} entries dropped"
    )
    return GoldenFile(name=name, order=data.get("order", ""), rows=rows, totals=totals)


def golden_names(directory: Path = GOLDEN_DIR) -> List[str]:
    return sorted(p.stem for p in Path(directory).glob("*.json"))
