# oracle/kernel_expr.py
import logging
from fractions import Fraction
from math import comb, factorial
from typing import Dict, Iterable, Tuple, Union

logger = logging.getLogger(__name__)

Rational = Union[int, Fraction]


class DivergenceError(Exception):
    """Custom exception for singular terms that fail to cancel at an upper limit of 1"""
    pass


def _frac(value: Rational) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    raise TypeError(f"exact rational expected, got {type(value).__name__}")


class KernelExpr:
    """
    Finite sum of q · s^k · log^m s with s = 1 - r.

    Every integrand of the oracle lives in this family: r^j expands into
    powers of s, (1-r)^k is s^k for any integer k and log(1-r) is log s.
    Terms are stored as {(k, m): q}; like terms are merged and zero
    coefficients dropped, so two equal expressions compare equal.
    """
    __slots__ = ("terms",)

    def __init__(self, terms: Dict[Tuple[int, int], Rational] = None):
        clean = {}
        for (k, m), q in (terms or {}).items():
            if m < 0:
                raise ValueError(f"log power must be >= 0, got {m}")
            q = _frac(q)
            if q:
                clean[(int(k), int(m))] = q
        self.terms = clean

    # constructors

    @classmethod
    def zero(cls) -> "KernelExpr":
        return cls()

    @classmethod
    def constant(cls, q: Rational) -> "KernelExpr":
        return cls({(0, 0): q})

    @classmethod
    def s_power(cls, k: int, q: Rational = 1) -> "KernelExpr":
        """q · (1 - r)^k."""
        return cls({(k, 0): q})

    @classmethod
    def r_power(cls, j: int) -> "KernelExpr":
        """r^j = (1 - s)^j expanded in s."""
        if j < 0:
            raise ValueError(f"r power must be >= 0, got {j}")
        return cls({(i, 0): comb(j, i) * (-1) ** i for i in range(j + 1)})

    @classmethod
    def monomial(cls, q: Rational, j: int = 0, k: int = 0, m: int = 0) -> "KernelExpr":
        """q · r^j · (1 - r)^k · log^m(1 - r)."""
        return cls.r_power(j) * cls({(k, m): q})

    # arithmetic

    def __add__(self, other):
        other = _coerce(other)
        out = dict(self.terms)
        for key, q in other.terms.items():
            out[key] = out.get(key, Fraction(0)) + q
        return KernelExpr(out)

    __radd__ = __add__

    def __neg__(self):
        return KernelExpr({key: -q for key, q in self.terms.items()})

    def __sub__(self, other):
        return self + (-_coerce(other))

    def __rsub__(self, other):
        return _coerce(other) - self

    def __mul__(self, other):
        other = _coerce(other)
        out: Dict[Tuple[int, int], Fraction] = {}
        for (k1, m1), q1 in self.terms.items():
            for (k2, m2), q2 in other.terms.items():
                key = (k1 + k2, m1 + m2)
                out[key] = out.get(key, Fraction(0)) + q1 * q2
        return KernelExpr(out)

    __rmul__ = __mul__

    def __eq__(self, other):
        try:
            other = _coerce(other)
        except TypeError:
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __bool__(self):
        return bool(self.terms)

    def __repr__(self):
        return f"KernelExpr({self})"

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for (k, m), q in sorted(self.terms.items()):
            factors = [str(q)]
            if k:
                factors.append(f"s^{k}")
            if m:
                factors.append(f"log(s)^{m}")
            parts.append("*".join(factors))
        return " + ".join(parts)

    def key(self) -> Tuple:
        return tuple(sorted(self.terms.items()))

    def is_constant(self) -> bool:
        return set(self.terms) <= {(0, 0)}

    def constant_term(self) -> Fraction:
        return self.terms.get((0, 0), Fraction(0))

    # calculus

    def antiderivative(self) -> "KernelExpr":
        """F with dF/ds = self, using ∫ s^k log^m s ds in closed form."""
        out: Dict[Tuple[int, int], Fraction] = {}
        for (k, m), q in self.terms.items():
            if k == -1:
                key = (0, m + 1)
                out[key] = out.get(key, Fraction(0)) + q / (m + 1)
                continue
            n = Fraction(k + 1)
            for i in range(m + 1):
                coef = q * (-1) ** i * Fraction(factorial(m), factorial(m - i)) / n ** (i + 1)
                key = (k + 1, m - i)
                out[key] = out.get(key, Fraction(0)) + coef
        return KernelExpr(out)

    def at_one(self) -> Fraction:
        """Value at s = 1 (r = 0), where every log term vanishes."""
        return sum((q for (k, m), q in self.terms.items() if m == 0), Fraction(0))

    def integral_from_zero(self) -> "KernelExpr":
        """
        ∫₀^v f(r) dr as a function of v, written in s_v = 1 - v.

        With s = 1 - r this is ∫_{s_v}^1 f ds = F(1) - F(s_v). At a root
        variable the same expression is the integral up to 1 - ε with
        s_v = ε, which keeps the limit deferred until terms are summed.
        """
        anti = self.antiderivative()
        return KernelExpr.constant(anti.at_one()) - anti

    def singular_part(self) -> "KernelExpr":
        """Terms that do not have a finite limit as s -> 0."""
        return KernelExpr({(k, m): q for (k, m), q in self.terms.items() if k < 0 or (k == 0 and m > 0)})

    def limit_at_zero(self) -> Fraction:
        """
        Limit s -> 0: s^k log^m s -> 0 for k >= 1, the constant survives.

        Raises:
            DivergenceError: when a singular monomial has a nonzero coefficient
        """
        singular = self.singular_part()
        if singular:
            raise DivergenceError(f"singular terms do not cancel: {singular}")
        return self.constant_term()


def _coerce(value) -> KernelExpr:
    if isinstance(value, KernelExpr):
        return value
    if isinstance(value, (int, Fraction)) and not isinstance(value, bool):
        return KernelExpr.constant(value)
    raise TypeError(f"cannot combine KernelExpr with {type(value).__name__}")


def integrate(expr: KernelExpr, upper: Union[str, int] = 1) -> Union[KernelExpr, Fraction]:
    """
    Definite integral of expr over (0, upper).

    Args:
        expr: integrand in canonical form
        upper: 1 for the full unit interval, anything else names a
            variable upper limit

    Returns:
        exact Fraction when upper is 1, else a KernelExpr in the upper variable

    Raises:
        DivergenceError: singular parts left at an upper limit of 1
    """
    result = expr.integral_from_zero()
    if upper == 1:
        return result.limit_at_zero()
    return result


def total(exprs: Iterable[KernelExpr]) -> KernelExpr:
    acc = KernelExpr.zero()
    for e in exprs:
        acc = acc + e
    return acc
