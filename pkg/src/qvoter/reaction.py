"""Reaction term of the density ODE, assembled exactly from coalescence fates.

The drift of the ones-density is a polynomial

    phi(u) = sum_m r[m] * (rho0_m(u) - rho1_m(u)),

where ``rho_m^i(u)`` is the probability, under the voter equilibrium at
density u, that the origin holds opinion i with exactly m disagreeing
neighbors.  Every monomial difference collapses to

    delta_ab(u) = u^a (1-u)^(b+1) - u^(b+1) (1-u)^a,

each of which is exactly divisible by u(1-u)(1-2u).  phi therefore factors as

    phi(u) = sign * c * u(1-u)(1-2u) * f(u),   f(0) = f(1) = 1,

with sign +1 in the coexistence regime (q < 1) and -1 in the clustering
regime (q > 1).  For the q-voter rate tables f is strictly positive on
[0, 1]; the underlying inequality is checked combinatorially by
:func:`check_rate_inequalities`.

All arithmetic is exact (``fractions.Fraction``) whenever the fate
probabilities are rational; rate-table floats are lifted to their exact
binary values so that the factorization identities hold with zero remainder.
Float-probability inputs fall back to float coefficients with a tracked
remainder tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

from .dynamics import RateTable

__all__ = [
    "UPolynomial",
    "ReactionTerm",
    "DeltaFactorization",
    "perturbation_rates",
    "delta_ab",
    "phi_from_fates",
    "phi_k3_explicit",
    "fate_signatures",
    "signature_group_coefficients",
    "check_rate_inequalities",
    "CUBIC",
]


def _is_exact(x) -> bool:
    return isinstance(x, (int, Fraction))


class UPolynomial:
    """Polynomial in the density u, monomial basis, exact or float coefficients."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        cs = list(coeffs)
        while cs and cs[-1] == 0:
            cs.pop()
        self.coeffs = tuple(cs)

    @staticmethod
    def zero() -> "UPolynomial":
        return UPolynomial(())

    @staticmethod
    def one() -> "UPolynomial":
        return UPolynomial((Fraction(1),))

    @staticmethod
    def from_uab(a: int, b: int) -> "UPolynomial":
        """The monomial u^a (1-u)^b, expanded with integer coefficients."""
        cs = [Fraction(0)] * (a + b + 1)
        for i in range(b + 1):
            cs[a + i] = Fraction((-1) ** i * math.comb(b, i))
        return UPolynomial(cs)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    @property
    def is_exact(self) -> bool:
        return all(_is_exact(c) for c in self.coeffs)

    def __call__(self, u):
        acc = 0
        for c in reversed(self.coeffs):
            acc = acc * u + c
        return acc

    def __add__(self, other: "UPolynomial") -> "UPolynomial":
        n = max(len(self.coeffs), len(other.coeffs))
        a = list(self.coeffs) + [0] * (n - len(self.coeffs))
        for i, c in enumerate(other.coeffs):
            a[i] = a[i] + c
        return UPolynomial(a)

    def __sub__(self, other: "UPolynomial") -> "UPolynomial":
        return self + other.scale(-1)

    def __mul__(self, other: "UPolynomial") -> "UPolynomial":
        if self.is_zero or other.is_zero:
            return UPolynomial.zero()
        out = [0] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            for j, b in enumerate(other.coeffs):
                out[i + j] = out[i + j] + a * b
        return UPolynomial(out)

    def scale(self, s) -> "UPolynomial":
        return UPolynomial(c * s for c in self.coeffs)

    def reflect(self) -> "UPolynomial":
        """The polynomial p(1-u)."""
        out = UPolynomial.zero()
        for a, c in enumerate(self.coeffs):
            if c != 0:
                out = out + UPolynomial.from_uab(0, a).scale(c)
        return out

    def divmod_by(self, divisor: "UPolynomial"):
        """Long division; returns (quotient, remainder)."""
        if divisor.is_zero:
            raise ZeroDivisionError("division by the zero polynomial")
        rem = list(self.coeffs)
        dd = divisor.degree
        lead = divisor.coeffs[-1]
        q = [0] * max(len(rem) - dd, 0)
        for i in range(len(rem) - 1, dd - 1, -1):
            if rem[i] == 0:
                continue
            f = rem[i] / lead if not _is_exact(rem[i]) or not _is_exact(lead) \
                else Fraction(rem[i], 1) / lead
            q[i - dd] = f
            for j, c in enumerate(divisor.coeffs):
                rem[i - dd + j] = rem[i - dd + j] - f * c
            rem[i] = 0
        return UPolynomial(q), UPolynomial(rem)

    def l1_norm(self) -> float:
        return float(sum(abs(c) for c in self.coeffs))

    def as_floats(self) -> tuple:
        return tuple(float(c) for c in self.coeffs)

    def __eq__(self, other) -> bool:
        return isinstance(other, UPolynomial) and len(self.coeffs) == len(other.coeffs) \
            and all(a == b for a, b in zip(self.coeffs, other.coeffs))

    def __repr__(self) -> str:
        if self.is_zero:
            return "UPolynomial(0)"
        parts = []
        for i, c in enumerate(self.coeffs):
            if c == 0:
                continue
            parts.append(f"{c}" if i == 0 else (f"{c}*u" if i == 1 else f"{c}*u^{i}"))
        return "UPolynomial(" + " + ".join(parts) + ")"


# u(1-u)(1-2u) = u - 3u^2 + 2u^3, the cubic every reaction term factors through
CUBIC = UPolynomial((Fraction(0), Fraction(1), Fraction(-3), Fraction(2)))


@dataclass(frozen=True)
class DeltaFactorization:
    """Structured form delta = sign * (u(1-u))^square_power * (1-2u) * cofactor,
    with cofactor the telescoped sum  sum_j u^j (1-u)^(deg-j) > 0 on [0,1]."""

    sign: int
    square_power: int
    cofactor: UPolynomial

    def assemble(self) -> UPolynomial:
        sq = UPolynomial.from_uab(1, 1)
        out = UPolynomial((Fraction(1), Fraction(-2)))  # 1 - 2u
        for _ in range(self.square_power):
            out = out * sq
        return (out * self.cofactor).scale(self.sign)


def _telescope(m: int) -> UPolynomial:
    """sum_{j=0}^{m} u^j (1-u)^(m-j); equals 1 for m = 0."""
    out = UPolynomial.zero()
    for j in range(m + 1):
        out = out + UPolynomial.from_uab(j, m - j)
    return out


def delta_ab(a: int, b: int):
    """The opinion-swap difference u^a(1-u)^(b+1) - u^(b+1)(1-u)^a.

    Returns (polynomial, DeltaFactorization or None); the factorization is
    None exactly when a == b + 1 and the polynomial vanishes identically.
    """
    if a < 0 or b < 0:
        raise ValueError("a and b must be nonnegative")
    poly = UPolynomial.from_uab(a, b + 1) - UPolynomial.from_uab(b + 1, a)
    if a == b + 1:
        return poly, None
    if a <= b:
        fact = DeltaFactorization(sign=1, square_power=a, cofactor=_telescope(b - a))
    else:  # a > b + 1
        fact = DeltaFactorization(sign=-1, square_power=b + 1, cofactor=_telescope(a - b - 2))
    return poly, fact


def perturbation_rates(k: int, regime: str) -> RateTable:
    """q-voter perturbation rate table: r[i] = +-(i/k) log(k/i), r[0] = r[k] = 0.

    ``regime`` selects the sign: "q<1" (coexistence, +) or "q>1"
    (clustering, -); the aliases "qlt1"/"qgt1" are accepted.
    """
    if k < 3:
        raise ValueError(f"k must be >= 3, got {k}")
    key = regime.replace(" ", "").lower()
    if key in ("q<1", "qlt1"):
        sgn = 1.0
    elif key in ("q>1", "qgt1"):
        sgn = -1.0
    else:
        raise ValueError(f"unknown regime {regime!r}; use 'q<1' or 'q>1'")
    vals = [0.0]
    for i in range(1, k + 1):
        vals.append(sgn * (i / k) * math.log(k / i))
    vals[k] = 0.0
    return RateTable(k=k, values=tuple(vals))


@dataclass
class ReactionTerm:
    """phi together with its factored form phi = sign * c * cubic * f."""

    phi: UPolynomial
    sign: int
    c_k: object  # Fraction in exact mode, float otherwise
    f_k: UPolynomial
    positive_on_grid: bool = True

    @staticmethod
    def from_phi(phi: UPolynomial, tol: float | None = None) -> "ReactionTerm":
        """Factor phi through u(1-u)(1-2u) and normalize f(0) = 1.

        Raises ValueError if the division leaves a remainder (beyond ``tol``
        in float mode) or if the cofactor cannot be normalized.
        """
        exact = phi.is_exact
        if phi.is_zero:
            return ReactionTerm(phi=phi, sign=1,
                                c_k=Fraction(0) if exact else 0.0,
                                f_k=UPolynomial.one())
        quot, rem = phi.divmod_by(CUBIC)
        if exact:
            if not rem.is_zero:
                raise ValueError(f"nonzero remainder after division: {rem!r}")
        else:
            if tol is None:
                tol = 1e-12 * phi.l1_norm()
            if rem.l1_norm() > tol:
                raise ValueError(
                    f"division remainder {rem.l1_norm():.3g} exceeds tolerance {tol:.3g}"
                )
        c0 = quot(Fraction(0) if exact else 0.0)
        if c0 == 0:
            raise ValueError("cofactor vanishes at u=0; cannot normalize f(0)=1")
        sign = 1 if c0 > 0 else -1
        c_k = c0 if sign > 0 else -c0
        f = quot.scale(Fraction(1, 1) / c0 if exact else 1.0 / c0)
        term = ReactionTerm(phi=phi, sign=sign, c_k=c_k, f_k=f)
        term.positive_on_grid = term.check_positivity()
        return term

    def check_positivity(self, steps: int = 1000) -> bool:
        """f > 0 on the grid i/steps, i = 0..steps (exact when coefficients are)."""
        exact = self.f_k.is_exact
        for i in range(steps + 1):
            u = Fraction(i, steps) if exact else i / steps
            if self.f_k(u) <= 0:
                return False
        return True

    def f_at_one(self):
        return self.f_k(Fraction(1) if self.f_k.is_exact else 1.0)

    def drift(self, u):
        """phi evaluated at u (float convenience)."""
        return float(self.phi(u))

    def factored_str(self) -> str:
        fparts = " + ".join(
            f"{float(c):.6g}*u^{i}" if i else f"{float(c):.6g}"
            for i, c in enumerate(self.f_k.coeffs) if c != 0
        )
        s = "+" if self.sign > 0 else "-"
        return f"{s}{float(self.c_k):.10g} * u(1-u)(1-2u) * [{fparts}]"

    def to_csv(self, fh) -> None:
        own = isinstance(fh, (str, bytes))
        f = open(fh, "w") if own else fh
        try:
            f.write(f"# sign={self.sign} c_k={float(self.c_k):.17g}\n")
            f.write("power,phi_coeff,f_coeff\n")
            n = max(len(self.phi.coeffs), len(self.f_k.coeffs))
            for i in range(n):
                pc = float(self.phi.coeffs[i]) if i < len(self.phi.coeffs) else 0.0
                fc = float(self.f_k.coeffs[i]) if i < len(self.f_k.coeffs) else 0.0
                f.write(f"{i},{pc:.17g},{fc:.17g}\n")
        finally:
            if own:
                f.close()


def fate_signatures(k: int):
    """All coalescence fates (s0, sizes): s0 neighbors merge with the origin's
    walker and the rest form clusters of the given ascending sizes."""
    def partitions(total, mn):
        if total == 0:
            yield ()
            return
        for first in range(mn, total + 1):
            for rest in partitions(total - first, first):
                yield (first,) + rest

    out = []
    for s0 in range(k + 1):
        for sizes in partitions(k - s0, 1):
            out.append((s0, sizes))
    return out


def _rate_values(rates: RateTable, exact: bool):
    vals = rates.as_array()
    if exact:
        return [Fraction(float(v)) for v in vals]
    return [float(v) for v in vals]


def signature_group_coefficients(sizes, rvals):
    """Per-fate bookkeeping: for each canonical index c (1 <= c <= j//2) the
    coefficient of delta_{c, j-c} is

        sum_{|S|=c} r[size(S)]  -  sum_{|S|=j+1-c} r[size(S)],

    where S ranges over subsets of the fate's clusters.  Returns a list of
    (c, positive_part, negative_part)."""
    j = len(sizes)
    sums_by_card = [[] for _ in range(j + 1)]
    for card in range(j + 1):
        for combo in combinations(sizes, card):
            sums_by_card[card].append(sum(combo))
    out = []
    for c in range(1, j // 2 + 1):
        y = sum(rvals[s] for s in sums_by_card[c])
        x = sum(rvals[s] for s in sums_by_card[j + 1 - c])
        out.append((c, y, x))
    return out


def phi_from_fates(fates, rates: RateTable) -> ReactionTerm:
    """Assemble phi from a fate distribution and a rate table, then factor it.

    ``fates`` needs attributes ``k`` and ``probabilities`` (a mapping from
    (s0, sizes) to probability).  Exact-rational probabilities give an
    exact-rational phi; the rate floats are lifted to their exact binary
    values so the factorization identity is tested with zero remainder.
    """
    if rates.k != fates.k:
        raise ValueError(f"rates are for k={rates.k}, fates for k={fates.k}")
    probs = dict(fates.probabilities.items())
    exact = all(_is_exact(p) for p in probs.values())
    rvals = _rate_values(rates, exact)
    phi = UPolynomial.zero()
    for key, p in probs.items():
        s0, sizes = _as_signature(key)
        if p == 0 or not sizes:
            continue
        j = len(sizes)
        for c, y, x in signature_group_coefficients(sizes, rvals):
            coeff = (y - x) * p
            if coeff != 0:
                poly, _ = delta_ab(c, j - c)
                phi = phi + poly.scale(coeff)
    return ReactionTerm.from_phi(phi)


def _as_signature(key):
    """Normalize a fate key to (s0, ascending size tuple)."""
    if isinstance(key, str):
        head, _, tail = key.partition(";")
        sizes = tuple(int(s) for s in tail.split(",") if s.strip()) if tail else ()
        return int(head), tuple(sorted(sizes))
    s0, sizes = key
    return int(s0), tuple(sorted(int(s) for s in sizes))


def phi_k3_explicit(p, rates: RateTable) -> ReactionTerm:
    """Closed form for k = 3: the factored cofactor is the constant

        r1*(2*p{1;1,1} + p{0;2,1} + 3*p{0;1,1,1}) + r2*(p{0;2,1} - p{1;1,1}).

    ``p`` maps fate keys (tuples or "s0;s1,..." strings) to probabilities;
    fates other than the three above cannot contribute and are ignored.
    """
    if rates.k != 3:
        raise ValueError("explicit form is for k=3")
    probs = {_as_signature(key): v for key, v in p.items()}
    if any(v < 0 for v in probs.values()):
        raise ValueError("probabilities must be nonnegative")
    exact = all(_is_exact(v) for v in probs.values())
    r = _rate_values(rates, exact)
    zero = Fraction(0) if exact else 0.0
    p111 = probs.get((1, (1, 1)), zero)
    p021 = probs.get((0, (1, 2)), zero)
    p0111 = probs.get((0, (1, 1, 1)), zero)
    c = r[1] * (2 * p111 + p021 + 3 * p0111) + r[2] * (p021 - p111)
    return ReactionTerm.from_phi(CUBIC.scale(c))


def check_rate_inequalities(k: int, rates: RateTable):
    """Exhaustive check of the grouped rate inequality behind positivity:
    for every fate of k neighbors and every canonical group, the subset-sum
    rates must satisfy  sum r[x_i] < sum r[y_i].  Returns the list of
    violations (empty when the positivity structure holds)."""
    rvals = [float(v) for v in rates.as_array()]
    violations = []
    for s0, sizes in fate_signatures(k):
        for c, y, x in signature_group_coefficients(sizes, rvals):
            if not y > x:
                violations.append(((s0, sizes), c, x, y))
    return violations
