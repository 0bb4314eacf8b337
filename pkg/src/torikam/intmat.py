"""Exact integer matrices in GL(N, Z), integer polynomials and arithmetic predicates."""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
import sympy


class DimensionError(ValueError):
    pass


class DeterminantError(ValueError):
    pass


# ---------------------------------------------------------------------------
# plain helpers on tuple-of-tuple integer matrices (no determinant restriction)
# ---------------------------------------------------------------------------

def _as_rows(entries) -> tuple[tuple[int, ...], ...]:
    rows = tuple(tuple(int(x) for x in row) for row in entries)
    n = len(rows)
    if n == 0 or any(len(r) != n for r in rows):
        raise DimensionError("matrix must be square and non-empty")
    return rows


def _mul(a, b):
    n = len(a)
    bt = list(zip(*b))
    return tuple(tuple(sum(x * y for x, y in zip(row, col)) for col in bt) for row in a)


def _identity(n: int):
    return tuple(tuple(1 if i == j else 0 for j in range(n)) for i in range(n))


def _sub(a, b):
    return tuple(tuple(x - y for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def _is_zero(a) -> bool:
    return all(x == 0 for row in a for x in row)


def bareiss_det(rows) -> int:
    """Fraction-free determinant."""
    m = [list(r) for r in rows]
    n = len(m)
    sign = 1
    prev = 1
    for k in range(n - 1):
        if m[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if m[i][k] != 0), None)
            if swap is None:
                return 0
            m[k], m[swap] = m[swap], m[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
        prev = m[k][k]
    return sign * m[n - 1][n - 1]


def rational_inverse(rows) -> list[list[Fraction]] | None:
    """Gauss-Jordan inverse over Q; None when singular."""
    n = len(rows)
    m = [[Fraction(x) for x in r] + [Fraction(int(i == j)) for j in range(n)] for i, r in enumerate(rows)]
    for c in range(n):
        piv = next((i for i in range(c, n) if m[i][c] != 0), None)
        if piv is None:
            return None
        m[c], m[piv] = m[piv], m[c]
        inv = 1 / m[c][c]
        m[c] = [x * inv for x in m[c]]
        for i in range(n):
            if i != c and m[i][c] != 0:
                f = m[i][c]
                m[i] = [x - f * y for x, y in zip(m[i], m[c])]
    return [row[n:] for row in m]


def rational_rank(rows) -> int:
    m = [[Fraction(x) for x in r] for r in rows]
    if not m:
        return 0
    ncol = len(m[0])
    rank = 0
    for c in range(ncol):
        piv = next((i for i in range(rank, len(m)) if m[i][c] != 0), None)
        if piv is None:
            continue
        m[rank], m[piv] = m[piv], m[rank]
        for i in range(len(m)):
            if i != rank and m[i][c] != 0:
                f = m[i][c] / m[rank][c]
                m[i] = [x - f * y for x, y in zip(m[i], m[rank])]
        rank += 1
    return rank


def rational_kernel(rows) -> list[list[Fraction]]:
    """Basis of the right kernel over Q (reduced row echelon)."""
    m = [[Fraction(x) for x in r] for r in rows]
    ncol = len(m[0]) if m else 0
    pivots = []
    r = 0
    for c in range(ncol):
        piv = next((i for i in range(r, len(m)) if m[i][c] != 0), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        inv = 1 / m[r][c]
        m[r] = [x * inv for x in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                m[i] = [x - f * y for x, y in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
    free = [c for c in range(ncol) if c not in pivots]
    basis = []
    for f in free:
        vec = [Fraction(0)] * ncol
        vec[f] = Fraction(1)
        for i, pc in enumerate(pivots):
            vec[pc] = -m[i][f]
        basis.append(vec)
    return basis


# ---------------------------------------------------------------------------
# IntMatrix
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=True)
class IntMatrix:
    """Exact N x N integer matrix with determinant +1 or -1."""

    entries: tuple[tuple[int, ...], ...]

    def __init__(self, entries, _checked: bool = False):
        rows = _as_rows(entries)
        if not _checked:
            d = bareiss_det(rows)
            if d not in (1, -1):
                raise DeterminantError(f"determinant {d} is not +1 or -1")
        object.__setattr__(self, "entries", rows)

    @property
    def dim(self) -> int:
        return len(self.entries)

    @classmethod
    def identity(cls, n: int) -> "IntMatrix":
        return cls(_identity(n), _checked=True)

    @classmethod
    def block_diag(cls, *blocks: "IntMatrix") -> "IntMatrix":
        n = sum(b.dim for b in blocks)
        rows = [[0] * n for _ in range(n)]
        off = 0
        for b in blocks:
            for i in range(b.dim):
                for j in range(b.dim):
                    rows[off + i][off + j] = b.entries[i][j]
            off += b.dim
        return cls(rows)

    def det(self) -> int:
        return bareiss_det(self.entries)

    def transpose(self) -> "IntMatrix":
        return IntMatrix(tuple(zip(*self.entries)), _checked=True)

    def inv(self) -> "IntMatrix":
        return _inverse_cached(self)

    def __matmul__(self, other):
        if isinstance(other, IntMatrix):
            return mat_mul(self, other)
        return self.apply(other)

    def __pow__(self, k: int) -> "IntMatrix":
        return mat_pow(self, k)

    def apply(self, v: Sequence[int]) -> tuple[int, ...]:
        """Exact matrix-vector product."""
        if len(v) != self.dim:
            raise DimensionError("vector length mismatch")
        return tuple(sum(a * int(b) for a, b in zip(row, v)) for row in self.entries)

    def to_float(self) -> np.ndarray:
        return np.array([[float(x) for x in r] for r in self.entries], dtype=np.float64)

    def to_object(self) -> np.ndarray:
        a = np.empty((self.dim, self.dim), dtype=object)
        for i, r in enumerate(self.entries):
            for j, x in enumerate(r):
                a[i, j] = x
        return a

    def minus_identity(self) -> tuple[tuple[int, ...], ...]:
        return _sub(self.entries, _identity(self.dim))

    def is_identity(self) -> bool:
        return self.entries == _identity(self.dim)

    def max_abs(self) -> int:
        return max(abs(x) for r in self.entries for x in r)

    def to_json(self) -> list[list[str]]:
        return [[str(x) for x in r] for r in self.entries]

    @classmethod
    def from_json(cls, data) -> "IntMatrix":
        return cls([[int(x) for x in r] for r in data])

    def __repr__(self) -> str:
        return f"IntMatrix({[list(r) for r in self.entries]})"


@lru_cache(maxsize=4096)
def _inverse_cached(m: IntMatrix) -> IntMatrix:
    inv = rational_inverse(m.entries)
    rows = []
    for r in inv:
        if any(x.denominator != 1 for x in r):
            raise DeterminantError("inverse is not integral")
        rows.append([int(x) for x in r])
    return IntMatrix(rows, _checked=True)


def mat_mul(a: IntMatrix, b: IntMatrix) -> IntMatrix:
    if a.dim != b.dim:
        raise DimensionError(f"cannot multiply {a.dim}x{a.dim} by {b.dim}x{b.dim}")
    return IntMatrix(_mul(a.entries, b.entries), _checked=True)


def mat_pow(m: IntMatrix, k: int) -> IntMatrix:
    if k < 0:
        return mat_pow(m.inv(), -k)
    result = IntMatrix.identity(m.dim)
    base = m
    while k:
        if k & 1:
            result = mat_mul(result, base)
        base = mat_mul(base, base)
        k >>= 1
    return result


def dual_map(m: IntMatrix) -> IntMatrix:
    """(M^T)^{-1}: the induced action on frequency vectors."""
    return m.transpose().inv()


def mat_from_rows(rows) -> IntMatrix:
    return IntMatrix(rows)


# ---------------------------------------------------------------------------
# IntPolynomial
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IntPolynomial:
    """Integer polynomial, coefficients in ascending degree."""

    coeffs: tuple[int, ...]

    def __init__(self, coeffs: Iterable[int]):
        c = [int(x) for x in coeffs]
        while len(c) > 1 and c[-1] == 0:
            c.pop()
        if not c:
            c = [0]
        object.__setattr__(self, "coeffs", tuple(c))

    @property
    def degree(self) -> int:
        return -1 if self.coeffs == (0,) else len(self.coeffs) - 1

    def is_monic(self) -> bool:
        return self.coeffs[-1] == 1

    def __call__(self, x):
        acc = 0
        for c in reversed(self.coeffs):
            acc = acc * x + c
        return acc

    def is_reciprocal(self) -> bool:
        """p(x) = x^d p(1/x)."""
        return self.coeffs == self.coeffs[::-1]

    def to_sympy(self, x=None):
        x = x if x is not None else sympy.Symbol("x")
        return sympy.Poly(list(reversed(self.coeffs)), x, domain="ZZ")

    @classmethod
    def from_sympy(cls, poly) -> "IntPolynomial":
        return cls(int(c) for c in reversed(poly.all_coeffs()))

    def __mul__(self, other: "IntPolynomial") -> "IntPolynomial":
        out = [0] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            for j, b in enumerate(other.coeffs):
                out[i + j] += a * b
        return IntPolynomial(out)

    def __str__(self) -> str:
        terms = []
        for k in range(len(self.coeffs) - 1, -1, -1):
            c = self.coeffs[k]
            if c == 0:
                continue
            mono = "" if k == 0 else ("x" if k == 1 else f"x^{k}")
            if mono and abs(c) == 1:
                s = mono
            else:
                s = f"{abs(c)}{mono}"
            terms.append(("-" if c < 0 else "+") + s)
        if not terms:
            return "0"
        out = " ".join(t[0] + " " + t[1:] for t in terms)
        return out[2:] if out.startswith("+") else "-" + out[2:]


def _poly_divmod_q(a: list[Fraction], b: list[Fraction]):
    a = list(a)
    q = [Fraction(0)] * max(len(a) - len(b) + 1, 1)
    while len(a) >= len(b) and any(a):
        shift = len(a) - len(b)
        f = a[-1] / b[-1]
        q[shift] = f
        for i, c in enumerate(b):
            a[i + shift] -= f * c
        while a and a[-1] == 0:
            a.pop()
    return q, a


def poly_gcd(p: IntPolynomial, q: IntPolynomial) -> IntPolynomial:
    """Primitive gcd over Q (Euclid with rational remainders)."""
    a = [Fraction(c) for c in p.coeffs]
    b = [Fraction(c) for c in q.coeffs]
    while b and any(b):
        _, r = _poly_divmod_q(a, b)
        a, b = b, r
    if not a or not any(a):
        return IntPolynomial([0])
    # clear denominators and content
    from math import gcd, lcm
    den = 1
    for c in a:
        den = lcm(den, c.denominator)
    ints = [int(c * den) for c in a]
    g = 0
    for c in ints:
        g = gcd(g, c)
    ints = [c // g for c in ints]
    if ints[-1] < 0:
        ints = [-c for c in ints]
    return IntPolynomial(ints)


def char_poly(m: IntMatrix) -> IntPolynomial:
    """det(xI - M) by Faddeev-LeVerrier with exact integer division."""
    n = m.dim
    a = m.entries
    coeffs = [0] * (n + 1)
    coeffs[n] = 1
    mk = tuple(tuple(0 for _ in range(n)) for _ in range(n))
    ident = _identity(n)
    for k in range(1, n + 1):
        c_prev = coeffs[n - k + 1]
        mk = _mul(a, mk)
        mk = tuple(tuple(x + c_prev * y for x, y in zip(r, ri)) for r, ri in zip(mk, ident))
        am = _mul(a, mk)
        tr = sum(am[i][i] for i in range(n))
        if tr % k:
            raise ArithmeticError("non-integral Faddeev-LeVerrier step")
        coeffs[n - k] = -tr // k
    return IntPolynomial(coeffs)


# ---------------------------------------------------------------------------
# cyclotomic and unit-circle arithmetic
# ---------------------------------------------------------------------------

def euler_phi(d: int) -> int:
    result, n, p = d, d, 2
    while p * p <= n:
        if n % p == 0:
            while n % p == 0:
                n //= p
            result -= result // p
        p += 1
    if n > 1:
        result -= result // n
    return result


@lru_cache(maxsize=None)
def cyclotomic(d: int) -> IntPolynomial:
    """Phi_d by exact division of x^d - 1 by Phi_e for proper divisors e."""
    num = [Fraction(-1)] + [Fraction(0)] * (d - 1) + [Fraction(1)]
    for e in range(1, d):
        if d % e == 0:
            num, rem = _poly_divmod_q(num, [Fraction(c) for c in cyclotomic(e).coeffs])
            assert not any(rem)
    return IntPolynomial(int(c) for c in num)


def cyclotomic_indices(n: int) -> list[int]:
    """All d with phi(d) <= n (phi(d) >= sqrt(d/2) bounds the search)."""
    return [d for d in range(1, 2 * n * n + 3) if euler_phi(d) <= n]


def has_root_of_unity(p: IntPolynomial) -> bool:
    n = p.degree
    for d in cyclotomic_indices(n):
        if poly_gcd(p, cyclotomic(d)).degree > 0:
            return True
    return False


def is_ergodic(m: IntMatrix) -> bool:
    """No eigenvalue is a root of unity (cyclotomic gcd test)."""
    return not has_root_of_unity(char_poly(m))


def is_unipotent(m: IntMatrix) -> tuple[bool, int]:
    n = m.dim
    e = m.minus_identity()
    power = e
    for j in range(1, n + 1):
        if _is_zero(power):
            return True, j
        power = _mul(power, e)
    return False, 0


def factor_irreducible(p: IntPolynomial) -> list[tuple[IntPolynomial, int]]:
    """Irreducible factors over Z with multiplicity (content dropped)."""
    x = sympy.Symbol("x")
    _, facs = sympy.factor_list(p.to_sympy(x).as_expr(), x)
    out = []
    for f, mult in facs:
        fp = IntPolynomial.from_sympy(sympy.Poly(f, x))
        if fp.coeffs[-1] < 0:
            fp = IntPolynomial(-c for c in fp.coeffs)
        out.append((fp, int(mult)))
    out.sort(key=lambda t: (t[0].degree, t[0].coeffs))
    return out


def trace_polynomial(p: IntPolynomial) -> IntPolynomial:
    """For palindromic p of degree 2d, q with p(x) = x^d q(x + 1/x)."""
    if p.degree % 2 or not p.is_reciprocal():
        raise ValueError("trace polynomial needs an even-degree palindromic polynomial")
    d = p.degree // 2
    a = p.coeffs
    # Dickson polynomials D_k(y) = x^k + x^-k
    dk = [IntPolynomial([2]), IntPolynomial([0, 1])]
    for k in range(2, d + 1):
        nxt = dk[k - 1] * IntPolynomial([0, 1])
        prev = dk[k - 2].coeffs
        c = list(nxt.coeffs) + [0] * max(0, len(prev) - len(nxt.coeffs))
        for i, v in enumerate(prev):
            c[i] -= v
        dk.append(IntPolynomial(c))
    q = [0] * (d + 1)
    q[0] = a[d]
    for k in range(1, d + 1):
        for i, v in enumerate(dk[k].coeffs):
            q[i] += a[d + k] * v
    return IntPolynomial(q)


def unit_circle_root_count(p: IntPolynomial) -> int:
    """Exact number of roots of p (with multiplicity) on the unit circle."""
    total = 0
    for f, mult in factor_irreducible(p):
        total += mult * _irreducible_circle_roots(f)
    return total


@lru_cache(maxsize=None)
def _irreducible_circle_roots(f: IntPolynomial) -> int:
    if f.degree == 1:
        return 1 if abs(f.coeffs[0]) == abs(f.coeffs[1]) else 0
    # an irreducible factor with a unimodular root contains 1/conj(root) as well,
    # so it must be palindromic; then count real roots of the trace polynomial in (-2, 2)
    if not f.is_reciprocal():
        return 0
    q = trace_polynomial(f)
    y = sympy.Symbol("y")
    qp = q.to_sympy(y)
    inside = qp.count_roots(-2, 2)
    # endpoints correspond to x = +-1, impossible for irreducible f of degree > 1
    return 2 * int(inside)


def is_hyperbolic(m: IntMatrix) -> bool:
    return unit_circle_root_count(char_poly(m)) == 0


def companion(p: IntPolynomial) -> IntMatrix:
    """Companion matrix of a monic polynomial with constant term +-1."""
    if not p.is_monic():
        raise ValueError("companion matrix needs a monic polynomial")
    n = p.degree
    rows = [[0] * n for _ in range(n)]
    for i in range(1, n):
        rows[i][i - 1] = 1
    for i in range(n):
        rows[i][n - 1] = -p.coeffs[i]
    return IntMatrix(rows)


def dumps_matrix(m: IntMatrix) -> str:
    return json.dumps({"schema": "torikam.matrix/1", "matrix": m.to_json()})


def loads_matrix(text: str) -> IntMatrix:
    data = json.loads(text)
    if isinstance(data, dict):
        data = data["matrix"]
    return IntMatrix.from_json(data)


CAT = IntMatrix([[2, 1], [1, 1]])
