"""Words, commutators, nilpotency scans and the higher-rank / partially hyperbolic predicates."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .intmat import (
    IntMatrix,
    char_poly,
    cyclotomic,
    cyclotomic_indices,
    factor_irreducible,
    is_ergodic,
    is_hyperbolic,
    mat_mul,
    mat_pow,
    rational_kernel,
)
from .spectral import GrowthRate, lyapunov_table, pair_growth_rate


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class Word:
    letters: tuple[tuple[str, int], ...]

    def __init__(self, letters: Iterable[tuple[str, int]]):
        letters = tuple((str(n), int(e)) for n, e in letters)
        if any(e not in (1, -1) for _, e in letters):
            raise ValueError("word exponents must be +1 or -1")
        object.__setattr__(self, "letters", letters)

    def inverse(self) -> "Word":
        return Word((n, -e) for n, e in reversed(self.letters))

    def __mul__(self, other: "Word") -> "Word":
        return Word(self.letters + other.letters)

    def __len__(self) -> int:
        return len(self.letters)

    def __str__(self) -> str:
        if not self.letters:
            return "e"
        return ".".join(n if e == 1 else n + "^-1" for n, e in self.letters)


@dataclass
class ActionSpec:
    dim: int
    generators: dict[str, IntMatrix]
    nilpotency_length: int | None = None
    ergodic_witnesses: list[str] = field(default_factory=list)
    d_chain: list[tuple[str, IntMatrix]] = field(default_factory=list)
    relations_checked: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, g in self.generators.items():
            if g.dim != self.dim:
                raise ValueError(f"generator {name} has dimension {g.dim}, expected {self.dim}")
            if g.det() not in (1, -1):
                raise ValueError(f"generator {name} is not in GL(N,Z)")

    def names(self) -> list[str]:
        return list(self.generators)

    def matrix(self, name: str) -> IntMatrix:
        if name in self.generators:
            return self.generators[name]
        for n, m in self.d_chain:
            if n == name:
                return m
        raise KeyError(name)

    def all_elements(self) -> dict[str, IntMatrix]:
        out = dict(self.generators)
        for n, m in self.d_chain:
            out.setdefault(n, m)
        return out

    def evaluate(self, word: Word) -> IntMatrix:
        return evaluate_word(word, self.generators)

    def to_json(self) -> dict:
        return {
            "schema": "torikam.action/1",
            "dim": self.dim,
            "generators": {k: v.to_json() for k, v in self.generators.items()},
            "nilpotency_length": self.nilpotency_length,
            "ergodic_witnesses": list(self.ergodic_witnesses),
            "d_chain": [[n, m.to_json()] for n, m in self.d_chain],
            "relations_checked": self.relations_checked,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ActionSpec":
        gens = {k: IntMatrix.from_json(v) for k, v in data["generators"].items()}
        dim = int(data.get("dim", next(iter(gens.values())).dim))
        return cls(
            dim=dim,
            generators=gens,
            nilpotency_length=data.get("nilpotency_length"),
            ergodic_witnesses=list(data.get("ergodic_witnesses", [])),
            d_chain=[(n, IntMatrix.from_json(m)) for n, m in data.get("d_chain", [])],
            relations_checked=dict(data.get("relations_checked", {})),
        )


def evaluate_word(word: Word, gens: dict[str, IntMatrix]) -> IntMatrix:
    n = next(iter(gens.values())).dim
    acc = IntMatrix.identity(n)
    for name, e in word.letters:
        m = gens[name] if e == 1 else gens[name].inv()
        acc = mat_mul(acc, m)
    return acc


def commutator(x: IntMatrix, y: IntMatrix) -> IntMatrix:
    """D_1(x, y) = x^-1 y^-1 x y."""
    return mat_mul(mat_mul(x.inv(), y.inv()), mat_mul(x, y))


def commutator_chain(x: IntMatrix, y: IntMatrix, depth: int) -> list[IntMatrix]:
    """[D_1, ..., D_depth] with D_{i+1} = x^-1 D_i^-1 x D_i."""
    if x.dim != y.dim:
        raise ValueError("dimension mismatch")
    out = []
    d = y
    for _ in range(depth):
        d = commutator(x, d)
        out.append(d)
    return out


@dataclass
class SeriesReport:
    levels: list[list[IntMatrix]]
    length: int | None          # None: not nilpotent within bounds
    max_depth: int
    word_bound: int

    @property
    def verdict(self) -> str:
        if self.length is None:
            return f"not nilpotent within bounds (depth {self.max_depth}, {self.word_bound} elements per level)"
        return f"nilpotent of length {self.length}"


def lower_central_series(spec: ActionSpec, max_depth: int = 6, word_bound: int = 64) -> SeriesReport:
    """Simple commutators [c, g^{+-1}] level by level until the level is trivial."""
    gens = list(spec.generators.values())
    letters = gens + [g.inv() for g in gens]
    level = []
    seen = set()
    for g in gens:
        if not g.is_identity() and g.entries not in seen:
            seen.add(g.entries)
            level.append(g)
    levels = [level]
    for depth in range(1, max_depth + 1):
        nxt = []
        seen = set()
        for c in levels[-1]:
            for g in letters:
                d = commutator(g, c)
                if d.is_identity() or d.entries in seen:
                    continue
                seen.add(d.entries)
                nxt.append(d)
                if len(nxt) >= word_bound:
                    break
            if len(nxt) >= word_bound:
                break
        if not nxt:
            return SeriesReport(levels, depth, max_depth, word_bound)
        levels.append(nxt)
    return SeriesReport(levels, None, max_depth, word_bound)


def k_enumeration(k_bound: int) -> list[tuple[int, int]]:
    """Nonzero k with |k|_inf <= bound, one of each +-k pair, shell by shell."""
    out = []
    for s in range(1, k_bound + 1):
        shell = []
        for k1 in range(0, s + 1):
            for k2 in range(-s, s + 1):
                if max(abs(k1), abs(k2)) != s:
                    continue
                if k1 == 0 and k2 <= 0:
                    continue
                shell.append((k1, k2))
        out.extend(sorted(shell))
    return out


@dataclass
class HigherRankVerdict:
    passed: bool
    k_bound: int
    failing_k: tuple[int, int] | None
    growth: GrowthRate | None

    @property
    def tau(self) -> float:
        return 0.0 if self.growth is None else self.growth.tau


def is_higher_rank(a: IntMatrix, b: IntMatrix, k_bound: int = 4) -> HigherRankVerdict:
    for k1, k2 in k_enumeration(k_bound):
        if not is_ergodic(mat_mul(mat_pow(a, k1), mat_pow(b, k2))):
            return HigherRankVerdict(False, k_bound, (k1, k2), None)
    try:
        growth = pair_growth_rate(a, b)
    except ValueError:
        growth = None
    ok = growth is not None and growth.ok
    return HigherRankVerdict(ok, k_bound, None, growth)


def word_ball(names: list[str], radius: int) -> list[Word]:
    """Reduced words of length 1..radius, lexicographic within each length."""
    letters = [(n, 1) for n in names] + [(n, -1) for n in names]
    out = []
    for length in range(1, radius + 1):
        for combo in itertools.product(letters, repeat=length):
            if any(combo[i][0] == combo[i + 1][0] and combo[i][1] == -combo[i + 1][1] for i in range(length - 1)):
                continue
            out.append(Word(combo))
    return out


@dataclass
class PHVerdict:
    passed: bool
    ergodic_witness: Word | None
    hyperbolic_witness: Word | None
    neutral_dim: int
    notes: list[str] = field(default_factory=list)


def common_neutral_subspace(spec: ActionSpec) -> np.ndarray:
    """Basis of the joint Lyapunov space on which every generator has exponent 0."""
    try:
        table = lyapunov_table(spec.generators)
    except ValueError:
        return np.zeros((spec.dim, 0))
    cols = [b for b, exps in table.spaces if all(abs(x) < 1e-8 for x in exps)]
    if not cols:
        return np.zeros((spec.dim, 0))
    return np.concatenate(cols, axis=1)


def is_genuinely_partially_hyperbolic(spec: ActionSpec, radius: int = 2) -> PHVerdict:
    words = word_ball(spec.names(), radius)
    ergodic = None
    hyperbolic = None
    for w in words:
        m = spec.evaluate(w)
        if ergodic is None and is_ergodic(m):
            ergodic = w
        if hyperbolic is None and is_hyperbolic(m):
            hyperbolic = w
        if ergodic is not None and hyperbolic is not None:
            break
    neutral = common_neutral_subspace(spec)
    notes = []
    if ergodic is None:
        notes.append("no ergodic word in the ball")
    if hyperbolic is not None:
        notes.append(f"hyperbolic word {hyperbolic}")
    if neutral.shape[1] == 0:
        notes.append("no common neutral subspace")
    passed = ergodic is not None and hyperbolic is None and neutral.shape[1] > 0
    return PHVerdict(passed, ergodic, hyperbolic, neutral.shape[1], notes)


def has_unimodular_spectrum_roots_of_unity(m: IntMatrix) -> bool:
    """All eigenvalues are roots of unity (char poly is a product of cyclotomics)."""
    cyc = {cyclotomic(d).coeffs for d in cyclotomic_indices(m.dim)}
    return all(f.coeffs in cyc for f, _ in factor_irreducible(char_poly(m)))


def conjugate_ergodicity_check(x: IntMatrix, y: IntMatrix, certified: bool = False) -> bool:
    """is_ergodic(x y) for x in the commutator subgroup of a nilpotent action and y ergodic.

    Without an external certificate x must at least have all eigenvalues roots of
    unity, which every commutator in a nilpotent action does.
    """
    if not is_ergodic(y):
        raise PreconditionError("y is not ergodic")
    if not certified and not has_unimodular_spectrum_roots_of_unity(x):
        raise PreconditionError("x has eigenvalues that are not roots of unity; it is not a commutator of a nilpotent action")
    return is_ergodic(mat_mul(x, y))


def fixed_space(m: IntMatrix) -> list[list]:
    """Exact rational basis of ker(m - I)."""
    return rational_kernel(m.minus_identity())


def fixed_space_intersection_dim(ms: list[IntMatrix]) -> int:
    rows = []
    for m in ms:
        rows.extend(m.minus_identity())
    return len(rational_kernel(rows))


def dumps_spec(spec: ActionSpec) -> str:
    return json.dumps(spec.to_json(), indent=1)


def loads_spec(text: str) -> ActionSpec:
    return ActionSpec.from_json(json.loads(text))
