"""Sparse multivariate polynomials with float64 coefficients.

A :class:`Polynomial` maps exponent tuples to coefficients. A
:class:`PolyVector` is a list of polynomials over the same variables, one per
network output, and supports the linear maps and elementwise products that
bilinear networks are built from.
"""

from __future__ import annotations

import json
import math
from typing import Iterable, Sequence

import numpy as np

from .errors import DegreeOverflowError, ShapeError

PRUNE_THRESHOLD = 1e-12
DISTANCE_EPS = 1e-30


class Polynomial:
    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: dict | None = None):
        self.nvars = int(nvars)
        self.terms: dict[tuple, float] = {}
        for exp, coef in (terms or {}).items():
            exp = tuple(int(e) for e in exp)
            if len(exp) != self.nvars or min(exp, default=0) < 0:
                raise ValueError(f"bad exponent {exp} for {nvars} variables")
            if coef != 0.0:
                self.terms[exp] = self.terms.get(exp, 0.0) + float(coef)

    @classmethod
    def constant(cls, value: float, nvars: int) -> "Polynomial":
        return cls(nvars, {(0,) * nvars: value})

    @classmethod
    def variable(cls, index: int, nvars: int) -> "Polynomial":
        exp = [0] * nvars
        exp[index] = 1
        return cls(nvars, {tuple(exp): 1.0})

    @classmethod
    def _raw(cls, nvars, terms):
        p = cls.__new__(cls)
        p.nvars = nvars
        p.terms = terms
        return p

    def _check(self, other):
        if other.nvars != self.nvars:
            raise ShapeError(f"nvars mismatch: {self.nvars} vs {other.nvars}")

    def __add__(self, other):
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(other, self.nvars)
        self._check(other)
        out = dict(self.terms)
        for exp, c in other.terms.items():
            out[exp] = out.get(exp, 0.0) + c
        return Polynomial._raw(self.nvars, {e: c for e, c in out.items() if c != 0.0})

    __radd__ = __add__

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Polynomial) else -other)

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            return self.scale(other)
        self._check(other)
        out: dict[tuple, float] = {}
        for ea, ca in self.terms.items():
            for eb, cb in other.terms.items():
                e = tuple(x + y for x, y in zip(ea, eb))
                out[e] = out.get(e, 0.0) + ca * cb
        return Polynomial._raw(self.nvars, {e: c for e, c in out.items() if c != 0.0})

    def __rmul__(self, other):
        return self.scale(other)

    def __pow__(self, k: int):
        out = Polynomial.constant(1.0, self.nvars)
        for _ in range(k):
            out = out * self
        return out

    def scale(self, s: float) -> "Polynomial":
        s = float(s)
        if s == 0.0:
            return Polynomial(self.nvars)
        return Polynomial._raw(self.nvars, {e: s * c for e, c in self.terms.items()})

    def __eq__(self, other):
        return (isinstance(other, Polynomial) and self.nvars == other.nvars
                and self.terms == other.terms)

    def __repr__(self):
        if not self.terms:
            return "Polynomial(0)"
        parts = []
        for exp in sorted(self.terms, key=grlex_key):
            mono = "*".join(f"x{i + 1}" + (f"^{e}" if e > 1 else "")
                            for i, e in enumerate(exp) if e)
            parts.append(f"{self.terms[exp]:+.6g}" + (f"*{mono}" if mono else ""))
        return "Polynomial(" + " ".join(parts) + ")"

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=-1)

    def coefficient(self, exp: Sequence[int]) -> float:
        return self.terms.get(tuple(exp), 0.0)

    def normalized(self, threshold: float = PRUNE_THRESHOLD) -> "Polynomial":
        return Polynomial._raw(self.nvars,
                               {e: c for e, c in self.terms.items() if abs(c) >= threshold})

    def substitute(self, index: int, value: float) -> "Polynomial":
        """Fix variable ``index`` to ``value``; the variable stays in place
        with exponent zero."""
        out: dict[tuple, float] = {}
        for exp, c in self.terms.items():
            e = list(exp)
            k = e[index]
            e[index] = 0
            e = tuple(e)
            out[e] = out.get(e, 0.0) + c * value**k
        return Polynomial._raw(self.nvars, {e: c for e, c in out.items() if c != 0.0})

    def drop_variable(self, index: int) -> "Polynomial":
        if any(exp[index] for exp in self.terms):
            raise ValueError(f"variable {index} still appears")
        return Polynomial._raw(self.nvars - 1, {exp[:index] + exp[index + 1:]: c
                                                for exp, c in self.terms.items()})

    def __call__(self, x) -> float:
        return poly_eval(self, x)

    def dense(self, max_degree: int) -> np.ndarray:
        index = monomial_index(self.nvars, max_degree)
        out = np.zeros(len(index))
        for exp, c in self.terms.items():
            if sum(exp) <= max_degree:
                out[index[exp]] = c
        return out

    def to_dict(self) -> dict:
        return {"nvars": self.nvars,
                "terms": [{"exp": list(e), "coef": c}
                          for e, c in sorted(self.terms.items(), key=lambda t: grlex_key(t[0]))]}

    @classmethod
    def from_dict(cls, data: dict) -> "Polynomial":
        return cls(data["nvars"], {tuple(t["exp"]): t["coef"] for t in data["terms"]})


def poly_add(p: Polynomial, q: Polynomial) -> Polynomial:
    return p + q


def poly_mul(p: Polynomial, q: Polynomial) -> Polynomial:
    return p * q


def poly_scale(p: Polynomial, s: float) -> Polynomial:
    return p.scale(s)


def poly_eval(p: Polynomial, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.nvars,):
        raise ShapeError(f"expected {p.nvars} values, got shape {x.shape}")
    total = 0.0
    for exp, c in p.terms.items():
        term = c
        for xi, e in zip(x, exp):
            if e:
                term *= xi**e
        total += term
    return float(total)


class PolyVector:
    """Polynomials sharing one variable set, one per output unit."""

    __array_ufunc__ = None  # let ``ndarray @ PolyVector`` reach __rmatmul__

    def __init__(self, components: Iterable[Polynomial]):
        self.components = list(components)
        if not self.components:
            raise ValueError("PolyVector needs at least one component")
        nv = {p.nvars for p in self.components}
        if len(nv) != 1:
            raise ShapeError(f"components disagree on nvars: {sorted(nv)}")
        self.nvars = nv.pop()

    @classmethod
    def variables(cls, nvars: int) -> "PolyVector":
        return cls(Polynomial.variable(i, nvars) for i in range(nvars))

    def __len__(self):
        return len(self.components)

    def __getitem__(self, i):
        if isinstance(i, slice) or isinstance(i, (list, np.ndarray)):
            idx = range(len(self))[i] if isinstance(i, slice) else i
            return PolyVector(self.components[j] for j in idx)
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    def __mul__(self, other: "PolyVector") -> "PolyVector":
        if len(other) != len(self):
            raise ShapeError(f"length mismatch {len(self)} vs {len(other)}")
        return PolyVector(a * b for a, b in zip(self, other))

    def __add__(self, other: "PolyVector") -> "PolyVector":
        if len(other) != len(self):
            raise ShapeError(f"length mismatch {len(self)} vs {len(other)}")
        return PolyVector(a + b for a, b in zip(self, other))

    def __rmatmul__(self, weights) -> "PolyVector":
        return poly_linear_combine(weights, self)

    def substitute(self, index: int, value: float) -> "PolyVector":
        return PolyVector(p.substitute(index, value) for p in self)

    def drop_variable(self, index: int) -> "PolyVector":
        return PolyVector(p.drop_variable(index) for p in self)

    def normalized(self, threshold: float = PRUNE_THRESHOLD) -> "PolyVector":
        return PolyVector(p.normalized(threshold) for p in self)

    def __call__(self, x) -> np.ndarray:
        return np.array([poly_eval(p, x) for p in self])

    @property
    def degree(self) -> int:
        return max(p.degree for p in self)

    def to_dict(self) -> dict:
        return {"nvars": self.nvars, "components": [p.to_dict() for p in self]}

    @classmethod
    def from_dict(cls, data: dict) -> "PolyVector":
        return cls(Polynomial.from_dict(c) for c in data["components"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def poly_linear_combine(weights, polys: PolyVector) -> PolyVector:
    """Return ``weights @ polys`` for a (k, len(polys)) weight matrix."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 2 or weights.shape[1] != len(polys):
        raise ShapeError(f"weights {weights.shape} do not match {len(polys)} polynomials")
    out = []
    for row in weights:
        acc: dict[tuple, float] = {}
        for w, p in zip(row, polys):
            if w == 0.0:
                continue
            for exp, c in p.terms.items():
                acc[exp] = acc.get(exp, 0.0) + w * c
        out.append(Polynomial._raw(polys.nvars, {e: c for e, c in acc.items() if c != 0.0}))
    return PolyVector(out)


def grlex_key(exp: Sequence[int]):
    """Sort key for graded lexicographic order (x1 > x2 > ...)."""
    return (sum(exp), tuple(-e for e in exp))


def monomials(nvars: int, max_degree: int) -> list[tuple]:
    out = []
    for deg in range(max_degree + 1):
        out.extend(sorted(_compositions(deg, nvars), key=grlex_key))
    return out


def _compositions(total: int, parts: int):
    if parts == 0:
        if total == 0:
            yield ()
        return
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


_INDEX_CACHE: dict[tuple, dict] = {}


def monomial_index(nvars: int, max_degree: int) -> dict:
    key = (nvars, max_degree)
    if key not in _INDEX_CACHE:
        _INDEX_CACHE[key] = {e: i for i, e in enumerate(monomials(nvars, max_degree))}
    return _INDEX_CACHE[key]


def n_monomials(nvars: int, max_degree: int) -> int:
    return math.comb(nvars + max_degree, max_degree)


def coefficient_distance(p: PolyVector, q: PolyVector, max_degree: int = 4,
                         tol: float = 1e-9) -> float:
    """Mean over outputs of ``|c_p - c_q| / max(|c_p|, |c_q|)`` on dense
    coefficient vectors of all monomials up to ``max_degree``."""
    if p.nvars != q.nvars or len(p) != len(q):
        raise ShapeError("fingerprints are not comparable")
    for vec in (p, q):
        for comp in vec:
            high = [abs(c) for e, c in comp.terms.items() if sum(e) > max_degree]
            if high and max(high) > tol:
                raise DegreeOverflowError(
                    f"coefficient {max(high):.3g} above degree {max_degree}")
    dists = []
    for a, b in zip(p, q):
        ca, cb = a.dense(max_degree), b.dense(max_degree)
        denom = max(np.linalg.norm(ca), np.linalg.norm(cb), DISTANCE_EPS)
        dists.append(np.linalg.norm(ca - cb) / denom)
    return float(np.mean(dists))
