"""Operator polynomials in quadrature or ladder normal form.

A :class:`NormalPoly` maps a pair of multi-indices ``(mu, nu)`` to a
coefficient.  The meaning of the pair depends on the basis tag:

``"xp"``
    the monomial ``X^mu P^nu`` (all positions to the left of all momenta).
``"ladder"``
    the monomial ``adag^nu a^mu`` (creation operators on the left).
``"anticommutator"``
    the symmetrised monomial ``(1/2){X^mu, P^nu}``; coefficients are real.

Products are re-expressed in normal form using the reordering rule
``R^b L^c = sum_k kappa^k k! C(b,k) C(c,k) L^(c-k) R^(b-k)`` where ``L`` is the
left letter (X or adag), ``R`` the right letter (P or a) and ``kappa`` is
``-i`` for quadratures and ``1`` for ladder operators.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial

import mpmath

from .coeff import Exact, as_float, exact_from_json, exact_to_json

BASES = ("xp", "ladder", "anticommutator")
DEFAULT_PREC = 113
PRUNE_RELATIVE = mpmath.mpf("1e-30")


class NotHermitianError(ValueError):
    pass


# --------------------------------------------------------------------------- rings

class _ExactRing:
    kind = "exact"
    prec = None

    def __init__(self):
        self.zero = Exact(0)
        self.one = Exact(1)
        self.i = Exact.i()
        self.minus_i = -Exact.i()
        self.inv_sqrt2 = Exact(0, 0, Fraction(1, 2))  # sqrt2 / 2

    def coerce(self, value):
        if isinstance(value, (mpmath.mpc, mpmath.mpf, float, complex)):
            raise TypeError("float value given to an exact polynomial; convert explicitly")
        return Exact.coerce(value)

    @staticmethod
    def is_zero(c):
        return c.is_zero()

    @staticmethod
    def conj(c):
        return c.conjugate()

    @staticmethod
    def is_real(c, tol=None):
        return c.is_real()


class _FloatRing:
    kind = "float"

    def __init__(self, prec):
        self.prec = int(prec)
        with mpmath.workprec(self.prec):
            self.zero = mpmath.mpc(0)
            self.one = mpmath.mpc(1)
            self.i = mpmath.mpc(0, 1)
            self.minus_i = mpmath.mpc(0, -1)
            self.inv_sqrt2 = mpmath.mpc(1 / mpmath.sqrt(2))

    def coerce(self, value):
        if isinstance(value, Exact):
            raise TypeError("exact value given to a float polynomial; convert explicitly")
        return as_float(value, self.prec)

    @staticmethod
    def is_zero(c):
        return c == 0

    @staticmethod
    def conj(c):
        return mpmath.conj(c)

    @staticmethod
    def is_real(c, tol=mpmath.mpf("1e-20")):
        return abs(c.imag) <= tol * max(1, abs(c))


_EXACT = _ExactRing()
_FLOAT_RINGS: dict = {}


def ring_for(kind: str, prec: int | None = None):
    if kind == "exact":
        return _EXACT
    if kind == "float":
        p = int(prec or DEFAULT_PREC)
        if p not in _FLOAT_RINGS:
            _FLOAT_RINGS[p] = _FloatRing(p)
        return _FLOAT_RINGS[p]
    raise ValueError(f"unknown coefficient kind {kind!r}")


# ------------------------------------------------------------------ reordering

@lru_cache(maxsize=None)
def _reorder_terms(b: int, c: int):
    """Integer weights for R^b L^c = sum_k w_k kappa^k L^(c-k) R^(b-k)."""
    return tuple((k, factorial(k) * comb(b, k) * comb(c, k)) for k in range(min(b, c) + 1))


def _left_right(basis, mu, nu):
    # XP: X^mu P^nu, ladder: adag^nu a^mu
    return (mu, nu) if basis == "xp" else (nu, mu)


def _key(basis, left, right):
    return (left, right) if basis == "xp" else (right, left)


# ------------------------------------------------------------------- the type

class NormalPoly:
    """Polynomial operator in a normal-ordered basis."""

    __slots__ = ("basis", "modes", "kind", "prec", "terms", "_ring")

    def __init__(self, modes: int, basis: str = "xp", kind: str = "exact",
                 prec: int | None = None, terms: dict | None = None):
        if basis not in BASES:
            raise ValueError(f"unknown basis {basis!r}")
        if modes < 1:
            raise ValueError("need at least one mode")
        self.basis = basis
        self.modes = modes
        self.kind = kind
        self._ring = ring_for(kind, prec)
        self.prec = self._ring.prec
        self.terms = {}
        for (mu, nu), c in (terms or {}).items():
            mu, nu = tuple(int(v) for v in mu), tuple(int(v) for v in nu)
            if len(mu) != modes or len(nu) != modes or min(mu + nu) < 0:
                raise ValueError(f"bad multi-index {(mu, nu)} for {modes} modes")
            c = self._ring.coerce(c)
            if not self._ring.is_zero(c):
                self.terms[(mu, nu)] = c
        if kind == "float":
            self._prune()

    # construction helpers
    def _new(self, terms=None, basis=None):
        out = NormalPoly.__new__(NormalPoly)
        out.basis = basis or self.basis
        out.modes = self.modes
        out.kind = self.kind
        out._ring = self._ring
        out.prec = self.prec
        out.terms = terms if terms is not None else {}
        if self.kind == "float":
            out._prune()
        return out

    def _prune(self):
        if not self.terms:
            return
        big = max(abs(c) for c in self.terms.values())
        cut = big * PRUNE_RELATIVE
        self.terms = {k: c for k, c in self.terms.items() if abs(c) > cut}

    @property
    def ring(self):
        return self._ring

    @classmethod
    def constant(cls, value, modes=1, basis="xp", kind="exact", prec=None):
        z = (0,) * modes
        return cls(modes, basis, kind, prec, {(z, z): value})

    @classmethod
    def monomial(cls, mu, nu, coeff=1, basis="xp", kind="exact", prec=None):
        mu, nu = tuple(mu), tuple(nu)
        return cls(len(mu), basis, kind, prec, {(mu, nu): coeff})

    @classmethod
    def _unit(cls, modes, j, which, basis, kind, prec):
        mu, nu = [0] * modes, [0] * modes
        (mu if which == 0 else nu)[j] = 1
        return cls(modes, basis, kind, prec, {(tuple(mu), tuple(nu)): 1})

    @classmethod
    def X(cls, j=0, modes=1, kind="exact", prec=None):
        return cls._unit(modes, j, 0, "xp", kind, prec)

    @classmethod
    def P(cls, j=0, modes=1, kind="exact", prec=None):
        return cls._unit(modes, j, 1, "xp", kind, prec)

    @classmethod
    def a(cls, j=0, modes=1, kind="exact", prec=None):
        return cls._unit(modes, j, 0, "ladder", kind, prec)

    @classmethod
    def adag(cls, j=0, modes=1, kind="exact", prec=None):
        return cls._unit(modes, j, 1, "ladder", kind, prec)

    @classmethod
    def number(cls, j=0, modes=1, kind="exact", prec=None):
        e = [0] * modes
        e[j] = 1
        return cls(modes, "ladder", kind, prec, {(tuple(e), tuple(e)): 1})

    # basic queries
    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms.items())

    def coefficient(self, mu, nu):
        return self.terms.get((tuple(mu), tuple(nu)), self._ring.zero)

    def is_zero(self):
        return not self.terms

    @property
    def degree(self):
        return max((sum(mu) + sum(nu) for mu, nu in self.terms), default=0)

    def constant_term(self):
        z = (0,) * self.modes
        return self.terms.get((z, z), self._ring.zero)

    def is_scalar(self):
        z = (0,) * self.modes
        return all(k == (z, z) for k in self.terms)

    def _check_compatible(self, other):
        if not isinstance(other, NormalPoly):
            raise TypeError("expected a NormalPoly")
        if other.modes != self.modes:
            raise ValueError(f"mode-count mismatch: {self.modes} vs {other.modes}")
        if other.kind != self.kind or other.prec != self.prec:
            raise TypeError(f"coefficient kinds differ: {self.kind}/{self.prec} vs "
                            f"{other.kind}/{other.prec}; convert explicitly")
        if other.basis != self.basis:
            raise ValueError(f"basis mismatch: {self.basis} vs {other.basis}")

    def _ctx(self):
        return mpmath.workprec(self.prec) if self.kind == "float" else _nullctx

    # arithmetic
    def __eq__(self, other):
        if not isinstance(other, NormalPoly):
            return NotImplemented
        return (self.modes == other.modes and self.basis == other.basis
                and self.kind == other.kind and self.terms == other.terms)

    def __hash__(self):
        return id(self)

    def __neg__(self):
        return self._new({k: -c for k, c in self.terms.items()})

    def __add__(self, other):
        if not isinstance(other, NormalPoly):
            other = NormalPoly.constant(other, self.modes, self.basis, self.kind, self.prec)
        self._check_compatible(other)
        with self._ctx():
            out = dict(self.terms)
            zero = self._ring.zero
            for k, c in other.terms.items():
                v = out.get(k, zero) + c
                if self._ring.is_zero(v):
                    out.pop(k, None)
                else:
                    out[k] = v
            return self._new(out)

    __radd__ = __add__

    def __sub__(self, other):
        if not isinstance(other, NormalPoly):
            other = NormalPoly.constant(other, self.modes, self.basis, self.kind, self.prec)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, value):
        with self._ctx():
            c0 = self._ring.coerce(value)
            if self._ring.is_zero(c0):
                return self._new({})
            return self._new({k: c * c0 for k, c in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, NormalPoly):
            return normal_order_mul(self, other)
        return self.scale(other)

    def __rmul__(self, other):
        return self.scale(other)

    def __pow__(self, n: int):
        if n < 0:
            raise ValueError("negative powers are not polynomials")
        out = NormalPoly.constant(1, self.modes, self.basis, self.kind, self.prec)
        base = self
        while n:
            if n & 1:
                out = out * base
            n >>= 1
            if n:
                base = base * base
        return out

    def adjoint(self) -> "NormalPoly":
        """Formal adjoint, re-expressed in the same normal form."""
        if self.basis == "anticommutator":
            return self._new({k: self._ring.conj(c) for k, c in self.terms.items()})
        with self._ctx():
            out = self._new({})
            for (mu, nu), c in self.terms.items():
                left, right = _left_right(self.basis, mu, nu)
                if self.basis == "xp":
                    # (X^mu P^nu)^dag = P^nu X^mu
                    out = out + _reversed_monomial(self, right, left, self._ring.conj(c))
                else:
                    # (adag^nu a^mu)^dag = adag^mu a^nu, already normal
                    out = out + self._new({(nu, mu): self._ring.conj(c)})
            return out

    def is_hermitian(self, tol=None) -> bool:
        diff = self - self.adjoint()
        if self.kind == "exact":
            return diff.is_zero()
        tol = mpmath.mpf(tol if tol is not None else "1e-20")
        scale = max((abs(c) for c in self.terms.values()), default=1)
        return all(abs(c) <= tol * max(1, scale) for c in diff.terms.values())

    def to_float(self, prec: int | None = None) -> "NormalPoly":
        prec = int(prec or self.prec or DEFAULT_PREC)
        terms = {k: as_float(c, prec) if self.kind == "exact" else c for k, c in self.terms.items()}
        with mpmath.workprec(prec):
            return NormalPoly(self.modes, self.basis, "float", prec, terms)

    def as_complex_dict(self) -> dict:
        return {k: complex(c) for k, c in self.terms.items()}

    def __repr__(self):
        items = sorted(self.terms.items(), key=lambda kv: (-(sum(kv[0][0]) + sum(kv[0][1])), kv[0]))
        body = ", ".join(f"{mu},{nu}: {c}" for (mu, nu), c in items[:8])
        more = "" if len(items) <= 8 else f", ... ({len(items)} terms)"
        return f"NormalPoly[{self.basis}, n={self.modes}, {self.kind}]({body}{more})"


class _NullCtx:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


_nullctx = _NullCtx()


def _reversed_monomial(template: NormalPoly, right, left, coeff):
    """Normal form of R^right L^left (right letter first), times coeff."""
    ring = template.ring
    kappa = ring.minus_i if template.basis == "xp" else ring.one
    per_mode = []
    for b, c in zip(right, left):
        per_mode.append([(c - k, b - k, w, k) for k, w in _reorder_terms(b, c)])
    out = {}
    for combo in itertools.product(*per_mode):
        lft = tuple(t[0] for t in combo)
        rgt = tuple(t[1] for t in combo)
        w = 1
        kpow = 0
        for t in combo:
            w *= t[2]
            kpow += t[3]
        val = coeff * (w * kappa ** kpow if kpow else w)
        key = _key(template.basis, lft, rgt)
        out[key] = out.get(key, ring.zero) + val
    return template._new({k: v for k, v in out.items() if not ring.is_zero(v)})


def _kappa_powers(ring, basis, upto):
    kappa = ring.minus_i if basis == "xp" else ring.one
    powers = [ring.one]
    for _ in range(upto):
        powers.append(powers[-1] * kappa)
    return powers


def normal_order_mul(p: NormalPoly, q: NormalPoly) -> NormalPoly:
    """Product ``p*q`` re-expressed in the common normal form."""
    p._check_compatible(q)
    if p.basis == "anticommutator":
        raise ValueError("multiply in the xp basis and convert afterwards")
    ring = p.ring
    basis = p.basis
    with p._ctx():
        maxdeg = max(p.degree, q.degree) + 1
        kpow = _kappa_powers(ring, basis, maxdeg)
        acc: dict = {}
        zero = ring.zero
        # group q by its left exponents to reuse the reorder expansions
        for (mu1, nu1), c1 in p.terms.items():
            l1, r1 = _left_right(basis, mu1, nu1)
            for (mu2, nu2), c2 in q.terms.items():
                l2, r2 = _left_right(basis, mu2, nu2)
                c12 = c1 * c2
                per_mode = [_reorder_terms(b, c) for b, c in zip(r1, l2)]
                for combo in itertools.product(*per_mode):
                    w = 1
                    ktot = 0
                    lft = []
                    rgt = []
                    for j, (k, wk) in enumerate(combo):
                        w *= wk
                        ktot += k
                        lft.append(l1[j] + l2[j] - k)
                        rgt.append(r1[j] - k + r2[j])
                    key = _key(basis, tuple(lft), tuple(rgt))
                    term = c12 * w if ktot == 0 else c12 * (kpow[ktot] * w)
                    acc[key] = acc.get(key, zero) + term
        return p._new({k: v for k, v in acc.items() if not ring.is_zero(v)})


# --------------------------------------------------------------- commutators

def commute_xp(mu: int, nu: int, kind="exact", prec=None) -> NormalPoly:
    """Single-mode commutator ``[X^mu, P^nu]`` in XP-normal form (closed-form sum)."""
    if mu < 0 or nu < 0:
        raise ValueError("exponents must be non-negative")
    ring = ring_for(kind, prec)
    terms = {}
    for lam in range(1, min(mu, nu) + 1):
        w = factorial(mu) * factorial(nu) // (factorial(mu - lam) * factorial(nu - lam) * factorial(lam))
        terms[((mu - lam,), (nu - lam,))] = -(ring.minus_i ** lam) * w
    return NormalPoly(1, "xp", kind, prec, terms)


def commutator(p: NormalPoly, q: NormalPoly) -> NormalPoly:
    return p * q - q * p


# ----------------------------------------------------------- binomial powers

def binomial_power_xp(alpha, beta, n: int, kind="exact", prec=None) -> NormalPoly:
    """Normal form of ``(alpha X + beta P)^n`` from its closed-form coefficients."""
    if n < 0:
        raise ValueError("n must be non-negative")
    ring = ring_for(kind, prec)
    with (mpmath.workprec(ring.prec) if kind == "float" else _nullctx):
        al, be = ring.coerce(alpha), ring.coerce(beta)
        half_mi = ring.minus_i * ring.coerce(Fraction(1, 2))
        terms = {}
        for k in range(n // 2 + 1):
            for j in range(n - 2 * k + 1):
                w = factorial(n) // (factorial(k) * factorial(j) * factorial(n - 2 * k - j))
                c = half_mi ** k * al ** (k + j) * be ** (n - k - j) * w
                if not ring.is_zero(c):
                    terms[((j,), (n - 2 * k - j,))] = c
        return NormalPoly(1, "xp", kind, prec, terms)


def binomial_power_xp2(alpha, beta, n: int, kind="exact", prec=None) -> NormalPoly:
    """Normal form of ``(alpha X + beta P^2)^n``.

    Terms are ``X^j P^(2k+l)`` indexed by ``j + k + 2l + 3m = n``; ``l`` counts
    single contractions of a ``P^2`` past an ``X`` and ``m`` double ones.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    ring = ring_for(kind, prec)
    with (mpmath.workprec(ring.prec) if kind == "float" else _nullctx):
        al, be = ring.coerce(alpha), ring.coerce(beta)
        terms = {}
        for m in range(n // 3 + 1):
            for l in range((n - 3 * m) // 2 + 1):
                for j in range(n - 3 * m - 2 * l + 1):
                    k = n - 3 * m - 2 * l - j
                    w = Fraction(factorial(n), 3 ** m * factorial(j) * factorial(k)
                                 * factorial(l) * factorial(m))
                    sign = ring.one if m % 2 == 0 else -ring.one
                    c = (sign * ring.minus_i ** l * ring.coerce(w)
                         * al ** (j + l + 2 * m) * be ** (k + l + m))
                    key = ((j,), (2 * k + l,))
                    terms[key] = terms.get(key, ring.zero) + c
        return NormalPoly(1, "xp", kind, prec, terms)


# ------------------------------------------------------------ substitution

def substitute(p: NormalPoly, x_images, p_images) -> NormalPoly:
    """Replace ``X_j -> x_images[j]`` and ``P_j -> p_images[j]`` in an XP poly.

    Images must share a basis, kind and mode count; the result lives in that
    basis.  Monomials are expanded in their stored order X^mu P^nu.
    """
    if p.basis != "xp":
        raise ValueError("substitute expects an xp-basis polynomial")
    tmpl = x_images[0]
    one = NormalPoly.constant(1, tmpl.modes, tmpl.basis, tmpl.kind, tmpl.prec)
    cache: dict = {}

    def power(which, j, e):
        key = (which, j, e)
        if key not in cache:
            img = (x_images if which == 0 else p_images)[j]
            cache[key] = one if e == 0 else (power(which, j, e - 1) * img)
        return cache[key]

    out = one.scale(0)
    with tmpl._ctx():
        for (mu, nu), c in p.terms.items():
            term = one
            for j, e in enumerate(mu):
                if e:
                    term = term * power(0, j, e)
            for j, e in enumerate(nu):
                if e:
                    term = term * power(1, j, e)
            if p.kind != tmpl.kind:
                raise TypeError("substitution images and polynomial differ in kind")
            out = out + term.scale(c)
    return out


@lru_cache(maxsize=4096)
def _single_mode_image(basis_from: str, left: int, right: int, kind: str, prec):
    """One-mode monomial rewritten in the other basis, as a term dict."""
    r = ring_for(kind, prec)
    if basis_from == "xp":
        a = NormalPoly.a(0, 1, kind, prec)
        ad = NormalPoly.adag(0, 1, kind, prec)
        lft = (a + ad).scale(r.inv_sqrt2)
        rgt = (a - ad).scale(r.minus_i * r.inv_sqrt2)
    else:
        x = NormalPoly.X(0, 1, kind, prec)
        pp = NormalPoly.P(0, 1, kind, prec)
        lft = (x - pp.scale(r.i)).scale(r.inv_sqrt2)   # adag
        rgt = (x + pp.scale(r.i)).scale(r.inv_sqrt2)   # a
    return tuple(((lft ** left) * (rgt ** right)).terms.items())


def _convert(p: NormalPoly, target: str) -> NormalPoly:
    ring = p.ring
    acc: dict = {}
    zero = ring.zero
    with p._ctx():
        for (mu, nu), c in p.terms.items():
            left, right = _left_right(p.basis, mu, nu)
            factors = [_single_mode_image(p.basis, l, r, p.kind, p.prec) for l, r in zip(left, right)]
            for combo in itertools.product(*factors):
                val = c
                kmu, knu = [], []
                for (m1, n1), cj in combo:
                    val = val * cj
                    kmu.append(m1[0])
                    knu.append(n1[0])
                key = (tuple(kmu), tuple(knu))
                acc[key] = acc.get(key, zero) + val
        return NormalPoly(p.modes, target, p.kind, p.prec,
                          {k: v for k, v in acc.items() if not ring.is_zero(v)})


def xp_to_ladder(p: NormalPoly) -> NormalPoly:
    """Rewrite an XP-normal polynomial in creation-left ladder form."""
    if p.basis == "anticommutator":
        p = from_anticommutator(p)
    if p.basis == "ladder":
        return p
    return _convert(p, "ladder")


def ladder_to_xp(p: NormalPoly) -> NormalPoly:
    """Rewrite a creation-left ladder polynomial in XP-normal form."""
    if p.basis != "ladder":
        raise ValueError("expected a ladder-basis polynomial")
    return _convert(p, "xp")


# ------------------------------------------------------- anticommutator basis

def anticommutator_monomial(mu, nu, kind="exact", prec=None) -> NormalPoly:
    """XP-normal form of ``(1/2){X^mu, P^nu}``."""
    mu, nu = tuple(mu), tuple(nu)
    n = len(mu)
    zero = (0,) * n
    fwd = NormalPoly(n, "xp", kind, prec, {(mu, nu): 1})
    rev = NormalPoly(n, "xp", kind, prec, {(zero, nu): 1}) * NormalPoly(n, "xp", kind, prec, {(mu, zero): 1})
    return (fwd + rev).scale(Fraction(1, 2))


def to_anticommutator(p: NormalPoly) -> NormalPoly:
    """Real coefficients ``h`` with ``p = sum h_{mu,nu} (1/2){X^mu, P^nu}``.

    Peels off the highest-degree term repeatedly; raises
    :class:`NotHermitianError` for non-Hermitian input.
    """
    if p.basis == "anticommutator":
        return p
    if p.basis == "ladder":
        p = ladder_to_xp(p)
    if not p.is_hermitian():
        raise NotHermitianError("anticommutator expansion needs a Hermitian polynomial")
    ring = p.ring
    out = {}
    rest = p
    with p._ctx():
        while not rest.is_zero():
            (mu, nu), h = max(rest.terms.items(),
                              key=lambda kv: (sum(kv[0][0]) + sum(kv[0][1]), kv[0]))
            if not ring.is_real(h):
                raise NotHermitianError(f"leading coefficient of {(mu, nu)} is not real")
            h = h.real_part() if p.kind == "exact" else mpmath.mpc(h.real)
            out[(mu, nu)] = h
            rest = rest - anticommutator_monomial(mu, nu, p.kind, p.prec).scale(h)
    return NormalPoly(p.modes, "anticommutator", p.kind, p.prec, out)


def from_anticommutator(p: NormalPoly) -> NormalPoly:
    if p.basis != "anticommutator":
        raise ValueError("expected an anticommutator-basis polynomial")
    out = NormalPoly(p.modes, "xp", p.kind, p.prec)
    for (mu, nu), h in p.terms.items():
        out = out + anticommutator_monomial(mu, nu, p.kind, p.prec).scale(h)
    return out


# ----------------------------------------------------------------- moments

def double_factorial(n: int) -> int:
    """``n!!`` with the conventions ``0!! = (-1)!! = 1``."""
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


def hermite_he(n: int, x):
    """Probabilists' Hermite polynomial ``He_n(x)`` via the three-term recurrence."""
    if n < 0:
        raise ValueError("n must be non-negative")
    prev, cur = 1, x
    if n == 0:
        return x * 0 + 1 if not isinstance(x, int) else 1
    for k in range(1, n):
        prev, cur = cur, x * cur - k * prev
    return cur


def kravchuk(n: int, m: int, l: int) -> int:
    """Binary Kravchuk polynomial ``K^(n)_m(l) = sum_j (-1)^j C(l,j) C(n-l,m-j)``."""
    if not (0 <= m <= n):
        raise ValueError("need 0 <= m <= n")
    return sum((-1) ** j * comb(l, j) * comb(n - l, m - j) for j in range(m + 1))


def vacuum_moment(k: int, l: int) -> Exact:
    """Exact ``<0|X^k P^l|0>`` from the Kravchuk-sum closed form."""
    if k < 0 or l < 0:
        raise ValueError("exponents must be non-negative")
    n = k + l
    if n % 2:
        return Exact(0)
    total = Exact(0)
    mi = -Exact.i()
    for m in range(n // 2 + 1):
        w = kravchuk(n, 2 * m, l) * double_factorial(n - 2 * m - 1) * double_factorial(2 * m - 1)
        if w:
            total = total + mi ** m * w
    q = n // 2
    omega = Exact(0, 0, Fraction(1, 2), Fraction(1, 2))  # e^{i pi/4} = (1+i)/sqrt2
    if q % 2 == 0:
        scale = Exact(Fraction(1, 2 ** (3 * q // 2)))
    else:
        # 2^{-3q/2} = sqrt2 * 2^{-(3q+1)/2}
        scale = Exact(0, 0, Fraction(1, 2 ** ((3 * q + 1) // 2)))
    return omega ** q * scale * total


def vacuum_expectation(p: NormalPoly):
    """``<0|p|0>`` for an XP- or ladder-form polynomial (product over modes)."""
    if p.basis == "ladder":
        return p.constant_term()
    if p.basis == "anticommutator":
        p = from_anticommutator(p)
    ring = p.ring
    with p._ctx():
        total = ring.zero
        for (mu, nu), c in p.terms.items():
            val = ring.one
            for k, l in zip(mu, nu):
                mom = vacuum_moment(k, l)
                if mom.is_zero():
                    val = ring.zero
                    break
                val = val * (mom if p.kind == "exact" else mom.to_mpc())
            total = total + c * val
        return total


def fock_ladder_expectation(m: int, n: int, k: int) -> int:
    """``<k| a^m adag^n |k>``; zero unless ``m == n``, else ``(m+k)!/k!``."""
    if min(m, n, k) < 0:
        raise ValueError("arguments must be non-negative")
    if m != n:
        return 0
    return factorial(m + k) // factorial(k)


def fock_expectation(p: NormalPoly, occupation) -> object:
    """``<k|p|k>`` for a Fock state ``|k>`` (multi-index), ladder or XP input."""
    if p.basis != "ladder":
        p = xp_to_ladder(p)
    ring = p.ring
    with p._ctx():
        total = ring.zero
        for (mu, nu), c in p.terms.items():
            if mu != nu:
                continue
            w = 1
            for kj, e in zip(occupation, mu):
                if e > kj:
                    w = 0
                    break
                w *= factorial(kj) // factorial(kj - e)
            if w:
                total = total + c * w
        return total


# ---------------------------------------------------------------- JSON I/O

SCHEMA_VERSION = 1


def poly_to_json(p: NormalPoly) -> dict:
    terms = []
    for (mu, nu), c in sorted(p.terms.items()):
        if p.kind == "exact":
            coeff = exact_to_json(c)
        else:
            with mpmath.workprec(p.prec):
                coeff = {"re": mpmath.nstr(c.real, int(p.prec * 0.302) + 3),
                         "im": mpmath.nstr(c.imag, int(p.prec * 0.302) + 3)}
        terms.append({"mu": list(mu), "nu": list(nu), "c": coeff})
    return {"schema": "NormalPoly", "version": SCHEMA_VERSION, "basis": p.basis,
            "modes": p.modes, "kind": p.kind, "prec": p.prec, "terms": terms}


def poly_from_json(obj: dict) -> NormalPoly:
    def fail(path, msg):
        raise ValueError(f"NormalPoly JSON at {path}: {msg}")

    if not isinstance(obj, dict):
        fail("$", "expected an object")
    if obj.get("schema") != "NormalPoly":
        fail("$.schema", f"expected 'NormalPoly', got {obj.get('schema')!r}")
    if obj.get("version") != SCHEMA_VERSION:
        fail("$.version", f"unsupported version {obj.get('version')!r}")
    for field in ("basis", "modes", "kind", "terms"):
        if field not in obj:
            fail(f"$.{field}", "missing")
    kind, prec = obj["kind"], obj.get("prec")
    terms = {}
    for idx, t in enumerate(obj["terms"]):
        try:
            mu, nu = tuple(t["mu"]), tuple(t["nu"])
            if kind == "exact":
                c = exact_from_json(t["c"])
            else:
                with mpmath.workprec(prec):
                    c = mpmath.mpc(mpmath.mpf(t["c"]["re"]), mpmath.mpf(t["c"]["im"]))
        except (KeyError, ValueError, TypeError) as exc:
            fail(f"$.terms[{idx}]", str(exc))
        terms[(mu, nu)] = c
    try:
        return NormalPoly(obj["modes"], obj["basis"], kind, prec, terms)
    except (ValueError, TypeError) as exc:
        fail("$", str(exc))
