"""Symbolic Heisenberg-picture evolution of polynomial observables.

Each gate acts on the generators ``X_j, P_j`` by an affine or quadratic
replacement; substituting and re-normal-ordering gives the conjugated
observable exactly.  Gaussian gates keep the degree, a cubic gate at most
doubles it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath

from .coeff import Exact
from .errors import BudgetExceeded
from .fock import BosonCircuit, BosonGate, cubic, fourier
from .polyham import NormalPoly, substitute, to_anticommutator, vacuum_moment

DEFAULT_TERM_BUDGET = 10 ** 7
EXACT_KINDS = {"LinearPhase", "Shear", "Fourier", "Cubic", "Sum", "Displacement"}


class UnsupportedGate(ValueError):
    """Gate has no exact replacement rule (or no rule at all)."""


@dataclass
class SymbolicObservable:
    poly: NormalPoly
    trail: list = field(default_factory=list)

    @classmethod
    def X(cls, j=0, modes=1, kind="exact"):
        return cls(NormalPoly.X(j, modes, kind=kind))

    @classmethod
    def P(cls, j=0, modes=1, kind="exact"):
        return cls(NormalPoly.P(j, modes, kind=kind))

    @classmethod
    def number(cls, modes=1, kind="exact"):
        """Total ``sum_j (X_j^2 + P_j^2 - 1)/2`` in XP form."""
        total = NormalPoly(modes, kind=kind)
        half = Fraction(1, 2) if kind == "exact" else 0.5
        for j in range(modes):
            x, p = NormalPoly.X(j, modes, kind=kind), NormalPoly.P(j, modes, kind=kind)
            total = total + (x * x + p * p - NormalPoly.constant(1, modes, kind=kind)).scale(half)
        return cls(total)

    @property
    def degree(self) -> int:
        return self.poly.degree

    @property
    def modes(self) -> int:
        return self.poly.modes


def _number(value, kind):
    if kind == "exact":
        if isinstance(value, complex):
            if value.imag:
                raise UnsupportedGate("complex parameters need float mode")
            value = value.real
        if isinstance(value, float):
            return Fraction(value)
        return value
    return complex(value) if isinstance(value, complex) else float(value)


def gate_rule(g: BosonGate, modes: int, kind: str = "exact", adjoint: bool = False):
    """Images of ``(X_j, P_j)`` under ``g O g^dag`` (or ``g^dag O g`` if ``adjoint``)."""
    def X(j):
        return NormalPoly.X(j, modes, kind=kind)

    def P(j):
        return NormalPoly.P(j, modes, kind=kind)

    def const(v):
        return NormalPoly.constant(v, modes, kind=kind)

    xs = [X(j) for j in range(modes)]
    ps = [P(j) for j in range(modes)]
    sign = -1 if adjoint else 1
    kindname = g.kind
    if kind == "exact" and kindname not in EXACT_KINDS:
        raise UnsupportedGate(f"{kindname} has no exact rule; use float mode")
    if kindname == "PolyHamGate":
        raise UnsupportedGate("PolyHamGate has no replacement rule")
    if kindname == "Sum":
        j, k = g.modes
        xs[k] = X(k) - X(j).scale(sign)
        ps[j] = P(j) + P(k).scale(sign)
        return xs, ps
    m = g.modes[0]
    if kindname == "Fourier":
        xs[m], ps[m] = (P(m), -X(m)) if not adjoint else (-P(m), X(m))
        return xs, ps
    t = _number(g.param, kind)
    if kindname == "LinearPhase":
        ps[m] = P(m) - const(sign * t)
    elif kindname == "Shear":
        ps[m] = P(m) - X(m).scale(2 * sign * t)
    elif kindname == "Cubic":
        ps[m] = P(m) - (X(m) * X(m)).scale(sign * t)
    elif kindname == "Displacement":
        if kind == "exact":
            shift = Exact(0, 0, t, 0)  # sqrt2 * Re(alpha)
            xs[m] = X(m) - const(shift * sign)
        else:
            alpha = complex(t)
            xs[m] = X(m) - const(sign * math.sqrt(2) * alpha.real)
            ps[m] = P(m) - const(sign * math.sqrt(2) * alpha.imag)
    elif kindname == "Rotation":
        c, s = math.cos(t), math.sin(t) * sign
        xs[m] = X(m).scale(c) + P(m).scale(s)
        ps[m] = P(m).scale(c) - X(m).scale(s)
    elif kindname == "Squeezing":
        e = math.exp(sign * t)
        xs[m], ps[m] = X(m).scale(e), P(m).scale(1 / e)
    return xs, ps


def _apply(obs: SymbolicObservable, g: BosonGate, adjoint: bool, budget: int, profile) -> SymbolicObservable:
    poly = obs.poly
    xs, ps = gate_rule(g, poly.modes, poly.kind, adjoint)
    before = poly.degree
    out = substitute(poly, xs, ps)
    if len(out) > budget:
        raise BudgetExceeded(f"{len(out)} terms exceed budget {budget}; degree profile {profile}")
    after = out.degree
    limit = 2 * before if g.kind == "Cubic" else before
    if not out.is_zero() and after > limit:
        raise AssertionError(f"degree law broken by {g.kind}: {before} -> {after}")
    if g.kind != "Cubic" and not out.is_zero() and after != before:
        raise AssertionError(f"Gaussian gate {g.kind} changed degree {before} -> {after}")
    return SymbolicObservable(out, obs.trail + [g.kind])


def conjugate(obs: SymbolicObservable, g: BosonGate, budget: int = DEFAULT_TERM_BUDGET) -> SymbolicObservable:
    """``g obs g^dag``."""
    return _apply(obs, g, False, budget, [obs.degree])


def _as_kind(obs, mode):
    if mode == obs.poly.kind:
        return obs
    if mode == "float":
        return SymbolicObservable(obs.poly.to_float(), list(obs.trail))
    raise ValueError("cannot return to exact mode from float coefficients")


def conjugate_circuit(c: BosonCircuit, obs: SymbolicObservable, mode: str = "exact",
                      budget: int = DEFAULT_TERM_BUDGET) -> SymbolicObservable:
    """``U obs U^dag`` with ``U = g_T ... g_1`` (gates substituted in circuit order)."""
    obs = _as_kind(obs, mode)
    profile = [obs.degree]
    for g in c.prepared_gates():
        obs = _apply(obs, g, False, budget, profile)
        profile.append(obs.degree)
    return obs


def evolve_observable(c: BosonCircuit, obs: SymbolicObservable, mode: str = "exact",
                      budget: int = DEFAULT_TERM_BUDGET, profile: list | None = None) -> SymbolicObservable:
    """``U^dag obs U``: inverse rules applied from the last gate back to the first."""
    obs = _as_kind(obs, mode)
    profile = profile if profile is not None else []
    profile.append(obs.degree)
    for g in reversed(c.prepared_gates()):
        obs = _apply(obs, g, True, budget, profile)
        profile.append(obs.degree)
    return obs


def degree_profile(c: BosonCircuit, obs: SymbolicObservable | None = None, mode: str = "exact") -> list:
    obs = obs or SymbolicObservable.X(0, c.modes, kind=mode)
    profile: list = []
    evolve_observable(c, obs, mode, profile=profile)
    return profile


def repeated_squaring_circuit(rounds: int, c=Fraction(1)) -> BosonCircuit:
    """Squaring rounds for ``U^dag X U``: Fourier then Cubic(3c) on the observable.

    The observable sees the last gate first, so each round is emitted as
    (Cubic(3c), Fourier) in circuit order; ``U^dag X U`` then has degree
    ``2^rounds``.
    """
    gates = []
    for _ in range(rounds):
        gates += [cubic(3 * c, 0), fourier(0)]
    return BosonCircuit(1, gates)


def expectation(obs: SymbolicObservable, occupation=None):
    """``<k|obs|k>`` for a Fock multi-index (vacuum by default)."""
    from .polyham import fock_expectation, vacuum_expectation
    if occupation is None or not any(occupation):
        return vacuum_expectation(obs.poly)
    return fock_expectation(obs.poly, tuple(occupation))


def _exact_sign(a, b) -> int:
    """Sign of ``a + b sqrt2`` for rationals, without rounding."""
    sa, sb = (a > 0) - (a < 0), (b > 0) - (b < 0)
    if sa == sb or sb == 0:
        return sa
    if sa == 0:
        return sb
    return sa if a * a > 2 * b * b else sb


def _sign(value) -> int:
    if isinstance(value, Exact):
        return _exact_sign(value.re, value.re2)
    re = mpmath.re(value)
    return (re > 0) - (re < 0)


def expval_boson_circuit(c: BosonCircuit, observable: SymbolicObservable, bits=None, mode: str = "exact",
                         budget: int = DEFAULT_TERM_BUDGET):
    """``<x| C^dag O C |x>`` with ``x`` hardwired as a displacement layer; returns (value, sign, profile)."""
    if bits is not None:
        c = BosonCircuit(c.modes, c.gates, tuple(int(b) for b in bits))
    profile: list = []
    evolved = evolve_observable(c, observable, mode, budget, profile)
    value = expectation(evolved)
    return value, _sign(value), profile


def heisenberg_energy_bound(c: BosonCircuit, mode: str = "exact") -> float:
    """``||alpha||_1 * max |vacuum moment|`` for the evolved total number operator."""
    evolved = evolve_observable(c, SymbolicObservable.number(c.modes, kind=mode), mode)
    l1, top = 0.0, 0.0
    for (mu, nu), coef in evolved.poly.terms.items():
        l1 += abs(complex(coef))
        mom = 1.0
        for k, l in zip(mu, nu):
            mom *= abs(complex(vacuum_moment(k, l)))
        top = max(top, mom)
    return l1 * top


def anticommutator_coefficients_real(obs: SymbolicObservable) -> bool:
    """Hermiticity check: every symmetrized coefficient has zero imaginary part."""
    sym = to_anticommutator(obs.poly)
    if sym.kind == "exact":
        return all(c.imag_part().is_zero() for c in sym.terms.values())
    return all(abs(mpmath.im(c)) < 1e-20 for c in sym.terms.values())
