"""Ground energies, boundedness and lower-bound certificates.

Quadratic ladder Hamiltonians are handled through their quadrature form
``H = 1/2 r^T A r + g.r + e0`` (symmetrized products, ``r = (X, P)``).
Everything about boundedness and Gaussian minima follows from ``A`` and
``g``.  Higher-degree tools: a sum-of-squares certificate for degree-4
operators, and the two number-diagonal gadget constructions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.linalg

from .coeff import Exact
from .errors import Infeasible
from .polyham import (NormalPoly, anticommutator_monomial, fock_expectation, to_anticommutator,
                      xp_to_ladder)
from .sdp import barrier_minimize, solve_sdp, symmetric_basis

SINGULAR_TOL = 1e-10


# --------------------------------------------------------------- quadratic

@dataclass
class QuadLadderHam:
    """``sum h1_ij a_i a_j^dag + h2_ij a_i a_j + conj(h2)_ij a_i^dag a_j^dag
    + h3_i a_i + conj(h3_i) a_i^dag + h0``."""

    h1: np.ndarray
    h2: np.ndarray
    h3: np.ndarray | None = None
    h0: float = 0.0

    def __post_init__(self):
        self.h1 = np.atleast_2d(np.asarray(self.h1, dtype=complex))
        self.h2 = np.atleast_2d(np.asarray(self.h2, dtype=complex))
        n = self.h1.shape[0]
        self.h3 = np.zeros(n, complex) if self.h3 is None else np.atleast_1d(np.asarray(self.h3, dtype=complex))
        if self.h1.shape != (n, n) or self.h2.shape != (n, n) or self.h3.shape != (n,):
            raise ValueError("h1, h2 must be n x n and h3 length n")
        if not np.allclose(self.h1, self.h1.conj().T, atol=1e-12):
            raise ValueError("h1 must be Hermitian")
        if not np.allclose(self.h2, self.h2.T, atol=1e-12):
            raise ValueError("h2 must be symmetric")
        self.h0 = float(self.h0)

    @property
    def modes(self) -> int:
        return self.h1.shape[0]

    @classmethod
    def single_mode(cls, alpha, beta):
        """``alpha a^2 + conj(alpha) a^dag^2 + beta N``."""
        return cls([[beta]], [[alpha]], None, -beta)

    @classmethod
    def number(cls, n: int):
        return cls(np.eye(n), np.zeros((n, n)), None, -n)

    def quadrature_form(self):
        """``(A, g, e0)`` with ``H = 1/2 r^T A r + g.r + e0``, ``r = (X_1..X_n, P_1..P_n)``."""
        R, S = self.h1.real, self.h1.imag
        U, V = self.h2.real, self.h2.imag
        A = np.block([[R + 2 * U, S - 2 * V], [-S - 2 * V, R - 2 * U]])
        g = math.sqrt(2) * np.concatenate([self.h3.real, -self.h3.imag])
        e0 = 0.5 * float(np.trace(self.h1).real) + self.h0
        return (A + A.T) / 2, g, e0

    @classmethod
    def from_quadrature(cls, A, g=None, e0=0.0) -> "QuadLadderHam":
        """Inverse of :meth:`quadrature_form`."""
        A = np.asarray(A, dtype=float)
        n = A.shape[0] // 2
        g = np.zeros(2 * n) if g is None else np.asarray(g, dtype=float)
        xx, xp, px, pp = A[:n, :n], A[:n, n:], A[n:, :n], A[n:, n:]
        R, U = (xx + pp) / 2, (xx - pp) / 4
        S, V = (xp - px) / 2, -(xp + px) / 4
        h3 = (g[:n] - 1j * g[n:]) / math.sqrt(2)
        return cls(R + 1j * S, U + 1j * V, h3, e0 - 0.5 * np.trace(R))

    def to_poly(self) -> NormalPoly:
        """Creation-left ladder polynomial (float coefficients)."""
        n = self.modes
        terms: dict = {}

        def add(mu, nu, c):
            key = (tuple(mu), tuple(nu))
            terms[key] = terms.get(key, 0) + c

        def unit(*idx):
            e = [0] * n
            for i in idx:
                e[i] += 1
            return e

        for i in range(n):
            for j in range(n):
                # a_i a_j^dag = a_j^dag a_i + delta_ij
                add(unit(i), unit(j), self.h1[i, j])
                add(unit(i, j), unit(), self.h2[i, j])
                add(unit(), unit(i, j), np.conj(self.h2[i, j]))
            add(unit(i), unit(), self.h3[i])
            add(unit(), unit(i), np.conj(self.h3[i]))
        add(unit(), unit(), np.trace(self.h1) + self.h0)
        return NormalPoly(n, "ladder", "float", terms=terms)

    @classmethod
    def from_poly(cls, poly: NormalPoly) -> "QuadLadderHam":
        """Inverse of :meth:`to_poly` for Hermitian polynomials of degree <= 2."""
        lad = poly if poly.basis == "ladder" else xp_to_ladder(poly)
        if lad.degree > 2:
            raise ValueError("quadratic Hamiltonian expected (degree <= 2)")
        n = lad.modes
        h1, h2, h3 = np.zeros((n, n), complex), np.zeros((n, n), complex), np.zeros(n, complex)
        const = 0j
        for (mu, nu), c in lad.as_complex_dict().items():
            ann = [i for i in range(n) for _ in range(mu[i])]
            cre = [i for i in range(n) for _ in range(nu[i])]
            if len(ann) == 1 and len(cre) == 1:
                h1[ann[0], cre[0]] += c
                if ann[0] == cre[0]:
                    const -= c
            elif len(ann) == 2 and not cre:
                i, j = ann
                if i == j:
                    h2[i, i] += c
                else:
                    h2[i, j] += c / 2
                    h2[j, i] += c / 2
            elif len(ann) == 1 and not cre:
                h3[ann[0]] += c
            elif not ann and not cre:
                const += c
        return cls(h1, h2, h3, const.real)


def single_mode_ground(alpha: complex, beta: float) -> dict:
    """Closed-form ground data of ``alpha a^2 + conj(alpha) a^dag^2 + beta N``."""
    alpha, beta = complex(alpha), float(beta)
    r = abs(alpha)
    if beta <= 2 * r:
        return {"bounded": False, "marginal": math.isclose(beta, 2 * r, rel_tol=1e-14, abs_tol=1e-300)}
    energy = 0.5 * (math.sqrt(beta * beta - 4 * r * r) - beta)
    theta = math.atan2(alpha.imag, alpha.real) if r else 0.0
    a_star = np.exp(-1j * theta) * math.tanh(0.5 * math.atanh(2 * r / beta))
    return {"bounded": True, "marginal": False, "energy": energy, "a_star": complex(a_star), "b_star": 0j}


@dataclass
class BoundednessResult:
    verdict: str                      # "Bounded", "Marginal" or "Unbounded"
    certificate: np.ndarray           # realified quadrature matrix A
    min_eigenvalue: float
    ray: np.ndarray | None = None     # coherent amplitude z0; energy at K z0 -> -inf

    @property
    def bounded(self) -> bool:
        return self.verdict != "Unbounded"


def boundedness_check(h: QuadLadderHam, tol: float = SINGULAR_TOL) -> BoundednessResult:
    """Bounded iff ``A`` is PSD and ``g`` lies in its range; PD gives a strict verdict."""
    A, g, _ = h.quadrature_form()
    n = h.modes
    lam, vec = np.linalg.eigh(A)
    scale = max(1.0, np.abs(A).max())
    low = float(lam[0])

    def ray(v):
        return (v[:n] + 1j * v[n:]) / math.sqrt(2)

    if low < -tol * scale:
        return BoundednessResult("Unbounded", A, low, ray(vec[:, 0]))
    null = vec[:, lam <= tol * scale]
    if null.shape[1] == 0:
        return BoundednessResult("Bounded", A, low)
    proj = null.T @ g
    if np.abs(proj).max() > tol * max(1.0, np.abs(g).max()):
        v = -null @ proj
        return BoundednessResult("Unbounded", A, low, ray(v / np.linalg.norm(v)))
    return BoundednessResult("Marginal", A, low)


def coherent_expectation(H: NormalPoly, z):
    """``<z|H|z>``: ``a^dag -> conj(z)``, ``a -> z`` on the creation-left form.

    Exact when ``H`` is exact and ``z`` holds ints, Fractions or Exact values.
    """
    lad = H if H.basis == "ladder" else xp_to_ladder(H)
    exact = lad.kind == "exact" and all(not isinstance(v, (float, complex, np.number)) for v in z)
    if exact:
        zs = [Exact.coerce(v) for v in z]
        zb = [v.conjugate() for v in zs]
        total = Exact(0)
    else:
        zs = [complex(v) for v in z]
        zb = [v.conjugate() for v in zs]
        total = 0j
    for (mu, nu), c in lad.terms.items():
        term = c if exact else complex(c)
        for i, (m, k) in enumerate(zip(mu, nu)):
            term = term * zs[i] ** m * zb[i] ** k
        total = total + term
    return total


def ray_energy(h: QuadLadderHam, z0, K: float) -> float:
    """Coherent energy along the ray ``K z0``."""
    return coherent_expectation(h.to_poly(), np.asarray(z0) * K).real


@dataclass
class GaussianGround:
    energy: float
    method: str
    covariance: np.ndarray    # quadrature covariance (1/2 <{dr, dr}>), vacuum = I/2
    mean: np.ndarray          # quadrature mean r*
    gap: float
    reduced_X: np.ndarray | None = None
    basis: np.ndarray | None = None


def _good_basis(h: QuadLadderHam, tol: float = 1e-10):
    """Mode rotation ``W`` making h2 real diagonal >= 0 and h1 real, if one exists via Takagi."""
    if np.abs(h.h2).max() < tol:
        W = np.eye(h.modes)
    else:
        T = takagi(h.h2)
        W = T.U.conj()
    h1 = W @ h.h1 @ W.conj().T
    h2 = W @ h.h2 @ W.T
    if np.abs(h1.imag).max() > tol or np.abs(h2.imag).max() > tol:
        return None
    return W, h1.real, h2.real


def _reduced_sdp(Pm, Qm, gap_tol=1e-12):
    """``min tr((P-2Q)X) + tr((P+2Q)X^-1)`` over ``X > I`` by log-barrier Newton from ``X = 2I``."""
    n = Pm.shape[0]
    B, A = Pm - 2 * Qm, Pm + 2 * Qm
    basis = symmetric_basis(n)
    iu = np.triu_indices(n)

    def unpack(x):
        X = np.zeros((n, n))
        X[iu] = x
        return X + np.triu(X, 1).T

    def fgh(x, t):
        X = unpack(x)
        Xi = np.linalg.inv(X)
        Yi = np.linalg.inv(X - np.eye(n))
        sign, logdet = np.linalg.slogdet(X - np.eye(n))
        val = t * (np.trace(B @ X) + np.trace(A @ Xi)) - logdet
        G = t * (B - Xi @ A @ Xi) - Yi
        XAX = Xi @ A @ Xi
        grad = np.array([np.tensordot(G, E) for E in basis])
        H = np.empty((len(basis), len(basis)))
        for k, E in enumerate(basis):
            act = t * (Xi @ E @ XAX + XAX @ E @ Xi) + Yi @ E @ Yi
            H[k] = [np.tensordot(act, F) for F in basis]
        return val, grad, (H + H.T) / 2

    def feasible(x):
        try:
            np.linalg.cholesky(unpack(x) - np.eye(n))
            return True
        except np.linalg.LinAlgError:
            return False

    x0 = (2 * np.eye(n))[iu]
    x, gap = barrier_minimize(fgh, x0, feasible, barrier_size=n, gap_tol=gap_tol)
    X = unpack(x)
    return X, float(np.trace(B @ X) + np.trace(A @ np.linalg.inv(X))), gap


def _covariance_sdp(A, tol=1e-8):
    """``min 1/2 tr(A S)`` over quadrature covariances ``S + i Omega/2 >= 0``."""
    m = A.shape[0]
    n = m // 2
    Om = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
    C = np.block([[np.zeros((m, m)), -Om / 2], [Om / 2, np.zeros((m, m))]])
    basis = symmetric_basis(m)
    As = [-np.kron(np.eye(2), E) for E in basis]
    b = np.array([-0.5 * np.tensordot(A, E) for E in basis])
    res = solve_sdp(C, As, b, tol=tol)
    S = sum(y * E for y, E in zip(res.y, basis))
    return S, -res.dual, res.gap


def williamson_energy(A) -> float:
    """``1/2 sum nu_k``: symplectic eigenvalues of a PSD quadrature matrix."""
    n = A.shape[0] // 2
    Om = np.block([[np.zeros((n, n)), np.eye(n)], [-np.eye(n), np.zeros((n, n))]])
    nu = np.abs(np.linalg.eigvals(1j * Om @ A))
    return 0.25 * float(np.sum(nu))


def gaussian_ground_energy(h: QuadLadderHam, tol: float = 1e-8, method: str = "auto") -> GaussianGround:
    """Minimum of ``<H>`` over Gaussian states (the ground energy for quadratic ``H``).

    ``method="reduced"`` uses the two-block SDP in a Takagi basis of ``h2``;
    ``"covariance"`` the general covariance-matrix SDP.  ``auto`` tries the
    reduced form and falls back when no real good basis exists or the
    ``X > I`` constraint ends up active.
    """
    check = boundedness_check(h)
    if not check.bounded:
        raise Infeasible(f"Hamiltonian is unbounded below (min eigenvalue {check.min_eigenvalue:.3e})")
    A, g, e0 = h.quadrature_form()
    n = h.modes
    mean = -np.linalg.lstsq(A, g, rcond=None)[0]
    linear = 0.5 * float(g @ mean)
    if check.verdict == "Marginal":
        raise Infeasible("marginal instance: infimum not attained by any Gaussian state")
    good = _good_basis(h) if method in ("auto", "reduced") else None
    if good is not None:
        W, Pm, Qm = good
        X, val, gap = _reduced_sdp(Pm, Qm, gap_tol=min(tol, 1e-12))
        # the X > I constraint binds iff the unconstrained gradient is nonzero there
        Xi = np.linalg.inv(X)
        grad = (Pm - 2 * Qm) - Xi @ (Pm + 2 * Qm) @ Xi
        binding = np.abs(grad).max() > 1e-6 * max(1.0, np.abs(Pm).max())
        if not binding or method == "reduced":
            # back to the original quadratures: W is a passive (orthogonal-symplectic) map
            Sred = 0.5 * np.block([[np.linalg.inv(X), np.zeros((n, n))], [np.zeros((n, n)), X]])
            O = np.block([[W.real, -W.imag], [W.imag, W.real]])
            S = O.T @ Sred @ O
            return GaussianGround(0.25 * val + 0.5 * float(np.trace(h.h1).real) + h.h0 + linear,
                                  "reduced", S, mean, gap, X, W)
    elif method == "reduced":
        raise Infeasible("no real good basis for this instance")
    S, quad, gap = _covariance_sdp(A, tol=tol)
    return GaussianGround(quad + e0 + linear, "covariance", S, mean, gap)


def fock_ground_energy(H, cutoff: int) -> float:
    """Lowest eigenvalue of the truncated Hamiltonian (dense, or Lanczos for big bases)."""
    from .fockspace import ladder_matrix
    poly = H.to_poly() if isinstance(H, QuadLadderHam) else H
    lad = poly if poly.basis == "ladder" else xp_to_ladder(poly)
    mat = ladder_matrix(lad.as_complex_dict(), lad.modes, cutoff)
    if lad.modes == 1 and mat.shape[0] > 400:
        # banded with bandwidth = degree; lower-band storage for eigvals_banded
        w = lad.degree
        dense = mat.toarray()
        band = np.zeros((w + 1, mat.shape[0]), dtype=complex)
        for k in range(w + 1):
            band[k, : mat.shape[0] - k] = np.diagonal(dense, -k)
        return float(scipy.linalg.eigvals_banded(band, lower=True, select="i", select_range=(0, 0))[0])
    if mat.shape[0] <= 2500:
        return float(np.linalg.eigvalsh(mat.toarray())[0])
    import scipy.sparse.linalg as sla
    return float(sla.eigsh(mat, k=1, which="SA", return_eigenvectors=False)[0])


# ------------------------------------------------------ Gaussian moments

@dataclass
class Takagi:
    U: np.ndarray
    D: np.ndarray


def takagi(A, tol: float = 1e-12) -> Takagi:
    """``A = U^T diag(D) U`` for complex symmetric ``A`` (real 2n x 2n eigenproblem)."""
    A = np.asarray(A, dtype=complex)
    n = A.shape[0]
    R = np.block([[A.real, A.imag], [A.imag, -A.real]])
    lam, vec = np.linalg.eigh(R)
    scale = max(1.0, np.abs(A).max())
    cols, vals = [], []
    for k in range(2 * n - 1, -1, -1):
        if lam[k] <= tol * scale:
            break
        w = vec[:n, k] + 1j * vec[n:, k]
        cols.append(w / np.linalg.norm(w))
        vals.append(lam[k])
    if len(cols) < n:
        null = scipy.linalg.null_space(A, rcond=tol)
        for y in null.T[: n - len(cols)]:
            cols.append(y.conj())
            vals.append(0.0)
    W = np.array(cols).T
    return Takagi(W.T, np.array(vals))


@dataclass
class GaussianStellarParams:
    """Pure Gaussian state ``exp(-1/2 adag^T A adag + b.adag)|0>`` (normalized)."""

    A: np.ndarray
    b: np.ndarray
    _takagi: Takagi | None = field(default=None, repr=False)

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=complex))
        self.b = np.atleast_1d(np.asarray(self.b, dtype=complex))
        if not np.allclose(self.A, self.A.T, atol=1e-12):
            raise ValueError("A must be symmetric")
        self._takagi = takagi(self.A)
        if self._takagi.D.max(initial=0) >= 1:
            raise ValueError("need |A| < I (Takagi values in [0, 1))")

    @property
    def U(self):
        return self._takagi.U

    @property
    def D(self):
        return self._takagi.D

    @property
    def modes(self) -> int:
        return self.A.shape[0]

    def mean(self) -> np.ndarray:
        """``<a> = U^T (I - D^2)^-1 (conj(U) b - D U conj(b))``."""
        U, D, b = self.U, self.D, self.b
        return U.T @ ((U.conj() @ b - D * (U @ b.conj())) / (1 - D ** 2))

    def fluctuations(self):
        """``N_ij = <da_i^dag da_j>`` and ``M_ij = <da_i da_j>``."""
        A, n = self.A, self.modes
        # N = conj(A) (N^T + I) A, solved as a linear system in vec(N)
        Ab = A.conj()
        perm = np.zeros((n * n, n * n))
        for i in range(n):
            for j in range(n):
                perm[i * n + j, j * n + i] = 1
        lhs = np.eye(n * n) - np.kron(Ab, A.T) @ perm
        N = np.linalg.solve(lhs, (Ab @ A).ravel()).reshape(n, n)
        M = -(N.T + np.eye(n)) @ A
        return N, M


def _wick(ops, N, M):
    """Normal-ordered Wick sum over fluctuation operators ``(is_dag, mode)``."""
    if not ops:
        return 1.0
    if len(ops) % 2:
        return 0.0
    first, rest = ops[0], ops[1:]
    total = 0j
    for k, other in enumerate(rest):
        (d1, i), (d2, j) = first, other
        if d1 and d2:
            pair = np.conj(M[i, j])
        elif d1 and not d2:
            pair = N[i, j]
        elif not d1 and not d2:
            pair = M[i, j]
        else:
            raise AssertionError("annihilator left of creator in a normal-ordered product")
        if pair != 0:
            total += pair * _wick(rest[:k] + rest[k + 1:], N, M)
    return total


def gaussian_expectation(H: NormalPoly, params: GaussianStellarParams, max_degree: int = 4) -> float:
    """``<psi|H|psi>`` from the first and second moments (Wick's theorem)."""
    lad = H if H.basis == "ladder" else xp_to_ladder(H)
    if lad.degree > max_degree:
        raise ValueError(f"degree {lad.degree} > {max_degree} unsupported")
    c = params.mean()
    N, M = params.fluctuations()
    total = 0j
    for (mu, nu), coef in lad.as_complex_dict().items():
        ops = [(True, i) for i in range(lad.modes) for _ in range(nu[i])]
        ops += [(False, i) for i in range(lad.modes) for _ in range(mu[i])]
        # a = c + da: expand, each factor either its mean or its fluctuation
        acc = 0j
        for pick in itertools.product((0, 1), repeat=len(ops)):
            w = 1 + 0j
            fl = []
            for (dag, i), p in zip(ops, pick):
                if p:
                    fl.append((dag, i))
                else:
                    w *= np.conj(c[i]) if dag else c[i]
            if w != 0:
                acc += w * _wick(fl, N, M)
        total += coef * acc
    return total.real


def gaussian_state_fock(params: GaussianStellarParams, cutoff: int) -> np.ndarray:
    """Explicit Fock vector (graded basis) by exponentiating the raising generator."""
    import scipy.sparse.linalg as sla
    from .fockspace import basis_size, ladder_matrix
    n = params.modes
    terms: dict = {}
    for i in range(n):
        for j in range(n):
            nu = [0] * n
            nu[i] += 1
            nu[j] += 1
            key = ((0,) * n, tuple(nu))
            terms[key] = terms.get(key, 0) - 0.5 * params.A[i, j]
        e = [0] * n
        e[i] = 1
        key = ((0,) * n, tuple(e))
        terms[key] = terms.get(key, 0) + params.b[i]
    gen = ladder_matrix(terms, n, cutoff)
    vac = np.zeros(basis_size(n, cutoff), complex)
    vac[0] = 1
    psi = sla.expm_multiply(gen.tocsc(), vac)
    return psi / np.linalg.norm(psi)


# ------------------------------------------------------- sum of squares

def _monomials(modes: int, degree: int):
    """Exponent pairs ``(mu, nu)`` of commuting ``x, p`` monomials, graded."""
    out = []
    for d in range(degree + 1):
        for e in itertools.product(range(d + 1), repeat=2 * modes):
            if sum(e) == d:
                out.append((tuple(e[:modes]), tuple(e[modes:])))
    return sorted(set(out), key=lambda k: (sum(k[0]) + sum(k[1]), [-v for v in k[0] + k[1]]))


def _add(k1, k2):
    return tuple(a + b for a, b in zip(k1[0], k2[0])), tuple(a + b for a, b in zip(k1[1], k2[1]))


def _rational(c) -> Fraction:
    if isinstance(c, Exact):
        if c.has_sqrt2 or not c.is_real():
            raise ValueError("sum-of-squares certificate needs rational coefficients")
        return Fraction(int(c.re.numerator), int(c.re.denominator))
    return Fraction(float(complex(c).real))


@dataclass
class SosWitness:
    """``H = sum_k weights[k] * squares[k]^2 + shift``, with ``H >= shift`` certified."""

    gram: list           # exact PSD Gram matrix over ``monomials`` (Fractions)
    monomials: list
    squares: list        # Hermitian NormalPoly (XP form, exact)
    weights: list        # Fractions >= 0
    shift: Exact


def _ldl_psd(G):
    """Exact ``G = L diag(d) L^T``; ``None`` if ``G`` is not PSD."""
    n = len(G)
    G = [row[:] for row in G]
    L = [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    d = []
    for k in range(n):
        piv = G[k][k]
        if piv < 0:
            return None
        if piv == 0:
            if any(G[i][k] != 0 for i in range(k + 1, n)):
                return None
            d.append(Fraction(0))
            continue
        d.append(piv)
        for i in range(k + 1, n):
            L[i][k] = G[i][k] / piv
        for i in range(k + 1, n):
            if L[i][k] == 0:
                continue
            for j in range(k + 1, n):
                G[i][j] -= L[i][k] * L[j][k] * piv
    return L, d



def _prune_monomials(mons, coef):
    """Drop Gram rows forced to zero, so the SDP keeps a strictly feasible point.

    If the square of ``m_i`` can only arise from the diagonal entry ``(i, i)``
    and its coefficient is zero, the whole row vanishes in any PSD Gram
    matrix.  Repeats until stable; returns ``None`` on a negative such entry.
    """
    live = list(mons)
    changed = True
    while changed:
        changed = False
        for i, mi in enumerate(live):
            if not any(mi[0] + mi[1]):
                continue  # the constant's diagonal carries the shift
            target = _add(mi, mi)
            hits = sum(1 for a in live for c in live if _add(a, c) == target)
            if hits > 1:
                continue
            value = coef.get(target, 0)
            if value < 0:
                return None
            if value == 0:
                del live[i]
                changed = True
                break
    return live

def sos_witness(H: NormalPoly, tol: float = 1e-8) -> SosWitness | None:
    """Degree-4 SoS certificate via a Gram-matrix SDP over degree-<=2 monomials.

    The SDP maximizes the operator shift directly: the symmetrized product of
    two basis monomials equals the symmetrized monomial of their product up
    to a constant, and those constants enter the objective.  The float Gram
    matrix is rounded to rationals, projected exactly onto the coefficient
    constraints and accepted only if an exact LDL^T shows it is PSD.
    Returns ``None`` when no certificate is found (which proves nothing).
    """
    sym = to_anticommutator(H)
    if sym.degree > 4:
        raise ValueError("sum-of-squares witness supports degree <= 4")
    n = sym.modes
    coef = {k: _rational(c) for k, c in sym.terms.items()}
    mons = _prune_monomials(_monomials(n, 2), coef)
    if mons is None:
        return None
    m = len(mons)
    zero = ((0,) * n, (0,) * n)
    ops = [from_sym(k, n) for k in mons]
    classes: dict = {}
    const = [[Fraction(0)] * m for _ in range(m)]
    for i in range(m):
        for j in range(m):
            key = _add(mons[i], mons[j])
            classes.setdefault(key, []).append((i, j))
            if j >= i:
                prod = ops[i] * ops[j]
                sym_prod = (prod + ops[j] * ops[i]).scale(Fraction(1, 2))
                rem = sym_prod - from_sym(key, n)
                if not rem.is_scalar():
                    raise AssertionError("symmetrized product differs by a non-constant")
                const[i][j] = const[j][i] = _rational(rem.constant_term())
    if any(k not in classes and c != 0 for k, c in coef.items()):
        return None
    keys = [k for k in classes if k != zero]
    C = np.array([[float(const[i][j]) for j in range(m)] for i in range(m)])
    C[0, 0] += 1.0
    As = []
    for k in keys:
        mat = np.zeros((m, m))
        for i, j in classes[k]:
            mat[i, j] = 1.0
        As.append(mat)
    b = np.array([float(coef.get(k, 0)) for k in keys])
    try:
        res = solve_sdp(C, As, b, tol=tol)
    except Infeasible:
        return None
    best = float(np.tensordot(C, res.X))
    # the optimum is usually singular at an irrational point; if rounding it
    # fails, back off the shift by delta and use the analytic centre of that slice
    for delta in (None, 1e-9, 1e-7, 1e-5, 1e-3):
        if delta is None:
            G0 = res.X
        else:
            level = best + delta * max(1.0, abs(best))
            try:
                G0 = solve_sdp(np.zeros((m, m)), As + [C], np.append(b, level), tol=tol).X
            except Infeasible:
                continue
        found = _exact_gram(G0, classes, keys, coef, m)
        if found is not None:
            return _assemble(coef, found, mons, ops, _ldl_psd(found))
    return None


def _exact_gram(G0, classes, keys, coef, m):
    """Rational PSD Gram matrix near ``G0`` satisfying the constraints exactly, or ``None``."""
    lam, vec = np.linalg.eigh(G0)
    top = max(lam[-1], 1e-300)
    for rel in (None, 1e-8, 1e-6, 1e-4, 1e-3):
        # face: span of the eigenvectors that are not numerically zero
        kernel = [] if rel is None else [v for l, v in zip(lam, vec.T) if l < rel * top]
        if rel is not None and not kernel:
            continue
        B = _face_basis(kernel, m)
        if B is None:
            continue
        Bf = np.array([[float(v) for v in row] for row in B])
        core = np.linalg.pinv(Bf) @ G0 @ np.linalg.pinv(Bf).T
        for bits in (4, 8, 16, 24, 32, 40):
            G = _round_project(core, 0.0, 1 << bits, B, classes, keys, coef)
            if G is None:
                break
            if _ldl_psd(G["core"]) is not None:
                return G["full"]
    return None


def _rref(rows):
    """Exact reduced row echelon form; returns (rows, pivot columns)."""
    rows = [list(r) for r in rows]
    pivots = []
    r = 0
    ncol = len(rows[0]) if rows else 0
    for c in range(ncol):
        p = next((i for i in range(r, len(rows)) if rows[i][c] != 0), None)
        if p is None:
            continue
        rows[r], rows[p] = rows[p], rows[r]
        inv = 1 / rows[r][c]
        rows[r] = [v * inv for v in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [a - f * b for a, b in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
        if r == len(rows):
            break
    return rows[:r], pivots


def _face_basis(kernel, m):
    """Rational m x r basis of the complement of a (rounded) numerical kernel."""
    if not kernel:
        return [[Fraction(int(i == j)) for j in range(m)] for i in range(m)]
    K = np.array(kernel)
    # numeric rref of the kernel rows, then snap entries to small rationals
    rows = [[Fraction(float(v)).limit_denominator(64) for v in row] for row in _numeric_rref(K)]
    rows, piv = _rref(rows)
    if len(rows) != len(kernel):
        return None
    # complement: nullspace of the kernel rows, one vector per free column
    free = [c for c in range(m) if c not in piv]
    basis = []
    for f in free:
        v = [Fraction(0)] * m
        v[f] = Fraction(1)
        for row, pc in zip(rows, piv):
            v[pc] = -row[f]
        basis.append(v)
    if not basis:
        return None
    return [list(col) for col in zip(*basis)]  # m x r


def _numeric_rref(K):
    """Row-reduce the kernel rows with identity on their dominant columns."""
    K = np.array(K, dtype=float)
    _, _, piv = scipy.linalg.qr(K, pivoting=True)
    cols = np.sort(piv[: K.shape[0]])
    return np.linalg.solve(K[:, cols], K)


def _round_project(core, eps, den, B, classes, keys, coef):
    """Round the face Gram matrix, project exactly onto the coefficient constraints.

    Returns ``{"core", "full"}`` or ``None`` when the constraints are inconsistent
    on this face.
    """
    r = len(B[0])
    m = len(B)
    idx = [(i, j) for i in range(r) for j in range(i, r)]
    x0 = [Fraction(round((core[i, j] + (eps if i == j else 0)) * den), den) for i, j in idx]
    # constraint rows: sum over class of (B C B^T)_ab, linear in the upper entries of C
    rows, rhs = [], []
    for k in keys:
        row = []
        for i, j in idx:
            acc = Fraction(0)
            for a, b in classes[k]:
                t = B[a][i] * B[b][j]
                if i != j:
                    t += B[a][j] * B[b][i]
                acc += t
            row.append(acc)
        rows.append(row)
        rhs.append(coef.get(k, Fraction(0)))
    resid = [b - sum(a * x for a, x in zip(row, x0)) for row, b in zip(rows, rhs)]
    # minimal-norm correction: x = x0 + L^T lam with (L L^T) lam = resid
    gram = [[sum(a * b for a, b in zip(ri, rj)) for rj in rows] for ri in rows]
    aug, piv = _rref([g + [v] for g, v in zip(gram, resid)])
    if any(p == len(rows) for p in piv):
        return None
    lam = [Fraction(0)] * len(rows)
    for row, p in zip(aug, piv):
        lam[p] = row[-1]
    x = [xv + sum(l * row[c] for l, row in zip(lam, rows)) for c, xv in enumerate(x0)]
    if any(sum(a * v for a, v in zip(row, x)) != b for row, b in zip(rows, rhs)):
        return None
    C = [[Fraction(0)] * r for _ in range(r)]
    for (i, j), v in zip(idx, x):
        C[i][j] = C[j][i] = v
    full = [[sum(B[a][i] * C[i][j] * B[b][j] for i in range(r) for j in range(r) if C[i][j])
             for b in range(m)] for a in range(m)]
    return {"core": C, "full": full}


def from_sym(key, n) -> NormalPoly:
    """Exact XP form of ``(1/2){X^mu, P^nu}``."""
    return anticommutator_monomial(key[0], key[1])


def _assemble(coef, G, mons, ops, dec) -> SosWitness:
    L, d = dec
    m = len(mons)
    n = ops[0].modes
    squares, weights = [], []
    total = NormalPoly(n)
    for k in range(m):
        if d[k] == 0:
            continue
        q = NormalPoly(n)
        for i in range(m):
            if L[i][k]:
                q = q + ops[i].scale(L[i][k])
        squares.append(q)
        weights.append(d[k])
        total = total + (q * q).scale(d[k])
    # H rebuilt from its rational symbol: identical to H for exact input
    Hx = NormalPoly(n)
    for k, c in coef.items():
        Hx = Hx + from_sym(k, n).scale(c)
    rem = Hx - total
    if not rem.is_scalar():
        raise AssertionError("H minus the squares is not a multiple of the identity")
    shift = rem.constant_term()
    if not shift.is_real():
        raise AssertionError("non-real shift")
    return SosWitness(G, mons, squares, weights, shift)


# ------------------------------------------------------------- gadgets

def copositivity_gadget(M, linear=None) -> NormalPoly:
    """``sum M_ij N_i N_j (+ sum l_i N_i)`` in exact ladder form."""
    M = [[Fraction(v) for v in row] for row in M]
    n = len(M)
    H = NormalPoly(n, "ladder")
    nums = [NormalPoly.number(j, n) for j in range(n)]
    for i in range(n):
        for j in range(n):
            if M[i][j]:
                H = H + (nums[i] * nums[j]).scale(M[i][j])
    if linear is not None:
        for i, l in enumerate(linear):
            H = H + nums[i].scale(Fraction(l))
    return H


def _number_diagonal(H: NormalPoly) -> NormalPoly:
    lad = H if H.basis == "ladder" else xp_to_ladder(H)
    if any(mu != nu for mu, nu in lad.terms):
        raise ValueError("Hamiltonian is not diagonal in the number basis")
    return lad


def spectrum_box(H: NormalPoly, K: int) -> dict:
    """``{m: <m|H|m>}`` for every ``m`` in ``{0..K}^n`` (exact)."""
    lad = _number_diagonal(H)
    return {m: fock_expectation(lad, m) for m in itertools.product(range(K + 1), repeat=lad.modes)}


def fock_box_min(H: NormalPoly, K: int):
    """``(min value, argmin)`` of the number-diagonal ``H`` over the box."""
    spec = spectrum_box(H, K)
    arg = min(spec, key=lambda m: _real_key(spec[m]))
    return spec[arg], arg


def _real_key(v):
    if isinstance(v, Exact) and not v.has_sqrt2:
        return v.re
    return complex(v).real


def hilbert_gadget(P: dict, modes: int | None = None) -> NormalPoly:
    """``P(N_1..N_n)^2`` for an integer polynomial ``{exponents: coefficient}``."""
    if any(int(c) != c for c in P.values()):
        raise ValueError("Hilbert gadget needs integer coefficients")
    n = modes or len(next(iter(P)))
    nums = [NormalPoly.number(j, n) for j in range(n)]
    Q = NormalPoly(n, "ladder")
    for exps, c in P.items():
        term = NormalPoly.constant(int(c), n, basis="ladder")
        for j, e in enumerate(exps):
            for _ in range(e):
                term = term * nums[j]
        Q = Q + term
    return Q * Q


def eval_int_poly(P: dict, m) -> int:
    return sum(int(c) * math.prod(v ** e for v, e in zip(m, exps)) for exps, c in P.items())
