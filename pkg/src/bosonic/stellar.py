"""Finite stellar rank: Gaussian conjugation, core-sector Hamiltonians, witnesses.

A state of stellar rank at most ``r`` is ``G|c>`` with ``G`` Gaussian and
``|c>`` supported on total particle number ``<= r``.  Here

    G = U_V S(xi) D(disp),

with ``U_V^dag a U_V = V a`` (passive), ``S(xi) = prod exp(1/2 (conj(xi) a^2 - xi adag^2))``
and ``D(disp) = prod exp(disp adag - conj(disp) a)``.  Conjugation acts on
``zeta = (a, adag)`` as ``zeta -> T zeta + shift``; the energy of the witness
is the expectation of ``Pi_r G^dag H G Pi_r`` in the core.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.optimize import minimize, minimize_scalar

from .errors import BudgetExceeded
from .fockspace import basis_size, fock_basis, ladder_matrix
from .polyham import NormalPoly, xp_to_ladder

DIM_CAP = 200_000
DENSE_LIMIT = 2000


class MalformedWitness(ValueError):
    """Witness data is inconsistent (shapes, normalization, unitarity)."""


# ------------------------------------------------------------------ witness

@dataclass
class StellarWitness:
    V: np.ndarray
    xi: np.ndarray
    disp: np.ndarray
    core: dict          # {occupation tuple: amplitude}

    def __post_init__(self):
        self.V = np.atleast_2d(np.asarray(self.V, dtype=complex))
        n = self.V.shape[0]
        self.xi = np.atleast_1d(np.asarray(self.xi, dtype=complex))
        self.disp = np.atleast_1d(np.asarray(self.disp, dtype=complex))
        if self.V.shape != (n, n) or self.xi.shape != (n,) or self.disp.shape != (n,):
            raise MalformedWitness("V must be n x n and xi, disp length n")
        if not np.allclose(self.V.conj().T @ self.V, np.eye(n), atol=1e-9):
            raise MalformedWitness("V is not unitary")
        core = {}
        for m, amp in self.core.items():
            m = tuple(int(v) for v in m)
            if len(m) != n or min(m) < 0:
                raise MalformedWitness(f"bad core index {m}")
            core[m] = complex(amp)
        norm = math.sqrt(sum(abs(v) ** 2 for v in core.values()))
        if not core or abs(norm - 1) > 1e-9:
            raise MalformedWitness(f"core must be normalized (norm {norm:.3g})")
        self.core = core

    @property
    def modes(self) -> int:
        return self.V.shape[0]

    @property
    def rank(self) -> int:
        """Largest total particle number in the core support."""
        return max(sum(m) for m, v in self.core.items() if v != 0)

    def core_vector(self, r: int) -> np.ndarray:
        basis = fock_basis(self.modes, r)
        return np.array([self.core.get(m, 0j) for m in basis])

    @classmethod
    def gaussian(cls, V, xi, disp, r: int = 0, core_vec=None):
        V = np.atleast_2d(np.asarray(V, dtype=complex))
        n = V.shape[0]
        basis = fock_basis(n, r)
        if core_vec is None:
            core = {basis[0]: 1.0}
        else:
            core = {m: complex(v) for m, v in zip(basis, core_vec) if v != 0}
        return cls(V, xi, disp, core)

    def to_json(self) -> dict:
        def cplx(z):
            return [float(z.real), float(z.imag)]
        return {"schema": "stellar-witness/1",
                "V": [[cplx(z) for z in row] for row in self.V],
                "xi": [cplx(z) for z in self.xi],
                "disp": [cplx(z) for z in self.disp],
                "core": [{"m": list(m), "amp": cplx(v)} for m, v in self.core.items()]}

    @classmethod
    def from_json(cls, obj: dict) -> "StellarWitness":
        try:
            def cplx(p):
                return complex(p[0], p[1])
            return cls(np.array([[cplx(z) for z in row] for row in obj["V"]]),
                       np.array([cplx(z) for z in obj["xi"]]),
                       np.array([cplx(z) for z in obj["disp"]]),
                       {tuple(e["m"]): cplx(e["amp"]) for e in obj["core"]})
        except (KeyError, TypeError, IndexError) as exc:
            raise MalformedWitness(f"witness JSON: {exc!r}") from exc


def witness_from_gaussian(A, b) -> StellarWitness:
    """Rank-0 witness for the state ``exp(-1/2 adag^T A adag + b.adag)|0>``."""
    from .groundstate import GaussianStellarParams
    params = GaussianStellarParams(A, b)
    V = params.U.T                        # A = V diag(D) V^T
    xi = np.arctanh(params.D).astype(complex)
    w = V.conj().T @ params.mean()        # mean seen by the squeezers
    disp = np.cosh(xi.real) * w + np.sinh(xi.real) * w.conj()
    return StellarWitness.gaussian(V, xi, disp)


# ------------------------------------------------------------- conjugation

def build_bogoliubov(V, xi) -> np.ndarray:
    """``T`` with ``(U_V S)^dag zeta (U_V S) = T zeta`` on ``zeta = (a, adag)``."""
    V = np.atleast_2d(np.asarray(V, dtype=complex))
    xi = np.atleast_1d(np.asarray(xi, dtype=complex))
    n = V.shape[0]
    if not np.allclose(V.conj().T @ V, np.eye(n), atol=1e-9):
        raise ValueError("V must be unitary")
    r, phase = np.abs(xi), np.exp(1j * np.angle(xi))
    top = np.hstack([V * np.cosh(r), -V * (phase * np.sinh(r))])
    return np.vstack([top, top[:, [*range(n, 2 * n), *range(n)]].conj()])


def symplectic_defect(T) -> float:
    """``||T K T^dag - K||`` with ``K = diag(I, -I)``; zero for a Bogoliubov map."""
    n = T.shape[0] // 2
    K = np.diag([1.0] * n + [-1.0] * n)
    return float(np.abs(T @ K @ T.conj().T - K).max())


def gaussian_map(w: StellarWitness):
    """``(T, shift)`` so that ``G^dag a G = T_top zeta + shift``."""
    T = build_bogoliubov(w.V, w.xi)
    shift = T[: w.modes] @ np.concatenate([w.disp, w.disp.conj()])
    return T, shift


@dataclass
class ConjugatedHam:
    poly: NormalPoly            # ladder basis, float coefficients
    T: np.ndarray
    shift: np.ndarray
    source_degree: int

    @property
    def degree(self) -> int:
        return self.poly.degree

    @property
    def modes(self) -> int:
        return self.poly.modes


def _ladder_float(H: NormalPoly) -> NormalPoly:
    L = xp_to_ladder(H) if H.basis != "ladder" else H
    return L.to_float(53) if L.kind == "exact" else L


def conjugate_hamiltonian(H: NormalPoly, T, shift) -> ConjugatedHam:
    """``G^dag H G`` by substituting ``a_j -> sum_k T_jk zeta_k + shift_j`` into the coefficients."""
    L = _ladder_float(H)
    n = L.modes
    T = np.asarray(T, dtype=complex)
    shift = np.asarray(shift, dtype=complex)
    prec = L.prec
    zero = NormalPoly(n, "ladder", "float", prec)
    one = NormalPoly.constant(1, n, "ladder", "float", prec)
    a = [NormalPoly.a(k, n, "float", prec) for k in range(n)]
    ad = [NormalPoly.adag(k, n, "float", prec) for k in range(n)]
    lower = []
    for j in range(n):
        img = NormalPoly.constant(complex(shift[j]), n, "ladder", "float", prec)
        for k in range(n):
            if T[j, k]:
                img = img + a[k].scale(complex(T[j, k]))
            if T[j, n + k]:
                img = img + ad[k].scale(complex(T[j, n + k]))
        lower.append(img)
    raise_ = [p.adjoint() for p in lower]
    cache: dict = {}

    def power(which, j, e):
        key = (which, j, e)
        if key not in cache:
            base = raise_ if which else lower
            cache[key] = one if e == 0 else power(which, j, e - 1) * base[j]
        return cache[key]

    out = zero
    with L._ctx():
        for (mu, nu), c in L.terms.items():
            term = one
            for j, e in enumerate(nu):      # creation operators stand on the left
                if e:
                    term = term * power(1, j, e)
            for j, e in enumerate(mu):
                if e:
                    term = term * power(0, j, e)
            out = out + term.scale(c)
    return ConjugatedHam(out, T, shift, L.degree)


def conjugate_by_witness(H: NormalPoly, w: StellarWitness) -> ConjugatedHam:
    T, shift = gaussian_map(w)
    return conjugate_hamiltonian(H, T, shift)


# --------------------------------------------------------- core-sector matrices

def _check_dim(n: int, r: int, cap: int):
    dim = basis_size(n, r)
    if dim > cap:
        raise BudgetExceeded(f"sector dimension C({n}+{r},{n}) = {dim} exceeds cap {cap}")
    return dim


def projected_hamiltonian(h, r: int, modes: int | None = None, cap: int = DIM_CAP) -> sp.csr_matrix:
    """``Pi_r h Pi_r`` on ``{|m| <= r}`` from ladder actions of each monomial."""
    poly = h.poly if isinstance(h, ConjugatedHam) else _ladder_float(h)
    n = modes or poly.modes
    _check_dim(n, r, cap)
    return ladder_matrix(poly.as_complex_dict(), n, r)


@lru_cache(maxsize=32)
def _sector_ladders(n: int, top: int):
    ops = []
    for j in range(n):
        e = tuple(int(k == j) for k in range(n))
        z = (0,) * n
        ops.append(ladder_matrix({(e, z): 1.0}, n, top))
    return ops


class SectorEngine:
    """``Pi_r G^dag H G Pi_r`` by operator products, for many Gaussians ``G``.

    Each ladder factor moves the total number by at most one, so products of
    the images taken inside the sector ``|m| <= r + deg`` are exact.  The
    sector operators are built once; small sectors use dense arrays.
    """

    def __init__(self, H: NormalPoly, r: int, cap: int = DIM_CAP, dense_limit: int = 600):
        L = _ladder_float(H)
        self.n, self.r = L.modes, r
        self.terms = list(L.as_complex_dict().items())
        top = r + max(L.degree, 1)
        self.big = _check_dim(self.n, top, cap)
        self.small = basis_size(self.n, r)
        self.dense = self.big <= dense_limit
        ops = _sector_ladders(self.n, top)
        self.a = [m.toarray() for m in ops] if self.dense else ops
        self.eye = np.eye(self.big, dtype=complex) if self.dense else sp.identity(self.big, dtype=complex, format="csr")

    def matrix(self, T, shift) -> np.ndarray:
        n = self.n
        T = np.asarray(T, dtype=complex)
        lower = []
        for j in range(n):
            img = shift[j] * self.eye
            for k in range(n):
                img = img + T[j, k] * self.a[k] + T[j, n + k] * self.a[k].T
            lower.append(img if self.dense else img.tocsr())
        raise_ = [m.conj().T for m in lower]
        start = self.eye[:, : self.small]
        lowered = {(0,) * n: start}

        def down(mu):
            if mu not in lowered:
                j = next(i for i, e in enumerate(mu) if e)
                prev = tuple(e - (i == j) for i, e in enumerate(mu))
                lowered[mu] = lower[j] @ down(prev)
            return lowered[mu]

        out = np.zeros((self.small, self.small), dtype=complex)
        for (mu, nu), c in self.terms:
            vec = down(mu)
            for j, e in enumerate(nu):
                for _ in range(e):
                    vec = raise_[j] @ vec
            block = vec[: self.small]
            out += c * (block if self.dense else block.toarray())
        return out


def sector_hamiltonian(H: NormalPoly, T, shift, r: int, cap: int = DIM_CAP) -> np.ndarray:
    """Same matrix as ``projected_hamiltonian(conjugate_hamiltonian(...))``, built by operator products."""
    return SectorEngine(H, r, cap).matrix(T, shift)


# ------------------------------------------------------------ eigen-solvers

def min_eig(matrix, tol: float = 1e-10, seed: int = 0) -> float:
    """Smallest eigenvalue of a Hermitian matrix; dense up to 2000, Lanczos above."""
    dim = matrix.shape[0]
    if dim <= DENSE_LIMIT:
        dense = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)
        return float(scipy.linalg.eigvalsh(dense, subset_by_index=(0, 0))[0])
    return lanczos_min(matrix, tol=tol, seed=seed)[0]


def lanczos_min(A, tol: float = 1e-10, max_steps: int = 300, restarts: int = 50, seed: int = 0):
    """Lowest eigenpair by restarted Lanczos with selective reorthogonalization.

    The new Lanczos vector is orthogonalized only against Ritz vectors that
    have converged (residual bound below ``sqrt(eps) ||T||``), which is where
    orthogonality is lost.  Restarts from the current lowest Ritz vector.
    """
    dim = A.shape[0]
    rng = np.random.default_rng(seed)
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    v /= np.linalg.norm(v)
    eps = np.sqrt(np.finfo(float).eps)
    theta, y = None, v
    for _ in range(restarts):
        Q = [v]
        alpha, beta = [], []
        locked: list = []
        w_prev, b_prev = np.zeros(dim, dtype=complex), 0.0
        for j in range(min(max_steps, dim)):
            w = A @ Q[-1] - b_prev * w_prev
            a = float(np.vdot(Q[-1], w).real)
            w = w - a * Q[-1]
            for z in locked:
                w -= np.vdot(z, w) * z
            alpha.append(a)
            b = float(np.linalg.norm(w))
            lam, S = scipy.linalg.eigh_tridiagonal(np.array(alpha), np.array(beta))
            bounds = b * np.abs(S[-1])
            scale = max(np.abs(lam).max(), 1e-300)
            if bounds[0] < tol * scale or b < 1e-14 * scale:
                break
            basis = np.array(Q).T
            locked = [basis @ S[:, k] for k in range(len(lam)) if bounds[k] < eps * scale]
            locked = [z / np.linalg.norm(z) for z in locked]
            w_prev, b_prev = Q[-1], b
            beta.append(b)
            Q.append(w / b)
        basis = np.array(Q[: len(alpha)]).T
        theta, y = lam[0], basis @ S[:, 0]
        y /= np.linalg.norm(y)
        resid = np.linalg.norm(A @ y - theta * y)
        if resid < tol * max(abs(theta), 1.0) * 10:
            return float(theta), y
        v = y
    raise ArithmeticError(f"Lanczos did not converge (residual {resid:.2e})")


def min_eigpair(matrix):
    dim = matrix.shape[0]
    if dim <= DENSE_LIMIT:
        dense = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)
        lam, vec = scipy.linalg.eigh(dense, subset_by_index=(0, 0))
        return float(lam[0]), vec[:, 0]
    return lanczos_min(matrix)


# ------------------------------------------------------------- energy bounds

def _xsq_band(r: int, x: float = 0.0) -> np.ndarray:
    """Lower band storage of ``Pi_r (X - x)^2 Pi_r`` (pentadiagonal)."""
    n = np.arange(r + 1, dtype=float)
    ab = np.zeros((3, r + 1))
    ab[0] = n + 0.5 + x * x
    ab[1, :-1] = -2 * x * np.sqrt((n[:-1] + 1) / 2)
    ab[2, :-2] = 0.5 * np.sqrt((n[:-2] + 1) * (n[:-2] + 2))
    return ab


def shifted_xsq_min(r: int, x: float) -> float:
    """``lambda_min(Pi_r (X - x)^2 Pi_r)``."""
    if r == 0:
        return 0.5 + x * x
    return float(scipy.linalg.eigvals_banded(_xsq_band(r, x), lower=True, select="i",
                                             select_range=(0, 0))[0])


def projected_x_norm(r: int) -> float:
    """``||Pi_r X Pi_r||``: largest zero of the Hermite polynomial ``H_{r+1}``."""
    if r == 0:
        return 0.0
    off = np.sqrt(np.arange(1, r + 1) / 2)
    return float(scipy.linalg.eigvalsh_tridiagonal(np.zeros(r + 1), off, select="i",
                                                   select_range=(r, r))[0])


def _sturm_below(diag, off_sq, x) -> int:
    """Exact count of eigenvalues below ``x`` for a symmetric tridiagonal matrix."""
    count, q = 0, None
    for i, d in enumerate(diag):
        q = d - x if i == 0 else d - x - off_sq[i - 1] / q
        if q == 0:
            q = Fraction(1, 10 ** 30)   # x is an eigenvalue; perturb the pivot upward
        if q < 0:
            count += 1
    return count


@dataclass
class XsqBound:
    r: int
    lower: Fraction
    lam_min: float
    certified: bool       # exact Sturm count: no eigenvalue below ``lower``


def xsq_projected_bound(r: int) -> XsqBound:
    """``1/(16r)`` against the lowest eigenvalue of ``Pi_r X^2 Pi_r``.

    ``X^2`` couples ``n`` to ``n +- 2`` only, so the matrix splits into two
    tridiagonal parity blocks.  Their squared off-diagonals are rational,
    which makes the Sturm count at ``1/(16r)`` exact.
    """
    if r < 0:
        raise ValueError("r must be non-negative")
    lower = Fraction(1, 2) if r == 0 else Fraction(1, 16 * r)
    lam = shifted_xsq_min(r, 0.0)
    return XsqBound(r, lower, lam, xsq_count_below(r, lower) == 0)


def xsq_count_below(r: int, x) -> int:
    """Exact number of eigenvalues of ``Pi_r X^2 Pi_r`` strictly below rational ``x``."""
    x = Fraction(x)
    total = 0
    for parity in (0, 1):
        levels = list(range(parity, r + 1, 2))
        if levels:
            diag = [Fraction(2 * n + 1, 2) for n in levels]
            off_sq = [Fraction((n + 1) * (n + 2), 4) for n in levels[:-1]]
            total += _sturm_below(diag, off_sq, x)
    return total


def minimize_shift(r: int, step: float = 0.05, xtol: float = 1e-8):
    """``(x*, f(r))`` with ``f(r) = min_x lambda_min(Pi_r (X - x)^2 Pi_r)``.

    Coarse grid on ``[0, 2 sqrt r]`` (the function is even in ``x``), then a
    golden-section refine inside the bracket around the best grid point.
    """
    if r == 0:
        return 0.0, 0.5
    xs = np.arange(0.0, 2 * math.sqrt(r) + step / 2, step)
    vals = np.array([shifted_xsq_min(r, x) for x in xs])
    i = int(np.argmin(vals))
    best_x, best = float(xs[i]), float(vals[i])
    if 0 < i < len(xs) - 1:
        res = minimize_scalar(lambda x: shifted_xsq_min(r, x), bracket=(xs[i - 1], xs[i], xs[i + 1]),
                              method="golden", tol=xtol)
        if res.fun < best:
            best_x, best = float(res.x), float(res.fun)
    elif i == 0:
        res = minimize_scalar(lambda x: shifted_xsq_min(r, x), bounds=(0.0, step),
                              method="bounded", options={"xatol": xtol})
        if res.fun < best:
            best_x, best = float(res.x), float(res.fun)
    return best_x, best


@lru_cache(maxsize=1024)
def shift_floor(r: int) -> float:
    return minimize_shift(r)[1]


@dataclass
class ParamBounds:
    xi_max: float
    disp_max: float
    floor: float          # min_x lambda_min(Pi_r (X - x)^2 Pi_r) used in the bound


def param_bounds_from_energy(r: int, E: float) -> ParamBounds:
    """Caps on ``|xi_j|`` and ``|disp_j|`` for states in the rank-``r`` sector with ``<N> <= E``.

    Per mode, ``2<N_j'> + 1 = <e^{2 xi}(X+x)^2 + e^{-2 xi}(P+p)^2>_core <= 2E + 1``,
    and each quadrature term is at least ``f(r)``, the computed floor of
    ``Pi_r (X - x)^2 Pi_r``.  That gives ``e^{2|xi|} f(r) <= 2E + 1``.  The
    displacement then obeys ``(|x| - s_r)^2 <= (2E + 1) e^{-2 xi}`` with
    ``s_r = ||Pi_r X Pi_r||`` (same for ``p``), maximized at ``|xi| = xi_max``.
    For ``r = 0`` the vacuum moments are known exactly and the sharper
    ``|disp|^2 <= 2E(2E+1)`` applies.
    """
    if E <= 0:
        raise ValueError("energy cap must be positive")
    if r == 0:
        return ParamBounds(0.5 * math.log(4 * E + 2), math.sqrt(2 * E * (2 * E + 1)), 0.5)
    floor = shift_floor(r)
    K = 2 * E + 1
    xi_max = 0.5 * math.log(K / floor)
    s = projected_x_norm(r)
    xm = s + math.sqrt(K * math.exp(-2 * xi_max))
    pm = s + math.sqrt(K * math.exp(2 * xi_max))
    return ParamBounds(xi_max, math.sqrt(0.5 * (xm * xm + pm * pm)), floor)


# ----------------------------------------------------------------- verifier

@dataclass
class Verdict:
    accept: bool
    value: float | None
    reason: str

    def __str__(self):
        return "Accept" if self.accept else "Reject"


def witness_energy(H: NormalPoly, w: StellarWitness) -> float:
    """``<c| Pi_r G^dag H G Pi_r |c>`` through the coefficient-level conjugation."""
    r = w.rank
    Hr = projected_hamiltonian(conjugate_by_witness(H, w), r, w.modes)
    c = w.core_vector(r)
    return float(np.vdot(c, Hr @ c).real)


def witness_particle_number(w: StellarWitness) -> float:
    N = NormalPoly(w.modes, "ladder", "float", 53)
    for j in range(w.modes):
        N = N + NormalPoly.number(j, w.modes, kind="float", prec=53)
    return witness_energy(N, w)


def verify_witness(H: NormalPoly, w: StellarWitness, a: float, b: float,
                   energy_cap: float | None = None, tol: float = 1e-9) -> Verdict:
    """Accept iff the witness energy is at most ``a + tol``; caps are checked first."""
    if not a < b:
        raise ValueError("need a < b")
    if not isinstance(w, StellarWitness):
        raise MalformedWitness("not a StellarWitness")
    if w.modes != H.modes:
        raise MalformedWitness(f"witness has {w.modes} modes, Hamiltonian {H.modes}")
    if energy_cap is not None:
        caps = param_bounds_from_energy(w.rank, energy_cap)
        if np.abs(w.xi).max() > caps.xi_max + tol:
            return Verdict(False, None, f"squeezing exceeds cap {caps.xi_max:.6g}")
        if np.abs(w.disp).max() > caps.disp_max + tol:
            return Verdict(False, None, f"displacement exceeds cap {caps.disp_max:.6g}")
    value = witness_energy(H, w)
    if value <= a + tol:
        return Verdict(True, value, "energy below a")
    if value >= b:
        return Verdict(False, value, "energy above b")
    return Verdict(False, value, "energy inside the promise gap")


# ---------------------------------------------------------------- optimizer

@dataclass
class StellarOptimum:
    witness: StellarWitness
    energy: float
    history: list = field(default_factory=list)


def _hermitian_generators(n: int):
    out = []
    for j in range(n):
        for k in range(j, n):
            g = np.zeros((n, n), dtype=complex)
            g[j, k] = g[k, j] = 1.0
            out.append(g)
            if j != k:
                g = np.zeros((n, n), dtype=complex)
                g[j, k], g[k, j] = 1j, -1j
                out.append(g)
    return out


class _Objective:
    def __init__(self, H, r, caps):
        self.engine = SectorEngine(H, r)
        self.caps = caps
        self.n = H.modes

    def matrix(self, V, xi, disp):
        T = build_bogoliubov(V, xi)
        shift = T[: self.n] @ np.concatenate([disp, disp.conj()])
        return self.engine.matrix(T, shift)

    def __call__(self, V, xi, disp):
        return min_eig(self.matrix(V, xi, disp))


def _clip(z, cap):
    return z if abs(z) <= cap else z * (cap / abs(z))


def _descend(obj: _Objective, V, xi, disp, sweeps: int, tol: float):
    """Coordinate descent; complex parameters move along their real and imaginary axes."""
    n = obj.n
    caps = obj.caps
    value = obj(V, xi, disp)
    history = [value]
    coords = [("V", g) for g in _hermitian_generators(n)]
    for j in range(n):
        coords += [("xi", j, 1), ("xi", j, 1j), ("disp", j, 1), ("disp", j, 1j)]
    for _ in range(sweeps):
        start = value
        for coord in coords:
            if coord[0] == "V":
                def trial(t, g=coord[1]):
                    return V @ scipy.linalg.expm(1j * t * g), xi, disp
                bounds = (-math.pi / 2, math.pi / 2)
            else:
                which, j, axis = coord
                cap = caps.xi_max if which == "xi" else caps.disp_max
                cur = (xi if which == "xi" else disp)[j]
                base = cur.real if axis == 1 else cur.imag

                def trial(t, which=which, j=j, axis=axis, cap=cap, cur=cur):
                    x2, d2 = xi.copy(), disp.copy()
                    z = complex(t, cur.imag) if axis == 1 else complex(cur.real, t)
                    (x2 if which == "xi" else d2)[j] = _clip(z, cap)
                    return V, x2, d2
                bounds = (-cap, cap)
                if not bounds[0] <= base <= bounds[1]:
                    base = 0.0
            res = minimize_scalar(lambda t: obj(*trial(t)), bounds=bounds, method="bounded",
                                  options={"xatol": 1e-8})
            if res.fun < value - 1e-14:
                V, xi, disp = trial(res.x)
                value = obj(V, xi, disp)
            history.append(value)
        if start - value < tol * max(1.0, abs(value)):
            break
    return V, xi, disp, value, history


def _polish(obj: _Objective, V, xi, disp, value, history):
    """Joint quasi-Newton step over every real coordinate; kept only if it lowers the energy."""
    n = obj.n
    gens = _hermitian_generators(n)
    k = len(gens)
    caps = obj.caps

    def unpack(p):
        rot = V @ scipy.linalg.expm(1j * sum(t * g for t, g in zip(p[:k], gens)))
        x2 = np.array([_clip(complex(p[k + 2 * j], p[k + 2 * j + 1]), caps.xi_max) for j in range(n)])
        off = k + 2 * n
        d2 = np.array([_clip(complex(p[off + 2 * j], p[off + 2 * j + 1]), caps.disp_max)
                       for j in range(n)])
        return rot, x2, d2

    p0 = np.concatenate([np.zeros(k), np.column_stack([xi.real, xi.imag]).ravel(),
                         np.column_stack([disp.real, disp.imag]).ravel()])
    res = minimize(lambda p: obj(*unpack(p)), p0, method="L-BFGS-B",
                   options={"maxiter": 200, "ftol": 1e-15, "gtol": 1e-10})
    if res.fun < value - 1e-14:
        V, xi, disp = unpack(res.x)
        value = obj(V, xi, disp)
        history.append(value)
    return V, xi, disp, value, history


def _restart(args):
    H, r, caps, seed, sweeps, tol, first = args
    n = H.modes
    rng = np.random.default_rng(seed)
    if first:
        V, xi, disp = np.eye(n, dtype=complex), np.zeros(n, complex), np.zeros(n, complex)
    else:
        K = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        V = scipy.linalg.expm(0.5j * (K + K.conj().T))
        xi = rng.uniform(0, 0.5 * caps.xi_max, n) * np.exp(2j * np.pi * rng.uniform(size=n))
        disp = rng.uniform(0, min(1.0, caps.disp_max), n) * np.exp(2j * np.pi * rng.uniform(size=n))
    obj = _Objective(H, r, caps)
    run = _descend(obj, V, xi, disp, sweeps, tol)
    for _ in range(3):
        before = run[3]
        run = _descend(obj, *_polish(obj, *run)[:3], sweeps, tol)
        if before - run[3] < tol * max(1.0, abs(run[3])):
            break
    return run


def optimize_over_stellar(H: NormalPoly, r: int, energy_cap: float, restarts: int = 4,
                          seed: int = 0, sweeps: int = 60, tol: float = 1e-11,
                          workers: int = 1) -> StellarOptimum:
    """Heuristic minimum of ``lambda_min(Pi_r G^dag H G Pi_r)`` over capped Gaussians ``G``.

    Coordinate descent over the interferometer generators and the real and
    imaginary parts of each squeezing and displacement; a move is kept only if it
    lowers the energy, so the per-restart history is non-increasing.  The
    core is the exact ground vector of the sector matrix.  Restarts are
    seeded from one ``SeedSequence`` and may run in a process pool; the
    result does not depend on ``workers``.
    """
    caps = param_bounds_from_energy(r, energy_cap)
    seeds = np.random.SeedSequence(seed).spawn(restarts)
    jobs = [(H, r, caps, s, sweeps, tol, i == 0) for i, s in enumerate(seeds)]
    if workers > 1 and restarts > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_restart, jobs))
    else:
        runs = [_restart(j) for j in jobs]
    V, xi, disp, value, history = min(runs, key=lambda run: run[3])
    obj = _Objective(H, r, caps)
    lam, vec = min_eigpair(obj.matrix(V, xi, disp))
    witness = StellarWitness.gaussian(V, xi, disp, r, vec / np.linalg.norm(vec))
    return StellarOptimum(witness, lam, history)


# ----------------------------------------------------------- conjecture scan

def _scan_row(r: int):
    x, f = minimize_shift(r)
    return {"r": r, "x_min": x, "f": f, "inv_f": 1 / f, "f_at_zero": shifted_xsq_min(r, 0.0)}


@dataclass
class ScanResult:
    rows: list
    slope: float
    intercept: float
    r_squared: float
    min_r_times_f: float


def conjecture_scan(r_max: int = 200, r_min: int = 1, workers: int = 1, r_cap: int = 2000) -> ScanResult:
    """``f(r) = min_x lambda_min(Pi_r (X - x)^2 Pi_r)`` for each ``r`` and a linear fit of ``1/f``."""
    if r_max > r_cap:
        raise BudgetExceeded(f"r_max {r_max} exceeds cap {r_cap}")
    rs = list(range(r_min, r_max + 1))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_scan_row, rs))
    else:
        rows = [_scan_row(r) for r in rs]
    if any(row["f"] <= 0 for row in rows):
        raise AssertionError("projected (X - x)^2 has a non-positive floor")
    r_arr = np.array([row["r"] for row in rows], dtype=float)
    inv = np.array([row["inv_f"] for row in rows])
    if len(rows) >= 2:
        slope, intercept = np.polyfit(r_arr, inv, 1)
        pred = slope * r_arr + intercept
        ss = float(((inv - inv.mean()) ** 2).sum())
        r2 = 1 - float(((inv - pred) ** 2).sum()) / ss if ss else 1.0
    else:
        slope, intercept, r2 = float("nan"), float("nan"), float("nan")
    rf = float((r_arr * np.array([row["f"] for row in rows])).min())
    return ScanResult(rows, float(slope), float(intercept), float(r2), rf)


def scan_to_csv(result: ScanResult, target) -> None:
    """Write the scan table to a path or an open text stream."""
    if hasattr(target, "write"):
        _write_scan(result, target)
        return
    with open(target, "w", newline="") as fh:
        _write_scan(result, fh)


def _write_scan(result, fh):
    writer = csv.DictWriter(fh, fieldnames=["r", "x_min", "f", "inv_f", "f_at_zero"])
    writer.writeheader()
    for row in result.rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
