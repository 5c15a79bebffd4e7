"""Reductions between Gaussian dynamics and linear algebra.

Forward direction: the mean trajectory of a Gaussian circuit is the solution of
a sparse block-bidiagonal linear system built from truncated Taylor series.
Backward direction: entries of a matrix inverse are read off from time-averaged
means of a passive Gaussian circuit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import expm, svdvals

from .errors import BudgetExceeded
from .gaussian import (GaussianCircuit, GaussianState, QuadHamPhase, energy_bound, flow,
                       omega, run_circuit)

DIRECT_SOLVE_LIMIT = 20_000
DEFAULT_MAX_UNKNOWNS = 2_000_000


# ------------------------------------------------------------ parameters

def choose_parameters(c: GaussianCircuit, eps: float, energy: float | None = None):
    """Step ``h`` and Taylor order ``k`` for the linear-system encoding.

    ``h`` keeps ``h*||K_i|| <= 1`` on every segment and is at most ``1/m``.
    ``k`` is the least order with
    ``(k+1)! >= T e^3/(h eps) * (mu_max + T e^2 ||c||_max)``, where ``mu_max``
    bounds the mean norm through the energy bound.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    m = len(c.segments)
    if m == 0:
        raise ValueError("empty circuit")
    knorm = max(np.linalg.norm(h.generator()[0], 2) for h, _ in c.segments)
    dnorm = max(np.linalg.norm(h.generator()[1]) for h, _ in c.segments)
    h = 1.0 / m
    if knorm > 0:
        h = min(h, 1.0 / knorm)
    estar = energy_bound(c) if energy is None else energy
    mu_max = max(estar, math.sqrt(2 * max(estar, 0.0)))
    T = c.total_time
    target = T * math.e ** 3 / (h * eps) * (mu_max + T * math.e ** 2 * dnorm)
    k, fact = 1, 2
    while fact < target:
        k += 1
        fact *= k + 1
    return h, k


# ------------------------------------------------------------ encoding

@dataclass
class OdeLinearSystem:
    A: sp.csr_matrix
    b: np.ndarray
    steps: int            # number of time steps m'
    order: int            # Taylor order k
    dim: int              # phase-space dimension 2n
    h: float
    times: np.ndarray     # time of each block, length steps + 1
    step_sizes: list = field(default_factory=list)

    @property
    def block(self) -> int:
        return (self.order + 1) * self.dim

    def decode(self, x: np.ndarray) -> np.ndarray:
        """Mean vectors at every retained time, shape (steps + 1, dim)."""
        blocks = x.reshape(self.steps + 1, self.order + 1, self.dim)
        return blocks[:, 0, :]


def taylor_inverse_blocks(Kh: np.ndarray, k: int) -> list:
    """Closed form of ``(I - N1)^{-1}``: block (l + l', l) is ``l! (Kh)^{l'} / (l + l')!``.

    Returned as a dense ((k+1)d x (k+1)d) matrix.
    """
    d = Kh.shape[0]
    powers = [np.eye(d)]
    for _ in range(k):
        powers.append(powers[-1] @ Kh)
    out = np.zeros(((k + 1) * d, (k + 1) * d))
    for l in range(k + 1):
        for lp in range(k + 1 - l):
            r = l + lp
            out[r * d:(r + 1) * d, l * d:(l + 1) * d] = (
                math.factorial(l) / math.factorial(r) * powers[lp])
    return out


def n1_matrix(Kh: np.ndarray, k: int) -> np.ndarray:
    """Sub-diagonal Taylor recursion: block (l+1, l) is ``Kh/(l+1)`` for l = 0..k-1."""
    d = Kh.shape[0]
    out = np.zeros(((k + 1) * d, (k + 1) * d))
    for l in range(k):
        out[(l + 1) * d:(l + 2) * d, l * d:(l + 1) * d] = Kh / (l + 1)
    return out


def n2_matrix(d: int, k: int) -> np.ndarray:
    """Collects every Taylor block into block 0."""
    out = np.zeros(((k + 1) * d, (k + 1) * d))
    for l in range(k + 1):
        out[:d, l * d:(l + 1) * d] = np.eye(d)
    return out


def encode_linear_system(c: GaussianCircuit, h: float, k: int,
                         initial: GaussianState | None = None,
                         max_unknowns: int = DEFAULT_MAX_UNKNOWNS) -> OdeLinearSystem:
    """Sparse system ``(I - L) w = b`` whose solution carries the mean trajectory.

    Per step ``j`` the unknown ``w_j`` holds ``mu_j`` in Taylor block 0 and the
    drift ``h c`` in block 1; ``L`` maps ``w_j`` to ``N2 (I - N1)^{-1} w_j``
    in the next time slot.
    """
    dim = 2 * c.modes
    mu0 = np.zeros(dim) if initial is None else np.asarray(initial.mean, float)
    plan = []
    for ham, t in c.segments:
        steps = max(1, math.ceil(t / h - 1e-12))
        plan.append((ham, t / steps, steps))
    total_steps = sum(s for _, _, s in plan)
    blk = (k + 1) * dim
    size = (total_steps + 1) * blk
    if size > max_unknowns:
        raise BudgetExceeded(f"linear system would have {size} unknowns (cap {max_unknowns})")

    rows, cols, vals = [], [], []
    b = np.zeros(size)
    b[:dim] = mu0
    times = [0.0]
    step_sizes = []
    j = 0
    for ham, hi, steps in plan:
        K, cvec = ham.generator()
        Kh = K * hi
        prop = n2_matrix(dim, k) @ taylor_inverse_blocks(Kh, k)
        prop = prop[:dim]               # only block row 0 is non-zero
        nz_r, nz_c = np.nonzero(np.abs(prop) > 0)
        for _ in range(steps):
            r0, c0 = (j + 1) * blk, j * blk
            rows.extend(r0 + nz_r)
            cols.extend(c0 + nz_c)
            vals.extend(-prop[nz_r, nz_c])
            b[j * blk + dim:j * blk + 2 * dim] = hi * cvec
            times.append(times[-1] + hi)
            step_sizes.append(hi)
            j += 1
    L = sp.csr_matrix((vals, (rows, cols)), shape=(size, size))
    A = (sp.identity(size, format="csr") + L).tocsr()
    return OdeLinearSystem(A, b, total_steps, k, dim, h, np.array(times), step_sizes)


def solve(sys: OdeLinearSystem) -> np.ndarray:
    n = sys.A.shape[0]
    if n <= DIRECT_SOLVE_LIMIT:
        return spla.spsolve(sys.A.tocsc(), sys.b)
    ilu = spla.spilu(sys.A.tocsc(), drop_tol=1e-10, fill_factor=20)
    pre = spla.LinearOperator(sys.A.shape, ilu.solve)
    x, info = spla.gmres(sys.A, sys.b, M=pre, rtol=1e-12, atol=0.0, restart=200, maxiter=2000)
    if info != 0:
        raise ArithmeticError(f"GMRES did not converge (info={info})")
    return x


def reference_trajectory(c: GaussianCircuit, sys: OdeLinearSystem,
                         initial: GaussianState | None = None) -> np.ndarray:
    """Exact means at the encoding's time grid, from the phase-space simulator."""
    mu = np.zeros(sys.dim) if initial is None else np.asarray(initial.mean, float)
    out = [mu]
    j = 0
    for ham, t in c.segments:
        steps = max(1, math.ceil(t / sys.h - 1e-12))
        S, v = flow(ham, t / steps)
        for _ in range(steps):
            mu = S @ mu + v
            out.append(mu)
            j += 1
    return np.array(out)


def condition_estimate(sys: OdeLinearSystem, dense_limit: int = 3000,
                       tol: float = 1e-10, maxiter: int = 2000):
    """Spectral condition number; dense SVD when small, power / inverse iteration otherwise.

    Returns ``(kappa, converged)``.
    """
    A = sys.A
    n = A.shape[0]
    if n <= dense_limit:
        s = svdvals(A.toarray())
        return float(s[0] / s[-1]), True
    rng = np.random.default_rng(0)
    lu = spla.splu(A.tocsc())
    AT = A.T.tocsr()

    def power(apply):
        v = rng.standard_normal(n)
        v /= np.linalg.norm(v)
        est = 0.0
        for _ in range(maxiter):
            w = apply(v)
            nw = np.linalg.norm(w)
            if abs(nw - est) <= tol * nw:
                return nw, True
            est, v = nw, w / nw
        return est, False

    smax2, ok1 = power(lambda v: AT @ (A @ v))
    inv2, ok2 = power(lambda v: lu.solve(lu.solve(v, trans="T")))
    return float(math.sqrt(smax2 * inv2)), ok1 and ok2


def kappa_ratio(kappa: float, estar: float, total_time: float, segments: int) -> float:
    """``kappa / (max(E*,1) T m)``: the constant in the condition-number law."""
    return kappa / (max(estar, 1.0) * total_time * segments)


# ------------------------------------------------------------ inversion

@dataclass
class InversionJob:
    A: np.ndarray
    i: int
    j: int
    delta: float
    max_kappa: float = 1e4
    max_chunks: int = 10_000_000

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, float))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError("matrix must be square")
        if not (0 <= self.i < n and 0 <= self.j < n):
            raise ValueError("index out of range")
        if self.delta <= 0:
            raise ValueError("delta must be positive")

    @property
    def singular_values(self):
        return svdvals(self.A)

    @property
    def kappa(self) -> float:
        s = self.singular_values
        return float(s[0] / s[-1]) if s[-1] > 0 else math.inf

    @property
    def step(self) -> float:
        return 1.0 / self.singular_values[0]

    @property
    def averaging_delta(self) -> float:
        # absolute accuracy delta needs the lemma at delta * s_min
        return min(self.delta, self.delta * self.singular_values[-1])

    @property
    def chunks(self) -> int:
        return math.ceil(4 * self.kappa / self.averaging_delta)


def antisymmetric_embedding(A: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    z = np.zeros((n, n))
    return np.block([[z, A], [-A.T, z]])


def inversion_hamiltonian(A: np.ndarray, j: int) -> QuadHamPhase:
    """Passive circuit whose flow generator is ``Ahat (+) Ahat`` and whose drift is ``e_j`` in X."""
    emb = antisymmetric_embedding(A)
    m = emb.shape[0]
    K = np.block([[emb, np.zeros((m, m))], [np.zeros((m, m)), emb]])
    c = np.zeros(2 * m)
    c[j] = 1.0
    return QuadHamPhase.from_generator(K, c)


def _chunk_means(A: np.ndarray, cols, eps: float, chunks: int):
    """Average over chunks k = 0..N-1 of the mean at time k*eps, for several drifts at once."""
    n = A.shape[0]
    hams = [inversion_hamiltonian(A, j) for j in cols]
    S, _ = flow(hams[0], eps)
    V = np.stack([flow(h, eps)[1] for h in hams], axis=1)
    mu = np.zeros_like(V)
    acc = np.zeros_like(V)
    peak = 0.0
    for _ in range(chunks):
        acc += mu
        peak = max(peak, float(0.5 * (mu * mu).sum(axis=0).max()))
        mu = S @ mu + V
    return acc / chunks, peak


def averaging_norm(A: np.ndarray, eps: float, chunks: int, embed: bool = True) -> float:
    """Spectral norm of ``(1/N) sum_{k<N} exp(eps G k)``.

    ``G`` is the antisymmetric embedding of ``A``, or ``A`` itself when
    ``embed`` is false (``A`` must then be anti-Hermitian).
    """
    gen = antisymmetric_embedding(A) if embed else np.asarray(A)
    U = expm(eps * gen)
    acc = np.zeros_like(U)
    P = np.eye(U.shape[0])
    for _ in range(chunks):
        acc += P
        P = P @ U
    return float(np.linalg.norm(acc / chunks, 2))


def _check(job: InversionJob):
    if job.kappa > job.max_kappa:
        raise BudgetExceeded(f"condition number {job.kappa:.3g} exceeds {job.max_kappa}")
    if job.chunks > job.max_chunks:
        raise BudgetExceeded(f"{job.chunks} chunks exceed the cap {job.max_chunks}")


def invert_via_gaussian(job: InversionJob) -> float:
    """Estimate ``(A^{-1})_{ij}`` as minus the chunk-averaged position of mode ``n+i``."""
    _check(job)
    n = job.A.shape[0]
    avg, _ = _chunk_means(job.A, [job.j], job.step, job.chunks)
    return float(-avg[n + job.i, 0])


def invert_matrix_via_gaussian(A, delta: float, **kw) -> np.ndarray:
    """All entries at once: one batch of chunk simulations per column drift."""
    A = np.asarray(A, float)
    job = InversionJob(A, 0, 0, delta, **kw)
    _check(job)
    n = A.shape[0]
    avg, _ = _chunk_means(A, range(n), job.step, job.chunks)
    return -avg[n:2 * n, :]


def verify_energy_envelope(job: InversionJob) -> dict:
    """Largest chunk energy against the bound ``2 ||d||^2 / s_min^2``.

    The flow is passive, so the covariance stays at vacuum and the energy is
    ``|mu|^2/2`` with ``|mu(t)| = |Ahat^{-1}(e^{Ahat t} - 1) c| <= 2|c|/s_min``.
    """
    _check(job)
    _, peak = _chunk_means(job.A, [job.j], job.step, job.chunks)
    smin = job.singular_values[-1]
    bound = 2.0 / smin ** 2
    return {"max_energy": peak, "bound": bound, "ok": peak <= bound * (1 + 1e-9),
            "chunks": job.chunks, "step": job.step}
