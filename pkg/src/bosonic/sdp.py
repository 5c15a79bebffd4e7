"""Small dense semidefinite programming.

``solve_sdp`` is an infeasible-start primal-dual interior-point method (HKM
search direction, Mehrotra-style centering) for

    min <C, X>  s.t.  <A_i, X> = b_i,  X >= 0
    max b.y     s.t.  C - sum_i y_i A_i = Z >= 0.

Problems here have at most a few hundred constraints, so everything is dense.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Infeasible


@dataclass
class SdpResult:
    X: np.ndarray
    y: np.ndarray
    Z: np.ndarray
    primal: float
    dual: float
    gap: float
    iterations: int
    status: str


def _sym(m):
    return (m + m.T) / 2


def _max_step(M, dM, frac=0.95):
    """Largest ``a <= 1`` with ``M + a dM`` positive definite, scaled back by ``frac``."""
    L = np.linalg.cholesky(M)
    Li = np.linalg.inv(L)
    lam = np.linalg.eigvalsh(_sym(Li @ dM @ Li.T))
    low = lam.min()
    if low >= 0:
        return 1.0
    return min(1.0, -frac / low)


def solve_sdp(C, A, b, tol: float = 1e-8, max_iter: int = 200, blowup: float = 1e12) -> SdpResult:
    """Solve the primal/dual pair above; ``A`` is a sequence of symmetric matrices.

    Stops when relative gap and both residuals are below ``tol``.  Near a
    rank-deficient optimum the Schur system loses accuracy; the best iterate
    is kept and returned as ``"stalled"`` if it is within ``sqrt(tol)``.
    Raises ``Infeasible`` when iterates diverge (primal or dual infeasible).
    """
    C = np.asarray(C, dtype=float)
    A = np.array([np.asarray(a, dtype=float) for a in A])
    b = np.asarray(b, dtype=float)
    n, m = C.shape[0], len(b)
    flat = A.reshape(m, -1)

    def op(X):
        return flat @ X.ravel()

    def adj(y):
        return (y @ flat).reshape(n, n)

    scale = max(1.0, np.abs(b).max(initial=0), np.abs(C).max())
    X, Z, y = scale * np.eye(n), scale * np.eye(n), np.zeros(m)
    best, best_err, since = None, np.inf, 0
    status = "max_iter"
    for it in range(max_iter):
        rp = b - op(X)
        Rd = C - adj(y) - Z
        mu = np.tensordot(X, Z) / n
        pobj, dobj = np.tensordot(C, X), b @ y
        err = max(abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj)),
                  np.linalg.norm(rp) / (1 + np.linalg.norm(b)),
                  np.linalg.norm(Rd) / (1 + np.linalg.norm(C)))
        if err < best_err:
            best, best_err, since = (X, y, Z), err, 0
        else:
            since += 1
        if err < tol:
            status = "optimal"
            break
        if np.abs(X).max() > blowup or np.abs(y).max() > blowup:
            raise Infeasible("interior-point iterates diverged (problem infeasible or unbounded)")
        if since >= 8:
            status = "stalled"
            break
        try:
            X, y, Z = _step(X, y, Z, Rd, mu, b, A, flat, op, adj)
        except np.linalg.LinAlgError:
            status = "stalled"
            break
    X, y, Z = best
    if status != "optimal" and best_err > np.sqrt(tol):
        raise Infeasible(f"no convergence (residual {best_err:.1e})")
    pobj, dobj = float(np.tensordot(C, X)), float(b @ y)
    return SdpResult(X, y, Z, pobj, dobj, abs(pobj - dobj), it, status)


def _step(X, y, Z, Rd, mu, b, A, flat, op, adj):
    """One HKM predictor-corrector step."""
    n, m = X.shape[0], len(b)
    Zi = np.linalg.inv(Z)
    # Schur complement M_ij = tr(A_i X A_j Z^-1)
    XAZ = np.einsum("ab,mbc,cd->mad", X, A, Zi)
    M = flat @ XAZ.reshape(m, -1).T
    M = _sym(M) + 1e-14 * np.trace(M) / m * np.eye(m)

    def direction(sigma, corr=None):
        target = sigma * mu * Zi
        rhs_mat = X @ Rd @ Zi - target
        if corr is not None:
            rhs_mat = rhs_mat + corr @ Zi
        dy = np.linalg.solve(M, b + op(rhs_mat))
        dZ = Rd - adj(dy)
        dX = target - X - X @ dZ @ Zi
        if corr is not None:
            dX = dX - corr @ Zi
        return _sym(dX), dy, _sym(dZ)

    dX, dy, dZ = direction(0.0)
    ap, ad = _max_step(X, dX, 1.0), _max_step(Z, dZ, 1.0)
    mu_aff = np.tensordot(X + ap * dX, Z + ad * dZ) / n
    sigma = min(1.0, (mu_aff / mu) ** 3)
    dX, dy, dZ = direction(sigma, dX @ dZ)
    ap, ad = _max_step(X, dX), _max_step(Z, dZ)
    return _sym(X + ap * dX), y + ad * dy, _sym(Z + ad * dZ)


def symmetric_basis(n: int) -> list:
    """Basis ``E_ij`` (i <= j) of symmetric n x n matrices."""
    out = []
    for i in range(n):
        for j in range(i, n):
            e = np.zeros((n, n))
            e[i, j] = e[j, i] = 1.0
            out.append(e)
    return out


def barrier_minimize(f_grad_hess, x0, feasible, t0: float = 1.0, mu: float = 10.0,
                     barrier_size: int = 1, gap_tol: float = 1e-10, newton_tol: float = 1e-12,
                     max_newton: int = 100):
    """Log-barrier path following for ``min f(x)`` over an open convex set.

    ``f_grad_hess(x, t)`` returns value, gradient and Hessian of
    ``t f(x) + barrier(x)``; ``feasible(x)`` tells whether ``x`` lies strictly
    inside.  The duality gap is bounded by ``barrier_size / t`` on exit.
    """
    x, t = np.asarray(x0, dtype=float), t0
    while True:
        for _ in range(max_newton):
            val, g, H = f_grad_hess(x, t)
            step = -np.linalg.solve(H, g)
            dec = -g @ step
            if dec / 2 <= newton_tol:
                break
            s = 1.0
            while not feasible(x + s * step):
                s *= 0.5
            while f_grad_hess(x + s * step, t)[0] > val - 0.25 * s * dec:
                s *= 0.5
                if s < 1e-16:
                    break
            x = x + s * step
        if barrier_size / t < gap_tol:
            return x, barrier_size / t
        t *= mu
