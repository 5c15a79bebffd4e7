"""Truncated multi-mode Fock bases and operator matrices.

The basis of ``n`` modes with total particle number at most ``E`` is listed in
graded lexicographic order.  Dense state tensors of shape ``(E+1,)*n`` are
used by the simulator; flat vectors over the basis by the eigen-solvers.
"""

from __future__ import annotations

import itertools
from functools import lru_cache
from math import comb, perm, sqrt

import numpy as np
import scipy.sparse as sp


@lru_cache(maxsize=64)
def fock_basis(n: int, cutoff: int) -> tuple:
    """All multi-indices with ``|m| <= cutoff``, grouped by total number."""
    out = []
    for total in range(cutoff + 1):
        for bars in itertools.combinations(range(total + n - 1), n - 1):
            prev, m = -1, []
            for b in bars:
                m.append(b - prev - 1)
                prev = b
            m.append(total + n - 1 - prev - 1)
            out.append(tuple(m))
    return tuple(out)


def basis_size(n: int, cutoff: int) -> int:
    return comb(n + cutoff, n)


@lru_cache(maxsize=64)
def basis_index(n: int, cutoff: int) -> dict:
    return {m: i for i, m in enumerate(fock_basis(n, cutoff))}


@lru_cache(maxsize=64)
def cutoff_mask(n: int, cutoff: int) -> np.ndarray:
    grids = np.indices((cutoff + 1,) * n).sum(axis=0)
    return grids <= cutoff


def tensor_to_flat(psi: np.ndarray, n: int, cutoff: int) -> np.ndarray:
    return np.array([psi[m] for m in fock_basis(n, cutoff)])


def flat_to_tensor(vec, n: int, cutoff: int) -> np.ndarray:
    out = np.zeros((cutoff + 1,) * n, dtype=complex)
    for amp, m in zip(vec, fock_basis(n, cutoff)):
        out[m] = amp
    return out


def _ladder_action(m, mu, nu):
    """Apply ``adag^nu a^mu`` to ``|m>``: returns (target, weight) or None."""
    weight = 1.0
    target = []
    for mj, aj, cj in zip(m, mu, nu):
        if aj > mj:
            return None
        lowered = mj - aj
        weight *= sqrt(perm(mj, aj) * perm(lowered + cj, cj))
        target.append(lowered + cj)
    return tuple(target), weight


def ladder_matrix(terms, n: int, cutoff: int) -> sp.csr_matrix:
    """``Pi_E H Pi_E`` for ``H = sum c * adag^nu a^mu`` given as {(mu, nu): complex}.

    Creation-left monomials lower before raising, so every element with both
    indices inside the cutoff is exact.
    """
    basis = fock_basis(n, cutoff)
    index = basis_index(n, cutoff)
    rows, cols, vals = [], [], []
    for (mu, nu), c in terms.items():
        c = complex(c)
        for col, m in enumerate(basis):
            hit = _ladder_action(m, mu, nu)
            if hit is None:
                continue
            target, w = hit
            row = index.get(target)
            if row is not None:
                rows.append(row)
                cols.append(col)
                vals.append(c * w)
    dim = len(basis)
    return sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim), dtype=complex)


def annihilator(cutoff: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, cutoff + 1, dtype=float)), 1)


def position(cutoff: int) -> np.ndarray:
    a = annihilator(cutoff)
    return (a + a.T) / np.sqrt(2)


def momentum(cutoff: int) -> np.ndarray:
    a = annihilator(cutoff)
    return (a - a.T) / (np.sqrt(2) * 1j)
