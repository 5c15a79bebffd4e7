"""Phase-space simulation of Gaussian circuits.

Quadratures are ordered ``(X_1..X_n, P_1..P_n)``.  A segment with Hamiltonian
``r^T M r + d.r`` run for time ``t`` acts on the quadrature vector through the
Heisenberg equation ``dr/dt = K r + c`` with ``K = -2 Omega M`` and
``c = -Omega d``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import PromiseViolated

SYMPLECTIC_TOL = 1e-9


def omega(n: int) -> np.ndarray:
    """Symplectic form ``[[0, -I], [I, 0]]`` of size 2n."""
    z, i = np.zeros((n, n)), np.eye(n)
    return np.block([[z, -i], [i, z]])


@dataclass(frozen=True)
class QuadHamPhase:
    """Quadratic Hamiltonian ``r^T M r + d.r``."""

    M: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        M = np.asarray(self.M, dtype=float)
        d = np.asarray(self.d, dtype=float).reshape(-1)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] % 2:
            raise ValueError("M must be a square matrix of even size")
        if not np.allclose(M, M.T, atol=1e-12 * max(1.0, np.abs(M).max())):
            raise ValueError("M must be symmetric")
        if d.shape != (M.shape[0],):
            raise ValueError("d must have the same dimension as M")
        object.__setattr__(self, "M", (M + M.T) / 2)
        object.__setattr__(self, "d", d)

    @property
    def modes(self) -> int:
        return self.M.shape[0] // 2

    def generator(self):
        """Return ``(K, c)`` of the phase-space flow."""
        om = omega(self.modes)
        return -2.0 * om @ self.M, -om @ self.d

    # common gates
    @classmethod
    def zero(cls, n):
        return cls(np.zeros((2 * n, 2 * n)), np.zeros(2 * n))

    @classmethod
    def rotation(cls, n, mode=0):
        """Harmonic oscillator on one mode; run for time theta to rotate by theta."""
        M = np.zeros((2 * n, 2 * n))
        M[mode, mode] = M[n + mode, n + mode] = 0.5
        return cls(M, np.zeros(2 * n))

    @classmethod
    def squeezer(cls, n, mode=0):
        """Symmetrised XP generator; time r gives X -> e^r X, P -> e^-r P."""
        M = np.zeros((2 * n, 2 * n))
        M[mode, n + mode] = M[n + mode, mode] = 0.5
        return cls(M, np.zeros(2 * n))

    @classmethod
    def displacement(cls, n, dx=0.0, dp=0.0, mode=0):
        """Linear Hamiltonian moving the mean by (dx, dp) per unit time."""
        d = np.zeros(2 * n)
        d[n + mode] = dx
        d[mode] = -dp
        return cls(np.zeros((2 * n, 2 * n)), d)

    @classmethod
    def shear(cls, n, mode=0):
        M = np.zeros((2 * n, 2 * n))
        M[mode, mode] = 1.0
        return cls(M, np.zeros(2 * n))

    @classmethod
    def beam_splitter(cls, n, j, k):
        """Passive coupling; time pi/4 is the 50:50 splitter X_j -> (X_j + X_k)/sqrt2."""
        A = np.zeros((n, n))
        A[j, k], A[k, j] = 1.0, -1.0
        K = np.block([[A, np.zeros((n, n))], [np.zeros((n, n)), A]])
        return cls.from_generator(K, np.zeros(2 * n))

    @classmethod
    def from_generator(cls, K, c):
        """Inverse of :meth:`generator`: ``M = Omega K / 2``, ``d = Omega c``."""
        K = np.asarray(K, float)
        om = omega(K.shape[0] // 2)
        return cls(om @ K / 2.0, om @ np.asarray(c, float))


@dataclass(frozen=True)
class GaussianCircuit:
    modes: int
    segments: tuple = field(default_factory=tuple)  # ((QuadHamPhase, t), ...)

    def __post_init__(self):
        segs = tuple((h, float(t)) for h, t in self.segments)
        for h, t in segs:
            if h.modes != self.modes:
                raise ValueError("segment mode count differs from circuit")
            if not np.isfinite(t) or t <= 0:
                raise ValueError("segment times must be positive and finite")
        object.__setattr__(self, "segments", segs)

    @property
    def total_time(self) -> float:
        return float(sum(t for _, t in self.segments))

    def then(self, h: QuadHamPhase, t: float) -> "GaussianCircuit":
        return GaussianCircuit(self.modes, self.segments + ((h, t),))

    def to_json(self) -> dict:
        return {"schema": "GaussianCircuit", "version": 1, "modes": self.modes,
                "gates": [{"M": h.M.reshape(-1).tolist(), "d": h.d.tolist(), "t": t}
                          for h, t in self.segments]}

    @classmethod
    def from_json(cls, obj: dict) -> "GaussianCircuit":
        try:
            n = int(obj["modes"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"GaussianCircuit JSON at $.modes: {exc}") from None
        segs = []
        for idx, g in enumerate(obj.get("gates", [])):
            try:
                M = np.asarray(g["M"], float).reshape(2 * n, 2 * n)
                segs.append((QuadHamPhase(M, g.get("d", [0.0] * 2 * n)), float(g["t"])))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"GaussianCircuit JSON at $.gates[{idx}]: {exc}") from None
        return cls(n, tuple(segs))

    @classmethod
    def load(cls, path) -> "GaussianCircuit":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass(frozen=True)
class GaussianState:
    cov: np.ndarray
    mean: np.ndarray

    @classmethod
    def vacuum(cls, n: int) -> "GaussianState":
        return cls(np.eye(2 * n) / 2.0, np.zeros(2 * n))

    @property
    def modes(self) -> int:
        return self.cov.shape[0] // 2

    def validate(self, tol: float = 1e-8) -> None:
        cov = self.cov
        if not np.allclose(cov, cov.T, atol=tol):
            raise ValueError("covariance is not symmetric")
        herm = cov + 0.5j * omega(self.modes)
        lam = np.linalg.eigvalsh(herm)
        if lam.min() < -tol * max(1.0, np.abs(lam).max()):
            raise ValueError("covariance violates the uncertainty relation")

    def purity_defect(self) -> float:
        return abs(np.linalg.det(2 * self.cov) - 1.0)


def flow(h: QuadHamPhase, t: float):
    """Return ``(S, v)`` with ``r -> S r + v`` after time ``t``.

    One exponential of the augmented generator ``[[K, c], [0, 0]]`` gives both
    the symplectic matrix and the displacement, including singular ``K``.
    """
    K, c = h.generator()
    dim = K.shape[0]
    aug = np.zeros((dim + 1, dim + 1))
    aug[:dim, :dim] = K
    aug[:dim, dim] = c
    big = expm(aug * t)
    return big[:dim, :dim], big[:dim, dim]


def symplectic_exp(h: QuadHamPhase, t: float) -> np.ndarray:
    S, _ = flow(h, t)
    om = omega(h.modes)
    defect = np.linalg.norm(S.T @ om @ S - om)
    if defect > SYMPLECTIC_TOL * max(1.0, np.linalg.norm(S) ** 2):
        raise ArithmeticError(f"symplectic defect {defect:.3e}")
    return S


def evolve(state: GaussianState, h: QuadHamPhase, t: float) -> GaussianState:
    S, v = flow(h, t)
    return GaussianState(S @ state.cov @ S.T, S @ state.mean + v)


def run_circuit(c: GaussianCircuit, state: GaussianState | None = None) -> GaussianState:
    state = state or GaussianState.vacuum(c.modes)
    for h, t in c.segments:
        state = evolve(state, h, t)
    return state


def trajectory(c: GaussianCircuit, times_per_segment: int):
    """States on a uniform grid of each segment (including both endpoints)."""
    state = GaussianState.vacuum(c.modes)
    out = [(0.0, state)]
    clock = 0.0
    for h, t in c.segments:
        S, v = flow(h, t / times_per_segment)
        for j in range(1, times_per_segment + 1):
            state = GaussianState(S @ state.cov @ S.T, S @ state.mean + v)
            out.append((clock + t * j / times_per_segment, state))
        clock += t
    return out


def energy(state: GaussianState) -> float:
    """Mean total particle number ``(tr cov + |mean|^2)/2 - n/2``."""
    return 0.5 * (np.trace(state.cov) + state.mean @ state.mean) - state.modes / 2.0


def energy_bound(c: GaussianCircuit, grid: int = 64) -> float:
    """Largest energy seen on ``grid`` points per segment (a lower estimate of the sup)."""
    if grid < 2:
        raise ValueError("grid needs at least two points per segment")
    return max(energy(s) for _, s in trajectory(c, grid - 1))


def output_distribution(state: GaussianState):
    """Mean and variance of a position measurement on the first mode."""
    return float(state.mean[0]), float(state.cov[0, 0])


def decide_gausim(c: GaussianCircuit, a: float, b: float) -> str:
    mean, _ = output_distribution(run_circuit(c))
    if mean >= b:
        return "YES"
    if mean <= a:
        return "NO"
    raise PromiseViolated(f"output mean {mean:.6g} lies inside ({a}, {b})")


def _embed(h: QuadHamPhase, n_total: int, offset: int) -> QuadHamPhase:
    n = h.modes
    idx = np.r_[offset:offset + n, n_total + offset:n_total + offset + n]
    M = np.zeros((2 * n_total, 2 * n_total))
    M[np.ix_(idx, idx)] = h.M
    d = np.zeros(2 * n_total)
    d[idx] = h.d
    return QuadHamPhase(M, d)


def sample_mean_combine(circuits) -> GaussianCircuit:
    """Run 2^r copies side by side and fold their first modes with 50:50 splitters.

    The first mode of the result carries ``(Z_1 + ... + Z_{2^r}) / 2^{r/2}``.
    Copies sharing the same segment times run in parallel (block-diagonal
    segments); otherwise they run one after another.
    """
    circuits = list(circuits)
    count = len(circuits)
    if count == 0 or count & (count - 1):
        raise ValueError("need a power-of-two number of circuits")
    n = circuits[0].modes
    if any(ci.modes != n for ci in circuits):
        raise ValueError("all circuits need the same mode count")
    total = n * count
    segs = []
    times = [tuple(t for _, t in ci.segments) for ci in circuits]
    if all(ts == times[0] for ts in times):
        for s in range(len(times[0])):
            M = np.zeros((2 * total, 2 * total))
            d = np.zeros(2 * total)
            for copy, ci in enumerate(circuits):
                e = _embed(ci.segments[s][0], total, copy * n)
                M += e.M
                d += e.d
            segs.append((QuadHamPhase(M, d), times[0][s]))
    else:
        for copy, ci in enumerate(circuits):
            segs.extend((_embed(h, total, copy * n), t) for h, t in ci.segments)
    stride = 1
    while stride < count:
        for left in range(0, count, 2 * stride):
            segs.append((QuadHamPhase.beam_splitter(total, left * n, (left + stride) * n), np.pi / 4))
        stride *= 2
    return GaussianCircuit(total, tuple(segs))


def sample(state: GaussianState, seed: int, size=None):
    mean, var = output_distribution(state)
    return np.random.default_rng(seed).normal(mean, np.sqrt(var), size=size)
