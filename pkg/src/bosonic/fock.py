"""Truncated Fock-space simulation of Gaussian and cubic-phase circuits.

States live on ``n`` modes with total particle number at most ``E``.  Every
gate is applied as ``Pi_E U Pi_E`` using exact matrix elements, so the norm a
gate pushes out of the retained sector is known exactly and accumulates into
the vector's error bound.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import product

import mpmath
import numpy as np
from scipy.linalg import expm
from scipy.special import eval_genlaguerre, gammaln
from scipy.sparse.linalg import expm_multiply

from .errors import BudgetExceeded, PrecisionError, PromiseViolated
from .fockspace import (basis_index, basis_size, cutoff_mask, flat_to_tensor,
                        fock_basis, ladder_matrix, tensor_to_flat)
from .polyham import (NormalPoly, from_anticommutator, poly_from_json,
                      poly_to_json, xp_to_ladder)

GATE_KINDS = ("Rotation", "Displacement", "Squeezing", "Shear", "LinearPhase",
              "Fourier", "Sum", "Cubic", "PolyHamGate")
_SCALAR_KINDS = {"Rotation", "Squeezing", "Shear", "LinearPhase", "Cubic"}


# ---------------------------------------------------------------- gates

def _parse_param(value):
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, (list, tuple)):
        re, im = (_parse_param(v) for v in value)
        return complex(float(re), float(im))
    return value


def _param_to_json(value):
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, complex):
        return [value.real, value.imag]
    return value


@dataclass(frozen=True)
class BosonGate:
    """One gate acting on ``modes``.

    ``param`` is the angle, amplitude, squeezing, shear, phase slope or cubic
    strength depending on ``kind``; Fractions are kept for symbolic use.
    ``hamiltonian`` is only used by ``PolyHamGate``, which applies
    ``exp(i * param * H)``.
    """

    kind: str
    modes: tuple
    param: object = None
    hamiltonian: NormalPoly | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "modes", tuple(int(m) for m in self.modes))
        if self.kind == "Sum" and len(self.modes) != 2:
            raise ValueError("Sum acts on two modes (j, k)")
        if self.kind == "Sum" and self.modes[0] == self.modes[1]:
            raise ValueError("Sum needs two distinct modes")
        if self.kind in _SCALAR_KINDS | {"Fourier", "Displacement"} and len(self.modes) != 1:
            raise ValueError(f"{self.kind} acts on one mode")
        if self.kind == "PolyHamGate":
            if self.hamiltonian is None:
                raise ValueError("PolyHamGate needs a hamiltonian")
        elif self.kind not in ("Fourier", "Sum") and self.param is None:
            raise ValueError(f"{self.kind} needs a parameter")
        if self.param is not None and not np.isfinite(complex(self.param)):
            raise ValueError("gate parameters must be finite")
        if self.kind == "Cubic" and self.param == 0:
            raise ValueError("Cubic strength must be nonzero")

    @property
    def gaussian(self) -> bool:
        if self.kind == "Cubic":
            return False
        if self.kind == "PolyHamGate":
            return self.hamiltonian.degree <= 2
        return True

    def inverse(self) -> "BosonGate":
        if self.kind == "Fourier":
            raise ValueError("Fourier inverse is Fourier^3; expand it at the call site")
        if self.kind == "Sum":
            raise ValueError("Sum inverse is not in the gate set")
        return BosonGate(self.kind, self.modes, -self.param, self.hamiltonian)

    def to_json(self) -> dict:
        out = {"kind": self.kind, "modes": list(self.modes)}
        if self.param is not None:
            out["param"] = _param_to_json(self.param)
        if self.hamiltonian is not None:
            out["hamiltonian"] = poly_to_json(self.hamiltonian)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "BosonGate":
        ham = obj.get("hamiltonian")
        return cls(obj["kind"], tuple(obj["modes"]), _parse_param(obj.get("param")),
                   poly_from_json(ham) if ham is not None else None)


def rotation(theta, mode=0):
    return BosonGate("Rotation", (mode,), theta)


def displacement(alpha, mode=0):
    return BosonGate("Displacement", (mode,), alpha)


def squeezing(r, mode=0):
    return BosonGate("Squeezing", (mode,), r)


def shear(t, mode=0):
    return BosonGate("Shear", (mode,), t)


def linear_phase(t, mode=0):
    return BosonGate("LinearPhase", (mode,), t)


def fourier(mode=0):
    return BosonGate("Fourier", (mode,))


def sum_gate(j, k):
    return BosonGate("Sum", (j, k))


def cubic(s, mode=0):
    return BosonGate("Cubic", (mode,), s)


def poly_gate(hamiltonian: NormalPoly, t):
    return BosonGate("PolyHamGate", tuple(range(hamiltonian.modes)), t, hamiltonian)


@dataclass
class BosonCircuit:
    """Gate list on ``modes`` modes with an optional coherent bit-string input.

    With ``input_bits = x`` each mode ``j`` starts in the coherent state
    ``|x_j>`` (real amplitude), prepared by displacements ahead of the gates.
    """

    modes: int
    gates: list = field(default_factory=list)
    input_bits: tuple | None = None

    def __post_init__(self):
        for g in self.gates:
            if any(m < 0 or m >= self.modes for m in g.modes):
                raise ValueError(f"gate {g.kind} targets a mode outside 0..{self.modes - 1}")
            if g.kind == "PolyHamGate" and g.hamiltonian.modes != self.modes:
                raise ValueError("PolyHamGate hamiltonian must span all circuit modes")
        if self.input_bits is not None:
            self.input_bits = tuple(int(b) for b in self.input_bits)
            if len(self.input_bits) != self.modes or set(self.input_bits) - {0, 1}:
                raise ValueError("input_bits must be a 0/1 string of length modes")

    def then(self, *gates) -> "BosonCircuit":
        return BosonCircuit(self.modes, self.gates + list(gates), self.input_bits)

    def prepared_gates(self) -> list:
        """Gates actually applied, input preparation first."""
        prep = []
        if self.input_bits is not None:
            prep = [displacement(complex(b), j) for j, b in enumerate(self.input_bits) if b]
        return prep + list(self.gates)

    @property
    def depth(self) -> int:
        return len(self.prepared_gates())

    @property
    def cubic_count(self) -> int:
        return sum(g.kind == "Cubic" for g in self.gates)

    def to_json(self) -> dict:
        out = {"modes": self.modes, "gates": [g.to_json() for g in self.gates]}
        if self.input_bits is not None:
            out["input"] = "".join(map(str, self.input_bits))
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "BosonCircuit":
        bits = obj.get("input")
        if bits in (None, "vacuum"):
            bits = None
        return cls(int(obj["modes"]), [BosonGate.from_json(g) for g in obj.get("gates", [])],
                   tuple(int(b) for b in bits) if bits is not None else None)

    @classmethod
    def load(cls, path) -> "BosonCircuit":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


# ---------------------------------------------------------------- states

@dataclass
class FockVector:
    """Amplitudes on ``|m| <= cutoff`` as a dense ``(cutoff+1,)*modes`` tensor."""

    cutoff: int
    amplitudes: np.ndarray
    error_bound: float = 0.0

    @property
    def modes(self) -> int:
        return self.amplitudes.ndim

    @classmethod
    def vacuum(cls, modes: int, cutoff: int) -> "FockVector":
        return cls.basis_state((0,) * modes, cutoff)

    @classmethod
    def basis_state(cls, occupation, cutoff: int) -> "FockVector":
        occupation = tuple(occupation)
        if sum(occupation) > cutoff:
            raise ValueError("occupation exceeds cutoff")
        amps = np.zeros((cutoff + 1,) * len(occupation), dtype=complex)
        amps[occupation] = 1.0
        return cls(cutoff, amps)

    def copy(self) -> "FockVector":
        return FockVector(self.cutoff, self.amplitudes.copy(), self.error_bound)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def amplitude(self, occupation) -> complex:
        occupation = tuple(occupation)
        if sum(occupation) > self.cutoff:
            return 0j
        return complex(self.amplitudes[occupation])

    def energy(self) -> float:
        """Mean total particle number."""
        totals = np.indices(self.amplitudes.shape).sum(axis=0)
        return float(np.sum(np.abs(self.amplitudes) ** 2 * totals))

    def restrict(self, cutoff: int) -> "FockVector":
        if cutoff > self.cutoff:
            raise ValueError("restrict only lowers the cutoff")
        sl = (slice(0, cutoff + 1),) * self.modes
        amps = self.amplitudes[sl] * cutoff_mask(self.modes, cutoff)
        return FockVector(cutoff, amps, self.error_bound)

    def distance(self, other: "FockVector") -> float:
        """``|| psi_small - restrict(psi_big) ||`` in the smaller cutoff."""
        small, big = sorted((self, other), key=lambda v: v.cutoff)
        return float(np.linalg.norm(small.amplitudes - big.restrict(small.cutoff).amplitudes))

    def flat(self) -> np.ndarray:
        return tensor_to_flat(self.amplitudes, self.modes, self.cutoff)


# ---------------------------------------------------------------- single-mode matrices

def rotation_matrix(theta: float, cutoff: int) -> np.ndarray:
    """``exp(i theta N)``."""
    return np.diag(np.exp(1j * float(theta) * np.arange(cutoff + 1)))


def displacement_matrix(alpha, cutoff: int) -> np.ndarray:
    """``exp(alpha a^dag - conj(alpha) a)`` from the Laguerre closed form."""
    alpha = complex(alpha)
    x = abs(alpha) ** 2
    if x > cutoff / 4:
        warnings.warn(f"|alpha|^2 = {x:.3g} > E/4: heavy truncation", RuntimeWarning, stacklevel=2)
    idx = np.arange(cutoff + 1)
    m, n = np.meshgrid(idx, idx, indexing="ij")
    lo, hi = np.minimum(m, n), np.maximum(m, n)
    d = hi - lo
    lag = eval_genlaguerre(lo, d, x)
    scale = np.exp(0.5 * (gammaln(lo + 1) - gammaln(hi + 1)) - x / 2)
    base = np.where(m >= n, alpha, -np.conj(alpha))
    return scale * np.power(base, d) * lag


def squeezing_matrix(r: float, cutoff: int) -> np.ndarray:
    """``exp(r/2 (a^2 - a^dag^2))`` via the disentangled product form.

    ``<m|S|n> = sum_j (-t/2)^p (t/2)^l sqrt(m! n!) / (p! l! j!) cosh(r)^-(j+1/2)``
    with ``t = tanh r``, ``m = j + 2p``, ``n = j + 2l``.
    """
    r = float(r)
    if abs(r) > math.log(4 * max(cutoff, 1)):
        warnings.warn(f"|r| = {abs(r):.3g} > ln(4E): heavy truncation", RuntimeWarning, stacklevel=2)
    size = cutoff + 1
    if r == 0:
        return np.eye(size, dtype=complex)
    t = math.tanh(r)
    log_half_t, log_cosh = math.log(abs(t) / 2), math.log(math.cosh(r))
    idx = np.arange(size)
    m, n = np.meshgrid(idx, idx, indexing="ij")
    lf = gammaln(idx + 1)
    out = np.zeros((size, size))
    for j in range(size):
        p2, l2 = m - j, n - j
        ok = (p2 >= 0) & (l2 >= 0) & (p2 % 2 == 0) & (l2 % 2 == 0)
        if not ok.any():
            continue
        p, l = np.where(ok, p2 // 2, 0), np.where(ok, l2 // 2, 0)
        logmag = ((p + l) * log_half_t - gammaln(p + 1) - gammaln(l + 1)
                  + 0.5 * (lf[m] + lf[n]) - lf[j] - (j + 0.5) * log_cosh)
        sign = np.where(p % 2, -1.0, 1.0) * (np.sign(t) ** (p + l))
        out += np.where(ok, sign * np.exp(logmag), 0.0)
    return out.astype(complex)


def _euler_angles(heis: np.ndarray):
    """Split a 2x2 symplectic map into ``rot(th1) diag(e^-r, e^r) rot(th2)``."""
    w, s, vt = np.linalg.svd(heis)
    if np.linalg.det(w) < 0:
        flip = np.diag([1.0, -1.0])
        w, vt = w @ flip, flip @ vt
    th1 = math.atan2(w[1, 0], w[0, 0])
    th2 = math.atan2(vt[1, 0], vt[0, 0])
    return th1, -math.log(s[0]), th2


def gaussian_single_mode_matrix(heis: np.ndarray, vacuum_amplitude: complex, cutoff: int) -> np.ndarray:
    """Truncated unitary with Heisenberg map ``U^dag (X,P) U = heis (X,P)``.

    Rotations are diagonal, so ``R S R`` truncates without error; the global
    phase is pinned by the vacuum amplitude.
    """
    th1, r, th2 = _euler_angles(np.asarray(heis, dtype=float))
    core = squeezing_matrix(r, cutoff)
    phase = complex(vacuum_amplitude) * math.sqrt(math.cosh(r))
    if abs(abs(phase) - 1) > 1e-9:
        raise ValueError("vacuum amplitude inconsistent with the symplectic map")
    k = np.arange(cutoff + 1)
    return phase * np.exp(1j * th1 * k)[:, None] * core * np.exp(1j * th2 * k)[None, :]


def shear_matrix(t: float, cutoff: int) -> np.ndarray:
    """``exp(i t X^2)``; vacuum amplitude ``(1 - i t)^(-1/2)``."""
    t = float(t)
    return gaussian_single_mode_matrix(np.array([[1.0, 0.0], [2 * t, 1.0]]),
                                       (1 - 1j * t) ** -0.5, cutoff)


def fourier_matrix(cutoff: int) -> np.ndarray:
    """``exp(i pi/4 (X^2 + P^2))``."""
    return np.exp(1j * math.pi / 4) * rotation_matrix(math.pi / 2, cutoff)


def linear_phase_matrix(t: float, cutoff: int) -> np.ndarray:
    """``exp(i t X)`` equals ``D(i t / sqrt 2)``."""
    return displacement_matrix(1j * float(t) / math.sqrt(2), cutoff)


# ---------------------------------------------------------------- Airy and the cubic gate

def airy_derivative(l: int, x, degree: int, prec: int = 128):
    """``Ai^(l)(x)`` from the degree-``degree`` truncation of its power series.

    ``Ai = Ai(0) f + Ai'(0) g`` with ``f, g`` solving ``y'' = x y``.  Returns
    ``(value, bound)`` where ``bound = (c/d)^d``, ``c = |x|^3 + |x|^2``.
    """
    if l < 0:
        raise ValueError("derivative order must be >= 0")
    with mpmath.workprec(prec):
        x = mpmath.mpmathify(x)
        ax = abs(x)
        need = 100 * (ax ** 3 + 1) + l
        if degree < need:
            raise ValueError(f"degree {degree} below the validity threshold {mpmath.nstr(need, 6)}")
        ai0 = 1 / (mpmath.cbrt(9) * mpmath.gamma(mpmath.mpf(2) / 3))
        dai0 = -1 / (mpmath.cbrt(3) * mpmath.gamma(mpmath.mpf(1) / 3))
        top = degree + l
        coeffs = [mpmath.mpf(0)] * (top + 1)
        coeffs[0] = ai0
        if top >= 1:
            coeffs[1] = dai0
        for p in range(top - 2):
            coeffs[p + 3] = coeffs[p] / ((p + 2) * (p + 3))
        total = mpmath.mpf(0)
        for p in range(top, l - 1, -1):
            total = total * x + coeffs[p] * mpmath.ff(p, l)
        c = ax ** 3 + ax ** 2
        bound = (c / degree) ** degree if c > 0 else mpmath.mpf(0)
        return +total, +bound


def _airy_ladder(x, count: int) -> list:
    """``Ai^(j)(x)`` for ``j < count`` via ``Ai^(j+2) = x Ai^(j) + j Ai^(j-1)``."""
    vals = [mpmath.airyai(x), mpmath.airyai(x, derivative=1)]
    for j in range(count - 2):
        vals.append(x * vals[j] + (j * vals[j - 1] if j else 0))
    return vals[:count]


def _cubic_block(s, cutoff: int, prec: int) -> mpmath.matrix:
    with mpmath.workprec(prec):
        s = mpmath.mpf(s)
        y = mpmath.cbrt(1 / s)
        x = y ** 4
        c = -2j * y
        airy = _airy_ladder(x, 2 * cutoff + 1)
        size = cutoff + 1
        hankel = mpmath.matrix(size, size)
        cpow = [c ** k for k in range(2 * cutoff + 1)]
        for a in range(size):
            for b in range(size):
                hankel[a, b] = cpow[a + b] * airy[a + b]
        z = -1j / s
        herm = [mpmath.mpf(1), 2 * z]
        for k in range(1, cutoff):
            herm.append(2 * z * herm[k] - 2 * k * herm[k - 1])
        # columns hold the t-coefficients of H_n(z + t/2)
        shift = mpmath.matrix(size, size)
        for n in range(size):
            for a in range(n + 1):
                shift[a, n] = mpmath.binomial(n, a) * herm[n - a]
        core = shift.T * hankel * shift
        pref = 2 * mpmath.sqrt(mpmath.pi) * y * mpmath.exp(2 / (3 * s ** 2))
        norms = [1 / mpmath.sqrt(2 ** n * mpmath.factorial(n)) for n in range(size)]
        for m in range(size):
            for n in range(size):
                core[m, n] *= pref * norms[m] * norms[n]
        return core


@lru_cache(maxsize=128)
def _cubic_cached(s: float, cutoff: int, target: float, max_prec: int):
    span = 2 + 2 / s + 2 * s ** (-1 / 3)
    prec = 64 + int(math.ceil(2 * cutoff * math.log2(span)))
    while True:
        lo = _cubic_block(s, cutoff, prec)
        hi = _cubic_block(s, cutoff, prec + 64)
        err = max(abs(lo[i, j] - hi[i, j]) for i in range(cutoff + 1) for j in range(cutoff + 1))
        if err <= target:
            break
        if 2 * prec > max_prec:
            raise PrecisionError(f"cubic gate s={s}, E={cutoff}: error {float(err):.2e} at {prec} bits")
        prec *= 2
    out = np.array(hi.tolist(), dtype=complex)
    out.setflags(write=False)
    return out, float(err)


def cubic_matrix(s, cutoff: int, target: float = 1e-14, max_prec: int = 1 << 15):
    """``exp(i s X^3 / 3)`` on ``|m|,|n| <= cutoff`` from the Airy closed form.

    Returns ``(matrix, entry_error)``; the error is the largest change of any
    entry when the working precision is raised by 64 bits.
    """
    s = float(s)
    if s == 0:
        raise ValueError("cubic strength must be nonzero")
    mat, err = _cubic_cached(abs(s), int(cutoff), float(target), int(max_prec))
    return (mat.conj().T.copy() if s < 0 else mat.copy()), err


def unitarity_defect(mat: np.ndarray, sector: int | None = None) -> float:
    """``max |(U^dag U - I)_ij|`` over columns ``<= sector``."""
    sector = mat.shape[0] - 1 if sector is None else sector
    cols = mat[:, : sector + 1]
    return float(np.max(np.abs(cols.conj().T @ cols - np.eye(sector + 1))))


# ---------------------------------------------------------------- passive two-mode blocks

@lru_cache(maxsize=256)
def _passive_blocks(angle: float, flip: bool, cutoff: int) -> tuple:
    """Number-sector blocks of ``exp(angle (a2^dag a1 - a1^dag a2)) exp(i pi flip N2)``."""
    blocks = []
    for total in range(cutoff + 1):
        n1 = np.arange(total + 1)
        gen = np.zeros((total + 1, total + 1))
        # a2^dag a1 |n1, N-n1> = sqrt(n1 (N-n1+1)) |n1-1, N-n1+1>
        amp = np.sqrt(n1[1:] * (total - n1[1:] + 1.0))
        gen[n1[1:] - 1, n1[1:]] += angle * amp
        gen[n1[1:], n1[1:] - 1] -= angle * amp
        block = expm(gen).astype(complex)
        if flip:
            block = block * np.where((total - n1) % 2, -1.0, 1.0)[None, :]
        block.setflags(write=False)
        blocks.append(block)
    return tuple(blocks)


def _passive_for(orth: np.ndarray, cutoff: int) -> tuple:
    """Blocks of the passive unitary with ``U a_i^dag U^dag = sum_j orth_ji a_j^dag``."""
    flip = np.linalg.det(orth) < 0
    rot = orth @ np.diag([1.0, -1.0]) if flip else orth
    angle = math.atan2(rot[1, 0], rot[0, 0])
    return _passive_blocks(round(angle, 15), bool(flip), cutoff)


def _apply_blocks(amps: np.ndarray, j: int, k: int, blocks) -> np.ndarray:
    arr = np.moveaxis(amps, (j, k), (0, 1)).copy()
    for total, block in enumerate(blocks):
        n1 = np.arange(total + 1)
        arr[n1, total - n1] = np.tensordot(block, arr[n1, total - n1], axes=(1, 0))
    return np.moveaxis(arr, (0, 1), (j, k))


def _apply_axis(amps: np.ndarray, mat: np.ndarray, axis: int) -> np.ndarray:
    return np.moveaxis(np.tensordot(mat, amps, axes=(1, axis)), 0, axis)


def sum_gate_parts(cutoff: int):
    """Factor ``exp(-i X_j P_k)`` as passive, two squeezers, passive."""
    shear_x = np.array([[1.0, 0.0], [1.0, 1.0]])
    w, s, vt = np.linalg.svd(shear_x)
    return (_passive_for(vt, cutoff), [squeezing_matrix(-math.log(v), cutoff) for v in s],
            _passive_for(w, cutoff))


def sum_gate_matrix(cutoff: int) -> np.ndarray:
    """Dense matrix of SUM on the two-mode basis ``|m1 + m2| <= cutoff``."""
    basis = fock_basis(2, cutoff)
    cols = []
    for occ in basis:
        out = apply_gate(FockVector.basis_state(occ, cutoff), sum_gate(0, 1))
        cols.append(out.flat())
    return np.array(cols).T


# ---------------------------------------------------------------- gate application

def single_mode_matrix(g: BosonGate, cutoff: int):
    """Matrix and entry error for a one-mode gate."""
    kind, p = g.kind, g.param
    if kind == "Rotation":
        return rotation_matrix(float(p), cutoff), 0.0
    if kind == "Displacement":
        return displacement_matrix(complex(p), cutoff), 0.0
    if kind == "Squeezing":
        return squeezing_matrix(float(p), cutoff), 0.0
    if kind == "Shear":
        return shear_matrix(float(p), cutoff), 0.0
    if kind == "LinearPhase":
        return linear_phase_matrix(float(p), cutoff), 0.0
    if kind == "Fourier":
        return fourier_matrix(cutoff), 0.0
    if kind == "Cubic":
        return cubic_matrix(float(p), cutoff)
    raise ValueError(f"{kind} is not a single-mode gate")


def _ladder_terms(h: NormalPoly) -> dict:
    if h.basis == "anticommutator":
        h = from_anticommutator(h)
    if h.basis == "xp":
        h = xp_to_ladder(h)
    return h.as_complex_dict()


def _poly_apply(psi: FockVector, g: BosonGate):
    n, cutoff = psi.modes, psi.cutoff
    terms = _ladder_terms(g.hamiltonian)
    ham = ladder_matrix(terms, n, cutoff)
    t = float(g.param)
    vec = psi.flat()
    out = expm_multiply(1j * t * ham, vec)
    # first-order leak of the generator truncation: |t| * ||(1 - Pi_E) H psi||
    deg = max((sum(nu) - sum(mu) for mu, nu in terms), default=0)
    leak = 0.0
    if deg > 0 and t:
        wide = ladder_matrix(terms, n, cutoff + deg)
        dim = len(vec)
        outside = []
        for state in (vec, out):
            padded = np.zeros(wide.shape[0], dtype=complex)
            padded[:dim] = state
            outside.append(np.linalg.norm((wide @ padded)[dim:]))
        leak = abs(t) * max(outside)
    return flat_to_tensor(out, n, cutoff), leak


def apply_gate(psi: FockVector, g: BosonGate) -> FockVector:
    """``Pi_E g Pi_E psi`` with the exact norm leak added to the error bound."""
    if any(m >= psi.modes for m in g.modes):
        raise ValueError("gate targets a mode outside the state")
    mask = cutoff_mask(psi.modes, psi.cutoff)
    before = np.sum(np.abs(psi.amplitudes) ** 2)
    entry_err = 0.0
    extra = 0.0
    if g.kind == "PolyHamGate":
        amps, extra = _poly_apply(psi, g)
    elif g.kind == "Sum":
        j, k = g.modes
        right, squeezers, left = sum_gate_parts(psi.cutoff)
        amps = _apply_blocks(psi.amplitudes, j, k, right)
        # no projection between the squeezers: the box keeps every path that ends inside
        amps = _apply_axis(amps, squeezers[0], j)
        amps = _apply_axis(amps, squeezers[1], k) * mask
        amps = _apply_blocks(amps, j, k, left)
    else:
        mat, entry_err = single_mode_matrix(g, psi.cutoff)
        amps = _apply_axis(psi.amplitudes, mat, g.modes[0])
    amps = amps * mask
    after = np.sum(np.abs(amps) ** 2)
    leak = math.sqrt(max(before - after, 0.0))
    # entry errors act through at most (E+1) terms per output amplitude
    numeric = entry_err * (psi.cutoff + 1) * math.sqrt(amps.size)
    return FockVector(psi.cutoff, amps, psi.error_bound + leak + extra + numeric)


def simulate(circuit: BosonCircuit, cutoff: int, track_energy: bool = False):
    """Run the circuit from vacuum; optionally also return per-step energies."""
    psi = FockVector.vacuum(circuit.modes, cutoff)
    energies = [psi.energy()]
    for g in circuit.prepared_gates():
        psi = apply_gate(psi, g)
        if track_energy:
            energies.append(psi.energy())
    return (psi, energies) if track_energy else psi


def gate_matrix(g: BosonGate, modes: int, cutoff: int) -> np.ndarray:
    """Dense ``Pi_E g Pi_E`` on the flat basis ``fock_basis(modes, cutoff)``."""
    cols = [apply_gate(FockVector.basis_state(occ, cutoff), g).flat()
            for occ in fock_basis(modes, cutoff)]
    return np.array(cols).T


# ---------------------------------------------------------------- cutoff certificate

def cutoff_error(steps: int, energy_bound: float, cutoff: int) -> float:
    """``T sqrt(2 E* / E)``."""
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    return steps * math.sqrt(2 * energy_bound / cutoff)


def _tv_distance(small: FockVector, big: FockVector) -> float:
    p_small = np.abs(small.amplitudes) ** 2
    p_big = np.abs(big.amplitudes) ** 2
    inner = big.restrict(small.cutoff).amplitudes
    outside = p_big.sum() - np.sum(np.abs(inner) ** 2)
    return 0.5 * (np.abs(p_small - np.abs(inner) ** 2).sum() + outside)


@dataclass
class CutoffChoice:
    cutoff: int
    energy_bound: float
    certificate: float
    tv_change: float
    state: FockVector


def choose_cutoff(circuit: BosonCircuit, eps: float, start: int = 4,
                  max_cutoff: int = 256, max_dim: int = 2_000_000) -> CutoffChoice:
    """Double ``E`` until the measured certificate and a stability check pass."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    steps = max(circuit.depth, 1)
    cutoff = max(1, start)
    small = simulate(circuit, cutoff)
    while True:
        if 2 * cutoff > max_cutoff or basis_size(circuit.modes, 2 * cutoff) > max_dim:
            raise BudgetExceeded(f"no cutoff <= {max_cutoff} certifies eps={eps}")
        big, energies = simulate(circuit, 2 * cutoff, track_energy=True)
        estar = max(energies)
        cert = cutoff_error(steps, estar, cutoff) if circuit.depth else 0.0
        tv = _tv_distance(small, big)
        if cert <= eps and tv < eps / 4:
            return CutoffChoice(cutoff, estar, cert, tv, small)
        cutoff, small = 2 * cutoff, big


# ---------------------------------------------------------------- Feynman paths

def amplitude_feynman(circuit: BosonCircuit, out_occ, in_occ, cutoff: int,
                      budget: int = 10 ** 6) -> complex:
    """``<out| U_T..U_1 |in>`` as an explicit sum over intermediate Fock paths."""
    gates = circuit.prepared_gates()
    if not gates:
        return complex(tuple(out_occ) == tuple(in_occ))
    index = basis_index(circuit.modes, cutoff)
    dim = len(index)
    paths = dim ** (len(gates) - 1)
    if paths > budget:
        raise BudgetExceeded(f"{paths} paths exceed budget {budget}")
    mats = [gate_matrix(g, circuit.modes, cutoff) for g in gates]
    start, end = index[tuple(in_occ)], index[tuple(out_occ)]
    total = 0j
    for path in product(range(dim), repeat=len(gates) - 1):
        prev, weight = start, 1 + 0j
        for mat, nxt in zip(mats, path):
            weight *= mat[nxt, prev]
            if weight == 0:
                break
            prev = nxt
        else:
            total += weight * mats[-1][end, prev]
    return complex(total)


def amplitude_matrix_product(circuit: BosonCircuit, out_occ, in_occ, cutoff: int) -> complex:
    index = basis_index(circuit.modes, cutoff)
    vec = np.zeros(len(index), dtype=complex)
    vec[index[tuple(in_occ)]] = 1
    for g in circuit.prepared_gates():
        vec = gate_matrix(g, circuit.modes, cutoff) @ vec
    return complex(vec[index[tuple(out_occ)]])


# ---------------------------------------------------------------- BQP embedding

def sigma_x_bar(j: int, modes: int) -> NormalPoly:
    """``(I - N) a + a^dag (I - N)`` on mode ``j`` (creation-left ladder form)."""
    def e(k):
        v = [0] * modes
        v[j] = k
        return tuple(v)
    return NormalPoly(modes, "ladder", terms={(e(1), e(0)): 1, (e(0), e(1)): 1,
                                              (e(2), e(1)): -1, (e(1), e(2)): -1})


def sigma_z_bar(j: int, modes: int) -> NormalPoly:
    """``I - 2 N`` on mode ``j``."""
    z = (0,) * modes
    one = tuple(1 if i == j else 0 for i in range(modes))
    return NormalPoly(modes, "ladder", terms={(z, z): 1, (one, one): -2})


def qubit_hamiltonian(kind: str, targets, modes: int) -> NormalPoly:
    targets = tuple(targets) if isinstance(targets, (tuple, list)) else (targets,)
    if kind == "x":
        return sigma_x_bar(targets[0], modes)
    if kind == "z":
        return sigma_z_bar(targets[0], modes)
    if kind == "zz":
        return sigma_z_bar(targets[0], modes) * sigma_z_bar(targets[1], modes)
    raise ValueError(f"unknown qubit generator {kind!r}")


def qubit_reference(gates, n: int) -> np.ndarray:
    """Plain ``2^n`` state vector for ``exp(i theta P)`` Pauli rotations from ``|0..0>``."""
    pauli = {"x": np.array([[0, 1], [1, 0]], dtype=complex), "z": np.diag([1.0 + 0j, -1.0])}
    state = np.zeros(2 ** n, dtype=complex)
    state[0] = 1
    for kind, targets, theta in gates:
        targets = tuple(targets) if isinstance(targets, (tuple, list)) else (targets,)
        op = np.eye(1)
        for q in range(n):
            if q in targets:
                op = np.kron(op, pauli["x" if kind == "x" else "z"])
            else:
                op = np.kron(op, np.eye(2))
        state = math.cos(theta) * state + 1j * math.sin(theta) * (op @ state)
    return state


@dataclass
class EmbeddingResult:
    state: FockVector
    qubit_amplitudes: np.ndarray
    sector_leak: float


def bqp_embedding(gates, n: int, cutoff: int = 4, leak_tol: float = 1e-6) -> EmbeddingResult:
    """Run ``exp(i theta H)`` for qubit generators ``(kind, targets, theta)`` on Fock modes.

    ``kind`` is one of ``x``, ``z``, ``zz``.  The qubit sector is the set of
    occupations in ``{0,1}^n``, mode 0 being the most significant bit.
    """
    circuit = BosonCircuit(n, [poly_gate(qubit_hamiltonian(k, tg, n), th) for k, tg, th in gates])
    psi = simulate(circuit, cutoff)
    amps = np.array([psi.amplitude(bits) for bits in product((0, 1), repeat=n)])
    leak = max(0.0, 1.0 - float(np.sum(np.abs(amps) ** 2)))
    if leak > leak_tol:
        raise PromiseViolated(f"qubit-sector leak {leak:.2e} exceeds {leak_tol:.0e}")
    return EmbeddingResult(psi, amps, leak)


# ---------------------------------------------------------------- measurement

def number_distribution(psi: FockVector, mode: int = 0) -> np.ndarray:
    probs = np.abs(psi.amplitudes) ** 2
    others = tuple(i for i in range(psi.modes) if i != mode)
    return probs.sum(axis=others) if others else probs


def decide_cvbqp(psi: FockVector, a: float, b: float, window: float, mode: int = 0) -> str:
    """``accept`` if ``P(N in [b, b+w]) > 2/3``, ``reject`` if ``P(N in [a-w, a]) > 2/3``."""
    dist = number_distribution(psi, mode)
    n = np.arange(len(dist))
    p_acc = dist[(n >= b) & (n <= b + window)].sum()
    p_rej = dist[(n >= a - window) & (n <= a)].sum()
    if p_acc > 2 / 3:
        return "accept"
    if p_rej > 2 / 3:
        return "reject"
    raise PromiseViolated(f"P(accept window)={p_acc:.3f}, P(reject window)={p_rej:.3f}")


def quadratic_hamiltonian(M, d) -> NormalPoly:
    """``r^T M r + d.r`` over ``r = (X_1..X_n, P_1..P_n)`` as a float polynomial."""
    M, d = np.asarray(M, dtype=float), np.asarray(d, dtype=float)
    n = len(d) // 2
    quad = [NormalPoly.X(j, n, kind="float") for j in range(n)] + \
           [NormalPoly.P(j, n, kind="float") for j in range(n)]
    h = NormalPoly(n, kind="float")
    for i in range(2 * n):
        if d[i]:
            h = h + quad[i].scale(float(d[i]))
        for j in range(2 * n):
            if M[i, j]:
                h = h + (quad[i] * quad[j]).scale(float(M[i, j]))
    return h


def from_gaussian_circuit(circuit) -> BosonCircuit:
    """Fock-engine circuit for a phase-space ``GaussianCircuit`` (one PolyHamGate per segment)."""
    gates = [poly_gate(quadratic_hamiltonian(h.M, h.d), -t) for h, t in circuit.segments if t]
    return BosonCircuit(circuit.modes, gates)
