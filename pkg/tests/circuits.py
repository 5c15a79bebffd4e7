"""Random circuit generators shared by the Fock, Heisenberg and acceptance tests."""

from fractions import Fraction

import numpy as np

from bosonic.fock import (BosonCircuit, cubic, displacement, fourier, linear_phase,
                          rotation, shear, squeezing, sum_gate)


def random_fock_circuit(rng, modes=None, depth=None, max_cubic=2):
    modes = modes or int(rng.integers(1, 3))
    depth = depth or int(rng.integers(1, 6))
    kinds = ["Rotation", "Displacement", "Squeezing", "Shear", "LinearPhase", "Fourier", "Cubic"]
    if modes == 2:
        kinds.append("Sum")
    gates, cubics = [], 0
    while len(gates) < depth:
        kind = kinds[rng.integers(len(kinds))]
        m = int(rng.integers(modes))
        if kind == "Cubic":
            if cubics >= max_cubic:
                continue
            cubics += 1
            gates.append(cubic(float(rng.choice([-1, 1]) * rng.uniform(0.05, 0.3)), m))
        elif kind == "Rotation":
            gates.append(rotation(float(rng.uniform(0, 2 * np.pi)), m))
        elif kind == "Displacement":
            gates.append(displacement(complex(*rng.uniform(-0.6, 0.6, 2)), m))
        elif kind == "Squeezing":
            gates.append(squeezing(float(rng.uniform(-0.4, 0.4)), m))
        elif kind == "Shear":
            gates.append(shear(float(rng.uniform(-0.3, 0.3)), m))
        elif kind == "LinearPhase":
            gates.append(linear_phase(float(rng.uniform(-0.6, 0.6)), m))
        elif kind == "Fourier":
            gates.append(fourier(m))
        else:
            j = int(rng.integers(2))
            gates.append(sum_gate(j, 1 - j))
    return BosonCircuit(modes, gates)


def random_rational_circuit(rng, modes=None, depth=None, max_cubic=2, denominator=10):
    """Gates with Fraction parameters (Heisenberg engine needs exact input)."""
    modes = modes or int(rng.integers(1, 3))
    depth = depth or int(rng.integers(1, 5))
    kinds = ["Shear", "LinearPhase", "Fourier", "Cubic", "Displacement"]
    if modes == 2:
        kinds.append("Sum")
    gates, cubics = [], 0

    def frac(lo, hi):
        return Fraction(int(rng.integers(int(lo * denominator), int(hi * denominator) + 1)), denominator)

    while len(gates) < depth:
        kind = kinds[rng.integers(len(kinds))]
        m = int(rng.integers(modes))
        if kind == "Cubic":
            if cubics >= max_cubic:
                continue
            s = frac(0.1, 0.3) * int(rng.choice([-1, 1]))
            cubics += 1
            gates.append(cubic(s, m))
        elif kind == "Shear":
            gates.append(shear(frac(-0.3, 0.3), m))
        elif kind == "LinearPhase":
            gates.append(linear_phase(frac(-0.5, 0.5), m))
        elif kind == "Displacement":
            gates.append(displacement(frac(-0.5, 0.5), m))
        elif kind == "Fourier":
            gates.append(fourier(m))
        else:
            j = int(rng.integers(2))
            gates.append(sum_gate(j, 1 - j))
    return BosonCircuit(modes, gates)
