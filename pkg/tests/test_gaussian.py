import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bosonic.errors import PromiseViolated
from bosonic.gaussian import (
    GaussianCircuit, GaussianState, QuadHamPhase, decide_gausim, energy, energy_bound,
    evolve, omega, output_distribution, run_circuit, sample, sample_mean_combine,
    symplectic_exp,
)


def random_ham(rng, n, scale=1.0, linear=True):
    A = rng.uniform(-scale, scale, (2 * n, 2 * n))
    d = rng.uniform(-scale, scale, 2 * n) if linear else np.zeros(2 * n)
    return QuadHamPhase((A + A.T) / 2, d)


def rk4_mean_cov(h, t, cov, mean, steps=4000):
    """Integrate d/dt cov = K cov + cov K^T and d/dt mean = K mean + c."""
    K, c = h.generator()
    dt = t / steps

    def f(state):
        cv, mu = state
        return K @ cv + cv @ K.T, K @ mu + c

    state = (cov.copy(), mean.copy())
    for _ in range(steps):
        k1 = f(state)
        k2 = f(tuple(s + dt / 2 * k for s, k in zip(state, k1)))
        k3 = f(tuple(s + dt / 2 * k for s, k in zip(state, k2)))
        k4 = f(tuple(s + dt * k for s, k in zip(state, k3)))
        state = tuple(s + dt / 6 * (a + 2 * b + 2 * cc + d)
                      for s, a, b, cc, d in zip(state, k1, k2, k3, k4))
    return state


class TestSymplecticExp:
    def test_quarter_turn_swaps_quadratures(self):
        S = symplectic_exp(QuadHamPhase.rotation(1), np.pi / 2)
        assert np.allclose(S, [[0, 1], [-1, 0]], atol=1e-12)

    def test_zero(self):
        assert np.allclose(symplectic_exp(QuadHamPhase.zero(2), 1.3), np.eye(4))

    def test_shear(self):
        S = symplectic_exp(QuadHamPhase.shear(1), 0.7)
        assert np.allclose(S, [[1, 0], [-1.4, 1]])

    def test_rejects_non_symmetric(self):
        with pytest.raises(ValueError):
            QuadHamPhase(np.array([[0, 1], [0, 0]]), np.zeros(2))

    @given(st.integers(1, 3), st.integers(0, 10 ** 6), st.floats(0.05, 3))
    @settings(max_examples=30, deadline=None)
    def test_symplectic_invariance(self, n, seed, t):
        h = random_ham(np.random.default_rng(seed), n)
        S = symplectic_exp(h, t)
        om = omega(n)
        assert np.linalg.norm(S.T @ om @ S - om) < 1e-9 * np.linalg.norm(S) ** 2


class TestEvolve:
    def test_vacuum_rotation_invariant(self):
        vac = GaussianState.vacuum(1)
        out = evolve(vac, QuadHamPhase.rotation(1), 0.83)
        assert np.allclose(out.cov, vac.cov) and np.allclose(out.mean, 0)

    def test_linear_drive_moves_position(self):
        h = QuadHamPhase(np.zeros((2, 2)), [0.0, 1.0])  # d along P_1
        out = evolve(GaussianState.vacuum(1), h, 1.7)
        assert np.allclose(out.mean, [1.7, 0.0])
        assert np.allclose(out.cov, np.eye(2) / 2)

    def test_squeezer(self):
        r = 0.4
        out = evolve(GaussianState.vacuum(1), QuadHamPhase.squeezer(1), r)
        assert np.allclose(out.cov, np.diag([np.exp(2 * r), np.exp(-2 * r)]) / 2)

    def test_matches_rk4(self, rng):
        for n in (1, 2):
            h = random_ham(rng, n)
            st0 = GaussianState.vacuum(n)
            out = evolve(st0, h, 0.9)
            cov, mean = rk4_mean_cov(h, 0.9, st0.cov, st0.mean)
            assert np.allclose(out.cov, cov, atol=1e-9)
            assert np.allclose(out.mean, mean, atol=1e-9)

    def test_singular_generator_with_drift(self, rng):
        # shear plus drive: K nilpotent, mean still exact
        h = QuadHamPhase(np.diag([1.0, 0.0]), [0.3, -0.5])
        out = evolve(GaussianState.vacuum(1), h, 1.1)
        cov, mean = rk4_mean_cov(h, 1.1, np.eye(2) / 2, np.zeros(2))
        assert np.allclose(out.mean, mean, atol=1e-10)


class TestCircuits:
    def test_identity_and_cancellation(self):
        vac = GaussianState.vacuum(2)
        c = GaussianCircuit(2, ((QuadHamPhase.zero(2), 1.0),))
        assert np.allclose(run_circuit(c).mean, vac.mean)
        d = QuadHamPhase.displacement(2, 1.0, 0.5, mode=1)
        back = QuadHamPhase.displacement(2, -1.0, -0.5, mode=1)
        out = run_circuit(GaussianCircuit(2, ((d, 2.0), (back, 2.0))))
        assert np.allclose(out.mean, 0) and np.allclose(out.cov, vac.cov)

    def test_random_circuit_stays_physical_and_pure(self, rng):
        for _ in range(10):
            c = GaussianCircuit(3, tuple((random_ham(rng, 3), rng.uniform(0.1, 1)) for _ in range(4)))
            out = run_circuit(c)
            out.validate()
            assert np.linalg.eigvalsh(out.cov).min() > 0
            assert out.purity_defect() < 1e-8

    def test_json_round_trip(self, rng):
        c = GaussianCircuit(2, ((random_ham(rng, 2), 0.5),))
        back = GaussianCircuit.from_json(c.to_json())
        assert np.allclose(run_circuit(back).cov, run_circuit(c).cov)

    def test_json_error_path(self):
        with pytest.raises(ValueError, match=r"gates\[0\]"):
            GaussianCircuit.from_json({"modes": 1, "gates": [{"M": [1, 2, 3], "t": 1}]})


class TestEnergy:
    def test_values(self):
        assert energy(GaussianState.vacuum(3)) == pytest.approx(0)
        x = 1.3
        coh = GaussianState(np.eye(2) / 2, np.array([np.sqrt(2) * x, 0]))
        assert energy(coh) == pytest.approx(x ** 2)
        r = 0.6
        sq = evolve(GaussianState.vacuum(1), QuadHamPhase.squeezer(1), r)
        assert energy(sq) == pytest.approx(np.sinh(r) ** 2)

    def test_bound_examples(self):
        c = GaussianCircuit(1, ((QuadHamPhase.zero(1), 1.0),))
        assert energy_bound(c) == pytest.approx(0)
        ramp = GaussianCircuit(1, ((QuadHamPhase.displacement(1, 1.0), 3.0),))
        assert energy_bound(ramp) == pytest.approx(9 / 2)  # |mean|^2 / 2 with mean = t
        rot = ramp.then(QuadHamPhase.rotation(1), 2.0)
        assert energy_bound(rot) == pytest.approx(9 / 2)

    def test_bound_refines_upward(self, rng):
        c = GaussianCircuit(2, tuple((random_ham(rng, 2), 1.0) for _ in range(3)))
        coarse, fine = energy_bound(c, 4), energy_bound(c, 256)
        assert coarse <= fine + 1e-12
        assert abs(energy_bound(c, 128) - fine) < 1e-2 * max(1, fine)

    def test_passive_energy_constant(self, rng):
        st0 = evolve(GaussianState.vacuum(2), QuadHamPhase.displacement(2, 0.7, -0.2), 1.0)
        st0 = evolve(st0, QuadHamPhase.squeezer(2, 1), 0.3)
        for h in (QuadHamPhase.beam_splitter(2, 0, 1), QuadHamPhase.rotation(2, 1)):
            assert energy(evolve(st0, h, 0.77)) == pytest.approx(energy(st0), abs=1e-9)


class TestDecisionAndSampling:
    def test_output_distribution(self):
        assert output_distribution(GaussianState.vacuum(1)) == (0.0, 0.5)
        r = 0.5
        sq = evolve(GaussianState.vacuum(1), QuadHamPhase.squeezer(1), -r)
        assert output_distribution(sq)[1] == pytest.approx(np.exp(-2 * r) / 2)

    def test_gausim(self):
        shift = GaussianCircuit(1, ((QuadHamPhase.displacement(1, 1.0), 5.0),))
        assert decide_gausim(shift, 1, 2) == "YES"
        ident = GaussianCircuit(1, ((QuadHamPhase.zero(1), 1.0),))
        assert decide_gausim(ident, 1, 2) == "NO"
        mid = GaussianCircuit(1, ((QuadHamPhase.displacement(1, 1.0), 1.5),))
        with pytest.raises(PromiseViolated):
            decide_gausim(mid, 1, 2)

    def test_sample_mean_combine(self, rng):
        c = GaussianCircuit(2, ((random_ham(rng, 2), 0.7), (random_ham(rng, 2), 0.4)))
        m, v = output_distribution(run_circuit(c))
        for r in (0, 1, 2):
            comb = sample_mean_combine([c] * 2 ** r)
            m2, v2 = output_distribution(run_circuit(comb))
            assert m2 == pytest.approx(2 ** (r / 2) * m)
            assert v2 == pytest.approx(v)
            assert len(comb.segments) == len(c.segments) + 2 ** r - 1
            assert energy_bound(comb, 32) == pytest.approx(2 ** r * energy_bound(c, 32), rel=1e-9)
        with pytest.raises(ValueError):
            sample_mean_combine([c] * 3)

    def test_sampling(self):
        st0 = evolve(GaussianState.vacuum(1), QuadHamPhase.displacement(1, 1.0), 0.8)
        assert sample(st0, 7) == sample(st0, 7)
        xs = sample(st0, 11, size=100_000)
        assert abs(xs.mean() - 0.8) < 4 * np.sqrt(0.5 / len(xs))
        assert abs(xs.var() - 0.5) < 0.05
