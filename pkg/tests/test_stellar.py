from fractions import Fraction as F
import math

import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from bosonic.errors import BudgetExceeded
from bosonic.fockspace import fock_basis, ladder_matrix
from bosonic.groundstate import (QuadLadderHam, copositivity_gadget, fock_box_min, gaussian_ground_energy,
                                 single_mode_ground)
from bosonic.polyham import NormalPoly, xp_to_ladder
from bosonic.stellar import (
    MalformedWitness, SectorEngine, StellarWitness, build_bogoliubov, conjecture_scan, conjugate_by_witness,
    conjugate_hamiltonian, gaussian_map, lanczos_min, min_eig, minimize_shift, optimize_over_stellar,
    param_bounds_from_energy, projected_hamiltonian, projected_x_norm, scan_to_csv, shifted_xsq_min,
    symplectic_defect, verify_witness, witness_energy, witness_from_gaussian, witness_particle_number,
    xsq_count_below, xsq_projected_bound,
)
from hamiltonians import random_bounded


def random_unitary(rng, n):
    K = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scipy.linalg.expm(0.5j * (K + K.conj().T))


def random_quartic(rng, n, terms=6):
    """Hermitian degree-<=4 ladder polynomial with random small coefficients."""
    H = NormalPoly(n, "ladder", "float", 53)
    for _ in range(terms):
        mu = tuple(int(v) for v in rng.integers(0, 3, n))
        nu = tuple(int(v) for v in rng.integers(0, 3, n))
        if sum(mu) + sum(nu) > 4:
            continue
        c = complex(rng.normal(), rng.normal())
        mono = NormalPoly.monomial(mu, nu, c, basis="ladder", kind="float", prec=53)
        H = H + mono + mono.adjoint()
    return H


def random_witness(rng, n, r, xi_scale=0.3, disp_scale=0.4):
    V = random_unitary(rng, n)
    xi = rng.uniform(0, xi_scale, n) * np.exp(2j * np.pi * rng.uniform(size=n))
    disp = rng.uniform(0, disp_scale, n) * np.exp(2j * np.pi * rng.uniform(size=n))
    dim = len(fock_basis(n, r))
    c = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return StellarWitness.gaussian(V, xi, disp, r, c / np.linalg.norm(c))


def fock_gaussian(w: StellarWitness, cutoff: int):
    """Dense ``U_V S D`` on the total-number cutoff, by exponentiating generators."""
    n = w.modes
    def one(j, mu, nu):
        e = [0] * n
        f = [0] * n
        e[j], f[j] = mu, nu
        return (tuple(e), tuple(f))
    genD, genS = {}, {}
    for j in range(n):
        d, x = w.disp[j], w.xi[j]
        genD[one(j, 0, 1)] = d
        genD[one(j, 1, 0)] = -np.conj(d)
        genS[one(j, 2, 0)] = 0.5 * np.conj(x)
        genS[one(j, 0, 2)] = -0.5 * x
    K = 1j * scipy.linalg.logm(w.V)       # V = exp(-iK)
    genV = {}
    for j in range(n):
        for k in range(n):
            key = tuple(tuple(int(i == m) for i in range(n)) for m in (k, j))
            genV[key] = genV.get(key, 0) - 1j * K[j, k]
    mats = [ladder_matrix(g, n, cutoff).toarray() for g in (genV, genS, genD)]
    out = np.eye(mats[0].shape[0], dtype=complex)
    for m in mats:
        out = out @ scipy.linalg.expm(m)
    return out


class TestBogoliubov:
    def test_passive_only(self, rng):
        V = random_unitary(rng, 3)
        T = build_bogoliubov(V, np.zeros(3))
        assert np.allclose(T, scipy.linalg.block_diag(V, V.conj()))

    def test_single_mode_real(self):
        r = 0.4
        T = build_bogoliubov([[1]], [r])
        assert np.allclose(T, [[math.cosh(r), -math.sinh(r)], [-math.sinh(r), math.cosh(r)]])

    def test_single_mode_phase(self):
        r, phi = 0.3, 0.8
        T = build_bogoliubov([[1]], [r * np.exp(1j * phi)])
        assert T[0, 1] == pytest.approx(-np.exp(1j * phi) * math.sinh(r))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10 ** 6), st.integers(1, 4))
    def test_symplectic(self, seed, n):
        rng = np.random.default_rng(seed)
        xi = rng.uniform(0, 1.5, n) * np.exp(2j * np.pi * rng.uniform(size=n))
        assert symplectic_defect(build_bogoliubov(random_unitary(rng, n), xi)) < 1e-10

    def test_rejects_non_unitary(self):
        with pytest.raises(ValueError):
            build_bogoliubov([[1, 1], [0, 1]], [0, 0])


class TestConjugation:
    def test_number_displaced(self):
        alpha = 0.7 + 0.2j
        w = StellarWitness.gaussian([[1]], [0], [alpha])
        got = conjugate_by_witness(NormalPoly.number(0, 1), w).poly.as_complex_dict()
        want = {((1,), (1,)): 1, ((0,), (1,)): alpha, ((1,), (0,)): alpha.conjugate(),
                ((0,), (0,)): abs(alpha) ** 2}
        assert set(got) == set(want)
        for k, v in want.items():
            assert got[k] == pytest.approx(v, abs=1e-14)

    def test_passive_invariance(self, rng):
        n = 3
        N = NormalPoly(n, "ladder")
        for j in range(n):
            N = N + NormalPoly.number(j, n)
        w = StellarWitness.gaussian(random_unitary(rng, n), np.zeros(n), np.zeros(n))
        got = conjugate_by_witness(N, w).poly
        want = N.to_float(53)
        diff = (got - want).as_complex_dict()
        assert max(abs(v) for v in diff.values()) < 1e-12

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 10 ** 6))
    def test_degree_and_hermiticity(self, seed):
        rng = np.random.default_rng(seed)
        H = random_quartic(rng, 2)
        if H.is_zero():
            return
        conj = conjugate_by_witness(H, random_witness(rng, 2, 0, 0.8, 1.0))
        assert conj.degree == H.degree
        assert conj.poly.is_hermitian(tol=1e-9)

    def test_fock_oracle(self, rng):
        for _ in range(3):
            H = random_quartic(rng, 2)
            w = random_witness(rng, 2, 0, 0.25, 0.3)
            E = 30
            U = fock_gaussian(w, E)
            big = ladder_matrix(H.as_complex_dict(), 2, E).toarray()
            oracle = (U.conj().T @ big @ U)[:10, :10]      # |m| <= 3
            mine = projected_hamiltonian(conjugate_by_witness(H, w), 3).toarray()
            assert np.abs(mine - oracle).max() < 1e-6

    def test_routes_agree(self, rng):
        H = random_quartic(rng, 2, terms=10)
        w = random_witness(rng, 2, 3, 0.6, 0.8)
        T, shift = gaussian_map(w)
        coeff = projected_hamiltonian(conjugate_hamiltonian(H, T, shift), 3).toarray()
        product = SectorEngine(H, 3).matrix(T, shift)
        assert np.abs(coeff - product).max() < 1e-10

    def test_sparse_engine_matches_dense(self, rng):
        H = random_quartic(rng, 2)
        T, shift = gaussian_map(random_witness(rng, 2, 2))
        dense = SectorEngine(H, 2).matrix(T, shift)
        sparse = SectorEngine(H, 2, dense_limit=0).matrix(T, shift)
        assert np.abs(dense - sparse).max() < 1e-12


class TestProjected:
    def test_number(self):
        m = projected_hamiltonian(NormalPoly.number(0, 1), 2).toarray()
        assert np.allclose(m, np.diag([0, 1, 2]))

    def test_position(self):
        m = projected_hamiltonian(NormalPoly.X(0, 1), 1).toarray()
        s = 1 / math.sqrt(2)
        assert np.allclose(m, [[0, s], [s, 0]])

    def test_random_quartic(self, rng):
        H = random_quartic(rng, 2, terms=8)
        m = projected_hamiltonian(H, 3)
        assert m.shape == (10, 10)
        dense = m.toarray()
        assert np.allclose(dense, dense.conj().T)
        # dense construction: products of truncated ladder matrices with headroom
        E = 3 + 4
        a = [ladder_matrix({(tuple(int(i == j) for i in range(2)), (0, 0)): 1}, 2, E).toarray() for j in range(2)]
        big = np.zeros_like(a[0])
        for (mu, nu), c in H.as_complex_dict().items():
            op = np.eye(len(big), dtype=complex)
            for j in range(2):
                op = op @ np.linalg.matrix_power(a[j].conj().T, nu[j])
            for j in range(2):
                op = op @ np.linalg.matrix_power(a[j], mu[j])
            big += c * op
        assert np.abs(dense - big[:10, :10]).max() < 1e-12
        per_row = np.diff(m.tocsr().indptr).max()
        assert per_row <= len(H)

    def test_cap(self):
        with pytest.raises(BudgetExceeded):
            projected_hamiltonian(NormalPoly.number(0, 3), 10, cap=100)


class TestMinEig:
    def test_diag(self):
        assert min_eig(np.diag([0.0, 1.0, 2.0])) == pytest.approx(0)

    def test_pauli_x(self):
        assert min_eig(np.array([[0.0, 1.0], [1.0, 0.0]])) == pytest.approx(-1)

    def test_lanczos_random_sparse(self, rng):
        n = 600
        M = sp.random(n, n, density=0.01, random_state=np.random.RandomState(1)) * 1.0
        M = M + M.T + sp.diags(rng.normal(size=n))
        lam, vec = lanczos_min(M.tocsr(), tol=1e-12)
        ref = scipy.linalg.eigvalsh(M.toarray())[0]
        assert lam == pytest.approx(ref, abs=1e-8)
        assert np.linalg.norm(M @ vec - lam * vec) < 1e-6

    def test_large_uses_lanczos(self, rng):
        n = 2200
        M = sp.diags([rng.normal(size=n), np.full(n - 1, 0.3), np.full(n - 1, 0.3)], [0, 1, -1]).tocsr()
        ref = scipy.linalg.eigvalsh_tridiagonal(M.diagonal(), M.diagonal(1), select="i", select_range=(0, 0))[0]
        assert min_eig(M, tol=1e-12) == pytest.approx(ref, abs=1e-8)


class TestVerify:
    def test_trivial_accept(self):
        w = StellarWitness.gaussian([[1]], [0], [0])
        assert verify_witness(NormalPoly.number(0, 1), w, 0.1, 0.5).accept

    def test_one_photon_reject(self):
        w = StellarWitness([[1]], [0], [0], {(1,): 1})
        v = verify_witness(NormalPoly.number(0, 1), w, 0.1, 0.5)
        assert not v.accept and v.value == pytest.approx(1)

    def test_gadget_squeezed(self):
        h = QuadLadderHam.single_mode(0.25, 1)
        g = single_mode_ground(0.25, 1)
        w = witness_from_gaussian([[g["a_star"]]], [0])
        assert verify_witness(h.to_poly(), w, -0.06, 0.0).accept
        assert witness_energy(h.to_poly(), w) == pytest.approx(g["energy"], abs=1e-12)

    def test_complex_alpha_optimum(self):
        alpha = 0.3 * np.exp(0.9j)
        g = single_mode_ground(alpha, 1.0)
        w = witness_from_gaussian([[g["a_star"]]], [0])
        assert witness_energy(QuadLadderHam.single_mode(alpha, 1.0).to_poly(), w) == pytest.approx(g["energy"], abs=1e-12)

    def test_caps_checked_first(self):
        w = StellarWitness.gaussian([[1]], [3.0], [0])
        v = verify_witness(NormalPoly.number(0, 1), w, 100.0, 200.0, energy_cap=1.0)
        assert not v.accept and v.value is None and "squeezing" in v.reason

    def test_malformed(self):
        with pytest.raises(MalformedWitness):
            StellarWitness([[1]], [0], [0], {(0,): 0.5})
        with pytest.raises(MalformedWitness):
            StellarWitness([[1, 1], [0, 1]], [0, 0], [0, 0], {(0, 0): 1})

    def test_bad_thresholds(self):
        with pytest.raises(ValueError):
            verify_witness(NormalPoly.number(0, 1), StellarWitness.gaussian([[1]], [0], [0]), 0.5, 0.1)

    def test_json_roundtrip(self, rng):
        w = random_witness(rng, 2, 2)
        back = StellarWitness.from_json(w.to_json())
        assert np.allclose(back.V, w.V) and back.core == w.core

    def test_multimode_gaussian_energy(self, rng):
        h = random_bounded(rng, 2)
        ref = gaussian_ground_energy(h)
        opt = optimize_over_stellar(h.to_poly(), 0, 20.0, restarts=2, seed=3)
        assert opt.energy == pytest.approx(ref.energy, abs=1e-3)


class TestOptimize:
    def test_number_rank0(self):
        opt = optimize_over_stellar(NormalPoly.number(0, 1), 0, 2.0, restarts=2, seed=0)
        assert opt.energy == pytest.approx(0, abs=1e-9)

    def test_quadratic_matches_gaussian(self, rng):
        for _ in range(2):
            h = random_bounded(rng, 1)
            opt = optimize_over_stellar(h.to_poly(), 0, 30.0, restarts=3, seed=1)
            assert opt.energy >= gaussian_ground_energy(h).energy - 1e-9
            assert opt.energy == pytest.approx(gaussian_ground_energy(h).energy, abs=1e-3)

    def test_copositive_gadget(self):
        M = [[1, -1], [-1, 2]]
        H = copositivity_gadget(M)
        opt = optimize_over_stellar(H, 1, 4.0, restarts=2, seed=0)
        box, _ = fock_box_min(H, 6)
        assert box == 0
        assert opt.energy >= -1e-9 and opt.energy == pytest.approx(0, abs=1e-6)

    def test_history_monotone_and_verifies(self, rng):
        H = random_quartic(rng, 1) + NormalPoly.number(0, 1, kind="float", prec=53).scale(3.0) \
            + xp_to_ladder(NormalPoly.X(0, 1) ** 4).to_float(53)
        opt = optimize_over_stellar(H, 2, 3.0, restarts=2, seed=5)
        assert all(b <= a + 1e-12 for a, b in zip(opt.history, opt.history[1:]))
        assert verify_witness(H, opt.witness, opt.energy + 1e-7, opt.energy + 1, energy_cap=3.0).accept

    def test_workers_deterministic(self):
        H = QuadLadderHam.single_mode(0.3, 1.0).to_poly()
        one = optimize_over_stellar(H, 0, 3.0, restarts=2, seed=4, workers=1)
        two = optimize_over_stellar(H, 0, 3.0, restarts=2, seed=4, workers=2)
        assert one.energy == two.energy


class TestParamBounds:
    def test_rank0_formula(self):
        for E in (0.5, 1.0, 7.0):
            b = param_bounds_from_energy(0, E)
            assert b.xi_max == pytest.approx(0.5 * math.log(4 * E + 2))
            assert b.disp_max ** 2 == pytest.approx(2 * E * (2 * E + 1))

    def test_rank0_at_one(self):
        assert param_bounds_from_energy(0, 1).xi_max == pytest.approx(0.896, abs=5e-4)

    def test_grows_with_rank(self):
        xs = [param_bounds_from_energy(r, 2.0).xi_max for r in (0, 1, 4, 16)]
        assert xs == sorted(xs)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10 ** 6), st.integers(0, 3), st.integers(1, 2))
    def test_sampled_states_respect_caps(self, seed, r, n):
        rng = np.random.default_rng(seed)
        w = random_witness(rng, n, r, xi_scale=1.5, disp_scale=2.0)
        E = witness_particle_number(w)
        caps = param_bounds_from_energy(r, max(E, 1e-9))
        assert np.abs(w.xi).max() <= caps.xi_max + 1e-9
        assert np.abs(w.disp).max() <= caps.disp_max + 1e-9

    def test_squeezed_vacuum_is_tight(self):
        # a pure squeezed vacuum saturates cosh(2 xi) bound up to the 1/4 e^{-2xi} term
        xi = 1.2
        w = StellarWitness.gaussian([[1]], [xi], [0])
        E = witness_particle_number(w)
        assert E == pytest.approx(math.sinh(xi) ** 2)
        assert param_bounds_from_energy(0, E).xi_max >= xi


class TestXsq:
    def test_r1(self):
        b = xsq_projected_bound(1)
        assert b.lam_min == pytest.approx(0.5) and b.lower == F(1, 16) and b.certified

    def test_r2(self):
        b = xsq_projected_bound(2)
        assert b.lam_min == pytest.approx((3 - math.sqrt(6)) / 2, abs=1e-12) and b.certified

    def test_r0(self):
        assert xsq_projected_bound(0).lam_min == pytest.approx(0.5)

    def test_sturm_detects(self):
        assert xsq_count_below(2, F(28, 100)) == 1
        assert xsq_count_below(2, F(27, 100)) == 0
        assert xsq_count_below(1, F(2)) == 2

    def test_sturm_matches_float(self, rng):
        for r in (5, 17, 40):
            lam = np.linalg.eigvalsh(_dense_xsq(r))
            x = F(float(rng.uniform(lam[0], lam[-1]))).limit_denominator(10 ** 6)
            assert xsq_count_below(r, x) == int((lam < float(x)).sum())

    def test_all_certified_to_100(self):
        assert all(xsq_projected_bound(r).certified for r in range(1, 101))

    def test_projected_x_norm(self):
        for r in (1, 2, 7):
            x = np.diag(np.sqrt(np.arange(1, r + 1) / 2), 1)
            assert projected_x_norm(r) == pytest.approx(np.linalg.eigvalsh(x + x.T)[-1])


def _dense_xsq(r):
    a = np.diag(np.sqrt(np.arange(1, r + 3, dtype=float)), 1)
    x = (a + a.T) / np.sqrt(2)
    return (x @ x)[: r + 1, : r + 1]


class TestScan:
    def test_shifted_matches_dense(self):
        r, x = 6, 0.37
        a = np.diag(np.sqrt(np.arange(1, r + 3, dtype=float)), 1)
        X = (a + a.T) / np.sqrt(2) - x * np.eye(r + 3)
        assert shifted_xsq_min(r, x) == pytest.approx(np.linalg.eigvalsh((X @ X)[: r + 1, : r + 1])[0])

    def test_min_below_zero_shift(self):
        res = conjecture_scan(12)
        for row in res.rows:
            assert 0 < row["f"] <= row["f_at_zero"] + 1e-15
        assert res.rows[0]["f"] <= 0.5

    def test_refine_beats_fine_grid(self):
        for r in (1, 3, 5):
            x, f = minimize_shift(r)
            grid = min(shifted_xsq_min(r, t) for t in np.linspace(0, 2 * math.sqrt(r), 2001))
            assert f <= grid + 1e-9

    def test_linear_growth(self):
        res = conjecture_scan(40)
        assert res.r_squared > 0.99 and res.slope > 0 and res.min_r_times_f > 0

    def test_csv(self, tmp_path):
        res = conjecture_scan(5)
        path = tmp_path / "scan.csv"
        scan_to_csv(res, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "r,x_min,f,inv_f,f_at_zero" and len(lines) == 6
