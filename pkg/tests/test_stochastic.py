import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import linalg, stats

from zenomol.model import ModelParams, path_coupling
from zenomol.stochastic import (
    CollisionKernel,
    PoissonStream,
    collision_unitary,
    interval_from_uniform,
    nb_interval,
    nb_stream_key,
    nb_uniform,
    path_graph_eigensystem,
    sample_interval,
    stream_key,
    uniform_draw,
)


def taylor_expm(a, terms=60):
    """Plain Taylor series of exp(a) with scaling and squaring."""
    norm = np.abs(a).sum(axis=0).max()
    s = max(0, int(math.ceil(math.log2(norm))) + 1) if norm > 0 else 0
    b = a / 2**s
    out = np.eye(a.shape[0], dtype=complex)
    term = np.eye(a.shape[0], dtype=complex)
    for k in range(1, terms):
        term = term @ b / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


class TestGenerator:
    @given(seed=st.integers(0, 2**64 - 1), index=st.integers(0, 2**40), counter=st.integers(0, 10**6))
    def test_numba_twin_matches_python(self, seed, index, counter):
        key = stream_key(seed, index)
        assert int(nb_stream_key(np.uint64(seed), np.uint64(index))) == key
        assert nb_uniform(np.uint64(key), counter) == uniform_draw(key, counter)

    def test_draws_in_unit_interval(self):
        key = stream_key(3, 4)
        ys = [uniform_draw(key, c) for c in range(2000)]
        assert min(ys) >= 0.0 and max(ys) < 1.0

    def test_streams_differ(self):
        a = [uniform_draw(stream_key(0, 0), c) for c in range(5)]
        b = [uniform_draw(stream_key(0, 1), c) for c in range(5)]
        c = [uniform_draw(stream_key(1, 0), c) for c in range(5)]
        assert a != b and a != c

    def test_stream_reproducible(self):
        s1, s2 = PoissonStream(tau=2.0, seed=9, index=4), PoissonStream(tau=2.0, seed=9, index=4)
        assert [sample_interval(s1) for _ in range(10)] == [sample_interval(s2) for _ in range(10)]

    def test_stream_rejects_bad_tau(self):
        with pytest.raises(ValueError):
            PoissonStream(tau=0.0)


class TestIntervals:
    def test_inverse_e_gives_tau(self):
        assert interval_from_uniform(math.exp(-1), 3.0) == pytest.approx(3.0, rel=1e-15)

    def test_near_one_gives_small(self):
        assert 0 < interval_from_uniform(1 - 2**-53, 1.0) < 1e-15

    def test_zero_remapped(self):
        d = interval_from_uniform(0.0, 1.0)
        assert math.isfinite(d) and d == pytest.approx(53 * math.log(2))

    def test_numba_interval_matches(self):
        key = stream_key(5, 6)
        s = PoissonStream(tau=0.7, seed=5, index=6)
        assert [nb_interval(np.uint64(key), c, 0.7) for c in range(20)] == [sample_interval(s) for _ in range(20)]

    def test_sample_mean(self):
        key = np.uint64(stream_key(11, 0))
        draws = np.array([nb_interval(key, c, 1.0) for c in range(1_000_000)])
        assert np.all(draws > 0)
        # standard error is 1e-3; allow three of them
        assert abs(draws.mean() - 1.0) <= 3e-3

    def test_kolmogorov_smirnov(self):
        key = np.uint64(stream_key(2, 7))
        draws = np.array([nb_interval(key, c, 2.5) for c in range(100_000)])
        assert stats.kstest(draws, "expon", args=(0, 2.5)).pvalue > 0.01


class TestPathGraph:
    def test_single_level(self):
        lam, vec = path_graph_eigensystem(1)
        assert lam[0] == pytest.approx(0.0, abs=1e-15) and vec[0, 0] == pytest.approx(1.0)

    def test_two_levels(self):
        lam, _ = path_graph_eigensystem(2)
        assert np.allclose(sorted(lam), [-1, 1], atol=1e-15)

    def test_three_levels_against_eigh(self):
        lam, _ = path_graph_eigensystem(3)
        assert np.allclose(sorted(lam), np.linalg.eigvalsh(path_coupling(3)), atol=1e-14)
        assert np.allclose(sorted(lam), [-math.sqrt(2), 0, math.sqrt(2)], atol=1e-14)

    @pytest.mark.parametrize("n", [1, 2, 5, 40, 101])
    def test_eigenpairs(self, n):
        lam, vec = path_graph_eigensystem(n)
        v = path_coupling(n)
        assert np.allclose(vec.T @ vec, np.eye(n), atol=1e-13)
        assert np.allclose(v @ vec, vec * lam, atol=1e-13)

    def test_rejects_zero(self):
        with pytest.raises(ValueError):
            path_graph_eigensystem(0)


class TestCollisionUnitary:
    @pytest.mark.parametrize("n", [1, 3, 40])
    def test_zero_alpha_identity(self, n):
        assert np.allclose(collision_unitary(n, 0.0), np.eye(n), atol=1e-14)

    def test_two_level_quarter(self):
        assert np.allclose(collision_unitary(2, math.pi / 2), -1j * path_coupling(2), atol=1e-15)

    def test_forty_levels_against_taylor(self):
        u = collision_unitary(40, 0.2)
        assert np.max(np.abs(u.conj().T @ u - np.eye(40))) <= 1e-12
        oracle = taylor_expm(-0.2j * path_coupling(40))
        assert np.max(np.abs(u[:, 0] - oracle[:, 0])) <= 1e-10

    @given(n=st.integers(1, 60), alpha=st.floats(-20, 20))
    def test_unitary_and_symmetric(self, n, alpha):
        u = collision_unitary(n, alpha)
        assert np.max(np.abs(u.conj().T @ u - np.eye(n))) <= 1e-12
        assert np.max(np.abs(u - u.T)) <= 1e-12

    @given(n=st.integers(1, 30), a=st.floats(-5, 5), b=st.floats(-5, 5))
    def test_composition(self, n, a, b):
        lhs = collision_unitary(n, a) @ collision_unitary(n, b)
        assert np.max(np.abs(lhs - collision_unitary(n, a + b))) <= 1e-11

    @given(n=st.integers(1, 25), alpha=st.floats(-3, 3))
    def test_spectral_mapping(self, n, alpha):
        lam, vec = path_graph_eigensystem(n)
        u = collision_unitary(n, alpha)
        assert np.allclose(u @ vec, vec * np.exp(-1j * alpha * lam), atol=1e-12)

    @given(n=st.integers(1, 20), alpha=st.floats(-3, 3))
    def test_matches_expm(self, n, alpha):
        assert np.allclose(collision_unitary(n, alpha), linalg.expm(-1j * alpha * path_coupling(n)), atol=1e-12)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            collision_unitary(3, math.inf)


class TestKernel:
    def test_blocks_and_dense(self):
        k = CollisionKernel.from_params(ModelParams(n_left=3, n_right=4, alpha_left=0.3, alpha_right=0.0))
        d = k.dense()
        assert (k.n_left, k.n_right) == (3, 4)
        assert np.all(d[:3, 3:] == 0) and np.all(d[3:, :3] == 0)
        assert np.allclose(d[3:, 3:], np.eye(4))
        assert np.max(np.abs(d.conj().T @ d - np.eye(7))) <= 1e-12

    def test_immutable(self):
        k = CollisionKernel.build(4, 4, 0.2, 0.2)
        with pytest.raises(ValueError):
            k.block_left[0, 0] = 0
        with pytest.raises(AttributeError):
            k.alpha_left = 1.0


def test_numba_draws_accept_plain_int_keys():
    key = stream_key(42, 0)
    assert nb_uniform(key, 3) == uniform_draw(key, 3)
    assert nb_interval(key, 2, 0.5) == interval_from_uniform(uniform_draw(key, 2), 0.5)
