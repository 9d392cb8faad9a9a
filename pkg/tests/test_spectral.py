import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from twostep.spectral import (
    DegenerateInputError,
    PowerIterationError,
    alignment,
    alignment_table,
    bulk_edge,
    hermite_feature_norm_check,
    operator_norm,
    operator_norm_fast,
    svd_spectrum,
)


def test_bulk_edge_value():
    assert bulk_edge(2000, 1400) == pytest.approx(1 + np.sqrt(2000 / 1400))


def test_pure_noise_has_no_outliers():
    g = np.random.default_rng(0)
    W = g.standard_normal((800, 560)) / np.sqrt(560)
    rep = svd_spectrum(W)
    assert rep.outlier_count == 0
    assert rep.singvals[0] == pytest.approx(rep.bulk_edge, rel=0.05)


def test_planted_spike_is_found():
    g = np.random.default_rng(1)
    N, d = 800, 560
    u, v = g.standard_normal(N), g.standard_normal(d)
    u /= np.linalg.norm(u)
    v /= np.linalg.norm(v)
    W = g.standard_normal((N, d)) / np.sqrt(d) + 6.0 * np.outer(u, v)
    rep = svd_spectrum(W)
    assert rep.outlier_count == 1
    assert alignment(rep.right[0], v).cosine > 0.95
    # sign convention: first nonzero entry of each right vector is positive
    assert rep.right[0][np.flatnonzero(rep.right[0])[0]] > 0


def test_histogram_csv(tmp_path):
    rep = svd_spectrum(np.random.default_rng(0).standard_normal((50, 30)) / np.sqrt(30))
    rep.histogram_csv(tmp_path / "h.csv", bins=10)
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "bin_left,bin_right,count"
    assert sum(int(r.split(",")[2]) for r in lines[1:]) == 30


@given(st.integers(2, 30), st.integers(2, 30), st.integers(0, 10_000))
def test_power_iteration_matches_svd(m, n, seed):
    A = np.random.default_rng(seed).standard_normal((m, n))
    ref = np.linalg.svd(A, compute_uv=False)[0]
    assert operator_norm(A, tol=1e-12, max_iter=200_000) == pytest.approx(ref, rel=1e-6)


def test_power_iteration_close_gap():
    # top two singular values 1 and 0.999: slow contraction must not stop early
    g = np.random.default_rng(0)
    U, _ = np.linalg.qr(g.standard_normal((40, 40)))
    V, _ = np.linalg.qr(g.standard_normal((30, 30)))
    s = np.linspace(0.5, 0.999, 30)
    s[-1] = 1.0
    A = (U[:, :30] * s[::-1]) @ V.T
    assert operator_norm(A, tol=1e-10, max_iter=500_000) == pytest.approx(1.0, rel=1e-6)


def test_power_iteration_limits():
    assert operator_norm(np.zeros((3, 4))) == 0.0
    A = np.random.default_rng(0).standard_normal((20, 20))
    with pytest.raises(PowerIterationError) as exc:
        operator_norm(A, tol=1e-15, max_iter=3)
    assert exc.value.last_value > 0


def test_fast_norm_matches():
    A = np.random.default_rng(2).standard_normal((300, 200))
    assert operator_norm_fast(A) == pytest.approx(np.linalg.norm(A, 2), rel=1e-10)


def test_alignment():
    a = alignment([1.0, 0.0], [-2.0, 0.0])
    assert a.raw == -2.0 and a.cosine == 1.0
    with pytest.raises(DegenerateInputError):
        alignment([0.0, 0.0], [1.0, 0.0])
    assert np.isnan(alignment([0.0, 0.0], [1.0, 0.0], normalized=False).cosine)


def test_alignment_table(tmp_path):
    t = alignment_table([np.array([1.0, 0.0]), np.array([1.0, 1.0])], np.array([[1.0, 0.0]]),
                        extra={"b": np.array([0.0, 3.0])}, names=["W2.v1", "W2.v2"])
    assert t.value("W2.v2") == pytest.approx(1 / np.sqrt(2))
    assert t.value("b") == 0.0
    t.to_csv(tmp_path / "a.csv")
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == "vector,beta_star_1"


def test_hermite_feature_norm():
    g = np.random.default_rng(0)
    W0 = g.standard_normal((400, 280)) / np.sqrt(280)
    X = g.standard_normal((800, 280))
    # He_2 features are centered, so the normalized norm stays O(1)
    assert 0.5 < hermite_feature_norm_check(W0, X, 2) < 5.0
    with pytest.raises(ValueError):
        hermite_feature_norm_check(W0, X, 7)
