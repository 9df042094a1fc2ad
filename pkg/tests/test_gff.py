import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from favsites import gff
from favsites.graphs import box, cycle, path_graph
from favsites.hitting import green_matrix


def sampler_matrix(n):
    """Linear map from the interior normals to the interior field."""
    m = n - 2
    basis = np.eye(m * m).reshape(m * m, m, m)
    return gff._interior_samples(n, basis).reshape(m * m, m * m).T


def interior_green(n):
    G = gff.box_green(n)
    return G.submatrix()


def test_three_by_three_centre():
    assert interior_green(3)[0, 0] == pytest.approx(1.0, abs=1e-14)
    vals = gff.sample_gff_batch(3, 40_000, 1)[:, 1, 1]
    assert abs(vals.var() - 1.0) < 4 * math.sqrt(2 / 40_000)


def test_boundary_is_exactly_zero():
    f = gff.sample_gff(12, 3).as_grid()
    assert (f[0] == 0).all() and (f[-1] == 0).all() and (f[:, 0] == 0).all() and (f[:, -1] == 0).all()
    assert (f[1:-1, 1:-1] != 0).all()


@pytest.mark.parametrize("n", [4, 7, 16])
def test_both_samplers_have_green_covariance(n, monkeypatch):
    G = interior_green(n)
    A = sampler_matrix(n)
    assert gff.box_method(n) == "dense-cholesky"
    np.testing.assert_allclose(A @ A.T, G, atol=1e-12)
    monkeypatch.setattr(gff, "DENSE_MAX_SITES", 0)
    assert gff.box_method(n) == "sine-transform"
    A = sampler_matrix(n)
    np.testing.assert_allclose(A @ A.T, G, atol=1e-12)


def test_sampled_covariance_16():
    n, k = 16, 20_000
    fields = gff.sample_gff_batch(n, k, 11)[:, 1:-1, 1:-1].reshape(k, -1)
    G = interior_green(n)
    idx = [0, 7, 100, 195]
    for i in idx:
        for j in idx:
            prod = fields[:, i] * fields[:, j]
            se = prod.std(ddof=1) / math.sqrt(k)
            assert abs(prod.mean() - G[i, j]) < 4.5 * se


def test_samples_are_reproducible_and_batch_independent():
    a = gff.sample_gff_batch(10, 3, 5)
    b = gff.sample_gff_batch(10, 3, 5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a[0], a[1])
    with pytest.raises(ValueError):
        gff.sample_gff_batch(2, 1, 0)


def test_high_points_nest_and_are_pure():
    field = gff.sample_gff(64, 2)
    prev = None
    for alpha in (0.01, 0.05, 0.1, 0.2):
        hp = gff.high_points(field, alpha)
        grid = field.as_grid()
        for x, y in hp.sites:
            assert 0.5 * grid[x, y] ** 2 >= hp.threshold
        assert len(hp) == int((0.5 * field.values ** 2 >= gff.high_threshold(64, alpha)).sum())
        if prev is not None:
            assert hp.sites.issubset(prev.sites)
        prev = hp
    with pytest.raises(ValueError):
        gff.high_points(field, 1.2)


def test_high_points_count_both_signs():
    sites = np.array([[0, 0], [0, 1], [0, 2]])
    f = gff.GaussianField(sites, np.array([-5.0, 5.0, 0.1]), "test", None, None)
    hp = gff.high_points(f, 0.5, n=10)
    assert set(hp.sites) == {(0, 0), (0, 1)}


def test_max_trend_structure():
    out = gff.max_trend([16, 8], 5, 3)
    assert out["sides"] == [8, 16] and len(out["samples"][8]) == 5
    assert out["target"] == pytest.approx(2 * math.sqrt(2 / math.pi))
    assert out["ratio_last"] == pytest.approx(out["medians"][-1] / out["target"])


# ---------------------------------------------------------------- continuous time


@settings(max_examples=20)
@given(st.integers(0, 2 ** 32), st.floats(0.01, 5.0))
def test_origin_local_time_is_exactly_t(seed, t):
    rec = gff.simulate_inverse_local_time(cycle(5), t, seed)
    assert rec.local_time[0] == t
    assert (rec.local_time >= 0).all()


def test_inverse_local_time_moments():
    g = cycle(4)
    t = 2.0
    G = green_matrix(g, [0])
    lt = gff.local_time_samples(g, t, 20_000, 8)
    for x in (1, 2, 3):
        col = lt[:, x]
        se = col.std(ddof=1) / math.sqrt(len(col))
        assert abs(col.mean() - t) < 4 * se
        dev = (col - t) ** 2
        assert abs(dev.mean() - 2 * G(x, x) * t) < 4 * dev.std(ddof=1) / math.sqrt(len(col))


def test_walk_rejects_bad_inputs():
    with pytest.raises(ValueError):
        gff.simulate_inverse_local_time(cycle(4), 0.0, 1)
    from favsites.graphs import from_edges
    g = from_edges(range(4), [(0, 1, 1.0), (2, 3, 1.0)])
    with pytest.raises(ValueError):
        gff.simulate_inverse_local_time(g, 1.0, 1)


def test_graph_gff_covariance():
    g = path_graph(4)
    G = green_matrix(g, [0])
    x = gff.sample_graph_gff(g, 50_000, 4)
    assert (x[:, 0] == 0).all()
    emp = x.T @ x / len(x)
    np.testing.assert_allclose(emp, G.entries, atol=0.06 * G.entries.max())


def test_ks_permutation():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=300), rng.normal(size=300)
    d, p = gff.ks_permutation_test(a, b, 200, np.random.default_rng(1))
    assert 0 <= d <= 1 and p > 0.01
    d, p = gff.ks_permutation_test(a, b + 1.0, 200, np.random.default_rng(1))
    assert p < 0.01


@pytest.mark.parametrize("swap", [False, True])
def test_ray_knight_cycle(swap):
    rep = gff.ray_knight_check(cycle(4), 1.0, 3000, 7, permutations=200, swap_streams=swap)
    assert rep["origin_exact"] and rep["within_band"]
    for row in rep["sites"]:
        assert row["mean_exact"] == pytest.approx(0.5 * row["g"] + 1.0)
        assert abs(row["mean_lhs"] - row["mean_exact"]) < 4 * row["se"]
    js = gff.report_json(rep)
    assert '"p_value"' in js and '"m2_rhs"' in js


def test_ray_knight_swap_changes_fields_only():
    a = gff.ray_knight_check(cycle(4), 1.0, 200, 7, permutations=10)
    b = gff.ray_knight_check(cycle(4), 1.0, 200, 7, permutations=10, swap_streams=True)
    assert a["sites"][0]["mean_lhs"] != b["sites"][0]["mean_lhs"]


def test_ray_knight_too_big():
    with pytest.raises(ValueError):
        gff.ray_knight_check(box(16), 1.0, 10, 0)


def test_clt_rescaling():
    out = gff.clt_rescaling(cycle(4), [1, 10], 3000, 5)
    for row in out["per_t"]:
        for m, se in zip(row["mean"], row["mean_se"]):
            assert abs(m) < 4 * se
        for v, vse, g in zip(row["variance"], row["variance_se"], row["g"]):
            assert abs(v - g) < 4.5 * vse
    skew1 = np.median(np.abs(out["per_t"][0]["skewness"]))
    skew10 = np.median(np.abs(out["per_t"][1]["skewness"]))
    assert skew10 < skew1
    with pytest.raises(ValueError):
        gff.clt_rescaling(cycle(4), [10, 1], 10, 0)


def test_gff1_round_trip():
    f = gff.sample_gff(9, 123)
    buf = io.BytesIO()
    gff.dump_field(buf, f)
    buf.seek(0)
    g = gff.load_field(buf)
    assert g == f and g.side == 9 and g.seed == 123
    with pytest.raises(ValueError):
        gff.load_field(io.BytesIO(b"XXXX" + bytes(40)))
    text = gff.field_to_csv(f)
    assert text.splitlines()[0] == "x,y,value"
    assert len(text.splitlines()) == 82
