import time

import numpy as np
import pytest
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform

from interval_ucm.dataio import (
    IntervalPanel,
    Location,
    annual_descriptives,
    cluster_complete_linkage,
    correlation_matrix,
    from_centre_logrange,
    interpolate_gaps,
    load_panel,
    synthetic_panel,
    to_centre_logrange,
    write_panel,
)
from interval_ucm.exceptions import DegenerateInputError, FormatError, ValidationError
from interval_ucm.statespace import simulate
from interval_ucm.structural import FsBsmParams, build_fsbsm

HEADER = "location_id,location_name,lat,lon,date,tmin_c,tmax_c\n"


def _csv(tmp_path, body, name="panel.csv"):
    path = tmp_path / name
    path.write_text(HEADER + body, encoding="utf-8")
    return path


def _rows(n_months=24, locs=(("A", "Alpha"), ("B", "Beta"))):
    lines = []
    for k, (lid, name) in enumerate(locs):
        for t in range(n_months):
            y, m = 2000 + t // 12, t % 12 + 1
            lo = 5 + k + np.sin(t)
            lines.append(f"{lid},{name},40.{k},-3.{k},{y}-{m:02d},{lo:.3f},{lo + 10:.3f}")
    return "\n".join(lines) + "\n"


def test_round_trip_small_panel(tmp_path):
    panel = load_panel(_csv(tmp_path, _rows()))
    assert panel.n_locations == 2 and panel.n_obs == 24
    assert panel.locations[1] == Location("B", "Beta", 40.1, -3.1)
    assert str(panel.dates[0]) == "2000-01" and str(panel.dates[-1]) == "2001-12"
    write_panel(tmp_path / "again.csv", panel)
    again = load_panel(tmp_path / "again.csv")
    np.testing.assert_allclose(again.tmin, panel.tmin)


def test_equal_min_max_rejected_with_diagnostic(tmp_path):
    body = _rows() + "C,Gamma,41.0,-2.0,2000-01,15,15\n"
    with pytest.raises(ValidationError, match="C@2000-01"):
        load_panel(_csv(tmp_path, body))


@pytest.mark.parametrize("bad,line", [
    ("A,Alpha,40.0,-3.0,2000-13,1,2\n", 2),
    ("A,Alpha,40.0,-3.0,2000-01,x,2\n", 2),
    ("A,Alpha,40.0,-3.0,2000-01,1\n", 2),
])
def test_format_errors_carry_line_numbers(tmp_path, bad, line):
    with pytest.raises(FormatError) as exc:
        load_panel(_csv(tmp_path, bad))
    assert exc.value.line == line


def test_duplicate_and_header_errors(tmp_path):
    row = "A,Alpha,40.0,-3.0,2000-01,1,2\n"
    with pytest.raises(FormatError) as exc:
        load_panel(_csv(tmp_path, row + row))
    assert exc.value.line == 3
    bad = tmp_path / "h.csv"
    bad.write_text("id,date\n")
    with pytest.raises(FormatError):
        load_panel(bad)
    empty = tmp_path / "e.csv"
    empty.write_text("")
    with pytest.raises(FormatError):
        load_panel(empty)


def test_missing_rows_and_interpolation(tmp_path):
    lines = _rows().splitlines(keepends=True)
    del lines[5:7]                      # two-month gap for A
    lines[10] = lines[10].rsplit(",", 2)[0] + ",,\n"
    path = _csv(tmp_path, "".join(lines))
    raw = load_panel(path)
    assert np.isnan(raw.tmin[5:7, 0]).all()
    filled = load_panel(path, interpolate=True)
    assert not np.isnan(filled.tmin).any()
    np.testing.assert_allclose(filled.tmin[5:7, 0],
                               np.interp([5, 6], [4, 7], raw.tmin[[4, 7], 0]))


def test_long_gaps_are_left_missing():
    x = np.array([1.0, np.nan, np.nan, np.nan, 5.0, np.nan])
    out = interpolate_gaps(x, 2)
    assert np.isnan(out[1:4]).all() and np.isnan(out[5])


def test_full_scale_file_loads_quickly(tmp_path):
    panel, _ = synthetic_panel(seed=1)
    path = tmp_path / "big.csv"
    write_panel(path, panel)
    t0 = time.perf_counter()
    loaded = load_panel(path)
    assert time.perf_counter() - t0 < 1.0
    assert (loaded.n_obs, loaded.n_locations) == (1092, 68)
    assert str(loaded.dates[0]) == "1930-01" and str(loaded.dates[-1]) == "2020-12"


def _panel(tmin, tmax):
    tmin = np.atleast_2d(tmin).astype(float)
    locs = tuple(Location(str(i), str(i), 0.0, 0.0) for i in range(tmin.shape[1]))
    return IntervalPanel(locs, np.arange(tmin.shape[0]).astype("datetime64[M]"),
                         tmin, np.atleast_2d(tmax))


def test_centre_logrange_examples():
    C, R = to_centre_logrange(_panel([[10.0, -1.0]], [[20.0, 1.0]]))
    np.testing.assert_allclose(C.values, [[15.0, 0.0]])
    np.testing.assert_allclose(R.values, [[np.log(10), np.log(2)]])


def test_centre_logrange_round_trip():
    rng = np.random.default_rng(0)
    tmin = rng.uniform(-20, 25, (200, 5))
    tmax = tmin + rng.uniform(0.01, 20, (200, 5))
    C, R = to_centre_logrange(_panel(tmin, tmax))
    lo, hi = from_centre_logrange(C, R)
    assert np.max(np.abs(lo - tmin)) < 1e-12
    assert np.max(np.abs(hi - tmax)) < 1e-12


def test_annual_descriptives_degenerate_cases():
    t = np.arange(120)
    with pytest.raises(DegenerateInputError):
        annual_descriptives(3 * np.cos(np.pi * t / 6))
    with pytest.raises(DegenerateInputError):
        annual_descriptives(0.05 * t)
    with pytest.raises(ValidationError):
        annual_descriptives(np.arange(20.0))


def test_annual_descriptives_on_trending_series():
    params = FsBsmParams(1.0, 1e-3, 0.0, 1e-4, 1e-5)
    a1 = np.zeros(13)
    a1[0], a1[1] = 15.0, 0.02
    panel, _ = simulate(build_fsbsm(params).replace(a1=a1), 600, seed=3)
    row = annual_descriptives(panel).to_row()
    # mean of annual differences is 12 x slope plus noise
    assert 0 < row["Mean"] < 0.6
    assert {"Q(12)", "Q(12) p", "BN"} <= set(row)


def test_correlation_matrix_basics():
    rng = np.random.default_rng(4)
    x = rng.normal(size=100)
    C = correlation_matrix(np.column_stack([x, -x, rng.normal(size=100)]))
    assert C[0, 1] == pytest.approx(-1.0)
    np.testing.assert_array_equal(np.diag(C), 1.0)
    np.testing.assert_array_equal(C, C.T)
    assert np.linalg.eigvalsh(C).min() >= -1e-10
    with pytest.raises(ValidationError):
        correlation_matrix(np.column_stack([x, np.ones(100)]))


def test_correlation_matrix_pairwise_complete():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(80, 3))
    X[3, 0] = np.nan
    C = correlation_matrix(X)
    m = ~np.isnan(X[:, 0])
    assert C[0, 1] == pytest.approx(np.corrcoef(X[m, 0], X[m, 1])[0, 1])
    assert C[1, 2] == pytest.approx(np.corrcoef(X[:, 1], X[:, 2])[0, 1])


def test_independent_centre_and_logrange_uncorrelated():
    rng = np.random.default_rng(6)
    small = [abs(correlation_matrix(rng.normal(size=1092), rng.normal(size=1092))[0, 1]) < 0.1
             for _ in range(500)]
    assert np.mean(small) > 0.95


def test_block_correlation_recovered():
    C = np.zeros((9, 9))
    for b in range(3):
        C[3 * b:3 * b + 3, 3 * b:3 * b + 3] = 0.9
    np.fill_diagonal(C, 1.0)
    perm = np.random.default_rng(7).permutation(9)
    a = cluster_complete_linkage(C[np.ix_(perm, perm)], 3)
    truth = perm // 3
    for lab in range(1, 4):
        assert len(set(truth[a.labels == lab])) == 1
    assert sorted(np.bincount(a.labels)[1:]) == [3, 3, 3]


def test_trivial_cuts():
    C = np.corrcoef(np.random.default_rng(8).normal(size=(30, 6)), rowvar=False)
    np.testing.assert_array_equal(cluster_complete_linkage(C, 6).labels, np.arange(1, 7))
    np.testing.assert_array_equal(cluster_complete_linkage(C, 1).labels, 1)
    with pytest.raises(ValidationError):
        cluster_complete_linkage(C, 0)


def _partition(labels):
    return {frozenset(np.flatnonzero(labels == l)) for l in np.unique(labels)}


def test_matches_scipy_and_is_permutation_invariant():
    rng = np.random.default_rng(9)
    for _ in range(20):
        X = rng.normal(size=(40, 12)) + rng.normal(size=(40, 1))
        C = np.corrcoef(X, rowvar=False)
        ours = cluster_complete_linkage(C, 4)
        assert np.all(np.diff(ours.heights) >= 0)
        D = 1 - C
        np.fill_diagonal(D, 0)
        Z = linkage(squareform(D, checks=False), method="complete")
        np.testing.assert_allclose(ours.heights, Z[:, 2], atol=1e-12)
        assert _partition(ours.labels) == _partition(fcluster(Z, 4, criterion="maxclust"))
        perm = rng.permutation(12)
        back = cluster_complete_linkage(C[np.ix_(perm, perm)], 4)
        relabelled = np.empty(12, dtype=int)
        relabelled[perm] = back.labels
        assert _partition(relabelled) == _partition(ours.labels)


def test_tie_break_prefers_lowest_pair():
    C = np.eye(4)
    C[0, 1] = C[1, 0] = C[2, 3] = C[3, 2] = 0.5
    a = cluster_complete_linkage(C, 3)
    assert a.merges[0][:2] == (0, 1)
    np.testing.assert_array_equal(a.labels, [1, 1, 2, 3])
