import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from chimera_market import coherence as co
from chimera_market import market_data as md
from chimera_market import oscillator_sim as sim
from chimera_market.errors import DataError


def summary_with(sigma, window_index=0):
    sigma = np.asarray(sigma, dtype=float)
    return sim.SimulationSummary(np.zeros_like(sigma), sigma, np.zeros_like(sigma), window_index)


def identity_ranking(n):
    # strengths strictly decreasing with index
    return co.rank_strengths(np.arange(n, 0, -1, dtype=float))


def reconstruct_prefix(sigma, order, eps):
    prefix = []
    for i in order:
        if sigma[i] >= eps:
            break
        prefix.append(int(i))
    return prefix


# --- strengths -------------------------------------------------------------


def test_uniform_strengths_tie_break_by_index():
    r = co.coupling_strengths(md.CouplingMatrix(np.full((3, 3), 2.0)))
    np.testing.assert_array_equal(r.strengths, 6.0)
    assert list(r.order) == [0, 1, 2]


def test_dominant_row_comes_first():
    C = np.full((4, 4), 1.0)
    C[2, :] = C[:, 2] = 1.9
    assert co.coupling_strengths(C).order[0] == 2


def test_strengths_match_brute_force_row_sums(rng):
    C = rng.uniform(0, 2, (7, 7))
    C = (C + C.T) / 2
    r = co.coupling_strengths(C)
    for i in range(7):
        total = 0.0
        for j in range(7):
            total += C[i][j]
        assert r.strengths[i] == pytest.approx(total, abs=1e-12)
    assert all(r.strengths[a] >= r.strengths[b] for a, b in zip(r.order, r.order[1:]))
    assert sorted(r.order) == list(range(7))


@settings(max_examples=100, deadline=None)
@given(
    hnp.arrays(np.float64, (6, 6), elements=st.floats(0, 2)),
    st.floats(0.01, 100),
)
def test_scaling_keeps_order(C, scale):
    C = (C + C.T) / 2
    base = co.coupling_strengths(C)
    scaled = co.coupling_strengths(C * scale)
    np.testing.assert_allclose(scaled.strengths, base.strengths * scale, rtol=1e-12, atol=1e-12)
    gaps = np.diff(np.sort(base.strengths))
    if gaps.size == 0 or gaps.min() > 1e-9 * max(1.0, base.strengths.max()):
        np.testing.assert_array_equal(scaled.order, base.order)


# --- detection -------------------------------------------------------------


def test_scan_examples():
    rank = identity_ranking(3)
    assert co.detect_coherent_set(summary_with([1e-5, 1e-5, 0.5]), rank, 1e-3).coherent == (0, 1)
    part = co.detect_coherent_set(summary_with([1e-5, 0.2, 1e-5]), rank, 1e-3)
    assert part.coherent == (0,)
    assert part.incoherent == (1, 2)
    assert co.detect_coherent_set(summary_with([0.2, 1e-5, 1e-5]), rank, 1e-3).coherent == ()


def test_scan_follows_strength_order_not_index():
    rank = co.rank_strengths([1.0, 3.0, 2.0])
    part = co.detect_coherent_set(summary_with([0.0, 0.0, 0.5]), rank, 0.1)
    assert part.coherent == (1,)
    assert part.incoherent == (2, 0)


def test_threshold_is_strict():
    part = co.detect_coherent_set(summary_with([0.1, 0.0]), identity_ranking(2), 0.1)
    assert part.coherent == ()


def test_detect_validates_inputs():
    with pytest.raises(DataError):
        co.detect_coherent_set(summary_with([0.0]), identity_ranking(1), 0.0)
    with pytest.raises(DataError):
        co.detect_coherent_set(summary_with([0.0, 0.0]), identity_ranking(3), 0.1)


@settings(max_examples=200, deadline=None)
@given(
    st.integers(1, 30).flatmap(
        lambda n: st.tuples(
            hnp.arrays(np.float64, n, elements=st.floats(0, 1)),
            hnp.arrays(np.float64, n, elements=st.floats(0, 100)),
        )
    ),
    st.floats(1e-4, 1),
)
def test_coherent_set_is_maximal_prefix(data, eps):
    sigma, strengths = data
    ranking = co.rank_strengths(strengths)
    part = co.detect_coherent_set(summary_with(sigma), ranking, eps)
    assert list(part.coherent) == reconstruct_prefix(sigma, ranking.order, eps)
    assert set(part.coherent).isdisjoint(part.incoherent)
    assert set(part.coherent) | set(part.incoherent) == set(range(len(sigma)))
    assert list(part.coherent) == list(ranking.order[: part.size])


@settings(max_examples=100, deadline=None)
@given(
    hnp.arrays(np.float64, 12, elements=st.floats(0, 1)),
    st.floats(1e-4, 1),
    st.floats(1e-4, 1),
)
def test_monotone_in_epsilon(sigma, e1, e2):
    lo, hi = sorted((e1, e2))
    ranking = identity_ranking(12)
    small = co.detect_coherent_set(summary_with(sigma), ranking, lo)
    large = co.detect_coherent_set(summary_with(sigma), ranking, hi)
    assert set(small.coherent) <= set(large.coherent)


# --- time structures -------------------------------------------------------


def partition(coherent, n, w=0, eps=0.1):
    rest = tuple(i for i in range(n) if i not in coherent)
    return co.CoherencePartition(w, tuple(coherent), rest, eps)


def test_size_series_extremes():
    assert list(co.coherent_size_series([partition((), 4, w) for w in range(3)])) == [0, 0, 0]
    assert list(co.coherent_size_series([partition(range(4), 4, w) for w in range(3)])) == [4, 4, 4]


def test_characteristic_matrix_examples():
    parts = [partition((0, 2), 3, 0), partition((0,), 3, 1), partition((0, 2), 3, 2)]
    m = co.characteristic_matrix(parts, 3)
    assert m.chi.shape == (3, 3)
    assert list(m.counts) == [3, 0, 2]


def test_characteristic_counts_match_brute_force(rng):
    n, parts = 9, []
    for w in range(40):
        members = tuple(int(i) for i in rng.permutation(n)[: rng.integers(0, n + 1)])
        parts.append(partition(members, n, w))
    m = co.characteristic_matrix(parts, n)
    for i in range(n):
        assert m.counts[i] == sum(1 for p in parts if i in p.coherent)
    assert np.all((0 <= m.counts) & (m.counts <= len(parts)))


def test_characteristic_matrix_rejects_inconsistent_size():
    with pytest.raises(DataError, match="window 1"):
        co.characteristic_matrix([partition((0,), 3, 0), partition((0,), 4, 1)], 3)


def test_artifact_round_trip(tmp_path):
    tickers = ["AAA", "BBB", "CCC"]
    parts = [partition((2, 0), 3, 0), partition((), 3, 1)]
    co.write_partitions(parts, tickers, tmp_path / "p.jsonl")
    assert (tmp_path / "p.jsonl").read_text().splitlines()[0] == (
        '{"window_index": 0, "epsilon": 0.1, "size": 2, "coherent": ["CCC", "AAA"]}'
    )
    back = co.read_partitions(tmp_path / "p.jsonl", tickers)
    assert [p.coherent for p in back] == [(2, 0), ()]
    co.write_chi(co.characteristic_matrix(parts, 3), tickers, tmp_path / "chi.csv")
    names, chi = co.read_chi(tmp_path / "chi.csv")
    assert names == tickers and list(chi.counts) == [1, 0, 1]
    co.write_coherent_sizes(parts, ["2004-01-02", "2004-01-05"], tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines() == [
        "window_index,start_date,size", "0,2004-01-02,2", "1,2004-01-05,0"
    ]


def window_partitions(panel, spec, eps=co.DEFAULT_EPSILON):
    returns = md.log_returns(panel)
    couplings = [
        md.coupling_matrix(md.correlation_matrix(returns, w, i))
        for i, w in enumerate(md.sliding_windows(returns, spec))
    ]
    summaries = sim.simulate_batch(couplings, sim.SimParams(seed=1))
    return [co.detect_coherent_set(s, co.coupling_strengths(c), eps) for s, c in zip(summaries, couplings)]


def test_size_series_steps_up_with_factor_loading():
    # every stock shares the factor; its loading jumps from 0.3 to 0.9 on day 199
    days, n = 400, 24
    loading = np.where(np.arange(days - 1) < 199, 0.3, 0.9)
    panel = md.factor_market([md.FactorGroup("S", n, loading)], days, seed=4)
    sizes = co.coherent_size_series(window_partitions(panel, md.WindowSpec(62, 8)))
    starts = np.arange(len(sizes)) * 8
    before = sizes[starts + 62 <= 199]
    after = sizes[starts >= 199]
    assert after.mean() > before.mean() + 4
    assert after.min() > np.median(before)
    assert np.median(after) >= 0.85 * n
