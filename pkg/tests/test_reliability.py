import math
import random

import pytest

from authfusion.catalog import DEFAULT_CATALOG
from authfusion.errors import CapacityError, ConfigError, EvaluationError
from authfusion.fusion import Policy, Strategy
from authfusion.reliability import (
    EXACT_WEIGHTED_LIMIT,
    Population,
    SWEEP_CSV_HEADER,
    compose_all,
    compose_any,
    compose_kofn,
    compose_weighted,
    majority_k,
    monte_carlo_rates,
    pass_count_distribution,
    sweep,
    sweep_to_csv,
)

from oracles import enum_rates, kofn_grant, pass_count_pmf, weighted_grant

# the reference operating point: seven factors at FAR 0.03%, FRR 2%
SEVEN = [(0.0003, 0.02)] * 7


def random_pairs(rng, n, lo=0.0, hi=1.0):
    return [(rng.uniform(lo, hi), rng.uniform(lo, hi)) for _ in range(n)]


# -- closed-form anchors ------------------------------------------------------


def test_compose_all_seven_factor_anchor():
    rates = compose_all(SEVEN)
    assert math.isclose(rates.frr, 1.0 - 0.98**7, rel_tol=1e-12)
    assert rates.frr > 0.12
    assert math.isclose(rates.far, 0.0003**7, rel_tol=1e-12)


def test_compose_any_seven_factor_anchor():
    rates = compose_any(SEVEN)
    assert math.isclose(rates.far, 1.0 - (1.0 - 0.0003) ** 7, rel_tol=1e-12)
    assert math.isclose(rates.frr, 0.02**7, rel_tol=1e-12)


def test_single_factor_identity():
    for fn in (compose_all, compose_any):
        rates = fn([(0.0003, 0.02)])
        assert rates.far == 0.0003
        assert rates.frr == 0.02
    rates = compose_kofn([(0.0003, 0.02)], 1)
    assert (rates.far, rates.frr) == (0.0003, 0.02)


def test_kofn_majority_seven_factor_case():
    rates = compose_kofn(SEVEN, 4)
    oracle_far, oracle_frr = enum_rates(SEVEN, kofn_grant(4))
    assert math.isclose(rates.far, oracle_far, rel_tol=1e-9)
    assert math.isclose(rates.frr, oracle_frr, rel_tol=1e-9)
    # regime anchors for the majority strategy at n=7
    assert 0.0003 / rates.far >= 1e8
    assert 0.02 / rates.frr >= 1e3


def test_kofn_three_factor_example():
    pairs = [(0.0, 0.1), (0.0, 0.2), (0.0, 0.3)]
    rates = compose_kofn(pairs, 2)
    # P(fewer than 2 pass | legit): enumeration gives 0.098
    assert math.isclose(rates.frr, 0.098, rel_tol=1e-12)


def test_empty_factor_list_is_an_evaluation_error():
    for fn in (compose_all, compose_any):
        with pytest.raises(EvaluationError):
            fn([])
    with pytest.raises(EvaluationError):
        compose_kofn([], 1)


def test_rates_out_of_range_rejected():
    with pytest.raises(ConfigError):
        compose_all([(1.5, 0.0)])
    with pytest.raises(ConfigError):
        compose_kofn([(0.1, -0.2)], 1)


def test_kofn_k_out_of_range():
    pairs = random_pairs(random.Random(1), 4)
    for bad in (0, 5, -1):
        with pytest.raises(ConfigError):
            compose_kofn(pairs, bad)


# -- oracle agreement on random heterogeneous inputs --------------------------


def test_kofn_matches_enumeration_oracle():
    rng = random.Random(31337)
    for _ in range(60):
        n = rng.randint(1, 10)
        k = rng.randint(1, n)
        pairs = random_pairs(rng, n)
        rates = compose_kofn(pairs, k)
        oracle_far, oracle_frr = enum_rates(pairs, kofn_grant(k))
        assert math.isclose(rates.far, oracle_far, rel_tol=1e-9, abs_tol=1e-300)
        assert math.isclose(rates.frr, oracle_frr, rel_tol=1e-9, abs_tol=1e-300)


def test_boundary_k_equals_compose_all_and_any_exactly():
    rng = random.Random(777)
    for _ in range(100):
        n = rng.randint(1, 10)
        pairs = random_pairs(rng, n)
        top = compose_kofn(pairs, n)
        allr = compose_all(pairs)
        assert (top.far, top.frr) == (allr.far, allr.frr)
        bottom = compose_kofn(pairs, 1)
        anyr = compose_any(pairs)
        assert (bottom.far, bottom.frr) == (anyr.far, anyr.frr)


def test_any_all_duality_is_exact():
    rng = random.Random(888)
    for _ in range(200):
        pairs = random_pairs(rng, rng.randint(1, 9))
        swapped = [(frr, far) for far, frr in pairs]
        a = compose_any(pairs)
        b = compose_all(swapped)
        assert (a.far, a.frr) == (b.frr, b.far)


def test_kofn_monotone_in_k():
    rng = random.Random(999)
    for _ in range(40):
        n = rng.randint(2, 9)
        pairs = random_pairs(rng, n)
        results = [compose_kofn(pairs, k) for k in range(1, n + 1)]
        for lo, hi in zip(results, results[1:]):
            assert hi.far <= lo.far + 1e-15
            assert hi.frr >= lo.frr - 1e-15


def test_all_monotone_in_n_homogeneous():
    far, frr = 0.0003, 0.02
    prev = None
    for n in range(1, 8):
        rates = compose_all([(far, frr)] * n)
        if prev is not None:
            assert rates.far <= prev.far
            assert rates.frr >= prev.frr
        prev = rates


def test_pass_count_distribution_properties():
    rng = random.Random(4242)
    for _ in range(50):
        probs = [rng.random() for _ in range(rng.randint(1, 9))]
        dist = pass_count_distribution(probs, Population.LEGITIMATE)
        assert abs(math.fsum(dist.probs) - 1.0) <= 1e-12
        assert all(p >= 0.0 for p in dist.probs)
        oracle = pass_count_pmf(probs)
        for mine, ref in zip(dist.probs, oracle):
            assert math.isclose(mine, ref, rel_tol=1e-9, abs_tol=1e-15)
        k = rng.randint(0, len(probs))
        assert math.isclose(
            dist.at_least(k) + dist.below(k), 1.0, rel_tol=0, abs_tol=1e-12
        )


# -- weighted exact mode -------------------------------------------------------


def quints(pairs, weights):
    # mu and tau folded to 1; phi carries the whole weight
    return [(far, frr, 1.0, 1.0, w) for (far, frr), w in zip(pairs, weights)]


def test_weighted_matches_enumeration_oracle():
    rng = random.Random(555)
    for _ in range(40):
        n = rng.randint(1, 12)
        pairs = random_pairs(rng, n)
        weights = [rng.uniform(0.0, 2.0) for _ in range(n)]
        total = math.fsum(weights)
        threshold = rng.uniform(0.0, total if total > 0 else 1.0)
        rates = compose_weighted(quints(pairs, weights), threshold)
        oracle_far, oracle_frr = enum_rates(pairs, weighted_grant(weights, threshold))
        assert math.isclose(rates.far, oracle_far, rel_tol=1e-9, abs_tol=1e-300)
        assert math.isclose(rates.frr, oracle_frr, rel_tol=1e-9, abs_tol=1e-300)


def test_weighted_equals_kofn_at_half_offset_threshold():
    rng = random.Random(666)
    for _ in range(40):
        n = rng.randint(1, 12)
        k = rng.randint(1, n)
        pairs = random_pairs(rng, n)
        counting = compose_kofn(pairs, k)
        weighted = compose_weighted(quints(pairs, [1.0] * n), k - 0.5)
        assert math.isclose(weighted.far, counting.far, rel_tol=1e-9, abs_tol=1e-300)
        assert math.isclose(weighted.frr, counting.frr, rel_tol=1e-9, abs_tol=1e-300)


def test_weighted_degenerate_zero_policy():
    rates = compose_weighted([(0.2, 0.1, 1.0, 1.0, 0.0)] * 3, 0.0)
    assert rates.far == 0.0
    assert rates.frr == 1.0


def test_weighted_single_factor_identity():
    rates = compose_weighted([(0.0003, 0.02, 1.0, 1.0, 1.0)], 0.5)
    assert (rates.far, rates.frr) == (0.0003, 0.02)


def test_weighted_capacity_error_directs_to_monte_carlo():
    entries = [(0.1, 0.1, 1.0, 1.0, 1.0)] * (EXACT_WEIGHTED_LIMIT + 1)
    with pytest.raises(CapacityError) as err:
        compose_weighted(entries, 3.0)
    assert "monte-carlo" in str(err.value)
    # the escape hatch itself works
    est = compose_weighted(entries, 3.0, mode="monte-carlo", trials=20_000, seed=9)
    assert 0.0 <= est.far.value <= 1.0
    assert est.far.half_width > 0.0


def test_weighted_tie_mass_goes_to_deny():
    # two unit weights, threshold exactly 1: a single pass (score 1) denies
    pairs = [(0.5, 0.5), (0.5, 0.5)]
    rates = compose_weighted(quints(pairs, [1.0, 1.0]), 1.0)
    # grant only when both pass
    assert math.isclose(rates.far, 0.25, rel_tol=1e-12)
    assert math.isclose(rates.frr, 0.75, rel_tol=1e-12)


# -- underflow policy ----------------------------------------------------------


def test_underflow_reported_as_zero_with_flag():
    tiny = [(1e-30, 0.02)] * 11  # product 1e-330 underflows
    rates = compose_all(tiny)
    assert rates.far == 0.0
    assert rates.far_underflow
    assert not rates.frr_underflow


def test_exact_zero_is_not_flagged_as_underflow():
    rates = compose_all([(0.0, 0.02)] * 3)
    assert rates.far == 0.0
    assert not rates.far_underflow
    anyr = compose_any([(0.1, 0.0)] * 3)
    assert anyr.frr == 0.0
    assert not anyr.frr_underflow


# -- Monte Carlo ---------------------------------------------------------------


def test_monte_carlo_matches_closed_form_for_all_strategy():
    factors = list(DEFAULT_CATALOG[:7])
    closed = compose_all([(f.far, f.frr) for f in factors])
    est = monte_carlo_rates(factors, Policy(strategy=Strategy.all_checks()), 200_000, seed=12)
    sigma = math.sqrt(closed.frr * (1 - closed.frr) / 200_000)
    assert abs(est.frr.value - closed.frr) <= 3 * sigma


def test_monte_carlo_deterministic_and_worker_independent():
    factors = list(DEFAULT_CATALOG[:5])
    policy = Policy(strategy=Strategy.k_of_n(3))
    a = monte_carlo_rates(factors, policy, 150_000, seed=77)
    b = monte_carlo_rates(factors, policy, 150_000, seed=77)
    c = monte_carlo_rates(factors, policy, 150_000, seed=77, workers=4)
    assert a == b == c
    d = monte_carlo_rates(factors, policy, 150_000, seed=78)
    assert d != a


def test_monte_carlo_single_trial_degenerate():
    factors = [DEFAULT_CATALOG[0]]
    est = monte_carlo_rates(factors, Policy(strategy=Strategy.any_check()), 1, seed=0)
    assert est.far.value in (0.0, 1.0)
    assert est.frr.value in (0.0, 1.0)


def test_monte_carlo_zero_events_uses_rule_of_three_bound():
    factors = list(DEFAULT_CATALOG[:7])
    est = monte_carlo_rates(factors, Policy(strategy=Strategy.all_checks()), 10_000, seed=5)
    # far for 7 stacked checks is ~2e-25; no trial can produce an event
    assert est.far.events == 0
    assert est.far.value == 0.0
    assert math.isclose(est.far.half_width, math.log(100.0) / 10_000, rel_tol=1e-12)


def test_monte_carlo_half_width_shrinks_with_trials():
    factors = list(DEFAULT_CATALOG[:3])
    policy = Policy(strategy=Strategy.k_of_n(2))
    small = monte_carlo_rates(factors, policy, 2_000, seed=3)
    large = monte_carlo_rates(factors, policy, 200_000, seed=3)
    ratio = small.frr.half_width / large.frr.half_width
    assert 5.0 <= ratio <= 20.0  # 100x trials -> ~10x narrower


def test_monte_carlo_validates_trials():
    with pytest.raises(ConfigError):
        monte_carlo_rates(list(DEFAULT_CATALOG[:3]), Policy(strategy=Strategy.all_checks()), 0, seed=1)


# -- sweep ---------------------------------------------------------------------


def test_sweep_covers_grid_sorted():
    rows = sweep(0.0003, 0.02, range(1, 8), ("all", "any", "balanced"))
    assert len(rows) == 21
    assert [(r.n, r.strategy) for r in rows] == [
        (n, s) for n in range(1, 8) for s in ("all", "any", "balanced")
    ]
    by_key = {(r.n, r.strategy): r for r in rows}
    anchor = by_key[(7, "all")]
    assert math.isclose(anchor.frr, 1.0 - 0.98**7, rel_tol=1e-12)
    balanced = by_key[(7, "balanced")]
    assert balanced.k == 4
    oracle_far, _ = enum_rates(SEVEN, kofn_grant(4))
    assert math.isclose(balanced.far, oracle_far, rel_tol=1e-9)


def test_sweep_single_factor_rows_coincide():
    rows = sweep(0.0003, 0.02, range(1, 2), ("all", "any", "balanced"))
    rates = {(r.far, r.frr) for r in rows}
    assert rates == {(0.0003, 0.02)}


def test_sweep_log_columns():
    rows = sweep(0.0003, 0.02, range(7, 8), ("all",))
    (row,) = rows
    assert math.isclose(row.log10_far, 7 * math.log10(0.0003), rel_tol=1e-12)
    assert math.isclose(row.log10_far, math.log10(row.far), rel_tol=1e-9)
    zero = sweep(0.0, 0.02, range(2, 3), ("all",))[0]
    assert zero.far == 0.0
    assert zero.log10_far == -math.inf


def test_sweep_log_column_survives_underflow():
    # far^n underflows in linear space but the log column stays finite
    rows = sweep(1e-30, 0.02, range(11, 12), ("all",))
    (row,) = rows
    assert row.far == 0.0
    assert math.isclose(row.log10_far, -330.0, rel_tol=1e-12)


def test_sweep_csv_rendering():
    rows = sweep(0.0003, 0.02, range(1, 8), ("all", "any", "balanced"))
    text = sweep_to_csv(rows)
    lines = text.splitlines()
    assert lines[0] == SWEEP_CSV_HEADER
    assert len(lines) == 22
    assert text.endswith("\n")
    # 17 significant digits round-trip exactly
    for line, row in zip(lines[1:], rows):
        fields = line.split(",")
        assert int(fields[0]) == row.n
        assert fields[1] == row.strategy
        assert int(fields[2]) == row.k
        assert float(fields[3]) == row.far
        assert float(fields[4]) == row.frr


def test_majority_rule():
    assert [majority_k(n) for n in range(1, 8)] == [1, 2, 2, 3, 3, 4, 4]


def test_sweep_rejects_unknown_strategy():
    with pytest.raises(ConfigError):
        sweep(0.0003, 0.02, range(1, 3), ("all", "most"))
