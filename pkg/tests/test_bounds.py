import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from hybridqrom import bounds
from hybridqrom.bounds import (
    E_SQUARED_UPPER,
    DomainExhausted,
    IndivisibleBudget,
    Params,
    Tag,
    ZeroMass,
    advice_bound,
    alpha_distribution,
    bound_report,
    bounded_depth_params,
    capital_a,
    dfm_loss,
    dpt_bound,
    hybrid_loss_corrected,
    hybrid_loss_exact,
    hybrid_loss_simplified,
    hybrid_search_floor,
    lifting_bound,
    multi_image_alg_success,
    noisy_loss_asymptotic,
    noisy_loss_exact,
    noisy_loss_parts,
    optimality_ratio,
    salted_bound,
)
from oracles import a_by_counting

F = Fraction


@pytest.mark.parametrize("k, q, c, expected", [(1, 2, 3, 7), (2, 2, 2, 18), (2, 3, 0, 9), (3, 0, 2, 0)])
def test_capital_a_examples(k, q, c, expected):
    assert capital_a(k, q, c).to_fraction() == expected


@given(st.integers(1, 4), st.integers(0, 6), st.integers(0, 6))
def test_capital_a_matches_counting(k, q, c):
    assert capital_a(k, q, c).to_fraction() == a_by_counting(k, q, c)


@given(st.integers(0, 1000), st.integers(0, 1000))
def test_capital_a_k1_is_q_squared_plus_c(q, c):
    if q + c:
        assert capital_a(1, q, c).to_fraction() == q * q + c


def test_alpha_examples():
    assert [a.to_fraction() for a in alpha_distribution(1, 2, 3)] == [F(3, 7), F(4, 7)]
    assert [a.to_fraction() for a in alpha_distribution(1, 0, 1)] == [1, 0]
    with pytest.raises(ZeroMass):
        alpha_distribution(3, 1, 1)


@given(st.integers(1, 8), st.integers(0, 10), st.integers(0, 10))
def test_alpha_is_a_distribution(k, q, c):
    if k > q + c:
        return
    alpha = [a.to_fraction() for a in alpha_distribution(k, q, c)]
    assert len(alpha) == k + 1
    assert all(a >= 0 for a in alpha)
    assert sum(alpha) == 1


@pytest.mark.parametrize("k, q, c, expected", [(1, 1, 1, 8), (1, 2, 3, 28), (2, 2, 2, 576)])
def test_hybrid_loss_examples(k, q, c, expected):
    assert hybrid_loss_exact(k, q, c).to_fraction() == expected


def test_corrected_loss_counts_appended_positions():
    # 4^k (k+1) A_{k,q,c+k}
    assert hybrid_loss_corrected(1, 1, 0).to_fraction() == 4 * 2 * capital_a(1, 1, 1).to_fraction()
    assert hybrid_loss_corrected(1, 2, 0).to_fraction() == 40


@given(st.integers(1, 3), st.integers(0, 8), st.integers(0, 8))
def test_hybrid_loss_monotone(k, q, c):
    if k > q + c:
        return
    base = hybrid_loss_exact(k, q, c)
    assert base >= 1
    assert hybrid_loss_exact(k, q + 1, c) >= base
    assert hybrid_loss_exact(k, q, c + 1) >= base


def test_simplified_factor_at_unit_budget():
    for q, c in [(0, 1), (1, 0)]:
        assert hybrid_loss_simplified(1, q, c).bare.to_fraction() == 8 * E_SQUARED_UPPER


def test_e_squared_constant_is_an_upper_bound():
    assert E_SQUARED_UPPER >= F(math.e) ** 2


@pytest.mark.parametrize("k, q, expected", [(1, 2, 25), (2, 1, 81), (1, 0, 1)])
def test_dfm_loss(k, q, expected):
    assert dfm_loss(k, q).to_fraction() == expected


def test_noisy_loss_examples():
    assert noisy_loss_exact(0, 2, 1).to_fraction() == 4
    num, den = noisy_loss_parts(F(1, 2), 5, 3)
    assert den.to_fraction() * math.comb(5, 3) == F(3 + 1, 2**3)
    for T, k in [(3, 1), (5, 2), (6, 3)]:
        assert noisy_loss_exact(1, T, k).to_fraction() == k * math.comb(T, k)
    assert noisy_loss_asymptotic(1, 5, 2).to_fraction() == 20
    assert noisy_loss_asymptotic(0, 2, 1).to_fraction() == 6


def test_noisy_loss_t2_k1_is_linear_in_p():
    for p in [F(0), F(1, 4), F(1, 2), F(3, 4), F(1)]:
        assert noisy_loss_exact(p, 2, 1).to_fraction() == 4 - 2 * p


def test_noisy_exact_within_k_times_asymptotic():
    for p in [F(0), F(1, 4), F(1, 2), F(3, 4), F(1)]:
        for T in range(1, 11):
            for k in range(1, T + 1):
                assert noisy_loss_exact(p, T, k) <= noisy_loss_asymptotic(p, T, k) * k


def test_noisy_exact_exceeds_plain_asymptotic_at_two_cells():
    # the plain post-condition exact <= asymptotic does not hold everywhere
    bad = [
        (p, T, k)
        for p in [F(0), F(1, 4), F(1, 2), F(3, 4), F(1)]
        for T in range(1, 11)
        for k in range(1, T + 1)
        if noisy_loss_exact(p, T, k) > noisy_loss_asymptotic(p, T, k)
    ]
    assert bad == [(F(3, 4), 2, 2), (F(3, 4), 3, 2)]


def test_noisy_loss_continuity_on_grid():
    grid = [F(i, 20) for i in range(21)]
    values = [noisy_loss_exact(p, 6, 2).to_fraction() for p in grid]
    for a, b in zip(values, values[1:]):
        assert max(a, b) / min(a, b) < 2


def test_noisy_corrected_loss():
    assert bounds.noisy_loss_corrected(0, 2, 1).to_fraction() == 4 * noisy_loss_exact(0, 3, 1).to_fraction()


def test_bounded_depth_params():
    assert bounded_depth_params(1, 5) == (1, 10)
    assert bounded_depth_params(10, 3) == (F(1, 10), 6)
    assert bounds.bounded_depth_loss(10, 3, 2) == noisy_loss_asymptotic(F(1, 10), 6, 2)


def test_lifting_family():
    assert lifting_bound(1, 1, 1, F(1, 8)).to_fraction() == 1
    assert lifting_bound(1, 2, 3, F(1, 100)).to_fraction() == F(28, 100)
    assert lifting_bound(1, 2, 3, 0).to_fraction() == 0
    assert dpt_bound(1, 1, 2, 3, F(1, 100)) == lifting_bound(1, 2, 3, F(1, 100))
    assert dpt_bound(2, 1, 2, 3, F(1, 100)).to_fraction() == F(28, 100) ** 2
    assert dpt_bound(3, 1, 2, 3, 0).to_fraction() == 0


def test_advice_and_salting():
    pR = F(1, 1000)
    assert advice_bound(1, 2, 3, 1, pR).to_fraction() == 4 * lifting_bound(1, 2, 3, pR).to_fraction()
    assert advice_bound(1, 2, 3, 2, 0).to_fraction() == 0
    assert salted_bound(1, 2, 3, 0, 7, pR) == lifting_bound(1, 2, 3, pR)
    assert salted_bound(1, 2, 3, 5, 5, pR).to_fraction() == 1
    assert salted_bound(1, 2, 3, 1, 1000, pR).to_fraction() == F(4, 1000) + F(28, 1000)


@given(st.integers(0, 4), st.integers(0, 4), st.integers(1, 3), st.fractions(0, 1, max_denominator=50))
def test_advice_bound_monotone(q, c, S, pR):
    if q + c < 1:
        return
    b = advice_bound(1, q, c, S, pR)
    assert advice_bound(1, q + 1, c, S, pR) >= b
    assert advice_bound(1, q, c + 1, S, pR) >= b
    assert advice_bound(1, q, c, S, min(1, pR + F(1, 100))) >= b


def test_multi_image_algorithm():
    assert multi_image_alg_success(1, 2, 3, 100).to_fraction() == F(7, 200)
    # the written expression (1/4)*2*(1/256)*(1+1)^2 is 1/128
    assert multi_image_alg_success(2, 2, 2, 16).to_fraction() == F(1, 128)
    with pytest.raises(IndivisibleBudget):
        multi_image_alg_success(2, 3, 2, 16)


def test_search_floor():
    assert hybrid_search_floor(0, 1, 2).to_fraction() == F(1, 4)
    assert hybrid_search_floor(1, 0, 4).to_fraction() == F(1, 8)
    with pytest.raises(DomainExhausted):
        hybrid_search_floor(1, 4, 4)


@given(st.integers(0, 5), st.integers(0, 5), st.integers(7, 40))
def test_search_floor_monotone(u, v, N):
    f = hybrid_search_floor(u, v, N)
    assert hybrid_search_floor(u + 1, v, N) >= f
    assert hybrid_search_floor(u, v + 1, N) >= f


def test_optimality_ratio_bounded():
    C = 128 * E_SQUARED_UPPER
    for k in (1, 2):
        for u in (1, 2):
            for v in (0, 1, 2):
                for N in (8, 16):
                    assert optimality_ratio(k, u, v, N).to_fraction() <= C**k


def test_report_tags_and_uniqueness():
    report = bound_report(Params(k=1, q=2, c=3, T=3, p=F(1, 2), bigN=100, S=2, bigK=64), pR=F(1, 100))
    names = [n for n, _, _ in report.entries]
    assert len(names) == len(set(names))
    assert all(isinstance(t, Tag) for _, _, t in report.entries)
    assert report.get("lifting_bound").to_fraction() == F(28, 100)
    with pytest.raises(ValueError):
        report.add("lifting_bound", report.get("lifting_bound"), Tag.IMAGE_LIFTING)


def test_bounds_are_pure():
    assert hybrid_loss_exact(3, 7, 5) == hybrid_loss_exact(3, 7, 5)
    assert noisy_loss_exact(F(1, 3), 9, 4).to_fraction() == noisy_loss_exact(F(1, 3), 9, 4).to_fraction()


def test_large_parameters_switch_to_log_domain():
    value = hybrid_loss_exact(200, 10**6, 10**6)
    assert value.to_float() > 0
    assert math.isfinite(value.log2_magnitude())
