import math
from fractions import Fraction

import numpy as np
import pytest

from sparselab.construction import (
    ConstructionConfig,
    GridFunction,
    all_max_shift,
    apply_gq,
    approximation_budget,
    build_config,
    build_gq_layers,
    column_ids,
    contextual_map,
    dp_distance,
    end_to_end,
    enumerate_h,
    eval_relu_combination,
    phi_prime_relu_approx,
    phi_quantize,
    phi_relu_approx,
    piecewise_constant_approx,
    positional_embedding,
    positional_embedding_units,
    quantize_oracle,
    selective_shift,
    to_units,
    u_vector,
    units_to_float,
    value_map_apply,
    value_map_build,
    verify_contextual_map,
    verify_soft_contextual_map,
)
from sparselab.errors import (
    ConfigError,
    IntegrityError,
    ParameterError,
    ShapeError,
)
from sparselab.numerics import eval_pwl
from sparselab.patterns import SparsityPattern, dense, star, strided

CHAIN = SparsityPattern(2, (((0,), (0, 1)),))  # position 0 never reaches 1


def cfg_strided_21():
    return build_config(strided(2, 1), d=1, delta_inv=2)


def test_u_vector_values():
    assert u_vector(3, 2) == (1, 2, 4)
    assert u_vector(1, 7) == (1,)
    assert u_vector(2, 4) == (1, 4)
    with pytest.raises(ParameterError):
        u_vector(0, 2)


def test_positional_embedding_identity_order():
    e = positional_embedding(3, 2, (0, 1, 2))
    assert np.array_equal(e, [[2.0, 0.0, 1.0], [2.0, 0.0, 1.0]])
    e2 = positional_embedding(2, 1, (0, 1))
    assert np.array_equal(e2, [[1.0, 0.0]])


def test_positional_embedding_reversal_order():
    e = positional_embedding(3, 1, (2, 1, 0))
    assert np.array_equal(e, [[1.0, 0.0, 2.0]])


def test_positional_embedding_rejects_non_permutation():
    with pytest.raises(ParameterError):
        positional_embedding(3, 1, (0, 0, 2))


def test_embedding_units_match_real_embedding():
    for gamma in ((0, 1, 2), (2, 0, 1)):
        real = positional_embedding(3, 2, gamma)
        units = positional_embedding_units(3, 2, gamma, 4)
        assert np.array_equal(units_to_float(units, 4), real)


def test_build_config_strided_2_1():
    cfg = cfg_strided_21()
    assert cfg.n == 2 and cfg.d == 1 and cfg.delta_inv == 2
    assert cfg.gamma == (0, 1)
    assert cfg.s == 2
    assert cfg.step_families == (0,)
    assert cfg.delta_units == 2
    assert cfg.omega_mult == 2 * 2 * 2 * 2 ** 3
    assert cfg.num_cells == 4
    assert cfg.gq_depth == 4
    assert cfg.gc_depth == 2 * 1 * 2 + 2
    assert cfg.gv_depth == 8


def test_build_config_rejects_unreachable_pattern():
    with pytest.raises(ConfigError):
        build_config(CHAIN, d=1, delta_inv=2)
    with pytest.raises(ConfigError):
        build_config(CHAIN, d=1, delta_inv=2, gamma=(0, 1))


def test_build_config_rejects_bad_gamma():
    with pytest.raises(ConfigError):
        build_config(strided(2, 1), d=1, delta_inv=2, gamma=(1, 1))
    # gamma (1, 0) needs position 1 attendable from 0: strided A1_0={0}
    # and A2_0={0,1} contains it, so this one is accepted.
    cfg = build_config(strided(2, 1), d=1, delta_inv=2, gamma=(1, 0))
    assert cfg.gamma == (1, 0)


def test_build_config_rejects_invalid_dims():
    with pytest.raises(ConfigError):
        build_config(strided(2, 1), d=0, delta_inv=2)
    with pytest.raises(ConfigError):
        build_config(strided(2, 1), d=1, delta_inv=1)


def test_build_config_overflow_guard():
    with pytest.raises(ConfigError):
        build_config(dense(4), d=4, delta_inv=16)


def test_phi_quantize_values():
    phi = phi_quantize(0.25)
    assert eval_pwl(phi, 0.1) == -0.1
    assert eval_pwl(phi, -0.5) == 0.0
    assert eval_pwl(phi, 0.25) == 0.0
    assert eval_pwl(phi, 0.3) == 0.0


def test_quantize_oracle_cases():
    assert quantize_oracle(0.3, 4, 2) == Fraction(1, 4)
    assert quantize_oracle(0.25, 4, 2) == Fraction(1, 4)
    assert quantize_oracle(-0.1, 4, 2) == Fraction(-0.1)
    assert quantize_oracle(1.99, 4, 2) == Fraction(7, 4)
    assert quantize_oracle(2.0, 4, 2) == 2
    assert quantize_oracle(Fraction(5, 3), 4, 2) == Fraction(6, 4)


def test_gq_layer_stack_matches_oracle():
    cfg = build_config(strided(2, 1), d=2, delta_inv=4)
    layers = build_gq_layers(cfg)
    assert len(layers) == cfg.gq_depth == 2 * 2 * 4
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = rng.uniform(-0.5, cfg.n + 0.5, size=(cfg.d, cfg.n))
        got = apply_gq(x, cfg)
        for i in range(cfg.d):
            for k in range(cfg.n):
                want = quantize_oracle(Fraction(x[i, k]), cfg.delta_inv, cfg.n)
                assert Fraction(got[i, k]) == want


def test_gq_fixes_grid_points():
    cfg = cfg_strided_21()
    x = np.array([[0.5, 1.5]])
    assert np.array_equal(apply_gq(x, cfg), x)


def test_to_units_round_trip_and_lattice_check():
    units = to_units([[0.5, 1.0], [1.5, 0.0]], 2)
    assert units == [[1, 2], [3, 0]]
    assert np.array_equal(units_to_float(units, 2), [[0.5, 1.0], [1.5, 0.0]])
    with pytest.raises(IntegrityError):
        to_units([[0.3]], 2)


def test_column_ids_weighting():
    # id_k = row0 + delta_inv * row1 in delta-units
    ids = column_ids([[1, 2], [3, 4]], u_vector(2, 2))
    assert ids == [1 + 2 * 3, 2 + 2 * 4]


def test_selective_shift_hand_example():
    # Real values [[0, 2, 1]] at delta=1/2 are units [[0, 4, 2]]; only the
    # third column (value 1) lies inside the window (0.5, 1.5), and its
    # attend set {1, 2} has max - min = 2 - 1 = 1, so with c=1 it becomes 2.
    pat = SparsityPattern(3, (((0,), (1,), (1, 2)),))
    new, fired = selective_shift([[0, 4, 2]], pat, 0, 1, 0.5, 1.5, 2)
    assert new == [[0, 4, 4]]
    assert fired == [2]


def test_selective_shift_empty_window_is_identity():
    pat = SparsityPattern(3, (((0,), (1,), (1, 2)),))
    new, fired = selective_shift([[0, 4, 2]], pat, 0, 1, 10.0, 11.0, 2)
    assert new == [[0, 4, 2]]
    assert fired == []


def test_selective_shift_self_only_set_shifts_zero():
    pat = SparsityPattern(3, (((0,), (1,), (2,)),))
    new, fired = selective_shift([[0, 4, 2]], pat, 0, 1, 0.5, 1.5, 2)
    assert new == [[0, 4, 2]]
    assert fired == [2]


def test_selective_shift_rejects_boundary_id():
    pat = SparsityPattern(1, (((0,),),))
    with pytest.raises(IntegrityError):
        selective_shift([[1]], pat, 0, 1, 0.5, 1.5, 2)


def test_selective_shift_rejects_non_integer_c():
    pat = SparsityPattern(1, (((0,),),))
    with pytest.raises(ParameterError):
        selective_shift([[1]], pat, 0, 1.5, 0.6, 1.5, 2)


def test_selective_shift_leaves_other_rows_alone():
    pat = SparsityPattern(2, (((0, 1), (0, 1)),))
    new, fired = selective_shift([[2, 1], [4, 6]], pat, 0, 3, 0.2, 0.9, 2)
    # Column 1 id = 1 + 2*6 = 13 units = 6.5; column 0 id = 2 + 8 = 10 = 5.
    assert fired == []
    new2, fired2 = selective_shift([[2, 1], [4, 6]], pat, 0, 3, 4.9, 5.1, 2)
    assert fired2 == [0]
    assert new2[1] == [4, 6]
    assert new2[0] == [2 + 3 * (13 - 10), 1]


def test_all_max_shift_hand_example():
    # Real [[1, 2, 3]] at delta=1/2; A_k = {k, k+1} clipped; c=1 adds the
    # max over the set: [[1+2, 2+3, 3+3]] = [[3, 5, 6]] real.
    pat = SparsityPattern(3, (((0, 1), (1, 2), (2,)),))
    new = all_max_shift([[2, 4, 6]], pat, 0, 1, 2)
    assert new == [[6, 10, 12]]
    assert np.array_equal(units_to_float(new, 2), [[3.0, 5.0, 6.0]])


def test_all_max_shift_zero_c_is_identity():
    pat = SparsityPattern(3, (((0, 1), (1, 2), (2,)),))
    assert all_max_shift([[2, 4, 6]], pat, 0, 0, 2) == [[2, 4, 6]]


def test_all_max_shift_self_only_doubles():
    pat = SparsityPattern(3, (((0,), (1,), (2,)),))
    assert all_max_shift([[2, 4, 6]], pat, 0, 1, 2) == [[4, 8, 12]]


def test_all_max_shift_rejects_nonpositive_values():
    pat = SparsityPattern(2, (((0, 1), (0, 1)),))
    with pytest.raises(ParameterError):
        all_max_shift([[0, 4]], pat, 0, 1, 2)


def test_enumerate_h_mixed_radix_order():
    cfg = cfg_strided_21()
    got = [(idx, units) for idx, units in enumerate_h(cfg)]
    assert got == [
        (0, [[2, 0]]),
        (1, [[3, 0]]),
        (2, [[2, 1]]),
        (3, [[3, 1]]),
    ]


def test_contextual_map_frozen_oracle():
    # Hand-computed pipeline for n=2, d=1, delta=1/2 over strided(2, 1):
    # stage 1 shifts column 1 by 2*(max-min of {col0, col1}); two all-max
    # layers with multiplier 64 follow (families A1 then A2).
    cfg = cfg_strided_21()
    expected = {
        (2, 0): ((2, 4), (16770, 16900), (0,)),
        (2, 1): ((2, 3), (12610, 12675), (1,)),
        (3, 0): ((3, 6), (25155, 25350), (0,)),
        (3, 1): ((3, 5), (20995, 21125), (1,)),
    }
    for _, units in enumerate_h(cfg):
        res = contextual_map(units, cfg)
        shifted, final, fired_b = expected[tuple(units[0])]
        assert res.shifted_ids == shifted
        assert res.output_ids == final
        assert res.fired_b == fired_b
        assert res.num_attention_layers == cfg.gc_depth == 6
        # mod identity: the all-max layers preserve ids modulo omega
        for out_id, shifted_id in zip(res.output_ids, res.shifted_ids):
            assert out_id % cfg.omega_mult == shifted_id


def test_contextual_map_ordering_along_gamma():
    for cfg in (cfg_strided_21(),
                build_config(strided(3, 1), d=1, delta_inv=2),
                build_config(dense(2), d=2, delta_inv=2)):
        for _, units in enumerate_h(cfg):
            res = contextual_map(units, cfg)
            along = [res.shifted_ids[cfg.gamma[i]] for i in range(cfg.n)]
            assert all(a < b for a, b in zip(along, along[1:]))


def test_contextual_map_rejects_off_grid_input():
    cfg = cfg_strided_21()
    with pytest.raises(ConfigError):
        contextual_map([[0, 0]], cfg)  # column 0 missing its embedding


def test_shifted_id_bound_where_derivation_holds():
    # The per-sequence cap on shifted ids, in delta-units: the tight form
    # delta_inv^(nd+1) - 1 holds at these two shapes; every shape must
    # stay inside the pipeline cap n * delta_inv^(nd+1) (checked in
    # contextual_map itself, re-checked here).
    tight = {
        (2, 1, 2): True,
        (3, 1, 3): True,
        (3, 1, 2): False,
        (2, 2, 2): False,
    }
    observed_max = {}
    for (n, d, dinv), expect_tight in tight.items():
        cfg = build_config(strided(n, 1), d=d, delta_inv=dinv)
        worst = 0
        for _, units in enumerate_h(cfg):
            res = contextual_map(units, cfg)
            worst = max(worst, max(res.shifted_ids))
        observed_max[(n, d, dinv)] = worst
        cap_tight = dinv ** (n * d + 1) - 1
        cap_loose = n * dinv ** (n * d + 1)
        assert worst < cap_loose
        assert (worst <= cap_tight) == expect_tight
    # the two loose shapes overshoot by a measurable margin
    assert observed_max[(3, 1, 2)] == 18  # 9.0 real vs tight 7.5
    assert observed_max[(2, 2, 2)] == 36  # 18.0 real vs tight 15.5


def test_verify_contextual_map_strided_2_1():
    rep = verify_contextual_map(cfg_strided_21())
    assert rep.passed
    assert rep.num_sequences == 4
    assert rep.num_ids == 8
    assert rep.within_sequence_distinct and rep.distinct
    assert rep.min_gap_delta_units == 65
    assert rep.mod_check
    assert rep.depth_counts == {"quantize": 4, "contextual": 6, "value": 8}
    js = rep.to_json_dict()
    assert js["distinct"] is True
    assert js["config"] == {"n": 2, "d": 1, "delta_inv": 2, "p": 2, "s": 2}


def test_verify_contextual_map_dense_2_1():
    rep = verify_contextual_map(build_config(dense(2), d=1, delta_inv=2))
    assert rep.passed
    assert rep.num_ids == 8
    assert rep.min_gap_delta_units >= 1


def test_verify_contextual_map_star_3_1():
    rep = verify_contextual_map(build_config(star(3, 1), d=1, delta_inv=2))
    assert rep.passed
    assert rep.num_sequences == 8
    assert rep.num_ids == 24


def test_verify_contextual_map_budget():
    with pytest.raises(ConfigError):
        verify_contextual_map(cfg_strided_21(), budget=3)


def test_value_map_zero_table():
    cfg = cfg_strided_21()
    fbar = GridFunction(n=2, d=1, delta_inv=2, table=np.zeros((4, 1, 2)))
    layers = value_map_build(cfg, fbar)
    assert len(layers) == cfg.gv_depth == 8
    for _, units in enumerate_h(cfg):
        res = contextual_map(units, cfg)
        out = value_map_apply(res.output_units, layers, cfg)
        assert np.array_equal(out, np.zeros((1, 2)))


def test_value_map_random_table_lookup():
    cfg = cfg_strided_21()
    fbar = GridFunction.random(2, 1, 2, seed=5)
    layers = value_map_build(cfg, fbar)
    for idx, units in enumerate_h(cfg):
        res = contextual_map(units, cfg)
        out = value_map_apply(res.output_units, layers, cfg)
        assert np.array_equal(out, fbar.table[idx])


def test_value_map_rejects_duplicate_ids():
    cfg = cfg_strided_21()
    fbar = GridFunction.random(2, 1, 2, seed=5)
    contexts = [contextual_map(units, cfg) for _, units in enumerate_h(cfg)]
    contexts[1] = contexts[0]
    with pytest.raises(IntegrityError):
        value_map_build(cfg, fbar, contexts=contexts)


def test_end_to_end_exact_shapes():
    shapes = [
        (2, 1, 2),  # (n, d, delta_inv)
        (3, 1, 2),
        (2, 2, 2),
        (3, 1, 3),
    ]
    for n, d, dinv in shapes:
        for pattern in (dense(n), strided(n, 1)):
            cfg = build_config(pattern, d=d, delta_inv=dinv)
            fbar = GridFunction.random(n, d, dinv, seed=7)
            res = end_to_end(cfg, fbar, points_per_cell=3, seed=1)
            assert res["exact"], (n, d, dinv, pattern.p, res)
            assert res["points_checked"] == cfg.num_cells * 4


def test_grid_function_cell_indexing():
    g = GridFunction.random(2, 2, 3, seed=0)
    for idx in (0, 5, 80):
        corner = g.corner_units(idx) / 3
        assert g.cell_index_of(corner) == idx
        assert g.cell_index_of(corner + 0.1) == idx
    with pytest.raises(ParameterError):
        g.cell_index_of(np.full((2, 2), 1.5))


def test_piecewise_constant_on_constant_function():
    const = lambda x: np.full((1, 2), 3.25)
    g = piecewise_constant_approx(const, n=2, d=1, delta_inv=4)
    est, err = dp_distance(const, g, p=2.0, samples=200, seed=0, shape=(1, 2))
    assert est == 0.0 and err == 0.0


def test_piecewise_constant_linear_error_bound():
    lin = lambda x: x  # entrywise Lipschitz constant 1
    rng = np.random.default_rng(3)
    sup_err = {}
    for dinv in (2, 4):
        g = piecewise_constant_approx(lin, n=2, d=1, delta_inv=dinv)
        worst = 0.0
        for _ in range(400):
            x = rng.random((1, 2))
            worst = max(worst, np.abs(lin(x) - g(x)).max())
        assert worst <= 1.0 / dinv + 1e-12
        sup_err[dinv] = worst
    # halving delta at least halves the sampled sup error for a linear map
    assert sup_err[4] <= sup_err[2] / 2.0 + 1e-12


def test_dp_distance_identical_functions():
    g = GridFunction.random(2, 1, 2, seed=0)
    est, err = dp_distance(g, g, p=1.0, samples=100, seed=0)
    assert est == 0.0 and err == 0.0


def test_dp_distance_constant_offset_closed_form():
    d, n, c, p = 2, 3, 0.75, 3.0
    f = lambda x: x
    g = lambda x: x + c
    est, err = dp_distance(f, g, p=p, samples=64, seed=0, shape=(d, n))
    assert est == pytest.approx((d * n * c ** p) ** (1.0 / p), rel=1e-12)
    assert err == pytest.approx(0.0, abs=1e-12)


def test_dp_distance_seed_stability():
    g = GridFunction.random(2, 1, 2, seed=0)
    zero = lambda x: np.zeros((1, 2))
    e1, s1 = dp_distance(g, zero, p=2.0, samples=2000, seed=1)
    e2, s2 = dp_distance(g, zero, p=2.0, samples=2000, seed=2)
    assert abs(e1 - e2) <= 3.0 * (s1 + s2)


def test_dp_distance_validation():
    with pytest.raises(ParameterError):
        dp_distance(lambda x: x, lambda x: x, p=0.0, shape=(1, 2))
    with pytest.raises(ParameterError):
        dp_distance(lambda x: x, lambda x: x)


def test_phi_relu_matches_phi_outside_gap():
    delta = 0.5
    phi = phi_quantize(delta)
    for alpha in (0.5, 0.1, 0.01):
        combo, pwl = phi_relu_approx(delta, alpha)
        lo, hi = (1.0 - alpha) * delta, delta
        ts = np.concatenate([
            np.linspace(-1.0, lo, 301),
            np.linspace(hi, 2.0, 301),
        ])
        got = eval_relu_combination(combo, ts)
        want = eval_pwl(phi, ts)
        assert np.abs(got - want).max() < 1e-12
        # the two encodings agree everywhere, including inside the gap
        inside = np.linspace(lo, hi, 101)
        assert np.abs(eval_relu_combination(combo, inside)
                      - eval_pwl(pwl, inside)).max() < 1e-12


def test_phi_relu_disagreement_interval_shrinks():
    delta = 0.5
    phi = phi_quantize(delta)
    ts = np.linspace(-1.0, 2.0, 6001)
    widths = []
    for alpha in (0.5, 0.1, 0.01):
        combo, _ = phi_relu_approx(delta, alpha)
        diff = np.abs(eval_relu_combination(combo, ts) - eval_pwl(phi, ts))
        disagree = ts[diff > 1e-12]
        width = disagree.max() - disagree.min() if disagree.size else 0.0
        widths.append(width)
        assert width <= alpha * delta + 1e-3
    assert widths[0] > widths[1] > widths[2]


def test_phi_relu_alpha_validation():
    with pytest.raises(ParameterError):
        phi_relu_approx(0.5, 0.0)
    with pytest.raises(ParameterError):
        phi_relu_approx(0.5, 1.0)


def test_phi_prime_trapezoid_shape():
    delta = 0.5
    combo, pwl = phi_prime_relu_approx(delta)
    pts = {0.0: 1.0, delta / 4: 1.0, -delta / 4: 1.0,
           delta / 2: 0.0, -delta / 2: 0.0, delta: 0.0, -delta: 0.0,
           3 * delta / 8: 0.5, -3 * delta / 8: 0.5}
    for t, want in pts.items():
        assert eval_relu_combination(combo, t) == pytest.approx(want, abs=1e-12)
        assert eval_pwl(pwl, t) == pytest.approx(want, abs=1e-12)
    ts = np.linspace(-1.0, 1.0, 2001)
    assert np.abs(eval_relu_combination(combo, ts) - eval_pwl(pwl, ts)).max() < 1e-12


def test_approximation_budget_values():
    cfg = cfg_strided_21()
    budget = approximation_budget(cfg, eps=1.0, p_norm=1.0)
    assert budget.delta_tilde == 0.5
    assert budget.zeta == 0.25
    assert len(budget.stage_etas) == 1
    want_eta = 0.125 * math.log(1.0 + 1.0 / 256.0)
    assert budget.stage_etas[0] == pytest.approx(want_eta, rel=1e-12)
    assert budget.stage_etas[0] == pytest.approx(4.87e-4, rel=2e-3)
    assert budget.allmax_eta > 0.0
    assert budget.stage_ts[0] > 0.0 and budget.allmax_t > 0.0
    assert budget.deviation_bound == 0.125


def test_approximation_budget_eps_clamp_and_validation():
    cfg = cfg_strided_21()
    assert approximation_budget(cfg, eps=1e9).delta_tilde == cfg.delta
    small = approximation_budget(cfg, eps=1e-3, p_norm=2.0)
    assert small.delta_tilde == pytest.approx(
        2.0 ** 0.5 * 1e-3 / 2.0 ** 0.5, rel=1e-12)
    with pytest.raises(ParameterError):
        approximation_budget(cfg, eps=0.0)
    with pytest.raises(ParameterError):
        approximation_budget(cfg, eps=1.0, p_norm=0.5)


def test_soft_contextual_map_bounds():
    for n in (2, 3):
        cfg = build_config(strided(n, 1), d=1, delta_inv=2)
        budget = approximation_budget(cfg, eps=1.0, p_norm=1.0)
        rep = verify_soft_contextual_map(cfg, budget)
        assert rep["bound_ok"], rep
        assert rep["other_rows_exact"]
        assert rep["ids_distinct"]
        assert rep["num_ids"] == n * cfg.num_cells


def test_soft_contextual_map_untouched_rows_exact_d2():
    cfg = build_config(strided(2, 1), d=2, delta_inv=2)
    budget = approximation_budget(cfg, eps=1.0, p_norm=1.0)
    rep = verify_soft_contextual_map(cfg, budget)
    assert rep["other_rows_exact"]
    assert rep["ids_distinct"]


def test_soft_contextual_map_sharpens_with_larger_t():
    cfg = cfg_strided_21()
    budget = approximation_budget(cfg, eps=1.0, p_norm=1.0)
    base = verify_soft_contextual_map(cfg, budget)
    sharp = verify_soft_contextual_map(cfg, budget, t_scale=100.0)
    assert sharp["max_deviation"] < base["max_deviation"]
    assert sharp["bound_ok"]
