# SPDX-License-Identifier: Apache-2.0
import numpy as np
import pytest

import lags_sched as ls


def test_generation_is_deterministic():
    a = ls.generate_instance(seed=3, index=7)
    b = ls.generate_instance(seed=3, index=7)
    assert a.to_json() == b.to_json()
    assert a.num_drones == 3
    assert a.gains.shape == (3, 3)


def test_round_trip_through_json():
    inst = ls.generate_instance(seed=1)
    back = ls.ProblemInstance.from_json(inst.to_json())
    assert back.to_json() == inst.to_json()


def test_oracle_dominates_heuristics():
    for index in range(5):
        inst = ls.generate_instance(seed=2, index=index)
        best = ls.brute_force_oracle(inst)
        assert best["feasible"]
        for solve in (ls.gw1_sumrate, ls.gw2_greedy, ls.drone_granularity, ls.channel_blind):
            r = solve(inst)
            assert r["feasible"]
            assert r["objective"] <= best["objective"] * (1 + 1e-12)


def test_objective_matches_oracle_selection():
    inst = ls.generate_instance(seed=4)
    best = ls.brute_force_oracle(inst)
    assert ls.objective(inst, best["selection"]) == pytest.approx(best["objective"])
    report = ls.check_constraints(inst, best["selection"], np.array(best["powers_w"]))
    assert report["feasible"]


def test_hgnn_inference_and_repair():
    model = ls.GwHgnn(hidden_dims=[8, 8], seed=1)
    inst = ls.generate_instance(seed=5, config="preset = paper")
    selection, powers = model.infer(inst)
    assert len(selection) == 5 and all(len(row) == 4 for row in selection)
    assert powers.sum() == pytest.approx(inst.power_budget)
    repaired = ls.threshold_and_repair(inst, selection, powers)
    assert repaired["feasible"]
    clone = ls.GwHgnn.from_json(model.to_json())
    assert clone.architecture_hash == model.architecture_hash


def test_gs_loss_identities():
    rng = np.random.default_rng(0)
    img = rng.random((20, 24, 3))
    assert ls.ssim(img, img) == pytest.approx(1.0, abs=1e-12)
    assert ls.gs_loss(img, img) == pytest.approx(0.0, abs=1e-12)
    a = np.full((16, 16), 0.2)
    b = np.full((16, 16), 0.6)
    s = (2 * 0.2 * 0.6 + 1e-4) / (0.2**2 + 0.6**2 + 1e-4)
    assert ls.gs_loss(a, b) == pytest.approx(0.8 * 0.4 + 0.2 * (1 - s), abs=1e-12)


def test_errors_map_to_python_exceptions():
    with pytest.raises(ls.ConfigError):
        ls.generate_instance(config="preset = enormous")
    with pytest.raises(ls.DomainError):
        ls.gs_loss(np.zeros((8, 8)), np.zeros((8, 9)))


def test_short_training_run():
    model, header, rows = ls.train(
        config="hidden_dims = 4, 4\nsteps_per_epoch = 2\nbatch_size = 4\nvalidation_size = 4", seed=1, epochs=2
    )
    assert header.startswith("epoch,train_loss")
    assert len(rows) == 2
    assert model.parameter_count > 0
