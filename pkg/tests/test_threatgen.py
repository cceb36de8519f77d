import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_trace
from voltsentry.simkit import TelemetryFrame
from voltsentry.threatgen import (AttackScenario, apply_replay, apply_scenario,
                                  apply_swap)


class TestApplySwap:
    def test_ascending_becomes_descending(self):
        frame = TelemetryFrame(0.0, 100.0, (350.1, 350.2, 350.3, 350.4))
        out = apply_swap(frame)
        assert out.v_modules == (350.4, 350.3, 350.2, 350.1)
        assert out.i_pack_a == frame.i_pack_a
        assert out.t_s == frame.t_s

    def test_all_equal_unchanged(self):
        frame = TelemetryFrame(0.0, 100.0, (350.0, 350.0, 350.0))
        assert apply_swap(frame).v_modules == frame.v_modules

    def test_needs_two_modules(self):
        with pytest.raises(ValueError):
            apply_swap(TelemetryFrame(0.0, 100.0, (350.0,)))

    def test_stable_tie_break(self):
        frame = TelemetryFrame(0.0, 1.0, (5.0, 3.0, 3.0))
        assert apply_swap(frame).v_modules == (5.0, 3.0, 3.0)

    @given(vs=st.lists(st.floats(300, 400), min_size=2, max_size=6))
    @settings(max_examples=60, deadline=None)
    def test_multiset_preserved_and_descending(self, vs):
        out = apply_swap(TelemetryFrame(0.0, 1.0, tuple(vs)))
        assert sorted(out.v_modules) == sorted(vs)
        assert all(a >= b for a, b in
                   zip(out.v_modules, out.v_modules[1:]))


class TestScenarioValidation:
    def test_replay_requires_record_window(self):
        with pytest.raises(ValueError):
            AttackScenario(kind="replay", k0_s=400, kf_s=700)

    def test_replay_record_must_cover_active(self):
        with pytest.raises(ValueError, match="shorter"):
            AttackScenario(kind="replay", k0_s=400, kf_s=700,
                           record_start_s=100, record_end_s=300,
                           target_modules=(1,))

    def test_record_precedes_active(self):
        with pytest.raises(ValueError, match="precede"):
            AttackScenario(kind="replay", k0_s=300, kf_s=600,
                           record_start_s=100, record_end_s=400,
                           target_modules=(1,))

    def test_empty_targets_rejected(self):
        with pytest.raises(ValueError, match="nonempty"):
            AttackScenario(kind="replay", k0_s=400, kf_s=700,
                           record_start_s=100, record_end_s=400,
                           target_modules=())

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            AttackScenario(kind="dos", k0_s=0, kf_s=1)

    def test_window_order(self):
        with pytest.raises(ValueError):
            AttackScenario(kind="swap_fdi", k0_s=700, kf_s=300)


def stair_trace(n=900, q=5, base=300.0):
    t = np.arange(n, dtype=float)
    v = base + np.arange(q)[None, :] * 2.0 + 0.01 * t[:, None]
    return make_trace(v, i=100.0, t=t)


class TestApplyReplay:
    def paper_scenario(self):
        return AttackScenario(kind="replay", k0_s=400, kf_s=700,
                              record_start_s=100, record_end_s=400,
                              target_modules=(1, 2))

    def test_replayed_values_match_recorded_window(self):
        trace = stair_trace()
        out = apply_replay(trace, self.paper_scenario())
        assert out.v_modules[400, 0] == trace.v_modules[100, 0]
        assert out.v_modules[699, 1] == trace.v_modules[399, 1]
        # Non-target modules and the current channel are untouched.
        assert np.array_equal(out.v_modules[:, 2:], trace.v_modules[:, 2:])
        assert np.array_equal(out.i_pack_a, trace.i_pack_a)

    def test_outside_window_identity(self):
        trace = stair_trace()
        out = apply_replay(trace, self.paper_scenario())
        assert np.array_equal(out.v_modules[:400], trace.v_modules[:400])
        assert np.array_equal(out.v_modules[700:], trace.v_modules[700:])

    def test_window_outside_trace_rejected(self):
        trace = stair_trace(n=500)
        with pytest.raises(ValueError, match="outside"):
            apply_replay(trace, self.paper_scenario())

    def test_target_module_beyond_q(self):
        trace = stair_trace(q=2)
        scenario = AttackScenario(kind="replay", k0_s=400, kf_s=700,
                                  record_start_s=100, record_end_s=400,
                                  target_modules=(1, 5))
        with pytest.raises(ValueError, match="module"):
            apply_replay(trace, scenario)


class TestApplyScenario:
    def test_swap_mask_covers_window_exactly(self):
        trace = stair_trace(q=4)
        scenario = AttackScenario(kind="swap_fdi", k0_s=300, kf_s=700)
        out, mask = apply_scenario(trace, scenario)
        assert mask.sum() == 400
        assert np.all(mask[300:700] == 1)
        assert np.all(mask[:300] == 0) and np.all(mask[700:] == 0)
        assert out.attack_mask is mask

    def test_swap_rows_descending_inside_window(self):
        trace = stair_trace(q=4)
        out, mask = apply_scenario(
            trace, AttackScenario(kind="swap_fdi", k0_s=300, kf_s=700))
        inside = out.v_modules[300:700]
        assert np.all(np.diff(inside, axis=1) <= 0)
        assert np.array_equal(np.sort(inside, axis=1),
                              np.sort(trace.v_modules[300:700], axis=1))

    def test_input_trace_not_modified(self):
        trace = stair_trace(q=4)
        snapshot = trace.v_modules.copy()
        apply_scenario(trace, AttackScenario(kind="swap_fdi", k0_s=10, kf_s=20))
        assert np.array_equal(trace.v_modules, snapshot)
        assert trace.attack_mask is None

    def test_zero_length_window_identity(self):
        trace = stair_trace(q=4)
        out, mask = apply_scenario(
            trace, AttackScenario(kind="swap_fdi", k0_s=300, kf_s=300))
        assert np.array_equal(out.v_modules, trace.v_modules)
        assert mask.sum() == 0

    def test_double_swap_restores_when_strictly_ordered(self):
        # Oracle: composing the permutation twice. With q=2 and a strict
        # ordering, descending-sort twice reproduces the descending frame,
        # and the second application leaves it unchanged.
        trace = stair_trace(q=2)
        scenario = AttackScenario(kind="swap_fdi", k0_s=100, kf_s=200)
        once, _ = apply_scenario(trace, scenario)
        once.attack_mask = None
        twice, _ = apply_scenario(once, scenario)
        assert np.array_equal(twice.v_modules, once.v_modules)
        inside = once.v_modules[100:200]
        assert np.all(inside[:, 0] >= inside[:, 1])

    def test_swap_needs_q_ge_2(self):
        trace = stair_trace(q=1)
        with pytest.raises(ValueError):
            apply_scenario(trace,
                           AttackScenario(kind="swap_fdi", k0_s=10, kf_s=20))

    def test_mask_written_and_read_back(self, tmp_path):
        from voltsentry.datasets import read_trace, write_trace
        trace = stair_trace(q=3)
        trace.v_modules = np.round(trace.v_modules, 6)
        out, mask = apply_scenario(
            trace, AttackScenario(kind="swap_fdi", k0_s=5, kf_s=15))
        path = tmp_path / "corrupt.csv"
        write_trace(path, out)
        back = read_trace(path)
        assert np.array_equal(back.attack_mask, mask)
        assert back == out
