import math

import numpy as np
import pytest

from localreid.scheduler import EpsSchedule, epsilon_at, fixed_sweep, schedule_curve

LO, HI, STEADY = 0.5, 0.7, 0.6


def noise_robust(total):
    return EpsSchedule("noise_robust", LO, HI, STEADY, total)


class TestNoiseRobust:
    @pytest.mark.parametrize("total", [8, 40, 100])
    def test_endpoints(self, total):
        s = noise_robust(total)
        assert epsilon_at(s, 0) == LO
        assert epsilon_at(s, total // 2) == pytest.approx(HI, abs=1e-12)
        for t in range(math.ceil(3 * total / 4), total):
            assert epsilon_at(s, t) == STEADY

    @pytest.mark.parametrize("total", [8, 40, 100])
    def test_phase_monotonicity(self, total):
        s = noise_robust(total)
        curve = schedule_curve(s)
        half = total // 2
        three_q = math.ceil(3 * total / 4)
        assert (np.diff(curve[: half + 1]) >= -1e-12).all()
        assert (np.diff(curve[half:three_q]) <= 1e-12).all()
        assert (curve[three_q:] == STEADY).all()

    @pytest.mark.parametrize("total", [8, 40, 100])
    def test_join_continuity(self, total):
        s = noise_robust(total)
        half = total // 2
        step = abs(epsilon_at(s, half) - epsilon_at(s, half - 1))
        assert step <= (HI - LO) * math.pi / total + 1e-12


class TestAllKinds:
    @pytest.mark.parametrize(
        "kind",
        ["noise_robust", "only_warmup", "only_annealing", "one_cosine_cycle",
         "one_and_half_cosine_cycle", "fixed"],
    )
    @pytest.mark.parametrize("total", [8, 41])
    def test_range(self, kind, total):
        s = EpsSchedule(kind, LO, HI, STEADY, total)
        curve = schedule_curve(s)
        assert curve.shape == (total,)
        assert (curve >= LO - 1e-12).all() and (curve <= HI + 1e-12).all()

    def test_only_warmup_rises(self):
        curve = schedule_curve(EpsSchedule("only_warmup", LO, HI, STEADY, 40))
        assert curve[0] == LO
        assert (np.diff(curve) > 0).all()

    def test_only_annealing_descends(self):
        curve = schedule_curve(EpsSchedule("only_annealing", LO, HI, STEADY, 40))
        assert curve[0] == HI
        assert (np.diff(curve) < 0).all()

    def test_one_cycle_peaks_midway(self):
        total = 40
        curve = schedule_curve(EpsSchedule("one_cosine_cycle", LO, HI, STEADY, total))
        assert curve[0] == LO
        assert curve[total // 2] == pytest.approx(HI, abs=1e-12)
        assert curve[-1] < curve[total // 2]

    def test_one_and_half_cycles_ends_high(self):
        total = 60
        s = EpsSchedule("one_and_half_cosine_cycle", LO, HI, STEADY, total)
        curve = schedule_curve(s)
        assert curve[0] == LO
        assert curve[total // 3] == pytest.approx(HI, abs=1e-10)  # first peak
        assert curve[2 * total // 3] == pytest.approx(LO, abs=1e-10)  # trough
        # final half-cycle climbs back toward the high endpoint
        step_bound = (HI - LO) * 3 * math.pi / (2 * total)
        assert HI - curve[-1] <= step_bound

    def test_fixed_is_constant(self):
        curve = schedule_curve(EpsSchedule("fixed", 0.55, 0.55, 0.55, 10))
        assert (curve == 0.55).all()


class TestValidation:
    def test_epoch_out_of_range(self):
        s = noise_robust(10)
        with pytest.raises(ValueError):
            epsilon_at(s, 10)
        with pytest.raises(ValueError):
            epsilon_at(s, -1)

    def test_bad_band(self):
        with pytest.raises(ValueError):
            EpsSchedule("noise_robust", 0.7, 0.5, 0.6, 10)
        with pytest.raises(ValueError):
            EpsSchedule("noise_robust", 0.0, 0.7, 0.6, 10)
        with pytest.raises(ValueError):
            EpsSchedule("noise_robust", 0.5, 1.0, 0.6, 10)

    def test_bad_kind_and_epochs(self):
        with pytest.raises(ValueError):
            EpsSchedule("triangle", LO, HI, STEADY, 10)
        with pytest.raises(ValueError):
            EpsSchedule("noise_robust", LO, HI, STEADY, 3)


class TestFixedSweep:
    def test_two_values(self):
        sweeps = fixed_sweep([0.5, 0.7])
        assert len(sweeps) == 2
        assert all(s.kind == "fixed" for s in sweeps)
        assert (schedule_curve(sweeps[0]) == 0.5).all()
        assert (schedule_curve(sweeps[1]) == 0.7).all()

    def test_empty(self):
        assert fixed_sweep([]) == []

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            fixed_sweep([1.5])
