import math

import numpy as np
import pytest

from spinphonon.pulses import (
    DEFAULT_SCHEDULE_SCALE,
    TRANSFER_PHONON_TO_SPINS,
    TRANSFER_SPINS_TO_PHONON,
    CzDesign,
    Edge,
    Hold,
    PulseError,
    StirapSchedule,
    ThetaPhiPoint,
    design_cz_schedule,
    design_transfer_schedule,
)

TWO_PI = 2 * math.pi


class TestThetaPhiPoint:
    @pytest.mark.parametrize("theta,phi", [(0.0, 0.0), (math.pi / 4, 1.3), (1.1, -2.0)])
    def test_amplitude_parametrization(self, theta, phi):
        p = ThetaPhiPoint(theta, phi, scale=0.033)
        assert abs(p.omega_r - math.sin(theta) * 0.033) < 1e-15
        assert abs(p.omega_2 - math.cos(theta) * 0.033 * np.exp(1j * phi)) < 1e-15
        assert math.hypot(abs(p.omega_r), abs(p.omega_2)) == pytest.approx(0.033)


class TestCzDesign:
    def test_hold_durations(self):
        d = CzDesign(delta_r2=0.3e-3)
        assert d.T0 == pytest.approx(7.0 / (4 * 0.3e-3))
        assert d.T0 == pytest.approx(5833.333, abs=0.01)
        assert d.T1 == pytest.approx(833.333, abs=0.01)
        assert d.total_duration == pytest.approx(4 * 1350 + 2 * d.T0 + d.T1)

    def test_other_windings(self):
        d = CzDesign(delta_r2=0.3e-3, k=-3)
        assert d.T1 == pytest.approx(5.0 / (4 * 0.3e-3))
        with pytest.raises(PulseError):
            CzDesign(k=-1)

    def test_predicted_phases(self):
        d = CzDesign()
        # gamma1 = -phi_dot (T0 + T1) = 2 k pi
        assert -d.phi_rate * (d.T0 + d.T1) == pytest.approx(d.predicted_gamma1)
        assert d.predicted_gamma1 == pytest.approx(-4 * math.pi)
        # delta gamma = (1/7) phi_dot 2 T0 = pi
        assert d.phi_rate * 2 * d.T0 / 7 == pytest.approx(math.pi)

    def test_invalid(self):
        with pytest.raises(PulseError):
            CzDesign(delta_r2=0.0)
        with pytest.raises(PulseError):
            CzDesign(t_rise=-1.0)


class TestCzSchedule:
    def setup_method(self):
        self.design = CzDesign()
        self.sch = design_cz_schedule(self.design)

    def test_total_duration(self):
        assert self.sch.total_duration == pytest.approx(17900.0)

    def test_theta_endpoints_and_path(self):
        assert self.sch.theta(0.0) == pytest.approx(math.pi / 2)
        assert self.sch.theta(self.sch.total_duration) == pytest.approx(math.pi / 2)
        mid = self.sch.total_duration / 2
        assert self.sch.theta(mid) == pytest.approx(0.0, abs=1e-12)

    def test_time_reversal_symmetry(self):
        T = self.sch.total_duration
        for t in np.linspace(0, T, 211):
            assert self.sch.theta(t) == pytest.approx(self.sch.theta(T - t), abs=1e-12)

    def test_amplitude_continuity(self):
        T = self.sch.total_duration
        eps = 1e-7
        for tb in self.sch.boundaries[1:-1]:
            a = np.array(self.sch.evaluate(tb - eps))
            b = np.array(self.sch.evaluate(tb + eps))
            assert np.max(np.abs(a - b)) < 1e-6 * self.sch.scale

    def test_phi_ramps_only_in_holds(self):
        # inside the first edge phi stays frozen
        assert self.sch.phi(0.0) == self.sch.phi(self.design.t_rise * 0.99)
        # across the first hold phi advances by phi_rate * T0 = 7 pi / 2
        t0 = self.design.t_rise
        t1 = t0 + self.design.T0
        dphi = self.sch.phi(t1) - self.sch.phi(t0)
        assert dphi == pytest.approx(TWO_PI * self.design.delta_r2 * self.design.T0)
        assert dphi == pytest.approx(3.5 * math.pi)

    def test_plateau_amplitudes(self):
        t_plateau = self.design.t_rise + 0.5 * self.design.T0
        om_r, om_2 = self.sch.evaluate(t_plateau)
        assert abs(om_r) == pytest.approx(self.sch.scale / math.sqrt(2))
        assert abs(om_2) == pytest.approx(self.sch.scale / math.sqrt(2))

    def test_theta_zero_kills_sideband(self):
        t_center = 2 * self.design.t_rise + self.design.T0 + 0.5 * self.design.T1
        om_r, om_2 = self.sch.evaluate(t_center)
        assert abs(om_r) < 1e-12
        assert abs(om_2) == pytest.approx(self.sch.scale)

    def test_adiabaticity_proxy(self):
        assert self.sch.adiabaticity() < 0.05

    def test_out_of_range(self):
        with pytest.raises(PulseError):
            self.sch.evaluate(-1.0)
        with pytest.raises(PulseError):
            self.sch.evaluate(self.sch.total_duration + 1.0)

    def test_csv_export(self, tmp_path):
        path = tmp_path / "schedule.csv"
        self.sch.export_csv(path, n_points=101)
        lines = path.read_text().splitlines()
        assert lines[0] == "t_ns,omega_r_re_ghz,omega_r_im_ghz,omega_2_re_ghz,omega_2_im_ghz,theta_rad,phi_rad"
        assert len(lines) == 102
        first = [float(v) for v in lines[1].split(",")]
        assert first[0] == 0.0
        assert first[1] == pytest.approx(self.sch.scale)  # omega_r at theta = pi/2


class TestTransferSchedule:
    def test_endpoints_exact(self):
        sch = design_transfer_schedule(3927.0, direction=TRANSFER_PHONON_TO_SPINS)
        assert sch.theta(0.0) == 0.0
        assert sch.theta(sch.total_duration) == pytest.approx(math.pi / 2, abs=0)
        rev = design_transfer_schedule(439.0, direction=TRANSFER_SPINS_TO_PHONON)
        assert rev.theta(0.0) == pytest.approx(math.pi / 2)
        assert rev.theta(rev.total_duration) == pytest.approx(0.0, abs=1e-15)

    def test_duration_is_stage_sum(self):
        sch = design_transfer_schedule(1000.0)
        assert sch.total_duration == pytest.approx(sum(s.duration for s in sch.stages))

    def test_no_phase_ramp(self):
        sch = design_transfer_schedule(500.0)
        assert sch.phi(250.0) == 0.0

    def test_bad_direction(self):
        with pytest.raises(PulseError):
            design_transfer_schedule(100.0, direction="sideways")


class TestScheduleValidation:
    def test_theta_discontinuity_rejected(self):
        with pytest.raises(PulseError, match="discontinuity"):
            StirapSchedule(stages=(Edge(0.0, 1.0, 10.0), Hold(0.5, 5.0)))

    def test_positive_durations(self):
        with pytest.raises(PulseError):
            Hold(0.3, 0.0)
        with pytest.raises(PulseError):
            Edge(0.0, 1.0, -2.0)

    def test_default_scale_matches_reference_drives(self):
        assert DEFAULT_SCHEDULE_SCALE == pytest.approx(0.023 * math.sqrt(2))
