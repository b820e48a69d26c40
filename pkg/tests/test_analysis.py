import math

import numpy as np
import pytest

from spinphonon.analysis import (
    CZ_UNITARY,
    AnalysisError,
    ChiMatrix,
    average_gate_fidelity,
    chi_from_input_output_pairs,
    chi_from_unitary,
    dark_state_collective,
    dark_state_single,
    dark_state_two,
    dark_state_two_orthogonal,
    dark_subspace_leakage,
    dicke_target_state,
    geometric_phases,
    leakage_upper_bound,
    one_excitation_hamiltonian,
    process_fidelity,
    process_tomography_2q,
    state_fidelity,
    symmetric_sector_hamiltonian,
    tomography_input_states,
    two_excitation_hamiltonian,
    _d2_orthogonal_vector,
    _d2_vector,
)
from spinphonon.algebra import HilbertLayout
from spinphonon.pulses import CzDesign, Hold, StirapSchedule, design_cz_schedule


def random_amplitude_pairs(n=100, seed=11):
    rng = np.random.default_rng(seed)
    pairs = []
    while len(pairs) < n:
        om_r = complex(*rng.normal(size=2)) * 0.05
        om_2 = complex(*rng.normal(size=2)) * 0.05
        if abs(om_r) > 1e-3 and abs(om_2) > 1e-3:
            pairs.append((om_r, om_2))
    return pairs


class TestDarkStates:
    def test_single_limits(self):
        d = dark_state_single(0.0, 0.023)
        assert d.amplitude("1,g1") == pytest.approx(1.0)
        d = dark_state_single(0.02, 0.02)
        assert d.amplitude("1,g1") == pytest.approx(1 / math.sqrt(2))
        assert d.amplitude("0,g2") == pytest.approx(1 / math.sqrt(2))
        with pytest.raises(AnalysisError):
            dark_state_single(0.0, 0.0)

    def test_two_equal_amplitude_coefficient(self):
        # theta = pi/4: coefficient of |2,g1,g1| is (1/2)/sqrt(7/4)
        d = dark_state_two(0.02, 0.02)
        assert abs(d.amplitude("2,g1g1")) == pytest.approx(0.5 / math.sqrt(7 / 4))
        with pytest.raises(AnalysisError):
            dark_state_two(0.0, 0.02)

    def test_nullity_and_orthonormality_random(self):
        for om_r, om_2 in random_amplitude_pairs():
            h1 = one_excitation_hamiltonian(om_r, om_2)
            h2 = two_excitation_hamiltonian(om_r, om_2)
            d1 = dark_state_single(om_r, om_2)
            d2 = dark_state_two(om_r, om_2)
            d2t = dark_state_two_orthogonal(om_r, om_2)
            assert np.linalg.norm(h1 @ d1.vector) <= 1e-10 * np.linalg.norm(h1)
            assert np.linalg.norm(h2 @ d2.vector) <= 1e-10 * np.linalg.norm(h2)
            assert np.linalg.norm(h2 @ d2t.vector) <= 1e-10 * np.linalg.norm(h2)
            assert abs(np.linalg.norm(d2.vector) - 1) <= 1e-10
            assert abs(np.linalg.norm(d2t.vector) - 1) <= 1e-10
            assert abs(np.vdot(d2t.vector, d2.vector)) <= 1e-10

    def test_collective_endpoints_and_nullity(self):
        d = dark_state_collective(3, 0.0, 0.02)
        assert d.amplitude("1,g1..g1") == pytest.approx(1.0)
        d = dark_state_collective(3, 0.02, 0.0)
        assert abs(d.amplitude("0,S_g2")) == pytest.approx(1.0)
        for om_r, om_2 in random_amplitude_pairs(20, seed=3):
            for n in (1, 2, 3):
                h = symmetric_sector_hamiltonian(n, om_r, om_2)
                d = dark_state_collective(n, om_r, om_2)
                assert np.linalg.norm(h @ d.vector) <= 1e-10 * np.linalg.norm(h)

    def test_embed_full_space(self):
        lay = HilbertLayout(6, 2)
        om_r, om_2 = 0.02 * np.exp(0.5j), 0.031
        from spinphonon.models import darkframe_hamiltonian
        from spinphonon.presets import stirap_system
        spec = stirap_system(2)
        h = darkframe_hamiltonian(spec, [(om_r, om_2)] * 2)
        for maker in (dark_state_two, dark_state_two_orthogonal):
            psi = maker(om_r, om_2).embed(lay)
            assert abs(np.linalg.norm(psi) - 1) < 1e-12
            # the doubly-excited cross shift only touches |ee>, which D2 avoids
            if maker is dark_state_two:
                assert np.linalg.norm(h @ psi) <= 1e-10 * np.linalg.norm(h)

    def test_dicke_target(self):
        lay = HilbertLayout(3, 3)
        psi = dicke_target_state(lay)
        assert abs(np.linalg.norm(psi) - 1) < 1e-12
        amp = psi[lay.encode(0, ["g2", "g1", "g1"])]
        assert amp == pytest.approx(1 / math.sqrt(3))


class TestGeometricPhases:
    def test_hold_integrands(self):
        # theta = pi/4 hold: delta-gamma integrand = 1/7 of the ramped phase
        rate = 2 * math.pi * 0.3e-3
        sch = StirapSchedule(stages=(Hold(math.pi / 4, 1000.0, rate),), scale=0.03)
        gp = geometric_phases(sch)
        dphi = rate * 1000.0
        assert gp.delta_gamma == pytest.approx(dphi / 7, rel=1e-10)
        assert gp.gamma1 == pytest.approx(-0.5 * dphi, rel=1e-10)
        # theta = 0 hold: gamma1 integrand = 1, delta-gamma integrand = 0
        sch0 = StirapSchedule(stages=(Hold(0.0, 500.0, rate),), scale=0.03)
        gp0 = geometric_phases(sch0)
        assert gp0.gamma1 == pytest.approx(-rate * 500.0, rel=1e-10)
        assert gp0.delta_gamma == pytest.approx(0.0, abs=1e-12)

    def test_designed_cz_phases(self):
        gp = geometric_phases(design_cz_schedule(CzDesign()))
        assert (gp.gamma1 % (2 * math.pi)) == pytest.approx(0.0, abs=1e-6)
        assert gp.delta_gamma == pytest.approx(math.pi, abs=1e-6)

    def test_closed_form_consistency(self):
        # piecewise closed form: gamma1 = -sum cos^2(theta_hold) dphi_hold
        design = CzDesign(delta_r2=0.45e-3, k=-3)
        sch = design_cz_schedule(design)
        gp = geometric_phases(sch)
        closed = 0.0
        for stage in sch.stages:
            if isinstance(stage, Hold):
                closed -= math.cos(stage.theta) ** 2 * stage.phi_rate * stage.duration
        assert gp.gamma1 == pytest.approx(closed, abs=1e-8)


class TestLeakage:
    def test_bound_constants(self):
        lb = leakage_upper_bound()
        assert lb.eta == pytest.approx((2 / 7) * math.sqrt(2 / 13))
        assert lb.eta**2 == pytest.approx(8 / 637)
        assert lb.bound == pytest.approx(32 / 637)
        assert lb.bound == pytest.approx(0.05024, abs=1e-5)

    def test_plateau_coupling_magnitude_is_eta(self):
        # |<D2~ | d/dphi D2>| at theta = pi/4 equals eta (finite difference)
        h = 1e-6
        th = math.pi / 4
        dv = (_d2_vector(th, 0.7 + h) - _d2_vector(th, 0.7 - h)) / (2 * h)
        coupling = abs(np.vdot(_d2_orthogonal_vector(th, 0.7), dv))
        assert coupling == pytest.approx(leakage_upper_bound().eta, rel=1e-6)

    def test_constant_schedule_no_leakage(self):
        sch = StirapSchedule(stages=(Hold(0.6, 800.0, 0.0),), scale=0.03)
        res = dark_subspace_leakage(sch, n_samples=51)
        assert res.meta["max_leakage"] <= 1e-12

    def test_cz_schedule_below_bound(self):
        res = dark_subspace_leakage(design_cz_schedule(CzDesign()), n_samples=161)
        assert res.meta["max_leakage"] < leakage_upper_bound().bound
        # norm conservation of the two-component integration
        total = np.abs(res.observables["c2"]) ** 2 + res.observables["leakage"]
        assert np.max(np.abs(total - 1.0)) < 1e-6


class TestFidelity:
    def test_pure_targets(self):
        psi = np.array([1, 1j], dtype=complex) / math.sqrt(2)
        rho = np.outer(psi, psi.conj())
        assert state_fidelity(rho, psi) == pytest.approx(1.0)
        orth = np.array([1, 1j], dtype=complex).conj() / math.sqrt(2)
        orth = np.array([1, -1j], dtype=complex) / math.sqrt(2)
        assert state_fidelity(rho, orth) == pytest.approx(0.0, abs=1e-15)

    def test_maximally_mixed(self):
        d = 6
        rho = np.eye(d) / d
        psi = np.zeros(d, dtype=complex)
        psi[2] = 1.0
        assert state_fidelity(rho, psi) == pytest.approx(1 / d)

    def test_density_target_and_mismatch(self):
        rho = np.diag([0.5, 0.5]).astype(complex)
        assert state_fidelity(rho, rho) == pytest.approx(0.5)
        with pytest.raises(AnalysisError):
            state_fidelity(rho, np.zeros(3, dtype=complex))


class TestTomography:
    def test_inputs(self):
        states = tomography_input_states()
        assert len(states) == 16
        mats = np.stack([np.outer(v, v.conj()).reshape(16) for _, v in states])
        assert np.linalg.matrix_rank(mats) == 16

    def test_identity_channel(self):
        chi = process_tomography_2q(lambda rho: rho.copy())
        expected = np.zeros((16, 16))
        expected[0, 0] = 1.0
        assert np.max(np.abs(chi.matrix - expected)) < 1e-10
        assert chi.trace == pytest.approx(1.0)

    def test_ideal_cz_channel(self):
        chi_ideal = chi_from_unitary(CZ_UNITARY)
        chi = process_tomography_2q(lambda rho: CZ_UNITARY @ rho @ CZ_UNITARY.conj().T)
        assert process_fidelity(chi, chi_ideal) == pytest.approx(1.0, abs=1e-12)

    def test_depolarizing_channel(self):
        chi_ideal = chi_from_unitary(CZ_UNITARY)
        chi = process_tomography_2q(lambda rho: np.trace(rho).real * np.eye(4) / 4)
        assert process_fidelity(chi, chi_ideal) == pytest.approx(1 / 16)

    def test_random_unitary_roundtrip(self):
        rng = np.random.default_rng(23)
        x = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        q, _ = np.linalg.qr(x)
        chi_ref = chi_from_unitary(q)
        chi = process_tomography_2q(lambda rho: q @ rho @ q.conj().T)
        assert abs(process_fidelity(chi, chi_ref) - 1.0) <= 1e-8
        assert chi.min_eigenvalue() >= -1e-6
        assert abs(chi.normalized().trace - 1.0) <= 1e-6

    def test_subtrace_channel_recorded(self):
        # 10% uniform leakage: chi trace drops, outputs stay physical
        chi = process_tomography_2q(lambda rho: 0.9 * rho)
        assert chi.trace == pytest.approx(0.9)
        assert chi.meta["output_warnings"] == []

    def test_unphysical_output_flagged_and_projected(self):
        def bad_channel(rho):
            out = rho.copy()
            out[0, 0] += 0.02
            out[1, 1] -= 0.02
            return out

        chi = process_tomography_2q(bad_channel)
        assert chi.meta["output_warnings"]
        assert chi.min_eigenvalue() >= -1e-6

    def test_average_gate_fidelity(self):
        assert average_gate_fidelity(1.0) == pytest.approx(1.0)
        assert average_gate_fidelity(0.968) == pytest.approx((4 * 0.968 + 1) / 5)

    def test_csv_export(self, tmp_path):
        chi = chi_from_unitary(CZ_UNITARY)
        path = tmp_path / "chi.csv"
        chi.export_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("pauli,II_re,IX_re")
        assert len(lines) == 17
        assert lines[1].split(",")[0] == "II"
