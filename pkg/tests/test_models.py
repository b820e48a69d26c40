import math

import numpy as np
import pytest

from spinphonon import presets
from spinphonon.algebra import HilbertLayout, is_hermitian, pure_density
from spinphonon.dynamics import evolve_master_equation, evolve_unitary
from spinphonon.models import (
    DecoherenceSpec,
    DefectSpec,
    DriveSpec,
    ModelError,
    SystemSpec,
    ac_stark_shift,
    collapse_block_jumps,
    collapse_channels,
    collapse_operators,
    cooperativity,
    darkframe_hamiltonian,
    dispersive_shift_chi,
    effective_jc_hamiltonian,
    excited_cross_shift,
    g_prime,
    lab_hamiltonian,
    rotating_frame_hamiltonian,
    stark_compensation_offset,
)

TWO_PI = 2 * math.pi

G_PRIME_REF = 0.257 * 0.5 * 0.023 / (4 * 0.23 * 5.6)  # 5.7366e-4 GHz


def spec1(**kw):
    return presets.raman_system(compensate_stark=False, **kw)


class TestSpecs:
    def test_spin_frequency(self):
        d = DefectSpec(g=0.257, nu1=100.0, nu2=98.6)
        assert d.spin_frequency == pytest.approx(1.4)

    def test_raman_drive_detunings(self):
        d = DefectSpec(g=0.257)
        drv = DriveSpec.raman(d, omega_m=5.6, Delta=0.23, Omega1=0.5, Omega2=0.023)
        assert drv.delta1(d, 5.6) == pytest.approx(0.23)
        assert drv.delta2(d) == pytest.approx(0.23)
        # two-photon resonance: omega1 - omega2 = spin frequency - omega_m
        assert drv.omega1 - drv.omega2 == pytest.approx(d.spin_frequency - 5.6)

    def test_raman_offset_moves_two_photon_detuning(self):
        d = DefectSpec(g=0.257)
        drv = DriveSpec.raman(d, 5.6, 0.23, 0.5, 0.023, offset=1e-3)
        assert drv.delta2(d) - drv.delta1(d, 5.6) == pytest.approx(1e-3)

    def test_spectral_offset_shifts_both_branches(self):
        d0 = DefectSpec(g=0.257)
        drv = DriveSpec.raman(d0, 5.6, 0.23, 0.5, 0.023)
        d = DefectSpec(g=0.257, spectral_offset=0.004)
        assert drv.delta1(d, 5.6) - drv.delta1(d0, 5.6) == pytest.approx(0.004)
        assert drv.delta2(d) - drv.delta2(d0) == pytest.approx(0.004)

    def test_negative_rate_rejected(self):
        with pytest.raises(ModelError):
            DecoherenceSpec(gamma_m1=-1e-6)

    def test_drive_count_must_match(self):
        d = DefectSpec(g=0.257)
        drv = DriveSpec.raman(d, 5.6, 0.23, 0.5, 0.023)
        with pytest.raises(ModelError):
            SystemSpec(omega_m=5.6, defects=(d, d), drives=(drv,),
                       layout=HilbertLayout(6, 2))

    def test_with_spin_t2(self):
        for conv in ("raw", "direct", "angular"):
            dec = DecoherenceSpec(convention=conv).with_spin_t2(1e5)
            assert dec.coherence_decay_rate(dec.gamma_s_phi) == pytest.approx(1e-5)


class TestLabHamiltonian:
    def test_decoupled_limit_diagonal(self):
        spec = spec1(g=0.0, Omega1=0.0, Omega2=0.0)
        h = lab_hamiltonian(spec, t=0.3)
        assert np.max(np.abs(h - np.diag(np.diag(h)))) < 1e-12
        lay = spec.layout
        # phonon ladder and ground-level energies
        assert h[lay.encode(2, ["e"]), lay.encode(2, ["e"])].real == pytest.approx(TWO_PI * 2 * 5.6)
        i_g1 = lay.encode(0, ["g1"])
        assert h[i_g1, i_g1].real == pytest.approx(-TWO_PI * 100.0)

    @pytest.mark.parametrize("t", [0.0, 0.37, 1.0])
    def test_hermitian(self, t):
        assert is_hermitian(lab_hamiltonian(spec1(), t), atol=1e-9)

    def test_strain_matrix_element(self):
        spec = spec1()
        lay = spec.layout
        h = lab_hamiltonian(spec, 0.0)
        el = h[lay.encode(1, ["e"]), lay.encode(0, ["e"])]
        assert el == pytest.approx(TWO_PI * 0.257)


class TestRotatingFrame:
    def test_sideband_amplitude(self):
        spec = spec1()
        lay = spec.layout
        h = rotating_frame_hamiltonian(spec)
        om_r = 0.5 * 0.257 / 5.6
        assert om_r == pytest.approx(0.022946428571428572)
        el = h[lay.encode(0, ["e"]), lay.encode(1, ["g1"])]
        assert el == pytest.approx(-TWO_PI * om_r / 2 * math.sqrt(1.0))

    def test_two_defect_cross_term(self):
        spec = spec1(n_defects=2)
        lay = spec.layout
        h = rotating_frame_hamiltonian(spec)
        iee = lay.encode(0, ["e", "e"])
        coeff = h[iee, iee].real - 2 * (-TWO_PI * 0.0)  # no ground detuning on |ee>
        assert coeff == pytest.approx(-TWO_PI * 2 * 0.257**2 / 5.6)
        assert excited_cross_shift(spec) == pytest.approx(-2 * 0.257**2 / 5.6)

    def test_zero_drives_diagonal(self):
        spec = spec1(Omega1=0.0, Omega2=0.0)
        h = rotating_frame_hamiltonian(spec)
        assert np.max(np.abs(h - np.diag(np.diag(h)))) < 1e-12

    def test_hermitian(self):
        assert is_hermitian(rotating_frame_hamiltonian(spec1(n_defects=2)), atol=1e-9)


class TestEffectiveJc:
    def test_g_prime_closed_form(self):
        spec = spec1()
        assert g_prime(spec) == pytest.approx(G_PRIME_REF, rel=1e-12)
        assert g_prime(spec) == pytest.approx(5.7366e-4, rel=1e-4)
        lay = spec.layout
        h = effective_jc_hamiltonian(spec)
        el = abs(h[lay.encode(1, ["g1"]), lay.encode(0, ["g2"])])
        assert el / TWO_PI == pytest.approx(g_prime(spec), rel=1e-12)

    def test_no_flip_flop_without_carrier(self):
        spec = spec1(Omega2=0.0)
        lay = spec.layout
        h = effective_jc_hamiltonian(spec)
        assert abs(h[lay.encode(1, ["g1"]), lay.encode(0, ["g2"])]) == 0.0
        # Stark shifts remain
        i = lay.encode(1, ["g1"])
        assert h[i, i].real != 0.0

    def test_warns_outside_dispersive_regime(self):
        spec = spec1(Delta=0.05)
        with pytest.warns(UserWarning, match="second-order elimination"):
            effective_jc_hamiltonian(spec)

    def test_hermitian(self):
        assert is_hermitian(effective_jc_hamiltonian(spec1()), atol=1e-9)

    def test_zero_detuning_rejected(self):
        spec = presets.stirap_system(1)
        with pytest.raises(ModelError):
            effective_jc_hamiltonian(spec)

    def test_cooperativity(self):
        c = cooperativity(spec1())
        assert c == pytest.approx(3.29e5, rel=0.01)


class TestDarkFrame:
    def test_zero_amplitudes_zero_matrix(self):
        spec = presets.stirap_system(1)
        h = darkframe_hamiltonian(spec, [(0.0, 0.0)])
        assert np.max(np.abs(h)) == 0.0

    def test_sideband_element(self):
        spec = presets.stirap_system(1)
        lay = spec.layout
        om_r = 0.02
        h = darkframe_hamiltonian(spec, [(om_r, 0.015)])
        el = h[lay.encode(0, ["e"]), lay.encode(1, ["g1"])]
        assert el == pytest.approx(-TWO_PI * om_r * math.sqrt(1.0) / 2)

    def test_annihilates_single_dark_state(self):
        from spinphonon.analysis import dark_state_single
        spec = presets.stirap_system(1)
        om_r, om_2 = 0.02 * np.exp(0.3j), 0.015 * np.exp(-1.1j)
        h = darkframe_hamiltonian(spec, [(om_r, om_2)])
        d = dark_state_single(om_r, om_2).embed(spec.layout)
        assert np.linalg.norm(h @ d) <= 1e-10 * np.linalg.norm(h)

    def test_cross_term_present_for_two_defects(self):
        spec = presets.stirap_system(2)
        lay = spec.layout
        h = darkframe_hamiltonian(spec, [(0.0, 0.0)] * 2)
        iee = lay.encode(0, ["e", "e"])
        assert h[iee, iee].real == pytest.approx(TWO_PI * excited_cross_shift(spec))


class TestCollapse:
    def test_zero_rates_empty(self):
        dec = DecoherenceSpec(gamma_m1=0, gamma_e1=0, gamma_e_phi=0, gamma_s1=0, gamma_s_phi=0)
        spec = spec1(decoherence=dec)
        assert collapse_operators(spec) == []

    def test_reference_channel_count(self):
        # phonon decay + per defect: branched excited decay (2), excited
        # dephasing, spin decay, spin dephasing
        spec = spec1()
        assert len(collapse_operators(spec)) == 6
        spec_single = spec1(decoherence=DecoherenceSpec(branching_g1=1.0))
        assert len(collapse_operators(spec_single)) == 5

    def test_block_jumps_match_dense(self):
        spec = spec1(n_defects=2)
        for dense, bj in zip(collapse_operators(spec), collapse_block_jumps(spec)):
            assert np.allclose(dense, bj.matrix(), atol=1e-14)

    @pytest.mark.parametrize("conv,rate", [("raw", 0.02 / 2), ("direct", 0.02),
                                           ("angular", TWO_PI * 0.02)])
    def test_dephasing_coherence_decay(self, conv, rate):
        # only excited dephasing active: rho_{g1,e} decays at the stated rate
        dec = DecoherenceSpec(gamma_m1=0, gamma_e1=0, gamma_e_phi=0.02,
                              gamma_s1=0, gamma_s_phi=0, convention=conv)
        spec = spec1(phonon_levels=2, Omega1=0.0, Omega2=0.0, decoherence=dec)
        lay = spec.layout
        psi = (lay.basis_state(0, "g1") + lay.basis_state(0, "e")) / math.sqrt(2)
        h = np.zeros((lay.total_dim, lay.total_dim))
        ts = np.linspace(0.0, 30.0, 7)
        i, j = lay.encode(0, ["g1"]), lay.encode(0, ["e"])

        def coh(rb):
            return np.abs(rb[:, i, j])

        res = evolve_master_equation(h, collapse_operators(spec), pure_density(psi),
                                     ts, observables={"c": coh}, store_states=False)
        assert np.allclose(res.observables["c"], 0.5 * np.exp(-rate * ts), atol=1e-7)
        assert dec.coherence_decay_rate(dec.gamma_e_phi) == pytest.approx(rate)


class TestClosedForms:
    def test_chi_formula(self):
        spec = spec1()
        gp = g_prime(spec)
        assert dispersive_shift_chi(spec, 10 * gp) == pytest.approx(gp / 10)
        assert dispersive_shift_chi(spec, -10 * gp) == pytest.approx(-gp / 10)
        assert dispersive_shift_chi(spec, 0.01) == pytest.approx(3.291e-5, rel=1e-3)
        with pytest.raises(ModelError):
            dispersive_shift_chi(spec, 0.0)

    def test_ac_stark(self):
        assert ac_stark_shift(0.5, 5.6, 0.0) == pytest.approx(0.25 / 22.4)
        assert ac_stark_shift(0.5, 5.6, 0.0) == pytest.approx(0.011161, rel=1e-4)
        assert ac_stark_shift(0.0, 5.6, 0.1) == 0.0
        assert ac_stark_shift(0.5 * np.exp(0.7j), 5.6, 0.0) == pytest.approx(0.25 / 22.4)
        with pytest.raises(ModelError):
            ac_stark_shift(0.5, 5.6, -5.6)

    def test_stark_compensation_is_small_at_reference(self):
        spec = spec1()
        assert abs(stark_compensation_offset(spec)) < 5e-6


class TestFrameConsistency:
    def test_rotating_vs_effective_population_within_5pct(self):
        # decoherence-free one-Rabi-period comparison of the swap dynamics
        dec = DecoherenceSpec(gamma_m1=0, gamma_e1=0, gamma_e_phi=0, gamma_s1=0, gamma_s_phi=0)
        spec = presets.raman_system(decoherence=dec)  # stark-compensated resonance
        lay = spec.layout
        gp = g_prime(spec)
        ts = np.linspace(0.0, 1.0 / (2 * gp), 61)
        psi0 = lay.basis_state(0, "g2")
        target = lay.encode(1, ["g1"])

        def pop(psi_b):
            return np.abs(psi_b[:, target]) ** 2

        p_rot = evolve_unitary(rotating_frame_hamiltonian(spec), psi0, ts,
                               observables={"p": pop}, store_states=False).observables["p"]
        p_jc = evolve_unitary(effective_jc_hamiltonian(spec), psi0, ts,
                              observables={"p": pop}, store_states=False).observables["p"]
        assert np.max(np.abs(p_rot - p_jc)) < 0.05
        assert p_rot.max() > 0.99
