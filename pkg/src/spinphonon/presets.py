"""Bundled reference parameter sets (GHz / ns).

``raman_system`` carries the dispersive operating point used for ODRO-style
swaps: omega_m/2pi = 5.6 GHz, g/2pi = 0.257 GHz, Delta/2pi = 0.23 GHz,
Omega1/2pi = 0.5 GHz, Omega2/2pi = 0.023 GHz, with phonon decay 1e-6,
excited decay 0.01, excited dephasing 0.02, spin decay 1e-9 and spin
dephasing 1e-6 GHz.

``stirap_system`` is the resonant configuration for adiabatic gate work:
Delta = 0 and no excited-state pure dephasing; other rates unchanged.
"""

from __future__ import annotations

from dataclasses import replace

from .algebra import HilbertLayout
from .models import DecoherenceSpec, DefectSpec, DriveSpec, SystemSpec

OMEGA_M = 5.6
G_COUPLING = 0.257
DELTA_REF = 0.23
OMEGA1_REF = 0.5
OMEGA2_REF = 0.023

NU1_REF = 100.0
NU2_REF = 98.6


def reference_decoherence(convention: str = "raw", *, excited_dephasing: bool = True,
                          **overrides) -> DecoherenceSpec:
    dec = DecoherenceSpec(
        gamma_m1=1e-6,
        gamma_e1=0.01,
        gamma_e_phi=0.02 if excited_dephasing else 0.0,
        gamma_s1=1e-9,
        gamma_s_phi=1e-6,
        convention=convention,
    )
    return replace(dec, **overrides) if overrides else dec


def stark_balance_offset(g: float, omega_m: float, Delta: float,
                         Omega1: complex, Omega2: complex) -> float:
    """Drive-1 frequency offset cancelling the sideband/carrier Stark imbalance."""
    if Delta == 0:
        return 0.0
    om_r = abs(Omega1) * g / omega_m
    return (om_r**2 - abs(Omega2) ** 2) / (4.0 * Delta)


def raman_system(n_defects: int = 1, phonon_levels: int = 6, *,
                 omega_m: float = OMEGA_M, g: float = G_COUPLING,
                 Delta: float = DELTA_REF, Omega1: complex = OMEGA1_REF,
                 Omega2: complex = OMEGA2_REF, offsets=None,
                 spectral_offsets=None, decoherence: DecoherenceSpec | None = None,
                 compensate_stark: bool = True) -> SystemSpec:
    """Dispersive (swap-regime) system of ``n_defects`` identical defects.

    ``offsets`` detunes each defect's two-photon resonance (GHz); when
    ``compensate_stark`` the drive-induced level-shift imbalance is nulled so
    offset 0 sits on the actual transfer resonance.
    """
    offsets = list(offsets) if offsets is not None else [0.0] * n_defects
    spectral_offsets = list(spectral_offsets) if spectral_offsets is not None else [0.0] * n_defects
    if len(offsets) != n_defects or len(spectral_offsets) != n_defects:
        raise ValueError("offsets/spectral_offsets must have one entry per defect")
    comp = stark_balance_offset(g, omega_m, Delta, Omega1, Omega2) if compensate_stark else 0.0
    defects, drives = [], []
    for i in range(n_defects):
        defect = DefectSpec(g=g, nu1=NU1_REF, nu2=NU2_REF, spectral_offset=spectral_offsets[i])
        defects.append(defect)
        drives.append(DriveSpec.raman(defect, omega_m, Delta, Omega1, Omega2,
                                      offset=offsets[i] + comp))
    return SystemSpec(
        omega_m=omega_m,
        defects=tuple(defects),
        drives=tuple(drives),
        decoherence=decoherence or reference_decoherence(),
        layout=HilbertLayout(phonon_levels=phonon_levels, defect_count=n_defects),
    )


def stirap_system(n_defects: int = 2, phonon_levels: int = 6, *,
                  omega_m: float = OMEGA_M, g: float = G_COUPLING,
                  spectral_offsets=None,
                  decoherence: DecoherenceSpec | None = None) -> SystemSpec:
    """Resonant (Delta = 0) system for dark-state/adiabatic protocols.

    Drive amplitudes are supplied by pulse schedules at run time; the nominal
    DriveSpec amplitudes only record the reference scale.
    """
    spectral_offsets = list(spectral_offsets) if spectral_offsets is not None else [0.0] * n_defects
    if len(spectral_offsets) != n_defects:
        raise ValueError("spectral_offsets must have one entry per defect")
    defects, drives = [], []
    for i in range(n_defects):
        defect = DefectSpec(g=g, nu1=NU1_REF, nu2=NU2_REF, spectral_offset=spectral_offsets[i])
        defects.append(defect)
        drives.append(DriveSpec.raman(defect, omega_m, 0.0, OMEGA1_REF, OMEGA2_REF))
    return SystemSpec(
        omega_m=omega_m,
        defects=tuple(defects),
        drives=tuple(drives),
        decoherence=decoherence or reference_decoherence(excited_dephasing=False),
        layout=HilbertLayout(phonon_levels=phonon_levels, defect_count=n_defects),
    )
