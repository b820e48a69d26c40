"""Physical model: parameter records, Hamiltonians in each frame, dissipators.

Unit conventions
----------------
All configuration values are plain frequencies f = omega/2pi in GHz and times
are in ns.  Hamiltonian builders return matrices in angular units (rad/ns),
i.e. every frequency is multiplied by 2pi internally.

Decay/dephasing rates are also stored as table values in GHz.  How they enter
the Lindblad dissipator is set by ``DecoherenceSpec.convention``:

``raw``
    Lindblad rate kappa = Gamma (1/ns) for every channel; the pure-dephasing
    jump operator is sqrt(Gamma_phi) |x><x|, so the associated coherence
    decays at Gamma_phi / 2.  This mirrors feeding table values straight into
    a collapse-operator list and is the default because it reproduces the
    reference fidelities (see protocols).
``direct``
    kappa = Gamma, dephasing operator sqrt(2 Gamma_phi) |x><x| so coherences
    decay at exactly Gamma_phi.
``angular``
    kappa = 2pi Gamma, dephasing operator sqrt(2 * 2pi Gamma_phi) |x><x| so
    coherences decay at 2pi Gamma_phi (rates treated like frequencies).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .algebra import (
    HilbertLayout,
    annihilation_op,
    dag,
    defect_projector_op,
    defect_transition_op,
    kron_embed,
    level_projector,
    level_transition,
    number_op,
)

TWO_PI = 2.0 * math.pi

RATE_CONVENTIONS = ("raw", "direct", "angular")


class ModelError(ValueError):
    """Raised for invalid physical parameters."""


@dataclass(frozen=True)
class DefectSpec:
    """One four-level defect: coupling and level energies (GHz).

    ``nu1``/``nu2`` are the depths of g1/g2 below the excited state; the spin
    transition is nu1 - nu2.  ``spectral_offset`` shifts the optical
    transition (both branches equally), modelling inhomogeneity or a static
    spectral-diffusion draw.
    """

    g: float
    nu1: float = 100.0
    nu2: float = 98.6
    spectral_offset: float = 0.0

    @property
    def spin_frequency(self) -> float:
        return self.nu1 - self.nu2

    @property
    def nu1_eff(self) -> float:
        return self.nu1 + self.spectral_offset

    @property
    def nu2_eff(self) -> float:
        return self.nu2 + self.spectral_offset


@dataclass(frozen=True)
class DriveSpec:
    """Two-tone drive on one defect.

    ``omega1``/``omega2`` are laser frequencies (GHz), ``Omega1``/``Omega2``
    complex Rabi amplitudes (GHz).  ``Delta`` records the nominal common
    process detuning used at construction: drive 1 measured from the red
    phonon sideband of the g1 <-> e transition, drive 2 from the g2 <-> e
    carrier.
    """

    omega1: float
    omega2: float
    Omega1: complex
    Omega2: complex
    Delta: float

    @classmethod
    def raman(cls, defect: DefectSpec, omega_m: float, Delta: float,
              Omega1: complex, Omega2: complex, offset: float = 0.0) -> "DriveSpec":
        """Drive pair addressing the sideband/carrier with common detuning Delta.

        ``offset`` detunes drive 1, i.e. shifts the two-photon (Raman)
        resonance by +offset.  The laser frequencies satisfy
        omega1 - omega2 = (nu1 - nu2) - omega_m + offset.
        """
        omega1 = defect.nu1 - omega_m - Delta + offset
        omega2 = defect.nu2 - Delta
        return cls(omega1=omega1, omega2=omega2, Omega1=Omega1, Omega2=Omega2, Delta=Delta)

    def delta1(self, defect: DefectSpec, omega_m: float) -> float:
        """Detuning of drive 1 from the red-sideband transition (GHz)."""
        return defect.nu1_eff - omega_m - self.omega1

    def delta2(self, defect: DefectSpec) -> float:
        """Detuning of drive 2 from the carrier transition (GHz)."""
        return defect.nu2_eff - self.omega2


@dataclass(frozen=True)
class DecoherenceSpec:
    """Decay and pure-dephasing rates (GHz table values, see module docstring)."""

    gamma_m1: float = 1e-6
    gamma_e1: float = 0.01
    gamma_e_phi: float = 0.02
    gamma_s1: float = 1e-9
    gamma_s_phi: float = 1e-6
    convention: str = "raw"
    branching_g1: float = 0.5

    def __post_init__(self):
        for name in ("gamma_m1", "gamma_e1", "gamma_e_phi", "gamma_s1", "gamma_s_phi"):
            if getattr(self, name) < 0:
                raise ModelError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.convention not in RATE_CONVENTIONS:
            raise ModelError(f"convention must be one of {RATE_CONVENTIONS}, got {self.convention!r}")
        if not 0.0 <= self.branching_g1 <= 1.0:
            raise ModelError(f"branching_g1 must be within [0, 1], got {self.branching_g1}")

    @property
    def rate_scale(self) -> float:
        return TWO_PI if self.convention == "angular" else 1.0

    @property
    def dephasing_factor(self) -> float:
        # multiplies the Lindblad rate of |x><x| dephasing channels
        return 1.0 if self.convention == "raw" else 2.0

    def decay_rate(self, gamma: float) -> float:
        """Lindblad rate (1/ns) of an energy-decay channel with table value gamma."""
        return self.rate_scale * gamma

    def dephasing_rate(self, gamma: float) -> float:
        """Lindblad rate (1/ns) of a |x><x| dephasing channel with table value gamma."""
        return self.dephasing_factor * self.rate_scale * gamma

    def coherence_decay_rate(self, gamma: float) -> float:
        """Decay rate of an off-diagonal element under a single dephasing channel."""
        return self.dephasing_rate(gamma) / 2.0

    def with_spin_t2(self, t2_ns: float) -> "DecoherenceSpec":
        """Copy with gamma_s_phi set so the g2 coherence decays at 1/t2_ns."""
        if t2_ns <= 0:
            raise ModelError(f"t2_ns must be > 0, got {t2_ns}")
        target = 1.0 / t2_ns
        gamma = 2.0 * target / (self.dephasing_factor * self.rate_scale)
        return replace(self, gamma_s_phi=gamma)


@dataclass(frozen=True)
class SystemSpec:
    """Full system: phonon mode, defects, drives, decoherence, layout."""

    omega_m: float
    defects: tuple[DefectSpec, ...]
    drives: tuple[DriveSpec, ...]
    decoherence: DecoherenceSpec = field(default_factory=DecoherenceSpec)
    layout: HilbertLayout = None

    def __post_init__(self):
        if self.omega_m <= 0:
            raise ModelError(f"omega_m must be > 0, got {self.omega_m}")
        defects = tuple(self.defects)
        drives = tuple(self.drives)
        object.__setattr__(self, "defects", defects)
        object.__setattr__(self, "drives", drives)
        if len(drives) != len(defects):
            raise ModelError(f"{len(defects)} defects but {len(drives)} drives; need one drive per defect")
        if not defects:
            raise ModelError("at least one defect required")
        if self.layout is None:
            object.__setattr__(self, "layout", HilbertLayout(defect_count=len(defects)))
        if self.layout.defect_count != len(defects):
            raise ModelError(
                f"layout.defect_count={self.layout.defect_count} does not match {len(defects)} defects"
            )

    @property
    def n_defects(self) -> int:
        return len(self.defects)

    def omega_r(self, i: int = 0) -> complex:
        """Phonon-sideband Rabi amplitude Omega_R = Omega1 g / omega_m (GHz)."""
        return self.drives[i].Omega1 * self.defects[i].g / self.omega_m


def g_prime(spec: SystemSpec, i: int = 0) -> float:
    """Effective spin-phonon exchange rate g' = g |Omega1 Omega2| / (4 |Delta| omega_m), GHz."""
    drive = spec.drives[i]
    if drive.Delta == 0:
        raise ModelError("g_prime undefined at zero detuning")
    return (spec.defects[i].g * abs(drive.Omega1) * abs(drive.Omega2)
            / (4.0 * abs(drive.Delta) * spec.omega_m))


def cooperativity(spec: SystemSpec, i: int = 0) -> float:
    """C = g'^2 / (Gamma_s Gamma_m), with the spin linewidth taken as the
    dephasing-limited one (table values, convention-independent ratio)."""
    dec = spec.decoherence
    if dec.gamma_s_phi <= 0 or dec.gamma_m1 <= 0:
        raise ModelError("cooperativity requires nonzero spin dephasing and phonon decay")
    gp = g_prime(spec, i)
    return gp**2 / (dec.gamma_s_phi * dec.gamma_m1)


def dispersive_shift_chi(spec: SystemSpec, raman_detuning: float, i: int = 0) -> float:
    """chi = g'^2 / (omega1 - omega2 - omega_s + omega_m), all in GHz.

    ``raman_detuning`` is that (signed) denominator.
    """
    if raman_detuning == 0:
        raise ModelError("raman_detuning must be nonzero")
    return g_prime(spec, i) ** 2 / raman_detuning


def ac_stark_shift(Omega1: complex, omega_m: float, Delta1: float) -> float:
    """Level shift |Omega1|^2 / (4 (omega_m + Delta1)) from the off-resonant carrier (GHz)."""
    denom = omega_m + Delta1
    if denom == 0:
        raise ModelError("omega_m + Delta1 must be nonzero")
    return abs(Omega1) ** 2 / (4.0 * denom)


def stark_compensation_offset(spec: SystemSpec, i: int = 0) -> float:
    """Raman-frequency offset cancelling the drive-induced level-shift imbalance.

    In the rotating frame the |1,g1> and |0,g2> levels are Stark-shifted by
    |Omega_R|^2/(4 Delta) and |Omega_2|^2/(4 Delta); applying this offset to
    drive 1 restores the two-photon resonance to first order.
    """
    drive = spec.drives[i]
    if drive.Delta == 0:
        return 0.0
    om_r = abs(spec.omega_r(i))
    return (om_r**2 - abs(drive.Omega2) ** 2) / (4.0 * drive.Delta)


# ---------------------------------------------------------------------------
# Hamiltonians
# ---------------------------------------------------------------------------

def lab_hamiltonian(spec: SystemSpec, t: float) -> np.ndarray:
    """Lab-frame Hamiltonian at time t (rad/ns), with explicit drive phases.

    Contains the full phonon ladder, the ground-level energies, the
    excited-state strain coupling g (b + b^dag)|e><e| and both laser drives
    rotating at their optical frequencies.  Used for spot cross-validation
    only; protocol runs use the rotating or dark frames.
    """
    layout = spec.layout
    b = annihilation_op(layout.phonon_levels)
    h = kron_embed(layout, [(0, number_op(layout.phonon_levels))]) * spec.omega_m
    for i, (defect, drive) in enumerate(zip(spec.defects, spec.drives)):
        h -= defect.nu1_eff * defect_projector_op(layout, i, "g1")
        h -= defect.nu2_eff * defect_projector_op(layout, i, "g2")
        h += defect.g * kron_embed(layout, [(0, b + dag(b)), (i + 1, level_projector("e"))])
        d1 = 0.5 * drive.Omega1 * np.exp(-1j * TWO_PI * drive.omega1 * t)
        d2 = 0.5 * drive.Omega2 * np.exp(-1j * TWO_PI * drive.omega2 * t)
        t1 = defect_transition_op(layout, i, "g1", "e")
        t2 = defect_transition_op(layout, i, "g2", "e")
        h += d1 * t1 + np.conj(d1) * dag(t1)
        h += d2 * t2 + np.conj(d2) * dag(t2)
    return TWO_PI * h


def rotating_frame_hamiltonian(spec: SystemSpec) -> np.ndarray:
    """Time-independent linearized Hamiltonian in the drive-adapted frame (rad/ns).

    Per defect: diagonal detunings -Delta1 |g1><g1| - Delta2 |g2><g2|, the
    phonon-sideband coupling -(Omega_R/2) b |e><g1| + h.c. with
    Omega_R = Omega1 g / omega_m, and the carrier coupling
    +(Omega_2/2)|e><g2| + h.c.; plus the strain-induced cross term
    -2 (g_i g_j / omega_m)|e_i e_j><e_i e_j| between defect pairs.
    """
    layout = spec.layout
    b = annihilation_op(layout.phonon_levels)
    h = np.zeros((layout.total_dim, layout.total_dim), dtype=complex)
    for i, (defect, drive) in enumerate(zip(spec.defects, spec.drives)):
        h -= drive.delta1(defect, spec.omega_m) * defect_projector_op(layout, i, "g1")
        h -= drive.delta2(defect) * defect_projector_op(layout, i, "g2")
        om_r = spec.omega_r(i)
        sb = kron_embed(layout, [(0, b), (i + 1, level_transition("g1", "e"))])
        h -= 0.5 * om_r * sb + 0.5 * np.conj(om_r) * dag(sb)
        car = defect_transition_op(layout, i, "g2", "e")
        h += 0.5 * drive.Omega2 * car + 0.5 * np.conj(drive.Omega2) * dag(car)
    for i in range(spec.n_defects):
        for j in range(i + 1, spec.n_defects):
            coeff = 2.0 * spec.defects[i].g * spec.defects[j].g / spec.omega_m
            h -= coeff * kron_embed(
                layout, [(i + 1, level_projector("e")), (j + 1, level_projector("e"))]
            )
    return TWO_PI * h


def effective_jc_hamiltonian(spec: SystemSpec) -> np.ndarray:
    """Second-order effective exchange Hamiltonian in the dispersive regime (rad/ns).

    Stark-shifted ground levels plus the phonon-mediated flip-flop
    (Omega_R^* Omega_2 / 8)(1/Delta1 + 1/Delta2) b^dag |g1><g2| + h.c. per
    defect.  The excited level is decoupled at this order.
    """
    layout = spec.layout
    b = annihilation_op(layout.phonon_levels)
    nop = number_op(layout.phonon_levels)
    h = np.zeros((layout.total_dim, layout.total_dim), dtype=complex)
    for i, (defect, drive) in enumerate(zip(spec.defects, spec.drives)):
        d1 = drive.delta1(defect, spec.omega_m)
        d2 = drive.delta2(defect)
        if d1 == 0 or d2 == 0:
            raise ModelError(f"defect {i}: zero detuning in dispersive elimination")
        om_r = spec.omega_r(i)
        if min(abs(d1), abs(d2)) < 5.0 * max(abs(om_r), abs(drive.Omega2)):
            warnings.warn(
                f"defect {i}: detunings ({d1:.4g}, {d2:.4g}) GHz are not large against the "
                f"drives ({abs(om_r):.4g}, {abs(drive.Omega2):.4g}) GHz; "
                "second-order elimination is inaccurate",
                stacklevel=2,
            )
        h -= kron_embed(layout, [(0, d1 * np.eye(layout.phonon_levels) + abs(om_r) ** 2 / (4 * d1) * nop),
                                 (i + 1, level_projector("g1"))])
        h -= (d2 + abs(drive.Omega2) ** 2 / (4 * d2)) * defect_projector_op(layout, i, "g2")
        coeff = np.conj(om_r) * drive.Omega2 / 8.0 * (1.0 / d1 + 1.0 / d2)
        flip = kron_embed(layout, [(0, dag(b)), (i + 1, level_transition("g2", "g1"))])
        h += coeff * flip + np.conj(coeff) * dag(flip)
    return TWO_PI * h


def darkframe_hamiltonian(spec: SystemSpec, amplitudes) -> np.ndarray:
    """Resonant dark-state-frame Hamiltonian for given drive amplitudes (rad/ns).

    ``amplitudes`` is one (Omega_R, Omega_2) complex pair per defect, in GHz:
    -(Omega_R/2) b |e><g1| + h.c. + (Omega_2/2)|e><g2| + h.c. per defect.
    Nonzero drive detunings and spectral offsets enter as diagonal
    -Delta |g1><g1| - Delta |g2><g2| terms.  The strain-induced cross term
    -2 (g_i g_j / omega_m)|e_i e_j><e_i e_j| is retained: it is inert in
    single-excitation protocols but detunes the doubly excited component of
    the second dark state, which suppresses dark-subspace leakage in
    two-excitation gate runs.
    """
    layout = spec.layout
    amplitudes = list(amplitudes)
    if len(amplitudes) != spec.n_defects:
        raise ModelError(f"expected {spec.n_defects} amplitude pairs, got {len(amplitudes)}")
    b = annihilation_op(layout.phonon_levels)
    h = np.zeros((layout.total_dim, layout.total_dim), dtype=complex)
    for i, (defect, drive) in enumerate(zip(spec.defects, spec.drives)):
        om_r, om_2 = amplitudes[i]
        sb = kron_embed(layout, [(0, b), (i + 1, level_transition("g1", "e"))])
        h -= 0.5 * om_r * sb + 0.5 * np.conj(om_r) * dag(sb)
        car = defect_transition_op(layout, i, "g2", "e")
        h += 0.5 * om_2 * car + 0.5 * np.conj(om_2) * dag(car)
        delta = drive.Delta + defect.spectral_offset
        if delta != 0.0:
            h -= delta * (defect_projector_op(layout, i, "g1") + defect_projector_op(layout, i, "g2"))
    for i in range(spec.n_defects):
        for j in range(i + 1, spec.n_defects):
            coeff = 2.0 * spec.defects[i].g * spec.defects[j].g / spec.omega_m
            h -= coeff * kron_embed(
                layout, [(i + 1, level_projector("e")), (j + 1, level_projector("e"))]
            )
    return TWO_PI * h


def excited_cross_shift(spec: SystemSpec, i: int = 0, j: int = 1) -> float:
    """Strain cross-Kerr shift -2 g_i g_j / omega_m of |e_i e_j> (GHz, signed)."""
    return -2.0 * spec.defects[i].g * spec.defects[j].g / spec.omega_m


# ---------------------------------------------------------------------------
# Dissipators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JumpChannel:
    """One Lindblad channel: jump operator sqrt(rate) * op.

    ``rate`` is the final Lindblad rate in 1/ns (conventions already applied);
    ``kind`` is ``phonon_lower`` or ``defect`` with a (from, to) level pair.
    """

    rate: float
    kind: str
    site: int = 0
    from_level: str = ""
    to_level: str = ""
    label: str = ""

    def operator(self, layout: HilbertLayout) -> np.ndarray:
        if self.kind == "phonon_lower":
            base = kron_embed(layout, [(0, annihilation_op(layout.phonon_levels))])
        elif self.kind == "defect":
            base = defect_transition_op(layout, self.site, self.from_level, self.to_level)
        else:
            raise ModelError(f"unknown jump kind {self.kind!r}")
        return math.sqrt(self.rate) * base


def collapse_channels(spec: SystemSpec) -> list[JumpChannel]:
    """Structured Lindblad channels for the spec (zero-rate channels omitted).

    Per system: phonon decay.  Per defect: excited decay branched to g1/g2,
    excited pure dephasing on |e><e|, spin decay g2 -> g1 and spin pure
    dephasing on |g2><g2|.
    """
    dec = spec.decoherence
    channels = []

    def add(rate, kind, site=0, frm="", to="", label=""):
        if rate > 0:
            channels.append(JumpChannel(rate=rate, kind=kind, site=site,
                                        from_level=frm, to_level=to, label=label))

    add(dec.decay_rate(dec.gamma_m1), "phonon_lower", label="phonon_decay")
    for i in range(spec.n_defects):
        ke = dec.decay_rate(dec.gamma_e1)
        add(ke * dec.branching_g1, "defect", i, "e", "g1", f"excited_decay_g1[{i}]")
        add(ke * (1.0 - dec.branching_g1), "defect", i, "e", "g2", f"excited_decay_g2[{i}]")
        add(dec.dephasing_rate(dec.gamma_e_phi), "defect", i, "e", "e", f"excited_dephasing[{i}]")
        add(dec.decay_rate(dec.gamma_s1), "defect", i, "g2", "g1", f"spin_decay[{i}]")
        add(dec.dephasing_rate(dec.gamma_s_phi), "defect", i, "g2", "g2", f"spin_dephasing[{i}]")
    return channels


def collapse_operators(spec: SystemSpec) -> list[np.ndarray]:
    """Dense jump operators sqrt(rate) * op for every active channel."""
    return [ch.operator(spec.layout) for ch in collapse_channels(spec)]


def collapse_block_jumps(spec: SystemSpec):
    """The same channels as structured dissipators for the fast RHS path.

    Entry k corresponds to collapse_channels(spec)[k]; the dense operators
    and these appliers produce identical dynamics.
    """
    from .algebra import LEVEL_INDEX, N_LEVELS
    from .dynamics import BlockJump

    layout = spec.layout
    rest = N_LEVELS**layout.defect_count
    jumps = []
    for ch in collapse_channels(spec):
        if ch.kind == "phonon_lower":
            jumps.append(BlockJump(rate=ch.rate, kind="phonon_lower",
                                   pre=1, nlev=layout.phonon_levels, post=rest))
        else:
            jumps.append(BlockJump(
                rate=ch.rate, kind="site_transition",
                pre=layout.phonon_levels * N_LEVELS**ch.site, nlev=N_LEVELS,
                post=N_LEVELS**(layout.defect_count - ch.site - 1),
                a=LEVEL_INDEX[ch.to_level], b=LEVEL_INDEX[ch.from_level]))
    return jumps
