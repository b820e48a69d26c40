"""STIRAP pulse programs in the (theta, phi) parametrization.

A schedule is an ordered list of stages: ``Hold`` keeps the mixing angle
theta constant while the relative phase phi may ramp linearly; ``Edge``
sweeps theta along a sin^2 profile with phi frozen.  The drive amplitudes
follow

    Omega_R(t) = sin(theta) * scale
    Omega_2(t) = cos(theta) * scale * exp(i phi)

with ``scale`` = sqrt(|Omega_R|^2 + |Omega_2|^2) in GHz, so theta = pi/2 puts
all weight on the phonon-sideband drive and theta = 0 on the carrier.

The controlled-Z program runs theta through
pi/2 -> pi/4 (hold T0) -> 0 (hold T1) -> pi/4 (hold T0) -> pi/2 with a linear
phase ramp phi_dot = 2 pi delta_r2 inside every hold; T0 = 7/(4 delta_r2)
and T1 = (-4k - 7)/(4 delta_r2) solve the phase conditions gamma_1 = 2 k pi
and delta_gamma = pi for winding integer k <= -2.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi

# plateau amplitudes |Omega_R| = |Omega_2| = 23 MHz at theta = pi/4, matching
# the reference carrier drive scale
DEFAULT_SCHEDULE_SCALE = 0.023 * math.sqrt(2.0)

TRANSFER_PHONON_TO_SPINS = "phonon_to_spins"
TRANSFER_SPINS_TO_PHONON = "spins_to_phonon"


class PulseError(ValueError):
    """Raised for invalid schedule parameters or out-of-range evaluation."""


@dataclass(frozen=True)
class ThetaPhiPoint:
    """One point of the pulse program: mixing angle, phase, overall magnitude."""

    theta: float
    phi: float
    scale: float

    @property
    def omega_r(self) -> complex:
        return math.sin(self.theta) * self.scale

    @property
    def omega_2(self) -> complex:
        return math.cos(self.theta) * self.scale * cmath.exp(1j * self.phi)


@dataclass(frozen=True)
class Hold:
    theta: float
    duration: float
    phi_rate: float = 0.0  # rad/ns

    def __post_init__(self):
        if self.duration <= 0:
            raise PulseError(f"hold duration must be > 0, got {self.duration}")


@dataclass(frozen=True)
class Edge:
    theta_from: float
    theta_to: float
    duration: float

    def __post_init__(self):
        if self.duration <= 0:
            raise PulseError(f"edge duration must be > 0, got {self.duration}")


def _stage_theta_endpoints(stage):
    if isinstance(stage, Hold):
        return stage.theta, stage.theta
    return stage.theta_from, stage.theta_to


@dataclass(frozen=True)
class StirapSchedule:
    """Piecewise pulse program; immutable and continuous in theta."""

    stages: tuple
    scale: float = DEFAULT_SCHEDULE_SCALE
    _starts: np.ndarray = field(init=False, repr=False, compare=False)
    _phi_starts: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        stages = tuple(self.stages)
        object.__setattr__(self, "stages", stages)
        if not stages:
            raise PulseError("schedule needs at least one stage")
        if self.scale <= 0:
            raise PulseError(f"scale must be > 0, got {self.scale}")
        prev_end = None
        starts = [0.0]
        phis = [0.0]
        for stage in stages:
            begin, end = _stage_theta_endpoints(stage)
            if prev_end is not None and abs(begin - prev_end) > 1e-12:
                raise PulseError(f"theta discontinuity {prev_end} -> {begin} between stages")
            prev_end = end
            starts.append(starts[-1] + stage.duration)
            dphi = stage.phi_rate * stage.duration if isinstance(stage, Hold) else 0.0
            phis.append(phis[-1] + dphi)
        object.__setattr__(self, "_starts", np.asarray(starts))
        object.__setattr__(self, "_phi_starts", np.asarray(phis))

    @property
    def total_duration(self) -> float:
        return float(self._starts[-1])

    @property
    def boundaries(self) -> np.ndarray:
        """Stage boundary times, for use as integrator breakpoints."""
        return self._starts.copy()

    def _locate(self, t: float):
        if t < -1e-9 or t > self.total_duration + 1e-9:
            raise PulseError(f"t = {t} outside schedule [0, {self.total_duration}]")
        t = min(max(t, 0.0), self.total_duration)
        idx = int(np.searchsorted(self._starts, t, side="right") - 1)
        idx = min(idx, len(self.stages) - 1)
        return idx, t - float(self._starts[idx])

    def theta(self, t: float) -> float:
        idx, tau = self._locate(t)
        stage = self.stages[idx]
        if isinstance(stage, Hold):
            return stage.theta
        x = math.sin(0.5 * math.pi * tau / stage.duration) ** 2
        return stage.theta_from + (stage.theta_to - stage.theta_from) * x

    def theta_rate(self, t: float) -> float:
        idx, tau = self._locate(t)
        stage = self.stages[idx]
        if isinstance(stage, Hold):
            return 0.0
        return ((stage.theta_to - stage.theta_from) * 0.5 * math.pi / stage.duration
                * math.sin(math.pi * tau / stage.duration))

    def phi(self, t: float) -> float:
        idx, tau = self._locate(t)
        stage = self.stages[idx]
        phi = float(self._phi_starts[idx])
        if isinstance(stage, Hold):
            phi += stage.phi_rate * tau
        return phi

    def phi_rate(self, t: float) -> float:
        idx, _ = self._locate(t)
        stage = self.stages[idx]
        return stage.phi_rate if isinstance(stage, Hold) else 0.0

    def point(self, t: float) -> ThetaPhiPoint:
        return ThetaPhiPoint(theta=self.theta(t), phi=self.phi(t), scale=self.scale)

    def evaluate(self, t: float) -> tuple[complex, complex]:
        """Drive amplitudes (Omega_R, Omega_2) in GHz at time t."""
        p = self.point(t)
        return p.omega_r, p.omega_2

    @property
    def max_theta_rate(self) -> float:
        return max((abs(s.theta_to - s.theta_from) * 0.5 * math.pi / s.duration
                    for s in self.stages if isinstance(s, Edge)), default=0.0)

    def adiabaticity(self) -> float:
        """max |dtheta/dt| / (2 pi scale); small values mean adiabatic."""
        return self.max_theta_rate / (TWO_PI * self.scale)

    def sample(self, n_points: int = 1001):
        """(t, theta, phi, Omega_R, Omega_2) arrays on a uniform grid."""
        ts = np.linspace(0.0, self.total_duration, n_points)
        theta = np.array([self.theta(t) for t in ts])
        phi = np.array([self.phi(t) for t in ts])
        om_r = np.sin(theta) * self.scale
        om_2 = np.cos(theta) * self.scale * np.exp(1j * phi)
        return ts, theta, phi, om_r.astype(complex), om_2

    def export_csv(self, path, n_points: int = 1001):
        """Write the pulse program as CSV: t, Re/Im of both amplitudes, theta, phi."""
        ts, theta, phi, om_r, om_2 = self.sample(n_points)
        with open(path, "w", newline="") as fh:
            fh.write("t_ns,omega_r_re_ghz,omega_r_im_ghz,omega_2_re_ghz,omega_2_im_ghz,theta_rad,phi_rad\n")
            for row in zip(ts, om_r.real, om_r.imag, om_2.real, om_2.imag, theta, phi):
                fh.write(",".join(repr(float(v)) for v in row) + "\n")


@dataclass(frozen=True)
class CzDesign:
    """Controlled-Z schedule parameters: phase-ramp rate, winding, edge time."""

    delta_r2: float = 0.3e-3  # GHz
    k: int = -2
    t_rise: float = 1350.0    # ns
    scale: float = DEFAULT_SCHEDULE_SCALE

    def __post_init__(self):
        if self.delta_r2 <= 0:
            raise PulseError(f"delta_r2 must be > 0, got {self.delta_r2}")
        if self.t_rise <= 0:
            raise PulseError(f"t_rise must be > 0, got {self.t_rise}")
        if self.k > -2:
            raise PulseError(f"winding k must be <= -2 for positive hold times, got {self.k}")

    @property
    def T0(self) -> float:
        return 7.0 / (4.0 * self.delta_r2)

    @property
    def T1(self) -> float:
        return (-4.0 * self.k - 7.0) / (4.0 * self.delta_r2)

    @property
    def phi_rate(self) -> float:
        return TWO_PI * self.delta_r2

    @property
    def total_duration(self) -> float:
        return 4 * self.t_rise + 2 * self.T0 + self.T1

    @property
    def predicted_gamma1(self) -> float:
        return 2.0 * math.pi * self.k

    @property
    def predicted_delta_gamma(self) -> float:
        return math.pi


def design_cz_schedule(design: CzDesign) -> StirapSchedule:
    """Time-reversal-symmetric controlled-Z pulse program.

    theta runs pi/2 -> pi/4 -> 0 -> pi/4 -> pi/2 with sin^2 edges of duration
    t_rise and phase ramps phi_dot = 2 pi delta_r2 inside the three holds, so
    the single-excitation phase is 2 pi k and the two-excitation excess
    phase is pi.
    """
    q = math.pi / 4
    stages = (
        Edge(2 * q, q, design.t_rise),
        Hold(q, design.T0, design.phi_rate),
        Edge(q, 0.0, design.t_rise),
        Hold(0.0, design.T1, design.phi_rate),
        Edge(0.0, q, design.t_rise),
        Hold(q, design.T0, design.phi_rate),
        Edge(q, 2 * q, design.t_rise),
    )
    return StirapSchedule(stages=stages, scale=design.scale)


def design_transfer_schedule(t_rise: float, scale: float = DEFAULT_SCHEDULE_SCALE,
                             direction: str = TRANSFER_PHONON_TO_SPINS) -> StirapSchedule:
    """Monotone dark-state transfer: one sin^2 sweep of theta, no phase ramp.

    ``phonon_to_spins`` sweeps theta 0 -> pi/2 (single phonon into the
    collective spin excitation); ``spins_to_phonon`` is the reverse.
    """
    if t_rise <= 0:
        raise PulseError(f"t_rise must be > 0, got {t_rise}")
    if direction == TRANSFER_PHONON_TO_SPINS:
        edge = Edge(0.0, math.pi / 2, t_rise)
    elif direction == TRANSFER_SPINS_TO_PHONON:
        edge = Edge(math.pi / 2, 0.0, t_rise)
    else:
        raise PulseError(f"unknown transfer direction {direction!r}")
    return StirapSchedule(stages=(edge,), scale=scale)
