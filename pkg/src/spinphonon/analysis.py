"""Closed-form dark states, geometric phases, leakage and channel metrics.

The zero-excitation-energy (dark) eigenstates of the resonant frame live in
small excitation sectors; this module provides them in closed form together
with the matching sector Hamiltonians, the geometric-phase integrals along
pulse schedules, the dark-subspace leakage dynamics, state fidelities and
two-qubit process tomography in the Pauli basis.

All sector Hamiltonians are returned in rad/ns given GHz amplitudes, matching
the full-space builders in :mod:`spinphonon.models`.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .algebra import HilbertLayout
from .dynamics import IntegratorConfig, TrajectoryResult, adaptive_rk45
from .pulses import StirapSchedule

TWO_PI = 2.0 * math.pi

ONE_EXC_BASIS = ("1,g1", "0,g2", "0,e")
TWO_EXC_BASIS = ("2,g1g1", "0,g2g2", "0,ee", "1,(g1g2)s", "1,(g1e)s", "0,(g2e)s")
SYMMETRIC_BASIS = ("1,g1..g1", "0,S_e", "0,S_g2")


class AnalysisError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Dark states and sector Hamiltonians
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DarkState:
    """Normalized zero-energy eigenstate over a named sector basis."""

    labels: tuple
    amplitudes: np.ndarray
    excitation_number: int
    family: str  # one_excitation | two_excitation | symmetric
    n_defects: int = 1

    def amplitude(self, label: str) -> complex:
        return complex(self.amplitudes[self.labels.index(label)])

    @property
    def vector(self) -> np.ndarray:
        return self.amplitudes

    def embed(self, layout: HilbertLayout) -> np.ndarray:
        """The state as a full-space vector over ``layout``."""
        basis = sector_basis_vectors(self.family, layout)
        return basis.T @ self.amplitudes


def _normalize(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def dark_state_single(omega_r: complex, omega_2: complex) -> DarkState:
    """One-excitation dark state (Omega_2 |1,g1> + Omega_R |0,g2>), normalized."""
    if omega_r == 0 and omega_2 == 0:
        raise AnalysisError("dark state undefined for vanishing amplitudes")
    v = np.array([omega_2, omega_r, 0.0], dtype=complex)
    return DarkState(ONE_EXC_BASIS, _normalize(v), 1, "one_excitation", 1)


def dark_state_two(omega_r: complex, omega_2: complex) -> DarkState:
    """Two-excitation spin-phonon dark state of two identical defects."""
    if omega_r == 0 or omega_2 == 0:
        raise AnalysisError("two-excitation dark state requires both amplitudes nonzero")
    v = np.array([
        omega_2 / (2.0 * omega_r),
        omega_r / (math.sqrt(2.0) * omega_2),
        0.0,
        1.0,
        0.0,
        0.0,
    ], dtype=complex)
    return DarkState(TWO_EXC_BASIS, _normalize(v), 2, "two_excitation", 2)


def dark_state_two_orthogonal(omega_r: complex, omega_2: complex) -> DarkState:
    """The second (orthogonal) dark state of the two-excitation sector.

    Carries |0,ee> weight; barely populated under adiabatic driving but the
    target of the leakage analysis.
    """
    if omega_r == 0 or omega_2 == 0:
        raise AnalysisError("orthogonal dark state requires both amplitudes nonzero")
    alpha = cmath.phase(omega_r)
    phi = cmath.phase(omega_2) - alpha
    theta = math.atan2(abs(omega_r), abs(omega_2))
    v = _d2_orthogonal_vector(theta, phi)
    # restore the gauge of a complex Omega_R (the |0,ee> component rotates at 2 alpha)
    gauge = np.array([1.0, 1.0, cmath.exp(2j * alpha), 1.0, 1.0, 1.0], dtype=complex)
    return DarkState(TWO_EXC_BASIS, v * gauge, 2, "two_excitation", 2)


def dark_state_collective(n_defects: int, omega_r: complex, omega_2: complex) -> DarkState:
    """Collective dark state (Omega_2 |S1> + sqrt(N) Omega_R |S3>) of N defects."""
    if n_defects < 1:
        raise AnalysisError("n_defects must be >= 1")
    if omega_r == 0 and omega_2 == 0:
        raise AnalysisError("dark state undefined for vanishing amplitudes")
    v = np.array([omega_2, 0.0, math.sqrt(n_defects) * omega_r], dtype=complex)
    return DarkState(SYMMETRIC_BASIS, _normalize(v), 1, "symmetric", n_defects)


def _d2_vector(theta: float, phi: float) -> np.ndarray:
    """|D2> in the (theta, phi) parametrization over TWO_EXC_BASIS."""
    c, s = math.cos(theta), math.sin(theta)
    norm = math.sqrt(2.0 - c**4)
    return np.array([
        c**2 / norm * cmath.exp(1j * phi),
        math.sqrt(2.0) * s**2 / norm * cmath.exp(-1j * phi),
        0.0,
        2.0 * s * c / norm,
        0.0,
        0.0,
    ], dtype=complex)


def _d2_orthogonal_vector(theta: float, phi: float) -> np.ndarray:
    """|D2~> in the (theta, phi) parametrization over TWO_EXC_BASIS."""
    c, s = math.cos(theta), math.sin(theta)
    norm = math.sqrt((3.0 + 2.0 * c**2 - 3.0 * c**4) * (2.0 - c**4))
    return np.array([
        -math.sqrt(2.0) * s**2,
        (2.0 * c**4 - 3.0 * c**2) * cmath.exp(-2j * phi),
        2.0 - c**4,
        math.sqrt(2.0) * s * c * (1.0 + s**2) * cmath.exp(-1j * phi),
        0.0,
        0.0,
    ], dtype=complex) / norm


def one_excitation_hamiltonian(omega_r: complex, omega_2: complex,
                               delta1: float = 0.0, delta2: float = 0.0) -> np.ndarray:
    """Single-defect sector Hamiltonian over ONE_EXC_BASIS (rad/ns)."""
    h = np.array([
        [-delta1, 0.0, -0.5 * np.conj(omega_r)],
        [0.0, -delta2, 0.5 * np.conj(omega_2)],
        [-0.5 * omega_r, 0.5 * omega_2, 0.0],
    ], dtype=complex)
    return TWO_PI * h


def two_excitation_hamiltonian(omega_r: complex, omega_2: complex) -> np.ndarray:
    """Two-defect symmetric sector Hamiltonian over TWO_EXC_BASIS (rad/ns)."""
    r, w = omega_r, omega_2
    rc, wc = np.conj(r), np.conj(w)
    s2 = math.sqrt(2.0)
    h = np.array([
        [0, 0, 0, 0, -rc, 0],
        [0, 0, 0, 0, 0, wc / s2],
        [0, 0, 0, 0, -r / s2, w / s2],
        [0, 0, 0, 0, wc / 2, -rc / 2],
        [-r, 0, -rc / s2, w / 2, 0, 0],
        [0, w / s2, wc / s2, -r / 2, 0, 0],
    ], dtype=complex)
    return TWO_PI * h


def symmetric_sector_hamiltonian(n_defects: int, omega_r: complex, omega_2: complex) -> np.ndarray:
    """Collective one-excitation Hamiltonian over SYMMETRIC_BASIS (rad/ns)."""
    rn = math.sqrt(n_defects) * omega_r
    h = np.array([
        [0.0, -0.5 * np.conj(rn), 0.0],
        [-0.5 * rn, 0.0, 0.5 * omega_2],
        [0.0, 0.5 * np.conj(omega_2), 0.0],
    ], dtype=complex)
    return TWO_PI * h


def sector_basis_vectors(family: str, layout: HilbertLayout) -> np.ndarray:
    """Rows are the sector basis states embedded in ``layout``'s full space."""
    s2 = math.sqrt(2.0)
    if family == "one_excitation":
        if layout.defect_count != 1:
            raise AnalysisError("one_excitation sector requires a single defect")
        rows = [layout.basis_state(1, "g1"), layout.basis_state(0, "g2"),
                layout.basis_state(0, "e")]
    elif family == "two_excitation":
        if layout.defect_count != 2:
            raise AnalysisError("two_excitation sector requires two defects")
        rows = [
            layout.basis_state(2, "g1", "g1"),
            layout.basis_state(0, "g2", "g2"),
            layout.basis_state(0, "e", "e"),
            (layout.basis_state(1, "g1", "g2") + layout.basis_state(1, "g2", "g1")) / s2,
            (layout.basis_state(1, "g1", "e") + layout.basis_state(1, "e", "g1")) / s2,
            (layout.basis_state(0, "g2", "e") + layout.basis_state(0, "e", "g2")) / s2,
        ]
    elif family == "symmetric":
        n = layout.defect_count
        g1s = ["g1"] * n
        s1 = layout.basis_state(1, *g1s)
        se = np.zeros(layout.total_dim, dtype=complex)
        sg2 = np.zeros(layout.total_dim, dtype=complex)
        for i in range(n):
            lev_e = list(g1s)
            lev_e[i] = "e"
            se += layout.basis_state(0, *lev_e)
            lev_2 = list(g1s)
            lev_2[i] = "g2"
            sg2 += layout.basis_state(0, *lev_2)
        rows = [s1, se / math.sqrt(n), sg2 / math.sqrt(n)]
    else:
        raise AnalysisError(f"unknown sector family {family!r}")
    return np.asarray(rows)


def dicke_target_state(layout: HilbertLayout) -> np.ndarray:
    """|0> phonon x one-excitation Dicke state over all defects."""
    return sector_basis_vectors("symmetric", layout)[2]


# ---------------------------------------------------------------------------
# Geometric phases along a schedule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeometricPhases:
    gamma1: float
    gamma2: float
    delta_gamma: float


def _simpson(f, a: float, b: float, n: int) -> float:
    if n % 2 == 1:
        n += 1
    x = np.linspace(a, b, n + 1)
    y = np.array([f(t) for t in x])
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return float((b - a) / (3.0 * n) * np.sum(w * y))


def geometric_phases(schedule: StirapSchedule, n_per_stage: int = 200) -> GeometricPhases:
    """Quadrature of the dark-state phase integrals along the schedule.

    gamma1 = -int cos^2(theta) dphi,
    gamma2 = -int (cos^4 - 2 sin^4)/(2 - cos^4) dphi,
    delta_gamma = int 2 cos^4 sin^2 / (2 - cos^4) dphi.

    phi ramps live inside stages, so each stage is integrated with its own
    phase rate (boundary points are otherwise ambiguous between stages).
    """

    def integrands(th):
        c, s = math.cos(th), math.sin(th)
        return (-c**2, -(c**4 - 2 * s**4) / (2 - c**4), 2 * c**4 * s**2 / (2 - c**4))

    g1 = g2 = dg = 0.0
    bounds = schedule.boundaries
    for stage, a, b in zip(schedule.stages, bounds[:-1], bounds[1:]):
        rate = getattr(stage, "phi_rate", 0.0)
        if rate == 0.0:
            continue
        for which in range(3):
            contribution = _simpson(
                lambda t, w=which: integrands(schedule.theta(min(t, b - 1e-12)))[w] * rate,
                a, b, n_per_stage)
            if which == 0:
                g1 += contribution
            elif which == 1:
                g2 += contribution
            else:
                dg += contribution
    return GeometricPhases(gamma1=g1, gamma2=g2, delta_gamma=dg)


# ---------------------------------------------------------------------------
# Dark-subspace leakage
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LeakageBound:
    """Analytic plateau bound on the orthogonal-dark-state population."""

    eta: float = (2.0 / 7.0) * math.sqrt(2.0 / 13.0)

    @property
    def bound(self) -> float:
        return 4.0 * self.eta**2  # = 32/637

    def plateau_estimate(self, phi: float) -> float:
        return 4.0 * self.eta**2 * math.sin(0.5 * phi) ** 2


def leakage_upper_bound() -> LeakageBound:
    return LeakageBound()


def dark_subspace_leakage(schedule: StirapSchedule, cfg: IntegratorConfig | None = None,
                          n_samples: int = 801, kerr_shift: float | None = None) -> TrajectoryResult:
    """Integrate the coupled dark-state amplitudes (C2, C2~) along the schedule.

    The evolution dC/dt = -M(t) C with M_ij = <D_i | d/dt D_j> mixes the two
    dark states through the pulse-frame connection.  ``kerr_shift`` (GHz,
    signed; default the reference -2 g^2/omega_m) adds the strain-induced
    diagonal energy -i eps(t) C2~ with eps = 2pi * kerr_shift * |<ee|D2~>|^2,
    which detunes the doubly excited component of the orthogonal dark state
    and suppresses the mixing.  Pass ``kerr_shift=0`` for the bare degenerate
    dynamics.  ``observables['leakage']`` holds |C2~|^2.
    """
    cfg = cfg or IntegratorConfig()
    T = schedule.total_duration
    h_fd = min(1e-3, T * 1e-6)
    if kerr_shift is None:
        from .presets import G_COUPLING, OMEGA_M
        kerr_shift = -2.0 * G_COUPLING**2 / OMEGA_M
    bounds = schedule.boundaries

    def frame(t):
        return np.stack([
            _d2_vector(schedule.theta(t), schedule.phi(t)),
            _d2_orthogonal_vector(schedule.theta(t), schedule.phi(t)),
        ])

    def make_rhs(a, b):
        # the phase-ramp rate jumps at stage boundaries, so each stage is
        # integrated with its own coupling and a stencil clamped inside it
        def coupling(t):
            lo = max(a, t - h_fd)
            hi = min(b, t + h_fd)
            f_hi, f_lo = frame(hi), frame(lo)
            dv = (f_hi - f_lo) / (hi - lo)
            v = 0.5 * (f_hi + f_lo)  # midpoint frame, O(h_fd^2) accurate
            m = v.conj() @ dv.T
            if kerr_shift:
                c = math.cos(schedule.theta(t))
                w_ee = (2.0 - c**4) / (3.0 + 2.0 * c**2 - 3.0 * c**4)  # |<ee|D2~>|^2
                m[1, 1] += 1j * TWO_PI * kerr_shift * w_ee
            return m

        return lambda t, y: -(coupling(t) @ y)

    times = np.linspace(0.0, T, n_samples)
    y = np.array([1.0, 0.0], dtype=complex)
    samples = np.zeros((n_samples, 2), dtype=complex)
    samples[0] = y
    meta = {"n_steps": 0, "n_rejected": 0}
    for k in range(len(bounds) - 1):
        a, b = float(bounds[k]), float(bounds[k + 1])
        inside = np.nonzero((times > a + 1e-12) & (times <= b + 1e-12))[0]
        seg_times = times[inside]

        def on_sample(idx, t, yv, inside=inside):
            samples[inside[idx]] = yv

        y, seg_meta = adaptive_rk45(make_rhs(a, b), y, a, b, cfg, seg_times, on_sample)
        meta["n_steps"] += seg_meta["n_steps"]
        meta["n_rejected"] += seg_meta["n_rejected"]

    leak = np.abs(samples[:, 1]) ** 2
    meta["max_leakage"] = float(np.max(leak))
    meta["final_leakage"] = float(leak[-1])
    return TrajectoryResult(times=times, states=None,
                            observables={"c2": samples[:, 0], "c2_tilde": samples[:, 1],
                                         "leakage": leak},
                            final_state=y, meta=meta)


# ---------------------------------------------------------------------------
# Fidelities
# ---------------------------------------------------------------------------

def state_fidelity(rho: np.ndarray, target: np.ndarray) -> float:
    """Overlap fidelity tr(rho_ideal rho); <psi|rho|psi> for a pure target."""
    rho = np.asarray(rho, dtype=complex)
    target = np.asarray(target, dtype=complex)
    if target.ndim == 1:
        if rho.shape != (target.size, target.size):
            raise AnalysisError(f"dimension mismatch: rho {rho.shape}, target {target.shape}")
        return float(np.real(target.conj() @ rho @ target))
    if rho.shape != target.shape:
        raise AnalysisError(f"dimension mismatch: rho {rho.shape}, target {target.shape}")
    return float(np.real(np.trace(target @ rho)))


# ---------------------------------------------------------------------------
# Two-qubit process tomography
# ---------------------------------------------------------------------------

_PAULI_1Q = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

PAULI_LABELS_2Q = tuple(a + b for a in "IXYZ" for b in "IXYZ")
PAULI_MATRICES_2Q = np.stack([np.kron(_PAULI_1Q[l[0]], _PAULI_1Q[l[1]]) for l in PAULI_LABELS_2Q])

_SINGLE_INPUTS = (
    ("0", np.array([1.0, 0.0], dtype=complex)),
    ("1", np.array([0.0, 1.0], dtype=complex)),
    ("+", np.array([1.0, 1.0], dtype=complex) / math.sqrt(2.0)),
    ("+i", np.array([1.0, 1.0j], dtype=complex) / math.sqrt(2.0)),
)

CZ_UNITARY = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)


def tomography_input_states():
    """The 16 standard product inputs as (label, 4-vector) pairs; qubit A first."""
    out = []
    for la, va in _SINGLE_INPUTS:
        for lb, vb in _SINGLE_INPUTS:
            out.append((f"{la},{lb}", np.kron(va, vb)))
    return out


@dataclass
class ChiMatrix:
    """Process matrix in the two-qubit Pauli basis (II, IX, ..., ZZ)."""

    matrix: np.ndarray
    labels: tuple = PAULI_LABELS_2Q
    meta: dict = field(default_factory=dict)

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def normalized(self) -> "ChiMatrix":
        tr = self.trace
        if tr <= 0:
            raise AnalysisError(f"chi trace {tr} is not positive; cannot normalize")
        return ChiMatrix(self.matrix / tr, self.labels, dict(self.meta))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))[0])

    def export_csv(self, path):
        with open(path, "w", newline="") as fh:
            header = ["pauli"] + [f"{l}_re" for l in self.labels] + [f"{l}_im" for l in self.labels]
            fh.write(",".join(header) + "\n")
            for i, lab in enumerate(self.labels):
                row = [lab] + [repr(float(v)) for v in self.matrix[i].real] \
                    + [repr(float(v)) for v in self.matrix[i].imag]
                fh.write(",".join(row) + "\n")


def chi_from_input_output_pairs(inputs, outputs, *, physicality_tol: float = 1e-6) -> ChiMatrix:
    """Linear-inversion chi reconstruction from 16 (rho_in, rho_out) pairs.

    Output states failing Hermiticity/positivity/trace checks beyond
    ``physicality_tol`` are recorded in the metadata; if the reconstructed
    chi itself is unphysical beyond the tolerance it is projected onto the
    positive cone (noted in ``meta['projected']``).
    """
    inputs = [np.asarray(r, dtype=complex) for r in inputs]
    outputs = [np.asarray(r, dtype=complex) for r in outputs]
    if len(inputs) != 16 or len(outputs) != 16:
        raise AnalysisError("need exactly 16 input/output pairs")
    warnings_ = []
    for j, r in enumerate(outputs):
        herm = float(np.max(np.abs(r - r.conj().T)))
        tr = float(np.real(np.trace(r)))
        mineig = float(np.linalg.eigvalsh(0.5 * (r + r.conj().T))[0])
        if herm > physicality_tol or mineig < -physicality_tol or tr > 1.0 + physicality_tol:
            warnings_.append(
                f"output {j}: hermiticity={herm:.2e}, min_eig={mineig:.2e}, trace={tr:.8f}")

    s_in = np.stack([r.reshape(16) for r in inputs], axis=1)
    s_out = np.stack([r.reshape(16) for r in outputs], axis=1)
    transfer = s_out @ np.linalg.inv(s_in)

    # Choi matrix sum_mn |m><n| (x) E(|m><n|)
    choi = np.zeros((16, 16), dtype=complex)
    for m in range(4):
        for n in range(4):
            e_mn = np.zeros((4, 4), dtype=complex)
            e_mn[m, n] = 1.0
            out = (transfer @ e_mn.reshape(16)).reshape(4, 4)
            choi += np.kron(e_mn, out)

    pauli_vecs = np.stack([p.flatten(order="F") for p in PAULI_MATRICES_2Q])
    chi = (pauli_vecs.conj() @ choi @ pauli_vecs.T) / 16.0
    chi = 0.5 * (chi + chi.conj().T)

    meta = {"output_warnings": warnings_, "projected": False}
    cm = ChiMatrix(chi, meta=meta)
    if cm.min_eigenvalue() < -physicality_tol:
        vals, vecs = np.linalg.eigh(chi)
        chi = (vecs * np.clip(vals, 0.0, None)) @ vecs.conj().T
        meta["projected"] = True
        cm = ChiMatrix(chi, meta=meta)
    meta["trace"] = cm.trace
    meta["min_eigenvalue"] = cm.min_eigenvalue()
    return cm


def process_tomography_2q(channel) -> ChiMatrix:
    """Run the 16 standard product inputs through ``channel`` and invert to chi.

    ``channel`` maps a 4x4 input density matrix to the output density matrix
    (possibly trace-decreasing when the physical channel leaks).
    """
    ins, outs = [], []
    for _, vec in tomography_input_states():
        rho = np.outer(vec, vec.conj())
        ins.append(rho)
        outs.append(channel(rho))
    return chi_from_input_output_pairs(ins, outs)


def chi_from_unitary(u: np.ndarray) -> ChiMatrix:
    """Rank-one chi of an ideal two-qubit unitary."""
    u = np.asarray(u, dtype=complex)
    c = np.array([np.trace(p @ u) / 4.0 for p in PAULI_MATRICES_2Q])
    return ChiMatrix(np.outer(c, c.conj()), meta={"unitary": True})


def process_fidelity(chi: ChiMatrix, chi_ideal: ChiMatrix) -> float:
    """tr(chi_ideal chi)."""
    return float(np.real(np.trace(chi_ideal.matrix @ chi.matrix)))


def average_gate_fidelity(f_process: float, dim: int = 4) -> float:
    """(d F_pro + 1)/(d + 1) conversion from process to average gate fidelity."""
    return (dim * f_process + 1.0) / (dim + 1.0)
