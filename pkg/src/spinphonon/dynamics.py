"""Time evolution: Lindblad master equation and closed-system propagation.

The integrator is an explicit adaptive Dormand-Prince 5(4) pair with embedded
error estimate and PI-free standard step control.  Reporting times and any
requested breakpoints are hit exactly by clipping steps, so pulse-stage
boundaries never straddle a step.

Density matrices evolve under

    drho/dt = -i[H(t), rho] + sum_k ( L_k rho L_k^dag - 1/2 {L_k^dag L_k, rho} )

evaluated as G + G^dag + jumps with G = A(t) rho, A = -iH - 1/2 sum L^dag L,
which is exact for Hermitian rho and keeps the right-hand side at one sparse
product per stage plus cheap jump terms.  Evolutions can be batched over a
leading axis (shared adaptive steps); per-batch diagonal Hamiltonian shifts
and per-batch channel weights support detuning sweeps and rate scans without
Python-level loops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .algebra import check_density_matrix, check_state_vector

__all__ = [
    "IntegratorConfig",
    "TrajectoryResult",
    "HamiltonianModel",
    "IntegrationError",
    "evolve_master_equation",
    "evolve_unitary",
]


class IntegrationError(RuntimeError):
    """Integration failure; carries the time stamp where it occurred."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} (at t = {t:.6g} ns)")
        self.t = t


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = math.inf
    initial_step: float | None = None

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be > 0")
        if self.max_step <= 0:
            raise ValueError("max_step must be > 0")
        if self.initial_step is not None and self.initial_step <= 0:
            raise ValueError("initial_step must be > 0")


@dataclass
class TrajectoryResult:
    """Sampled evolution: reporting grid, optional states, named observables."""

    times: np.ndarray
    states: list | None
    observables: dict
    final_state: np.ndarray
    meta: dict = field(default_factory=dict)


class HamiltonianModel:
    """H(t) = static + sum_k c_k(t) M_k + conj(c_k(t)) M_k^dag.

    ``terms`` is a sequence of (coefficient function, matrix) pairs; the
    Hermitian conjugate of every term is implied.  Matrices are rad/ns.
    """

    def __init__(self, static: np.ndarray, terms=()):
        self.static = np.asarray(static, dtype=complex)
        self.dim = self.static.shape[0]
        if self.static.shape != (self.dim, self.dim):
            raise ValueError(f"static part must be square, got {self.static.shape}")
        self.terms = [(fn, np.asarray(m, dtype=complex)) for fn, m in terms]
        for _, m in self.terms:
            if m.shape != (self.dim, self.dim):
                raise ValueError("all term matrices must match the static dimension")

    def __call__(self, t: float) -> np.ndarray:
        h = self.static.copy()
        for fn, m in self.terms:
            c = complex(fn(t))
            h += c * m + np.conj(c) * m.conj().T
        return h


# --- Dormand-Prince 5(4) tableau ------------------------------------------

_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_DP_E = _DP_B5 - _DP_B4

_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0
_SAFETY = 0.9


def _error_norm(diff, y0, y1, rel_tol, abs_tol):
    scale = abs_tol + rel_tol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean(np.abs(diff / scale) ** 2)))


def _initial_step_guess(f, t0, y0, f0, rel_tol, abs_tol, span):
    scale = abs_tol + rel_tol * np.abs(y0)
    d0 = float(np.sqrt(np.mean(np.abs(y0 / scale) ** 2)))
    d1 = float(np.sqrt(np.mean(np.abs(f0 / scale) ** 2)))
    h0 = 1e-6 * span if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)  # probe must stay inside the integration domain
    y1 = y0 + h0 * f0
    f1 = f(t0 + h0, y1)
    d2 = float(np.sqrt(np.mean(np.abs((f1 - f0) / scale) ** 2))) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6 * span, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span)


def adaptive_rk45(f, y0, t0, t1, cfg: IntegratorConfig, sample_times, on_sample, t_stops=()):
    """Integrate dy/dt = f(t, y) from t0 to t1, sampling at ``sample_times``.

    ``on_sample(index, t, y)`` fires once per sample time, in order; sample
    times and ``t_stops`` are hit exactly.  Returns (y_final, meta).
    """
    sample_times = np.asarray(sample_times, dtype=float)
    if sample_times.size and (np.any(np.diff(sample_times) <= 0)):
        raise ValueError("sample_times must be strictly increasing")
    events = np.unique(np.concatenate([sample_times, np.asarray(t_stops, dtype=float), [t1]]))
    events = events[(events > t0 + 1e-300) & (events <= t1)]
    sample_set = set(float(t) for t in sample_times)

    y = np.array(y0, dtype=complex, copy=True)
    t = t0
    sample_idx = 0
    if sample_times.size and math.isclose(sample_times[0], t0, rel_tol=0, abs_tol=1e-12):
        on_sample(0, t0, y)
        sample_idx = 1

    n_steps = 0
    n_rejected = 0
    if events.size == 0:
        return y, {"n_steps": 0, "n_rejected": 0}
    k1 = f(t, y)

    h = cfg.initial_step
    if h is None:
        h = _initial_step_guess(f, t, y, k1, cfg.rel_tol, cfg.abs_tol, max(t1 - t0, 1e-30))
    h = min(h, cfg.max_step)

    # balanced error control: the local budget shrinks with sqrt(h/span), so
    # the accumulated error grows only like sqrt(step count) times the
    # tolerance instead of linearly, at moderate extra step cost
    span = max(t1 - t0, 1e-30)

    stages = [None] * 7
    stages[0] = k1
    event_ptr = 0
    while event_ptr < events.size:
        target = events[event_ptr]
        # breakpoints may carry right-hand-side kinks (pulse-stage edges), so
        # the FSAL stage is refreshed rather than reused across them
        stages[0] = f(t, y)
        while t < target - 1e-12 * max(1.0, abs(target)):
            h_step = min(h, cfg.max_step, target - t)
            accepted = False
            while not accepted:
                if h_step < 1e-12 * max(1.0, abs(t)):
                    raise IntegrationError(
                        "step size underflow; the problem appears too stiff for the "
                        "explicit integrator at the requested tolerance", t)
                for i in range(1, 7):
                    yi = y
                    for j, a in enumerate(_DP_A[i]):
                        if a != 0.0:
                            yi = yi + (h_step * a) * stages[j]
                    stages[i] = f(t + _DP_C[i] * h_step, yi)
                y_new = y
                for i in range(7):
                    if _DP_B5[i] != 0.0:
                        y_new = y_new + (h_step * _DP_B5[i]) * stages[i]
                err_vec = np.zeros_like(y)
                for i in range(7):
                    if _DP_E[i] != 0.0:
                        err_vec = err_vec + (h_step * _DP_E[i]) * stages[i]
                if not np.all(np.isfinite(y_new.view(float))):
                    q = math.inf
                else:
                    err = _error_norm(err_vec, y, y_new, cfg.rel_tol, cfg.abs_tol)
                    q = err * math.sqrt(span / h_step)
                if q <= 1.0:
                    accepted = True
                    t = t + h_step
                    y = y_new
                    stages[0] = stages[6]  # FSAL
                    n_steps += 1
                    factor = _MAX_FACTOR if q == 0.0 else min(
                        _MAX_FACTOR, max(_MIN_FACTOR, _SAFETY * q ** (-1.0 / 4.5)))
                    h = min(cfg.max_step, h_step * factor)
                else:
                    n_rejected += 1
                    h_step *= max(_MIN_FACTOR, _SAFETY * q ** (-1.0 / 4.5))
        t = target
        if float(target) in sample_set and sample_idx < sample_times.size:
            on_sample(sample_idx, t, y)
            sample_idx += 1
        event_ptr += 1

    return y, {"n_steps": n_steps, "n_rejected": n_rejected}


# --- Lindblad right-hand side ----------------------------------------------

def _to_csr(m: np.ndarray) -> sp.csr_matrix:
    return sp.csr_matrix(np.asarray(m, dtype=complex))


@dataclass(frozen=True)
class BlockJump:
    """Structured dissipator channel: L = sqrt(rate) * A with A either a
    single defect transition |a><b| (kind ``site_transition``, site factors
    pre x nlev x post of the total dimension) or the truncated phonon
    lowering operator (kind ``phonon_lower``, factors nlev x post).

    L rho L^dag is then a strided block copy, and L^dag L is diagonal, which
    keeps the master-equation right-hand side free of generic matrix
    products for these channels.
    """

    rate: float
    kind: str
    pre: int
    nlev: int
    post: int
    a: int = 0
    b: int = 0

    @property
    def dim(self) -> int:
        return self.pre * self.nlev * self.post

    def ldagl_diag(self) -> np.ndarray:
        v = np.zeros((self.pre, self.nlev, self.post))
        if self.kind == "site_transition":
            v[:, self.b, :] = self.rate
        elif self.kind == "phonon_lower":
            v += self.rate * np.arange(self.nlev)[None, :, None]
        else:
            raise ValueError(f"unknown BlockJump kind {self.kind!r}")
        return v.reshape(self.dim)

    def matrix(self) -> np.ndarray:
        """Dense sqrt(rate) * A, for cross-checks against the generic path."""
        if self.kind == "site_transition":
            op = np.zeros((self.nlev, self.nlev))
            op[self.a, self.b] = 1.0
        else:
            op = np.zeros((self.nlev, self.nlev))
            n = np.arange(1, self.nlev)
            op[n - 1, n] = np.sqrt(n)
        full = np.kron(np.kron(np.eye(self.pre), op), np.eye(self.post))
        return math.sqrt(self.rate) * full.astype(complex)

    def apply_into(self, x: np.ndarray, out: np.ndarray, nb: int, weights=None):
        """out += (w *) L x L^dag for x, out of shape (d, B, d)."""
        shape = (self.pre, self.nlev, self.post, nb, self.pre, self.nlev, self.post)
        x7 = x.reshape(shape)
        o7 = out.reshape(shape)
        if self.kind == "site_transition":
            block = x7[:, self.b, :, :, :, self.b, :]
            if weights is not None:
                block = block * weights[None, None, :, None, None]
            o7[:, self.a, :, :, :, self.a, :] += self.rate * block
        else:
            n = np.arange(1, self.nlev)
            w2 = np.sqrt(np.outer(n, n))  # (nlev-1, nlev-1)
            block = x7[:, 1:, :, :, :, 1:, :] * w2[None, :, None, None, None, :, None]
            if weights is not None:
                block = block * weights[None, None, None, :, None, None, None]
            o7[:, :-1, :, :, :, :-1, :] += self.rate * block


class _LindbladRHS:
    """Compiled RHS operating on rho stored as a (d, B, d) array.

    Structured channels (BlockJump) contribute via strided block copies;
    generic matrices fall back to sparse triple products.  The static part
    of A = -iH - 1/2 sum L^dag L stays a pure diagonal whenever possible.
    """

    def __init__(self, hmodel, h_callable, collapse, dim, n_batch,
                 batch_diag=None, channel_weights=None):
        self.dim = dim
        self.n_batch = n_batch
        d = dim
        a_dense = np.zeros((d, d), dtype=complex)
        diag_extra = np.zeros((d, n_batch), dtype=complex)
        if batch_diag is not None:
            bd = np.asarray(batch_diag, dtype=complex)
            if bd.shape != (n_batch, d):
                raise ValueError(f"batch_diag must have shape {(n_batch, d)}, got {bd.shape}")
            diag_extra += bd.T

        self.block_jumps = []
        self.generic_jumps = []
        for k, L in enumerate(collapse):
            w = None if channel_weights is None else channel_weights.get(k)
            if w is not None:
                w = np.asarray(w, dtype=float)
                if w.shape != (n_batch,):
                    raise ValueError(f"channel weight {k} must have shape ({n_batch},)")
            if isinstance(L, BlockJump):
                if L.dim != d:
                    raise ValueError(f"BlockJump channel {k} has dim {L.dim}, expected {d}")
                ld = L.ldagl_diag()
                if w is None:
                    a_dense[np.arange(d), np.arange(d)] += -0.5 * ld
                else:
                    diag_extra -= 0.5 * np.outer(ld, w)
                self.block_jumps.append((L, w))
            else:
                Lc = _to_csr(L)
                LdL = (Lc.conj().T @ Lc).toarray()
                if w is None:
                    a_dense += -0.5 * LdL
                else:
                    off = LdL - np.diag(np.diag(LdL))
                    if np.max(np.abs(off)) > 1e-12:
                        raise ValueError("per-batch channel weights need diagonal L^dag L")
                    diag_extra -= 0.5 * np.outer(np.diag(LdL), w)
                self.generic_jumps.append((Lc, Lc.conj().T.tocsr(), w))

        self.h_callable = None
        self.terms = []
        if hmodel is not None:
            a_dense += -1j * hmodel.static
            for fn, m in hmodel.terms:
                self.terms.append((fn, _to_csr(-1j * m), _to_csr(-1j * m.conj().T)))
        else:
            self.h_callable = h_callable
        offdiag = a_dense - np.diag(np.diag(a_dense))
        if np.max(np.abs(offdiag)) == 0.0:
            self.a_static = None
            diag_extra += np.diag(a_dense)[:, None]
        else:
            self.a_static = _to_csr(a_dense)
        self.diag_extra = diag_extra if np.any(diag_extra) else None

    def __call__(self, t, x):
        d, nb = self.dim, self.n_batch
        x2 = x.reshape(d, nb * d)
        if self.a_static is not None:
            g2 = self.a_static @ x2
        else:
            g2 = np.zeros_like(x2)
        if self.h_callable is not None:
            g2 += (-1j) * (np.asarray(self.h_callable(t), dtype=complex) @ x2)
        for fn, mneg, mneg_dag in self.terms:
            c = complex(fn(t))
            if c != 0.0:
                g2 += c * (mneg @ x2)
                g2 += np.conj(c) * (mneg_dag @ x2)
        g = g2.reshape(d, nb, d)
        if self.diag_extra is not None:
            g += self.diag_extra[:, :, None] * x
        out = g + g.conj().transpose(2, 1, 0)
        for bj, w in self.block_jumps:
            bj.apply_into(x, out, nb, weights=w)
        for Lc, Ld, w in self.generic_jumps:
            y = (Lc @ x2).reshape(d * nb, d) @ Ld
            y = y.reshape(d, nb, d)
            if w is not None:
                y = y * w[None, :, None]
            out += y
        return out


class _SchrodingerRHS:
    """Compiled -i H psi acting on psi stored as a (d, B) array."""

    def __init__(self, hmodel, h_callable, dim, n_batch, batch_diag=None):
        self.dim = dim
        self.n_batch = n_batch
        self.h_callable = None
        self.terms = []
        if hmodel is not None:
            self.a_static = _to_csr(-1j * hmodel.static)
            for fn, m in hmodel.terms:
                self.terms.append((fn, _to_csr(-1j * m), _to_csr(-1j * m.conj().T)))
        else:
            self.a_static = None
            self.h_callable = h_callable
        self.diag_extra = None
        if batch_diag is not None:
            bd = np.asarray(batch_diag, dtype=complex)
            if bd.shape != (n_batch, dim):
                raise ValueError(f"batch_diag must have shape {(n_batch, dim)}, got {bd.shape}")
            self.diag_extra = (-1j) * bd.T

    def __call__(self, t, psi):
        if self.a_static is not None:
            g = self.a_static @ psi
        else:
            g = (-1j) * (np.asarray(self.h_callable(t), dtype=complex) @ psi)
        for fn, mneg, mneg_dag in self.terms:
            c = complex(fn(t))
            if c != 0.0:
                g = g + c * (mneg @ psi) + np.conj(c) * (mneg_dag @ psi)
        if self.diag_extra is not None:
            g = g + self.diag_extra * psi
        return g


def _check_hermitian_hamiltonian(h, t0):
    m = h(t0) if callable(h) else np.asarray(h)
    dev = float(np.max(np.abs(m - m.conj().T)))
    if dev > 1e-9 * max(1.0, float(np.max(np.abs(m)))):
        raise ValueError(f"Hamiltonian is not Hermitian (max deviation {dev:.3g} rad/ns)")
    return m.shape[0]


def _normalize_h(h):
    """Return (hmodel, h_callable) with exactly one non-None."""
    if isinstance(h, HamiltonianModel):
        return h, None
    if callable(h):
        return None, h
    return HamiltonianModel(np.asarray(h, dtype=complex)), None


def evolve_master_equation(h, collapse, rho0, times, cfg: IntegratorConfig | None = None, *,
                           t_stops=(), observables=None, store_states=True,
                           batch_diag=None, channel_weights=None,
                           validate=True) -> TrajectoryResult:
    """Integrate the Lindblad equation on a reporting grid.

    Parameters
    ----------
    h : Hamiltonian; constant matrix, callable t -> matrix, or HamiltonianModel.
    collapse : sequence of jump operators (rates folded in, i.e. sqrt(kappa) A).
    rho0 : initial density matrix (d, d), or a batch (B, d, d) evolving under
        shared adaptive steps.
    times : increasing reporting grid (ns); integration spans times[0]..times[-1].
    t_stops : additional breakpoints the stepper must not straddle (pulse
        stage boundaries).
    observables : mapping name -> callable(rho_batch (B, d, d)) -> (B,) array;
        evaluated at every reporting time.
    batch_diag : optional (B, d) complex per-batch additive diagonal of
        A = -iH - 1/2 sum L^dag L (use -1j * h_diag for Hamiltonian shifts).
    channel_weights : optional {channel_index: (B,) weights} scaling individual
        dissipators per batch entry (requires diagonal L^dag L).

    States are never renormalized inside the stepper; the trace drift is
    reported in ``meta['max_trace_drift']``.
    """
    cfg = cfg or IntegratorConfig()
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 1:
        raise ValueError("times must be a 1-D grid with at least one entry")
    rho0 = np.asarray(rho0, dtype=complex)
    batched = rho0.ndim == 3
    rho_b = rho0 if batched else rho0[None, :, :]
    n_batch, d = rho_b.shape[0], rho_b.shape[1]
    if rho_b.shape != (n_batch, d, d):
        raise ValueError(f"rho0 must be (d, d) or (B, d, d), got {rho0.shape}")
    if validate:
        for r in rho_b:
            check_density_matrix(r)

    hmodel, h_callable = _normalize_h(h)
    hdim = _check_hermitian_hamiltonian(
        hmodel.static if hmodel is not None else h_callable, times[0])
    if hdim != d:
        raise ValueError(f"Hamiltonian dim {hdim} does not match state dim {d}")

    rhs = _LindbladRHS(hmodel, h_callable, collapse, d, n_batch,
                       batch_diag=batch_diag, channel_weights=channel_weights)

    observables = observables or {}
    obs_data = {name: [None] * times.size for name in observables}
    states = [] if store_states else None
    traces = np.zeros((times.size, n_batch))

    def on_sample(idx, t, x):
        rho_now = np.ascontiguousarray(x.transpose(1, 0, 2))
        traces[idx] = np.trace(rho_now, axis1=1, axis2=2).real
        for name, fn in observables.items():
            obs_data[name][idx] = np.asarray(fn(rho_now))
        if store_states:
            states.append(rho_now if batched else rho_now[0])

    x0 = np.ascontiguousarray(rho_b.transpose(1, 0, 2))
    x_final, meta = adaptive_rk45(rhs, x0, times[0], times[-1], cfg, times, on_sample, t_stops)
    final = np.ascontiguousarray(x_final.transpose(1, 0, 2))

    obs_out = {}
    for name, rows in obs_data.items():
        arr = np.stack(rows)
        obs_out[name] = arr if batched else arr[:, 0] if arr.ndim > 1 else arr

    meta["max_trace_drift"] = float(np.max(np.abs(traces - traces[0:1]))) if times.size else 0.0
    herm_dev = float(np.max(np.abs(final - final.conj().transpose(0, 2, 1))))
    meta["final_hermiticity_deviation"] = herm_dev
    return TrajectoryResult(times=times, states=states, observables=obs_out,
                            final_state=final if batched else final[0], meta=meta)


def evolve_unitary(h, psi0, times, cfg: IntegratorConfig | None = None, *,
                   t_stops=(), observables=None, tracked_amplitudes=None,
                   store_states=True, batch_diag=None, validate=True) -> TrajectoryResult:
    """Schroedinger evolution of a state vector (or (B, d) batch).

    ``tracked_amplitudes`` maps names to basis indices (or vectors); their
    complex overlaps <ref|psi(t)> are recorded as observables, which is how
    accumulated phases of designated basis states are extracted.

    State-vector evolutions are cheap, so the default tolerance is tighter
    than the master-equation default; this keeps the norm drift at the 1e-9
    level over full protocol runs.
    """
    cfg = cfg or IntegratorConfig(rel_tol=1e-10, abs_tol=1e-12)
    times = np.asarray(times, dtype=float)
    psi0 = np.asarray(psi0, dtype=complex)
    batched = psi0.ndim == 2
    psi_b = psi0 if batched else psi0[None, :]
    n_batch, d = psi_b.shape
    if validate:
        for p in psi_b:
            check_state_vector(p)

    hmodel, h_callable = _normalize_h(h)
    _check_hermitian_hamiltonian(hmodel.static if hmodel is not None else h_callable, times[0])

    rhs = _SchrodingerRHS(hmodel, h_callable, d, n_batch, batch_diag=batch_diag)

    observables = observables or {}
    tracked = {}
    for name, ref in (tracked_amplitudes or {}).items():
        if np.isscalar(ref) or isinstance(ref, (int, np.integer)):
            v = np.zeros(d, dtype=complex)
            v[int(ref)] = 1.0
        else:
            v = np.asarray(ref, dtype=complex)
        tracked[name] = v

    obs_data = {name: [None] * times.size for name in observables}
    amp_data = {name: np.zeros((times.size, n_batch), dtype=complex) for name in tracked}
    norms = np.zeros((times.size, n_batch))
    states = [] if store_states else None

    def on_sample(idx, t, x):
        psi_now = np.ascontiguousarray(x.T)
        norms[idx] = np.linalg.norm(psi_now, axis=1)
        for name, fn in observables.items():
            obs_data[name][idx] = np.asarray(fn(psi_now))
        for name, v in tracked.items():
            amp_data[name][idx] = psi_now @ v.conj()
        if store_states:
            states.append(psi_now if batched else psi_now[0])

    x0 = np.ascontiguousarray(psi_b.T)
    x_final, meta = adaptive_rk45(rhs, x0, times[0], times[-1], cfg, times, on_sample, t_stops)
    final = np.ascontiguousarray(x_final.T)

    obs_out = {}
    for name, rows in obs_data.items():
        arr = np.stack(rows)
        obs_out[name] = arr if batched else arr[:, 0] if arr.ndim > 1 else arr
    for name, arr in amp_data.items():
        obs_out["amp:" + name] = arr if batched else arr[:, 0]

    meta["max_norm_drift"] = float(np.max(np.abs(norms - 1.0))) if times.size else 0.0
    return TrajectoryResult(times=times, states=states, observables=obs_out,
                            final_state=final if batched else final[0], meta=meta)
