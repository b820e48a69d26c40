"""Hilbert-space bookkeeping and dense operator algebra.

The simulated system is one truncated bosonic (phonon) mode tensored with N
four-level defects.  Site ordering is fixed everywhere in this package:
site 0 is the phonon, sites 1..N are the defects in index order.  Defect
levels are stored in the order (g1, g2, g3, e); g3 never participates in any
drive and serves as the spectator qubit level.

Operators, state vectors and density matrices are plain complex numpy arrays
over this product basis.  The helpers below build them and check the
algebraic invariants (Hermiticity, unit trace, positivity) that the rest of
the package relies on.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

LEVELS = ("g1", "g2", "g3", "e")
N_LEVELS = len(LEVELS)
LEVEL_INDEX = {name: i for i, name in enumerate(LEVELS)}

HERMITICITY_ATOL = 1e-12
STATE_NORM_ATOL = 1e-10
TRACE_ATOL = 1e-9
POSITIVITY_FLOOR = -1e-8


class AlgebraError(ValueError):
    """Raised for dimension mismatches and invalid site/level arguments."""


@dataclass(frozen=True)
class HilbertLayout:
    """Dimensional layout of the (phonon x defects) tensor space.

    ``phonon_levels`` is the truncation dimension n_max + 1; the default of 6
    keeps Fock states 0..5.
    """

    phonon_levels: int = 6
    defect_count: int = 1

    def __post_init__(self):
        if self.phonon_levels < 2:
            raise AlgebraError(f"phonon_levels must be >= 2, got {self.phonon_levels}")
        if self.defect_count < 1:
            raise AlgebraError(f"defect_count must be >= 1, got {self.defect_count}")

    @property
    def total_dim(self) -> int:
        return self.phonon_levels * N_LEVELS**self.defect_count

    @property
    def site_dims(self) -> tuple[int, ...]:
        return (self.phonon_levels,) + (N_LEVELS,) * self.defect_count

    @property
    def n_sites(self) -> int:
        return 1 + self.defect_count

    def encode(self, phonon_n: int, levels) -> int:
        """Basis index of |phonon_n, s_1 ... s_N> with levels given by name or index."""
        if not 0 <= phonon_n < self.phonon_levels:
            raise AlgebraError(f"phonon occupation {phonon_n} outside 0..{self.phonon_levels - 1}")
        levels = tuple(levels)
        if len(levels) != self.defect_count:
            raise AlgebraError(f"expected {self.defect_count} defect levels, got {len(levels)}")
        idx = phonon_n
        for lev in levels:
            idx = idx * N_LEVELS + self._level_index(lev)
        return idx

    def decode(self, index: int) -> tuple[int, tuple[str, ...]]:
        """Inverse of :meth:`encode`; returns (phonon_n, level-name tuple)."""
        if not 0 <= index < self.total_dim:
            raise AlgebraError(f"index {index} outside Hilbert space of dim {self.total_dim}")
        names = []
        for _ in range(self.defect_count):
            index, rem = divmod(index, N_LEVELS)
            names.append(LEVELS[rem])
        return index, tuple(reversed(names))

    def basis_state(self, phonon_n: int, *levels) -> np.ndarray:
        """Unit vector for the product basis state |phonon_n, levels...>."""
        psi = np.zeros(self.total_dim, dtype=complex)
        psi[self.encode(phonon_n, levels)] = 1.0
        return psi

    def basis_labels(self):
        """All basis labels (n, levels) in index order."""
        for n in range(self.phonon_levels):
            for combo in product(LEVELS, repeat=self.defect_count):
                yield n, combo

    @staticmethod
    def _level_index(level) -> int:
        if isinstance(level, str):
            try:
                return LEVEL_INDEX[level]
            except KeyError:
                raise AlgebraError(f"unknown defect level {level!r}") from None
        level = int(level)
        if not 0 <= level < N_LEVELS:
            raise AlgebraError(f"defect level index {level} outside 0..{N_LEVELS - 1}")
        return level


def annihilation_op(phonon_levels: int) -> np.ndarray:
    """Truncated lowering operator b with b[n-1, n] = sqrt(n)."""
    if phonon_levels < 2:
        raise AlgebraError(f"phonon_levels must be >= 2, got {phonon_levels}")
    b = np.zeros((phonon_levels, phonon_levels), dtype=complex)
    n = np.arange(1, phonon_levels)
    b[n - 1, n] = np.sqrt(n)
    return b


def number_op(phonon_levels: int) -> np.ndarray:
    return np.diag(np.arange(phonon_levels)).astype(complex)


def level_projector(level) -> np.ndarray:
    """Single-defect projector |level><level| (4x4)."""
    i = HilbertLayout._level_index(level)
    p = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
    p[i, i] = 1.0
    return p


def level_transition(from_level, to_level) -> np.ndarray:
    """Single-defect operator |to><from| (4x4)."""
    i = HilbertLayout._level_index(from_level)
    j = HilbertLayout._level_index(to_level)
    op = np.zeros((N_LEVELS, N_LEVELS), dtype=complex)
    op[j, i] = 1.0
    return op


def kron_embed(layout: HilbertLayout, site_ops) -> np.ndarray:
    """Embed single-site operators into the full space.

    ``site_ops`` is an iterable of (site, matrix) pairs, site 0 being the
    phonon and sites 1..N the defects.  Unspecified sites get identities.
    At most one operator per site.
    """
    dims = layout.site_dims
    ops = {}
    for site, op in site_ops:
        site = int(site)
        if not 0 <= site < layout.n_sites:
            raise AlgebraError(f"site {site} outside 0..{layout.n_sites - 1}")
        if site in ops:
            raise AlgebraError(f"duplicate operator for site {site}")
        op = np.asarray(op, dtype=complex)
        if op.shape != (dims[site], dims[site]):
            raise AlgebraError(
                f"operator for site {site} has shape {op.shape}, expected {(dims[site], dims[site])}"
            )
        ops[site] = op
    out = np.ones((1, 1), dtype=complex)
    for site, d in enumerate(dims):
        out = np.kron(out, ops.get(site, np.eye(d, dtype=complex)))
    return out


def defect_transition_op(layout: HilbertLayout, site: int, from_level, to_level) -> np.ndarray:
    """|to><from| on defect ``site`` (0-based defect index), identity elsewhere."""
    if not 0 <= site < layout.defect_count:
        raise AlgebraError(f"defect site {site} outside 0..{layout.defect_count - 1}")
    return kron_embed(layout, [(site + 1, level_transition(from_level, to_level))])


def defect_projector_op(layout: HilbertLayout, site: int, level) -> np.ndarray:
    return defect_transition_op(layout, site, level, level)


def phonon_op(layout: HilbertLayout, op: np.ndarray) -> np.ndarray:
    return kron_embed(layout, [(0, op)])


def partial_trace(rho: np.ndarray, layout: HilbertLayout, keep) -> np.ndarray:
    """Reduced density matrix over the kept sites (site 0 = phonon).

    The kept sites remain in their original relative order.
    """
    keep = sorted(set(int(s) for s in keep))
    if not keep:
        raise AlgebraError("keep must be a nonempty site set")
    if keep[0] < 0 or keep[-1] >= layout.n_sites:
        raise AlgebraError(f"keep sites {keep} outside 0..{layout.n_sites - 1}")
    dims = layout.site_dims
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (layout.total_dim, layout.total_dim):
        raise AlgebraError(f"density matrix shape {rho.shape} does not match layout dim {layout.total_dim}")
    n = layout.n_sites
    tensor = rho.reshape(dims + dims)
    traced = [s for s in range(n) if s not in keep]
    for k, s in enumerate(traced):
        # axes shift down as earlier sites are traced out
        done_before = sum(1 for t in traced[:k] if t < s)
        ax = s - done_before
        row_axes = tensor.ndim // 2
        tensor = np.trace(tensor, axis1=ax, axis2=ax + row_axes)
    d_keep = int(np.prod([dims[s] for s in keep]))
    return tensor.reshape(d_keep, d_keep)


def dag(op: np.ndarray) -> np.ndarray:
    return op.conj().T


def is_hermitian(op: np.ndarray, atol: float = HERMITICITY_ATOL) -> bool:
    return bool(np.max(np.abs(op - op.conj().T)) <= atol)


def check_state_vector(psi: np.ndarray, atol: float = STATE_NORM_ATOL):
    """Raise unless psi is a unit-norm complex vector."""
    psi = np.asarray(psi)
    if psi.ndim != 1:
        raise AlgebraError(f"state vector must be 1-D, got shape {psi.shape}")
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > atol:
        raise AlgebraError(f"state vector norm {norm} deviates from 1 by more than {atol}")


def check_density_matrix(rho: np.ndarray, trace_atol: float = TRACE_ATOL,
                         positivity_floor: float = POSITIVITY_FLOOR,
                         herm_atol: float = 1e-10):
    """Raise unless rho is Hermitian, unit trace and positive within tolerance."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise AlgebraError(f"density matrix must be square, got shape {rho.shape}")
    herm_dev = np.max(np.abs(rho - rho.conj().T))
    if herm_dev > herm_atol:
        raise AlgebraError(f"density matrix Hermiticity violated by {herm_dev}")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > trace_atol:
        raise AlgebraError(f"density matrix trace {tr} deviates from 1 by more than {trace_atol}")
    min_eig = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])
    if min_eig < positivity_floor:
        raise AlgebraError(f"density matrix minimum eigenvalue {min_eig} below {positivity_floor}")


def pure_density(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())
