"""Locally purified matrix-product density operators.

A state on ``n`` sites is a list of rank-4 tensors with axes
``(left bond, physical, ancilla, right bond)``::

          s_i
           |
    chi_i--A--chi_{i+1}
           |
          a_i

The purification ``|Psi>`` is the MPS obtained by treating ``(s_i, a_i)`` as the
physical leg of site ``i`` and the density operator is ``Tr_a |Psi><Psi|``.

Indexing is zero based throughout: sites run over ``0..n-1`` and entanglement
bond ``b`` is the bond between sites ``b`` and ``b + 1`` (so ``0..n-2``).
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from . import numerics
from .baselines import MpoState

BondKind = Literal["entanglement", "purification"]

BYTES_PER_SCALAR = 16
DENSE_MAX_QUBITS = 12
# Singular values below this fraction of the largest one are numerical noise and
# are always dropped by bond truncations, whatever the requested threshold.
NUMERICAL_ZERO = 1e-13
SNAPSHOT_VERSION = 1

# Upper bound on intermediate array sizes (in elements) during dense contraction.
_DENSE_CHUNK = 1 << 22


@dataclass(frozen=True)
class BondSpectrum:
    kind: BondKind
    index: int
    values: np.ndarray

    @property
    def probabilities(self) -> np.ndarray:
        """The spectrum as weights: ``sigma**2`` on entanglement bonds, ``lambda`` otherwise."""
        if self.kind == "entanglement":
            return self.values**2
        return self.values


class MpdoState:
    """Purified MPS with orthogonality-center bookkeeping.

    ``center`` is the site index of the orthogonality center, or ``None`` when the
    state is not known to be in mixed canonical form.
    """

    def __init__(self, sites: Sequence[np.ndarray], center: int | None = None, check: bool = True):
        self.sites = [np.asarray(t, dtype=complex) for t in sites]
        self.center = center
        if check:
            self.validate()

    def validate(self) -> None:
        if not self.sites:
            raise ValueError("an MPDO needs at least one site")
        for i, t in enumerate(self.sites):
            if t.ndim != 4:
                raise ValueError(f"site {i} has {t.ndim} axes, expected 4")
            if min(t.shape) < 1:
                raise ValueError(f"site {i} has an empty axis: {t.shape}")
        if self.sites[0].shape[0] != 1 or self.sites[-1].shape[3] != 1:
            raise ValueError("boundary bonds must have extent 1")
        for i in range(self.n - 1):
            if self.sites[i].shape[3] != self.sites[i + 1].shape[0]:
                raise ValueError(f"bond mismatch between sites {i} and {i + 1}")
        if self.center is not None and not 0 <= self.center < self.n:
            raise ValueError(f"center {self.center} out of range")

    @property
    def n(self) -> int:
        return len(self.sites)

    @property
    def phys_dims(self) -> list[int]:
        return [t.shape[1] for t in self.sites]

    @property
    def anc_dims(self) -> list[int]:
        return [t.shape[2] for t in self.sites]

    @property
    def bond_dims(self) -> list[int]:
        """Interior entanglement bond extents (``n - 1`` values)."""
        return [t.shape[3] for t in self.sites[:-1]]

    def copy(self) -> MpdoState:
        return MpdoState([t.copy() for t in self.sites], self.center, check=False)

    def __repr__(self) -> str:
        return f"MpdoState(n={self.n}, chi={self.bond_dims}, r={self.anc_dims}, center={self.center})"

    # -- gauge moves ------------------------------------------------------------

    def left_orthonormalize_site(self, i: int) -> None:
        """QR site ``i`` over ``(left, phys, anc) x right`` and push ``R`` into site ``i + 1``."""
        t = self.sites[i]
        l, d, r, m = t.shape
        q, rr = numerics.qr(t.reshape(l * d * r, m))
        self.sites[i] = q.reshape(l, d, r, -1)
        self.sites[i + 1] = np.tensordot(rr, self.sites[i + 1], axes=(1, 0))

    def right_orthonormalize_site(self, i: int) -> None:
        """LQ site ``i`` over ``left x (phys, anc, right)`` and push ``L`` into site ``i - 1``."""
        t = self.sites[i]
        l, d, r, m = t.shape
        q, rr = numerics.qr(t.reshape(l, d * r * m).T)
        self.sites[i] = q.T.reshape(-1, d, r, m)
        self.sites[i - 1] = np.tensordot(self.sites[i - 1], rr.T, axes=(3, 0))

    def move_center(self, target: int) -> None:
        """Bring the orthogonality center to site ``target`` in place."""
        if not 0 <= target < self.n:
            raise IndexError(f"site {target} out of range for n={self.n}")
        if self.center is None:
            for i in range(target):
                self.left_orthonormalize_site(i)
            for i in range(self.n - 1, target, -1):
                self.right_orthonormalize_site(i)
        else:
            for i in range(self.center, target):
                self.left_orthonormalize_site(i)
            for i in range(self.center, target, -1):
                self.right_orthonormalize_site(i)
        self.center = target

    def norm_squared(self) -> float:
        """``Tr rho``, the squared norm of the purification."""
        if self.center is not None:
            return float(np.vdot(self.sites[self.center], self.sites[self.center]).real)
        env = np.ones((1, 1), dtype=complex)
        for t in self.sites:
            env = np.tensordot(env, t, axes=(0, 0))
            env = np.tensordot(env, t.conj(), axes=([0, 1, 2], [0, 1, 2]))
        return float(env[0, 0].real)

    def trace(self) -> float:
        return self.norm_squared()

    def normalize(self) -> None:
        """Rescale in place so that ``Tr rho = 1``."""
        nrm = self.norm_squared()
        if nrm <= 0.0:
            raise numerics.NumericError("cannot normalize a zero state")
        k = self.center if self.center is not None else 0
        self.sites[k] = self.sites[k] / np.sqrt(nrm)


# -- construction ------------------------------------------------------------------


def product_state(n: int, bits: Sequence[int], d: int = 2) -> MpdoState:
    """Computational basis product state ``|bits><bits|`` with all bonds of extent 1."""
    if n < 1:
        raise ValueError("n must be positive")
    if len(bits) != n:
        raise ValueError(f"expected {n} bits, got {len(bits)}")
    sites = []
    for b in bits:
        if not 0 <= b < d:
            raise ValueError(f"basis label {b} out of range for d={d}")
        t = np.zeros((1, d, 1, 1), dtype=complex)
        t[0, b, 0, 0] = 1.0
        sites.append(t)
    return MpdoState(sites, center=0)


def canonicalize(state: MpdoState, center: int) -> MpdoState:
    """Mixed canonical form centered on site ``center`` (returns a new state)."""
    if not 0 <= center < state.n:
        raise IndexError(f"site {center} out of range for n={state.n}")
    out = state.copy()
    out.move_center(center)
    return out


# -- spectra and entropies ------------------------------------------------------------


def _check_bond(state: MpdoState, b: int) -> None:
    if not 0 <= b < state.n - 1:
        raise IndexError(f"bond {b} out of range for n={state.n}")


def _check_site(state: MpdoState, i: int) -> None:
    if not 0 <= i < state.n:
        raise IndexError(f"site {i} out of range for n={state.n}")


def _entanglement_values(t: np.ndarray) -> np.ndarray:
    l, d, r, m = t.shape
    return numerics.singular_values(t.reshape(l * d * r, m))


def _purification_values(t: np.ndarray) -> np.ndarray:
    l, d, r, m = t.shape
    return numerics.singular_values(t.transpose(2, 0, 1, 3).reshape(r, l * d * m)) ** 2


def entanglement_spectrum(state: MpdoState, b: int) -> BondSpectrum:
    """Schmidt values ``sigma_j`` of the purification across bond ``b``."""
    _check_bond(state, b)
    work = canonicalize(state, b)
    return BondSpectrum("entanglement", b, _entanglement_values(work.sites[b]))


def purification_spectrum(state: MpdoState, i: int) -> BondSpectrum:
    """Eigenvalues ``lambda_j`` of the reduced density matrix of ancilla ``i``."""
    _check_site(state, i)
    work = canonicalize(state, i)
    return BondSpectrum("purification", i, _purification_values(work.sites[i]))


def all_spectra(state: MpdoState) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Every entanglement spectrum (``sigma``) and purification spectrum (``lambda``) in one pass."""
    work = canonicalize(state, 0)
    sigmas, lambdas = [], []
    for i in range(work.n):
        t = work.sites[i]
        lambdas.append(_purification_values(t))
        if i == work.n - 1:
            break
        l, d, r, m = t.shape
        u, s, vh = numerics.svd(t.reshape(l * d * r, m))
        sigmas.append(s)
        work.sites[i] = u.reshape(l, d, r, -1)
        work.sites[i + 1] = np.tensordot(s[:, None] * vh, work.sites[i + 1], axes=(1, 0))
        work.center = i + 1
    return sigmas, lambdas


def renyi_entropy(values: np.ndarray, alpha: float, tol: float = 1e-8) -> float:
    """Renyi entropy (natural log) of a probability vector; ``alpha = 1`` is the Shannon limit."""
    p = np.asarray(values, dtype=float)
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if np.any(p < -tol):
        raise ValueError("probabilities must be non-negative")
    total = float(p.sum())
    if abs(total - 1.0) > tol:
        raise ValueError(f"probabilities sum to {total}, not 1")
    p = np.clip(p, 0.0, None)
    if alpha == 1:
        nz = p[p > 0]
        h = -np.sum(nz * np.log(nz))
    elif alpha == 0:
        h = np.log(np.count_nonzero(p))
    elif np.isinf(alpha):
        h = -np.log(p.max())
    else:
        h = np.log(np.sum(p[p > 0] ** alpha)) / (1.0 - alpha)
    # adding 0.0 turns a signed zero into +0.0
    return float(h) + 0.0


def bond_entropies(state: MpdoState, alpha: float) -> tuple[list[float], list[float]]:
    """Entanglement bond entropies (``n - 1``) and purification bond entropies (``n``)."""
    sigmas, lambdas = all_spectra(state)
    ent = [renyi_entropy(s**2, alpha) for s in sigmas]
    pur = [renyi_entropy(lam, alpha) for lam in lambdas]
    return ent, pur


# -- truncation ------------------------------------------------------------------------


def _truncate_entanglement(state: MpdoState, b: int, eps_rel: float, cap: int | None) -> float:
    state.move_center(b)
    t = state.sites[b]
    l, d, r, m = t.shape
    svd = numerics.truncated_svd(t.reshape(l * d * r, m), numerics.weight_cutoff(eps_rel, NUMERICAL_ZERO), cap)
    s = svd.s
    total = float(np.sum(s**2)) + svd.discarded_weight
    state.sites[b] = svd.u.reshape(l, d, r, -1)
    s = s / np.linalg.norm(s)
    state.sites[b + 1] = np.tensordot(s[:, None] * svd.vh, state.sites[b + 1], axes=(1, 0))
    state.center = b + 1
    return svd.discarded_weight / total if total > 0 else 0.0


def _truncate_purification(state: MpdoState, i: int, eps_rel: float, cap: int | None) -> float:
    state.move_center(i)
    t = state.sites[i]
    l, d, r, m = t.shape
    mat = t.transpose(2, 0, 1, 3).reshape(r, l * d * m)
    u, s, vh = numerics.svd(mat)
    lam = s**2
    if lam[0] > 0:
        k = int(np.count_nonzero(lam >= eps_rel * lam[0]))
        k = min(k, int(np.count_nonzero(s >= NUMERICAL_ZERO * s[0])))
    else:
        k = 1
    if cap is not None:
        k = min(k, cap)
    k = max(k, 1)
    total = float(lam.sum())
    discarded = float(lam[k:].sum())
    kept = s[:k] / np.sqrt(lam[:k].sum()) if lam[0] > 0 else s[:k]
    new = (kept[:, None] * vh[:k]).reshape(k, l, d, m).transpose(1, 2, 0, 3)
    state.sites[i] = np.ascontiguousarray(new)
    return discarded / total if total > 0 else 0.0


def truncate_bond_inplace(
    state: MpdoState, kind: BondKind, index: int, eps_rel: float = 0.0, cap: int | None = None
) -> float:
    """In-place variant of :func:`truncate_bond`; returns the discarded weight."""
    if cap is not None and cap < 1:
        raise ValueError("cap must be at least 1")
    if eps_rel < 0:
        raise ValueError("eps_rel must be non-negative")
    if kind == "entanglement":
        _check_bond(state, index)
        return _truncate_entanglement(state, index, eps_rel, cap)
    if kind == "purification":
        _check_site(state, index)
        return _truncate_purification(state, index, eps_rel, cap)
    raise ValueError(f"unknown bond kind {kind!r}")


def truncate_bond(
    state: MpdoState, kind: BondKind, index: int, eps_rel: float = 0.0, cap: int | None = None
) -> tuple[MpdoState, float]:
    """Drop small values on one bond and renormalize to unit trace.

    Both bond kinds compare probability weights with ``eps_rel``:
    ``sigma_j^2 / sigma_0^2`` on entanglement bonds and ``lambda_j / lambda_0`` on
    purification bonds. Returns the new state and the removed
    fraction of the trace.
    """
    out = state.copy()
    w = truncate_bond_inplace(out, kind, index, eps_rel, cap)
    return out, w


def memory_footprint(state: MpdoState) -> int:
    """Bytes needed to store all site tensors as complex128."""
    return int(sum(t.size for t in state.sites)) * BYTES_PER_SCALAR


# -- conversions ---------------------------------------------------------------------


def _absorb(env: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Grow a left environment ``env[S, S', l, l']`` by one site.

    Works in row batches over ``S`` to bound the intermediate size.
    """
    ns, _, cl, _ = env.shape
    _, d, r, cr = t.shape
    out = np.empty((ns, d, ns, d, cr, cr), dtype=complex)
    per_row = max(1, ns * cl * d * r * cr)
    batch = max(1, _DENSE_CHUNK // per_row)
    tc = t.conj()
    for start in range(0, ns, batch):
        stop = min(ns, start + batch)
        x = np.tensordot(env[start:stop], tc, axes=(3, 0))  # [b, S', l, s', a, r']
        x = np.tensordot(x, t, axes=([2, 4], [0, 2]))  # [b, S', s', r', s, r]
        out[start:stop] = x.transpose(0, 4, 1, 2, 5, 3)
    return out.reshape(ns * d, ns * d, cr, cr)


def _half_env(sites: Sequence[np.ndarray]) -> np.ndarray:
    env = np.ones((1, 1, 1, 1), dtype=complex)
    for t in sites:
        env = _absorb(env, t)
    return env


def to_dense(state: MpdoState, max_qubits: int = DENSE_MAX_QUBITS) -> np.ndarray:
    """Dense ``rho = Tr_a |Psi><Psi|`` with qubit 0 as the most significant index."""
    if state.n > max_qubits:
        raise ValueError(f"dense conversion limited to {max_qubits} sites, state has {state.n}")
    cut = state.n // 2 if state.n > 1 else 1
    left = _half_env(state.sites[:cut])
    right_sites = [t.transpose(3, 1, 2, 0) for t in reversed(state.sites[cut:])]
    right = _half_env(right_sites)
    dims_r = [t.shape[1] for t in state.sites[cut:]]
    k = len(dims_r)
    if k > 1:
        # undo the site reversal on the right half's composite indices
        rev = list(reversed(dims_r))
        right = right.reshape(rev + rev + list(right.shape[2:]))
        perm = list(range(k - 1, -1, -1)) + list(range(2 * k - 1, k - 1, -1)) + [2 * k, 2 * k + 1]
        right = right.transpose(perm)
        dr = int(np.prod(dims_r))
        right = right.reshape(dr, dr, *right.shape[-2:])
    rho = np.tensordot(left, right, axes=([2, 3], [2, 3]))  # [SL, SL', SR, SR']
    dl, dr = rho.shape[0], rho.shape[2]
    rho = rho.transpose(0, 2, 1, 3).reshape(dl * dr, dl * dr)
    return rho


def to_mpo(state: MpdoState) -> MpoState:
    """Contract every purification bond, giving an MPO with bond extents ``chi**2``."""
    sites = []
    for t in state.sites:
        l, d, r, m = t.shape
        w = np.tensordot(t, t.conj(), axes=(2, 2))  # [l, s, m, l', s', m']
        w = w.transpose(0, 3, 1, 4, 2, 5).reshape(l * l, d, d, m * m)
        sites.append(w)
    return MpoState(sites)


def purification_overlap(a: MpdoState, b: MpdoState) -> complex:
    """``<Psi_a|Psi_b>`` treating ``(s, a)`` as the physical leg; ancilla extents must agree."""
    if a.n != b.n or a.anc_dims != b.anc_dims or a.phys_dims != b.phys_dims:
        raise ValueError("purifications live in different spaces")
    env = np.ones((1, 1), dtype=complex)
    for ta, tb in zip(a.sites, b.sites):
        env = np.tensordot(env, ta.conj(), axes=(0, 0))  # [lb, s, a, ra]
        env = np.tensordot(env, tb, axes=([0, 1, 2], [0, 1, 2]))  # [ra, rb]
    return complex(env[0, 0])


def purification_fidelity(a: MpdoState, b: MpdoState) -> float:
    """``|<Psi_a|Psi_b>|^2 / (<Psi_a|Psi_a><Psi_b|Psi_b>)``."""
    ov = purification_overlap(a, b)
    return float(abs(ov) ** 2 / (a.norm_squared() * b.norm_squared()))


# -- snapshots -------------------------------------------------------------------------


def _encode_array(x: np.ndarray) -> dict:
    data = np.ascontiguousarray(x, dtype="<c16")
    return {"shape": list(x.shape), "data": base64.b64encode(data.tobytes()).decode("ascii")}


def _decode_array(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype="<c16").reshape(obj["shape"]).astype(complex)


def state_to_json(state: MpdoState | MpoState) -> dict:
    """Versioned snapshot; arrays are base64 little-endian complex128, row major."""
    kind = "mpdo" if isinstance(state, MpdoState) else "mpo"
    return {
        "version": SNAPSHOT_VERSION,
        "kind": kind,
        "n": len(state.sites),
        "center": state.center,
        "sites": [_encode_array(t) for t in state.sites],
    }


def state_from_json(obj: dict) -> MpdoState | MpoState:
    if obj.get("version") != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {obj.get('version')!r}")
    sites = [_decode_array(s) for s in obj["sites"]]
    if len(sites) != obj["n"]:
        raise ValueError("snapshot site count does not match n")
    if obj["kind"] == "mpdo":
        return MpdoState(sites, obj.get("center"))
    if obj["kind"] == "mpo":
        return MpoState(sites, obj.get("center"))
    raise ValueError(f"unknown snapshot kind {obj['kind']!r}")


def save_state(state: MpdoState | MpoState, path: str | Path) -> None:
    Path(path).write_text(json.dumps(state_to_json(state)))


def load_state(path: str | Path) -> MpdoState | MpoState:
    return state_from_json(json.loads(Path(path).read_text()))
