"""Reference simulators: an MPO density-operator simulator and a dense oracle.

MPO sites have axes ``(left bond, ket, bra, right bond)``. Canonical forms and
truncations treat the MPO as an MPS of the vectorized operator (Frobenius norm),
so positivity is not preserved by truncation.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Sequence

import numpy as np

from . import numerics

if TYPE_CHECKING:
    from .channels import KrausChannel

DENSE_MAX_QUBITS = 12
NUMERICAL_ZERO = 1e-13


class MpoState:
    def __init__(self, sites: Sequence[np.ndarray], center: int | None = None, check: bool = True):
        self.sites = [np.asarray(t, dtype=complex) for t in sites]
        self.center = center
        if check:
            if not self.sites:
                raise ValueError("an MPO needs at least one site")
            for i in range(len(self.sites) - 1):
                if self.sites[i].shape[3] != self.sites[i + 1].shape[0]:
                    raise ValueError(f"bond mismatch between sites {i} and {i + 1}")
            if self.sites[0].shape[0] != 1 or self.sites[-1].shape[3] != 1:
                raise ValueError("boundary bonds must have extent 1")

    @property
    def n(self) -> int:
        return len(self.sites)

    @property
    def bond_dims(self) -> list[int]:
        return [t.shape[3] for t in self.sites[:-1]]

    def copy(self) -> MpoState:
        return MpoState([t.copy() for t in self.sites], self.center, check=False)

    def __repr__(self) -> str:
        return f"MpoState(n={self.n}, chi={self.bond_dims})"

    def _qr_right(self, i: int) -> None:
        t = self.sites[i]
        l, d, e, m = t.shape
        q, r = numerics.qr(t.reshape(l * d * e, m))
        self.sites[i] = q.reshape(l, d, e, -1)
        self.sites[i + 1] = np.tensordot(r, self.sites[i + 1], axes=(1, 0))

    def _qr_left(self, i: int) -> None:
        t = self.sites[i]
        l, d, e, m = t.shape
        q, r = numerics.qr(t.reshape(l, d * e * m).T)
        self.sites[i] = q.T.reshape(-1, d, e, m)
        self.sites[i - 1] = np.tensordot(self.sites[i - 1], r.T, axes=(3, 0))

    def move_center(self, target: int) -> None:
        if self.center is None:
            for i in range(target):
                self._qr_right(i)
            for i in range(self.n - 1, target, -1):
                self._qr_left(i)
        else:
            for i in range(self.center, target):
                self._qr_right(i)
            for i in range(self.center, target, -1):
                self._qr_left(i)
        self.center = target

    def trace(self) -> complex:
        env = np.ones(1, dtype=complex)
        for t in self.sites:
            env = env @ np.einsum("lssr->lr", t)
        return complex(env[0])

    def memory_bytes(self) -> int:
        return int(sum(t.size for t in self.sites)) * 16


def mpo_product_state(bits: Sequence[int], d: int = 2) -> MpoState:
    sites = []
    for b in bits:
        t = np.zeros((1, d, d, 1), dtype=complex)
        t[0, b, b, 0] = 1.0
        sites.append(t)
    return MpoState(sites, center=0)


def _superop(kraus: Sequence[np.ndarray]) -> np.ndarray:
    """``sum_l K_l (x) conj(K_l)`` acting on a ket-bra pair."""
    return sum(np.kron(k, k.conj()) for k in kraus)


def mpo_apply_channel(state: MpoState, sites: Sequence[int], ch: KrausChannel) -> MpoState:
    """Apply a one- or two-site channel; two-site channels must act on neighbours.

    The two-site update is split back by an exact SVD (only numerically zero
    singular values are dropped).
    """
    sites = tuple(sites)
    if len(sites) != ch.arity:
        raise ValueError(f"channel of arity {ch.arity} applied to {len(sites)} sites")
    out = state.copy()
    if ch.arity == 1:
        (i,) = sites
        t = out.sites[i]
        l, d, _, m = t.shape
        sup = _superop(ch.kraus).reshape(d, d, d, d)  # [s', t', s, t]
        out.sites[i] = np.tensordot(sup, t, axes=([2, 3], [1, 2])).transpose(2, 0, 1, 3)
        out.center = None
        return out
    i, j = sites
    if j != i + 1:
        raise ValueError("two-site MPO channels must act on sites (i, i + 1)")
    a, b = out.sites[i], out.sites[j]
    l, d1, _, _ = a.shape
    _, d2, _, r = b.shape
    theta = np.tensordot(a, b, axes=(3, 0))  # [l, s1, t1, s2, t2, r]
    dd = d1 * d2
    kraus = [k.reshape(dd, dd) for k in ch.kraus]
    sup = sum(np.kron(k, k.conj()) for k in kraus).reshape(d1, d2, d1, d2, d1, d2, d1, d2)
    # sup axes: [s1', s2', t1', t2', s1, s2, t1, t2]
    theta = np.tensordot(sup, theta, axes=([4, 5, 6, 7], [1, 3, 2, 4]))  # [s1',s2',t1',t2',l,r]
    theta = theta.transpose(4, 0, 2, 1, 3, 5).reshape(l * d1 * d1, d2 * d2 * r)
    svd = numerics.truncated_svd(theta, NUMERICAL_ZERO)
    out.sites[i] = svd.u.reshape(l, d1, d1, -1)
    out.sites[j] = (svd.s[:, None] * svd.vh).reshape(-1, d2, d2, r)
    out.center = j
    return out


def mpo_normalize_trace(state: MpoState) -> None:
    tr = state.trace()
    if abs(tr) == 0:
        raise numerics.NumericError("MPO has zero trace")
    k = state.center if state.center is not None else 0
    state.sites[k] = state.sites[k] / tr


def mpo_truncate(state: MpoState, eps_rel: float = 0.0, chi_max: int | None = None) -> tuple[MpoState, float]:
    """Truncate every bond in canonical form, then rescale to unit trace.

    Drops ``sigma_j^2 / sigma_0^2 < eps_rel`` and caps at ``chi_max``. The returned
    weight is the discarded fraction of the squared Frobenius norm, summed over
    bonds.
    """
    if chi_max is not None and chi_max < 1:
        raise ValueError("chi_max must be at least 1")
    out = state.copy()
    out.move_center(out.n - 1)
    discarded = 0.0
    for i in range(out.n - 1, 0, -1):
        t = out.sites[i]
        l, d, e, m = t.shape
        svd = numerics.truncated_svd(t.reshape(l, d * e * m), numerics.weight_cutoff(eps_rel, NUMERICAL_ZERO), chi_max)
        total = float(np.sum(svd.s**2)) + svd.discarded_weight
        if total > 0:
            discarded += svd.discarded_weight / total
        out.sites[i] = svd.vh.reshape(-1, d, e, m)
        out.sites[i - 1] = np.tensordot(out.sites[i - 1], svd.u * svd.s, axes=(3, 0))
        out.center = i - 1
    mpo_normalize_trace(out)
    return out, discarded


def mpo_to_dense(state: MpoState, max_qubits: int = DENSE_MAX_QUBITS) -> np.ndarray:
    if state.n > max_qubits:
        raise ValueError(f"dense conversion limited to {max_qubits} sites")
    acc = np.ones((1, 1, 1), dtype=complex)  # [S, S', r]
    for t in state.sites:
        x = np.tensordot(acc, t, axes=(2, 0))  # [S, S', s, t, r]
        ns, _, d, _, m = x.shape
        acc = x.transpose(0, 2, 1, 3, 4).reshape(ns * d, ns * d, m)
    return acc[:, :, 0]


def oee(state: MpoState) -> float:
    """Operator entanglement entropy on the middle bond.

    The squared MPO singular values are normalized to a distribution and the
    Shannon entropy is returned.
    """
    if state.n < 2:
        raise ValueError("OEE needs at least two sites")
    b = state.n // 2 - 1
    work = state.copy()
    work.move_center(b)
    t = work.sites[b]
    l, d, e, m = t.shape
    s = numerics.singular_values(t.reshape(l * d * e, m))
    return _shannon_of_squares(s)


def _shannon_of_squares(s: np.ndarray) -> float:
    p = s**2
    tot = p.sum()
    if tot <= 0:
        return 0.0
    p = p[p > 0] / tot
    return float(-np.sum(p * np.log(p)))


# -- dense oracle ------------------------------------------------------------------------


def dense_product_state(bits: Sequence[int]) -> np.ndarray:
    n = len(bits)
    idx = int("".join(str(b) for b in bits), 2)
    rho = np.zeros((2**n, 2**n), dtype=complex)
    rho[idx, idx] = 1.0
    return rho


def _num_qubits(rho: np.ndarray) -> int:
    n = int(round(np.log2(rho.shape[0])))
    if 2**n != rho.shape[0] or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"not a qubit density matrix: shape {rho.shape}")
    return n


def embed_operator(op: np.ndarray, sites: Sequence[int], n: int) -> np.ndarray:
    """Full ``2^n x 2^n`` matrix of ``op`` acting on ``sites`` (in that order)."""
    k = len(sites)
    full = np.eye(2**n, dtype=complex).reshape([2] * (2 * n))
    opt = op.reshape([2] * (2 * k))
    full = np.tensordot(opt, full, axes=(list(range(k, 2 * k)), list(sites)))
    full = np.moveaxis(full, list(range(k)), list(sites))
    return full.reshape(2**n, 2**n)


def dense_apply_channel(
    rho: np.ndarray, sites: Sequence[int], ch: KrausChannel, max_qubits: int = DENSE_MAX_QUBITS
) -> np.ndarray:
    """``sum_l K_l rho K_l^dagger`` with the Kraus operators embedded at ``sites``."""
    n = _num_qubits(rho)
    if n > max_qubits:
        raise ValueError(f"dense simulation limited to {max_qubits} qubits")
    sites = list(sites)
    if len(sites) != ch.arity:
        raise ValueError(f"channel of arity {ch.arity} applied to {len(sites)} sites")
    k = len(sites)
    bra_sites = [n + q for q in sites]
    x = rho.reshape([2] * (2 * n))
    out = np.zeros_like(x)
    for kr in ch.kraus:
        op = kr.reshape([2] * (2 * k))
        y = np.tensordot(op, x, axes=(list(range(k, 2 * k)), sites))
        y = np.moveaxis(y, list(range(k)), sites)
        y = np.tensordot(op.conj(), y, axes=(list(range(k, 2 * k)), bra_sites))
        y = np.moveaxis(y, list(range(k)), bra_sites)
        out += y
    return out.reshape(rho.shape)


def dense_oee(rho: np.ndarray, cut: int | None = None) -> float:
    """OEE from the operator-Schmidt decomposition of a dense ``rho`` (middle cut by default)."""
    n = _num_qubits(rho)
    if cut is None:
        cut = n // 2
    dl, dr = 2**cut, 2 ** (n - cut)
    x = rho.reshape(dl, dr, dl, dr).transpose(0, 2, 1, 3).reshape(dl * dl, dr * dr)
    return _shannon_of_squares(numerics.singular_values(x))


def dense_to_mpo(rho: np.ndarray) -> MpoState:
    """Exact MPO of a dense operator by successive SVDs (numerical zeros dropped)."""
    n = _num_qubits(rho)
    x = rho.reshape([2] * (2 * n))
    perm = [a for q in range(n) for a in (q, n + q)]
    rest = x.transpose(perm).reshape(1, -1)
    sites = []
    for q in range(n - 1):
        l = rest.shape[0]
        mat = rest.reshape(l * 4, -1)
        svd = numerics.truncated_svd(mat, NUMERICAL_ZERO)
        sites.append(svd.u.reshape(l, 2, 2, -1))
        rest = svd.s[:, None] * svd.vh
    sites.append(rest.reshape(rest.shape[0], 2, 2, 1))
    return MpoState(sites, center=n - 1)
