"""Gates, Kraus channels and their application to MPDO states."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import numerics
from .mpdo import MpdoState

I2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)

TP_TOL = 1e-10


@dataclass
class KrausChannel:
    """A CPTP map given by Kraus operators of shape ``(d**arity, d**arity)``."""

    kraus: list[np.ndarray]
    arity: int = 1
    d: int = 2
    name: str = field(default="channel", compare=False)

    def __post_init__(self) -> None:
        if self.arity not in (1, 2):
            raise ValueError("only one- and two-site channels are supported")
        dim = self.d**self.arity
        ops = [np.asarray(k, dtype=complex) for k in self.kraus]
        if not ops:
            raise ValueError("a channel needs at least one Kraus operator")
        for k in ops:
            if k.shape != (dim, dim):
                raise ValueError(f"Kraus operator of shape {k.shape}, expected {(dim, dim)}")
        # zero-weight operators only inflate the purification bond
        ops = [k for k in ops if np.linalg.norm(k) > 0.0] or [np.zeros((dim, dim), dtype=complex)]
        self.kraus = ops
        dev = np.linalg.norm(self.completeness() - np.eye(dim))
        if dev > TP_TOL:
            raise ValueError(f"Kraus operators are not trace preserving (deviation {dev:.2e})")

    @property
    def k(self) -> int:
        return len(self.kraus)

    @property
    def is_unitary(self) -> bool:
        return self.k == 1

    def completeness(self) -> np.ndarray:
        return sum(k.conj().T @ k for k in self.kraus)

    def stacked(self) -> np.ndarray:
        """Kraus operators as one array ``[l, out, in]``."""
        return np.stack(self.kraus)

    def tensor(self, other: KrausChannel) -> KrausChannel:
        """Product channel acting on two sites; Kraus rank multiplies."""
        if self.arity != 1 or other.arity != 1:
            raise ValueError("tensor products are formed from one-site channels")
        ops = [np.kron(a, b) for a in self.kraus for b in other.kraus]
        return KrausChannel(ops, arity=2, d=self.d, name=f"{self.name}x{other.name}")


def identity_channel(arity: int = 1, d: int = 2) -> KrausChannel:
    return KrausChannel([np.eye(d**arity, dtype=complex)], arity, d, "id")


def depolarizing(p: float) -> KrausChannel:
    """``rho -> (1 - p) rho + p I/2`` as four Pauli Kraus operators."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"depolarizing probability {p} outside [0, 1]")
    a = math.sqrt(1.0 - 3.0 * p / 4.0)
    b = math.sqrt(p / 4.0)
    return KrausChannel([a * I2, b * PAULI_X, b * PAULI_Y, b * PAULI_Z], 1, 2, f"depol({p})")


def rotation_matrix(alpha: float, theta: float, phi: float) -> np.ndarray:
    """``exp(i alpha n.sigma)`` with ``n = (sin t cos f, sin t sin f, cos t)``."""
    nx = math.sin(theta) * math.cos(phi)
    ny = math.sin(theta) * math.sin(phi)
    nz = math.cos(theta)
    gen = nx * PAULI_X + ny * PAULI_Y + nz * PAULI_Z
    # n.sigma squares to the identity
    return math.cos(alpha) * I2 + 1j * math.sin(alpha) * gen


def rotation_gate(alpha: float, theta: float, phi: float) -> KrausChannel:
    return KrausChannel([rotation_matrix(alpha, theta, phi)], 1, 2, "rot")


CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
CZ = np.diag([1, 1, 1, -1]).astype(complex)
SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)


def cnot() -> KrausChannel:
    """CNOT with the lower-index site as control."""
    return KrausChannel([CNOT], 2, 2, "cnot")


def cz() -> KrausChannel:
    return KrausChannel([CZ], 2, 2, "cz")


def swap() -> KrausChannel:
    return KrausChannel([SWAP], 2, 2, "swap")


def gate_channel(kind: str) -> KrausChannel:
    try:
        return {"cnot": cnot, "cz": cz, "swap": swap}[kind]()
    except KeyError:
        raise ValueError(f"unknown two-qubit gate kind {kind!r}") from None


# -- application to MPDOs ------------------------------------------------------------------


def apply_one_site(state: MpdoState, i: int, ch: KrausChannel) -> MpdoState:
    """Contract the stacked Kraus tensor into site ``i``; ``r_i`` grows by the Kraus rank.

    The new ancilla leg is the pair ``(a_i, l)`` with the old ancilla as the major
    index. Trace preserving channels keep (left/right) isometries isometric, so the
    orthogonality center is unchanged.
    """
    if ch.arity != 1:
        raise ValueError(f"expected a one-site channel, got arity {ch.arity}")
    if not 0 <= i < state.n:
        raise IndexError(f"site {i} out of range for n={state.n}")
    out = state.copy()
    t = out.sites[i]
    l, d, r, m = t.shape
    if ch.d != d:
        raise ValueError(f"channel dimension {ch.d} does not match site dimension {d}")
    kr = ch.stacked()  # [k, s', s]
    new = np.tensordot(kr, t, axes=(2, 1))  # [k, s', l, a, m]
    new = new.transpose(2, 1, 3, 0, 4).reshape(l, d, r * ch.k, m)
    out.sites[i] = np.ascontiguousarray(new)
    return out


def kraus_split(k: int) -> tuple[int, int]:
    """Factor a Kraus rank into ``(ceil(sqrt(k)), ceil(k / k1))``."""
    k1 = math.isqrt(k)
    if k1 * k1 < k:
        k1 += 1
    k2 = -(-k // k1)
    return k1, k2


def channel_factors(ch: KrausChannel) -> tuple[np.ndarray, np.ndarray]:
    """QR factors of a two-site channel for application to neighbouring sites.

    Returns ``q[s1', s1, l1, x]`` and ``r[x, s2', s2, l2]`` whose contraction over
    ``x`` is ``K_{(l1, l2)}[(s1', s2'), (s1, s2)]``, zero padded in ``l``.
    """
    d = ch.d
    k1, k2 = kraus_split(ch.k)
    t = np.zeros((k1 * k2, d, d, d, d), dtype=complex)
    t[: ch.k] = np.stack(ch.kraus).reshape(ch.k, d, d, d, d)  # [l, s1', s2', s1, s2]
    t = t.reshape(k1, k2, d, d, d, d)
    mat = t.transpose(2, 4, 0, 3, 5, 1).reshape(d * d * k1, d * d * k2)
    q, r = numerics.qr(mat)
    return q.reshape(d, d, k1, -1), r.reshape(-1, d, d, k2)


def apply_two_site(state: MpdoState, i: int, ch: KrausChannel) -> MpdoState:
    """Apply a two-site channel to sites ``(i, i + 1)``.

    ``q`` goes into site ``i`` and ``r`` into site ``i + 1``; the purification
    bonds grow by ``k1`` and ``k2`` and bond ``i`` by the QR rank. One QR step
    afterwards restores the orthogonality center if there was one.
    """
    if ch.arity != 2:
        raise ValueError(f"expected a two-site channel, got arity {ch.arity}")
    if not 0 <= i < state.n - 1:
        raise IndexError(f"sites ({i}, {i + 1}) out of range for n={state.n}")
    out = state.copy()
    q, r = channel_factors(ch)
    _, _, k1, x = q.shape
    k2 = r.shape[3]
    a, b = out.sites[i], out.sites[i + 1]
    l, d, ra, m = a.shape
    _, _, rb, rr = b.shape
    na = np.tensordot(q, a, axes=(1, 1))  # [s1', l1, x, l, a, m]
    na = na.transpose(3, 0, 4, 1, 5, 2).reshape(l, d, ra * k1, m * x)
    nb = np.tensordot(r, b, axes=(2, 1))  # [x, s2', l2, m, b, rr]
    nb = nb.transpose(3, 0, 1, 4, 2, 5).reshape(m * x, d, rb * k2, rr)
    out.sites[i] = na
    out.sites[i + 1] = nb
    if out.center is not None:
        if out.center <= i:
            out.right_orthonormalize_site(i + 1)
        else:
            out.left_orthonormalize_site(i)
    return out


def apply_channel(state: MpdoState, sites: Sequence[int], ch: KrausChannel) -> MpdoState:
    sites = list(sites)
    if len(sites) != ch.arity:
        raise ValueError(f"channel of arity {ch.arity} applied to {len(sites)} sites")
    if ch.arity == 1:
        return apply_one_site(state, sites[0], ch)
    i, j = sites
    if j == i + 1:
        return apply_two_site(state, i, ch)
    return apply_routed(state, ch, i, j)


def route_distant(gate: KrausChannel, i: int, j: int) -> list[tuple[int, KrausChannel]]:
    """Nearest-neighbour schedule for a two-site gate on sites ``i < j``.

    SWAPs bring site ``j`` next to ``i``, the gate acts on ``(i, i + 1)`` and the
    SWAPs are undone. Each entry is ``(left site, channel)``.
    """
    if i == j:
        raise ValueError("a two-site gate needs two distinct sites")
    if i > j:
        raise ValueError("route_distant expects i < j")
    swaps = [(s, swap()) for s in range(j - 1, i, -1)]
    return swaps + [(i, gate)] + list(reversed(swaps))


def apply_routed(state: MpdoState, gate: KrausChannel, i: int, j: int) -> MpdoState:
    if i > j:
        # relabel so that the first operand sits on the lower site
        d = gate.d
        flipped = [SWAP @ k @ SWAP for k in gate.kraus] if d == 2 else None
        if flipped is None:
            raise ValueError("reversed routing is only implemented for qubits")
        gate = KrausChannel(flipped, 2, d, gate.name)
        i, j = j, i
    out = state
    for site, ch in route_distant(gate, i, j):
        out = apply_two_site(out, site, ch)
    return out
