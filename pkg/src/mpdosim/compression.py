"""MPDO compression: local canonicalization (LC) and iterative purification
disentanglement (IPD).

IPD visits neighbouring site pairs in alternating sweeps. For each pair the two
ancilla legs are merged into one leg of extent ``r = r_i r_{i+1}``, a unitary on
that leg is optimized to minimize the Renyi entropy across the entanglement
bond, and the pair is split again by a truncated SVD. Purification bonds are
truncated after every sweep.

The pair tensor used throughout has shape ``(L, r, R)`` with ``L = chi_i d_i``
and ``R = d_{i+1} chi_{i+2}``; the merged ancilla index has ``a_i`` as its major
part.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Literal

import numpy as np

from . import mpdo, numerics
from .mpdo import MpdoState

Direction = Literal["right", "left"]


@dataclass
class CompressionConfig:
    """Settings shared by the IPD and LC compressors.

    ``eps_rel`` is compared with the weights ``sigma_j^2 / sigma_0^2`` on
    entanglement bonds and ``lambda_j / lambda_0`` on purification bonds.
    """

    alpha: int = 2
    eps_rel: float = 1e-3
    chi_max: int | None = 64
    r_max: int | None = 64
    sweeps: int = 8
    opt_tol: float = 1e-5
    opt_max_iters: int = 500
    ls_shrink: float = 0.5
    ls_c1: float = 1e-4
    ls_max_backtracks: int = 40
    truncate_purification: bool = True

    def __post_init__(self) -> None:
        if self.alpha not in (1, 2):
            raise ValueError("alpha must be 1 or 2")
        if self.eps_rel < 0:
            raise ValueError("eps_rel must be non-negative")
        if self.sweeps < 0:
            raise ValueError("sweeps must be non-negative")
        for name in ("chi_max", "r_max"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be at least 1")
        if not 0 < self.ls_shrink < 1:
            raise ValueError("ls_shrink must lie in (0, 1)")


@dataclass
class OptimizationTrace:
    objective: list[float] = field(default_factory=list)
    grad_norm: float = 0.0
    iterations: int = 0
    accepted: int = 0
    evaluations: int = 0
    stalled: bool = False


# -- entropy gradients ------------------------------------------------------------------


def grad_entropy_alpha1(x: np.ndarray) -> np.ndarray:
    """``d(-Tr X ln X)/dX = -[(ln X)^T + 1]``."""
    x = np.asarray(x)
    return -(numerics.mat_log_psd(x).T + np.eye(x.shape[0]))


def grad_entropy_alpha2(x: np.ndarray) -> np.ndarray:
    """``d(-ln Tr X^2)/dX = -2 X^T / Tr X^2``."""
    x = np.asarray(x)
    t = np.trace(x @ x).real
    if t <= 0:
        raise ValueError("Tr(X^2) must be positive")
    return -2.0 * x.T / t


def entropy_of_gram(x: np.ndarray, alpha: int) -> float:
    """``E_alpha[X]`` for a PSD matrix whose eigenvalues form a distribution."""
    if alpha == 2:
        return float(-np.log(np.vdot(x, x).real))
    w = np.linalg.eigvalsh(0.5 * (x + x.conj().T))
    w = w[w > 0]
    return float(-np.sum(w * np.log(w)))


def _entropy_and_z(x: np.ndarray, alpha: int) -> tuple[float, np.ndarray]:
    """Entropy and ``Z = (dE/dX)^T`` for Hermitian ``x``."""
    if alpha == 2:
        t = np.vdot(x, x).real
        return float(-np.log(t)), (-2.0 / t) * x
    w, v = np.linalg.eigh(0.5 * (x + x.conj().T))
    wc = np.maximum(w, numerics.LOG_FLOOR)
    logw = np.log(wc)
    pos = w > 0
    e = float(-np.sum(w[pos] * np.log(w[pos])))
    z = -((v * (logw + 1.0)) @ v.conj().T)
    return e, z


# -- the two-site objective --------------------------------------------------------------


def _check_pair(a: np.ndarray, split: tuple[int, int]) -> tuple[int, int, int, int]:
    if a.ndim != 3:
        raise ValueError(f"pair tensor must have shape (L, r, R), got {a.shape}")
    r1, r2 = split
    if r1 * r2 != a.shape[1]:
        raise ValueError(f"split {split} does not factor the ancilla extent {a.shape[1]}")
    return a.shape[0], r1, r2, a.shape[2]


def _gauge(u: np.ndarray, a: np.ndarray) -> np.ndarray:
    """``A~[L, b, R] = sum_a U[b, a] A[L, a, R]``."""
    return np.tensordot(u, a, axes=(1, 1)).transpose(1, 0, 2)


def entropy_objective(
    u: np.ndarray, a: np.ndarray, split: tuple[int, int], alpha: int
) -> tuple[float, np.ndarray]:
    """Entanglement entropy of the gauge-transformed pair and its Gram matrix.

    The transformed tensor is matricized as ``(L, a_i) x (a_{i+1}, R)``. The
    smaller of the two Gram matrices is returned; both share the non-zero
    spectrum.
    """
    L, r1, r2, R = _check_pair(a, split)
    if u.shape != (r1 * r2, r1 * r2):
        raise ValueError(f"unitary of shape {u.shape} for ancilla extent {r1 * r2}")
    if np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0])) > 1e-8:
        raise ValueError("gauge matrix is not unitary")
    m = _gauge(u, a).reshape(L * r1, r2 * R)
    x = m @ m.conj().T if L * r1 <= r2 * R else m.conj().T @ m
    return entropy_of_gram(x, alpha), x


class _PairProblem:
    """Objective and Euclidean gradient for one pair.

    The pair is stored ancilla-major as an ``(r, L R)`` matrix so that the gauge
    transform is a single matrix product.
    """

    def __init__(self, a: np.ndarray, split: tuple[int, int], alpha: int):
        self.L, self.r1, self.r2, self.R = _check_pair(a, split)
        nrm = np.linalg.norm(a)
        a = a / nrm if nrm > 0 else a
        self.a_r = np.ascontiguousarray(a.transpose(1, 0, 2)).reshape(self.r1 * self.r2, self.L * self.R)
        self.alpha = alpha
        self.left = self.L * self.r1 <= self.r2 * self.R
        self.evaluations = 0

    def _matrix(self, u: np.ndarray) -> np.ndarray:
        b = (u @ self.a_r).reshape(self.r1, self.r2, self.L, self.R)
        return b.transpose(2, 0, 1, 3).reshape(self.L * self.r1, self.r2 * self.R)

    def value(self, u: np.ndarray) -> float:
        self.evaluations += 1
        return entropy_of_gram(numerics.gram(self._matrix(u), self.left), self.alpha)

    def value_and_grad(self, u: np.ndarray) -> tuple[float, np.ndarray]:
        """Returns ``E`` and ``G = dE/dU*`` so that ``dE = 2 Re Tr(G^dagger dU)``."""
        self.evaluations += 1
        m = self._matrix(u)
        e, z = _entropy_and_z(numerics.gram(m, self.left), self.alpha)
        gm = z @ m if self.left else m @ z
        gm = gm.reshape(self.L, self.r1 * self.r2, self.R).transpose(1, 0, 2).reshape(self.r1 * self.r2, -1)
        return e, gm @ self.a_r.conj().T


def gradient_wrt_unitary(u: np.ndarray, a: np.ndarray, split: tuple[int, int], alpha: int) -> np.ndarray:
    """Wirtinger gradient ``G = dE/dU*`` of the pair entropy.

    Built from ``dE/dX`` (see :func:`grad_entropy_alpha1`, :func:`grad_entropy_alpha2`)
    and ``X = A~^dagger A~``, so that ``E(U + dU) - E(U) = 2 Re Tr(G^dagger dU)``.
    ``a`` is assumed to have unit Frobenius norm.
    """
    L, r1, r2, R = _check_pair(a, split)
    m = _gauge(u, a).reshape(L * r1, r2 * R)
    x = m.conj().T @ m
    dedx = grad_entropy_alpha2(x) if alpha == 2 else grad_entropy_alpha1(x)
    gm = (m @ dedx.T).reshape(L, r1 * r2, R)
    return np.tensordot(gm, a.conj(), axes=([0, 2], [0, 2]))


def riemannian_direction(u: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Anti-Hermitian steepest-ascent generator ``G U^dagger - U G^dagger``."""
    b = g @ u.conj().T
    return b - b.conj().T


def _inner(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.vdot(x, y).real)


def minimize_unitary(
    a: np.ndarray,
    split: tuple[int, int],
    cfg: CompressionConfig,
    u0: np.ndarray | None = None,
    callback: Callable[[np.ndarray], None] | None = None,
) -> tuple[np.ndarray, OptimizationTrace]:
    """Riemannian conjugate gradient on the unitary group.

    Steps are ``U <- exp(-eta H) U`` along anti-Hermitian directions ``H`` built
    Polak-Ribiere style from the generators ``Omega = G U^dagger - U G^dagger``,
    with an Armijo backtracking line search. Stops when ``||Omega||_F`` drops
    below ``cfg.opt_tol``. A failed line search ends the run with ``stalled`` set.
    ``callback`` is called with the starting point and every accepted iterate.
    """
    prob = _PairProblem(a, split, cfg.alpha)
    r = a.shape[1]
    u = np.eye(r, dtype=complex) if u0 is None else np.array(u0, dtype=complex)
    trace = OptimizationTrace()
    e, g = prob.value_and_grad(u)
    omega = riemannian_direction(u, g)
    trace.objective.append(e)
    if callback is not None:
        callback(u)
    h = omega
    omega_prev = None
    eta = 1.0
    gnorm = math.sqrt(_inner(omega, omega))
    for it in range(cfg.opt_max_iters):
        if gnorm < cfg.opt_tol:
            break
        trace.iterations = it + 1
        slope = _inner(omega, h)
        if slope <= 0 or omega_prev is None:
            h, slope = omega, gnorm**2
        hnorm = math.sqrt(_inner(h, h))
        # exp(-eta H) is 2 pi periodic in eta * ||H||_2; stay well inside one period
        step = min(2.0 * eta, 1.0 / hnorm)
        accepted = False
        for _ in range(cfg.ls_max_backtracks):
            u_try = numerics.mat_exp_antihermitian(-step * h, tol=np.inf) @ u
            e_try = prob.value(u_try)
            if e_try <= e - cfg.ls_c1 * step * slope:
                accepted = True
                break
            step *= cfg.ls_shrink
        if not accepted:
            trace.stalled = True
            break
        eta = step
        u = u_try
        e, g = prob.value_and_grad(u)
        trace.objective.append(e)
        trace.accepted += 1
        if callback is not None:
            callback(u)
        omega_prev, omega = omega, riemannian_direction(u, g)
        gnorm_prev = gnorm
        gnorm = math.sqrt(_inner(omega, omega))
        beta = max(0.0, _inner(omega, omega - omega_prev) / gnorm_prev**2)
        h = omega + beta * h
    trace.grad_norm = gnorm
    trace.evaluations = prob.evaluations
    # re-unitarize to wash out accumulated rounding
    w, _, vh = numerics.svd(u)
    return w @ vh, trace


# -- pair and sweep updates ------------------------------------------------------------------


def pair_tensor(state: MpdoState, i: int) -> tuple[np.ndarray, tuple[int, ...]]:
    """Contract sites ``i, i + 1`` into ``(L, r, R)``; also returns ``(l, d1, r1, r2, d2, rr)``."""
    x, y = state.sites[i], state.sites[i + 1]
    l, d1, r1, _ = x.shape
    _, d2, r2, rr = y.shape
    theta = np.tensordot(x, y, axes=(3, 0))  # [l, s1, a1, s2, a2, rr]
    theta = theta.transpose(0, 1, 2, 4, 3, 5).reshape(l * d1, r1 * r2, d2 * rr)
    return theta, (l, d1, r1, r2, d2, rr)


def _split_pair(
    state: MpdoState,
    i: int,
    pair: np.ndarray,
    dims: tuple[int, ...],
    eps_rel: float,
    chi_max: int | None,
    direction: Direction,
) -> float:
    l, d1, r1, r2, d2, rr = dims
    mat = pair.reshape(l * d1 * r1, r2 * d2 * rr)
    svd = numerics.truncated_svd(mat, numerics.weight_cutoff(eps_rel, mpdo.NUMERICAL_ZERO), chi_max)
    total = float(np.sum(svd.s**2)) + svd.discarded_weight
    s = svd.s / np.linalg.norm(svd.s)
    k = s.size
    if direction == "right":
        left, right = svd.u, s[:, None] * svd.vh
        state.center = i + 1
    else:
        left, right = svd.u * s, svd.vh
        state.center = i
    state.sites[i] = left.reshape(l, d1, r1, k)
    state.sites[i + 1] = np.ascontiguousarray(right.reshape(k, r2, d2, rr).transpose(0, 2, 1, 3))
    return svd.discarded_weight / total if total > 0 else 0.0


def disentangle_pair_inplace(
    state: MpdoState,
    i: int,
    cfg: CompressionConfig,
    direction: Direction = "right",
    optimize: bool = True,
) -> tuple[float, OptimizationTrace | None]:
    if not 0 <= i < state.n - 1:
        raise IndexError(f"pair ({i}, {i + 1}) out of range for n={state.n}")
    state.move_center(i if direction == "right" else i + 1)
    pair, dims = pair_tensor(state, i)
    trace = None
    r1, r2 = dims[2], dims[3]
    if optimize and r1 * r2 > 1:
        u, trace = minimize_unitary(pair, (r1, r2), cfg)
        pair = _gauge(u, pair)
    w = _split_pair(state, i, pair, dims, cfg.eps_rel, cfg.chi_max, direction)
    return w, trace


def apply_pair_gauge(
    state: MpdoState,
    i: int,
    u: np.ndarray,
    eps_rel: float = 0.0,
    chi_max: int | None = None,
    direction: Direction = "right",
) -> tuple[MpdoState, float]:
    """Apply a fixed unitary to the merged ancilla of sites ``(i, i + 1)`` and re-split."""
    out = state.copy()
    out.move_center(i if direction == "right" else i + 1)
    pair, dims = pair_tensor(out, i)
    if u.shape != (pair.shape[1], pair.shape[1]):
        raise ValueError(f"unitary of shape {u.shape} for ancilla extent {pair.shape[1]}")
    w = _split_pair(out, i, _gauge(u, pair), dims, eps_rel, chi_max, direction)
    return out, w


def disentangle_pair(
    state: MpdoState,
    i: int,
    cfg: CompressionConfig,
    direction: Direction = "right",
    optimize: bool = True,
) -> tuple[MpdoState, float]:
    """Optimize the ancilla gauge of sites ``(i, i + 1)`` and re-split them.

    The orthogonality center ends on ``i + 1`` for ``direction="right"`` and on
    ``i`` otherwise. Returns the new state and the discarded weight.
    """
    out = state.copy()
    w, _ = disentangle_pair_inplace(out, i, cfg, direction, optimize)
    return out, w


def truncate_purifications(state: MpdoState, eps_rel: float, r_max: int | None) -> float:
    """Truncate every purification bond in place, visiting sites from the center outwards."""
    if state.center is None:
        state.move_center(0)
    order = range(state.n) if state.center <= state.n // 2 else range(state.n - 1, -1, -1)
    return sum(mpdo.truncate_bond_inplace(state, "purification", i, eps_rel, r_max) for i in order)


@dataclass
class SweepRecord:
    sweep: int
    entanglement_entropy_1: list[float]
    entanglement_entropy_2: list[float]
    purification_entropy_1: list[float]
    purification_entropy_2: list[float]
    chi: list[int]
    r: list[int]
    memory_bytes: int
    discarded_weight: float
    optimizer_iterations: int
    fidelity: float | None = None
    purification_infidelity: float | None = None


@dataclass
class CompressionReport:
    method: str
    sweeps: list[SweepRecord] = field(default_factory=list)
    initial_memory_bytes: int = 0
    final_memory_bytes: int = 0
    discarded_weight: float = 0.0

    @property
    def compression_ratio(self) -> float:
        return self.final_memory_bytes / self.initial_memory_bytes if self.initial_memory_bytes else 1.0

    def to_dict(self) -> dict:
        return asdict(self) | {"compression_ratio": self.compression_ratio}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _record(
    state: MpdoState,
    sweep: int,
    discarded: float,
    iters: int,
    reference: np.ndarray | None,
    previous: MpdoState | None,
) -> SweepRecord:
    sigmas, lambdas = mpdo.all_spectra(state)
    p_ent = [s**2 / np.sum(s**2) for s in sigmas]
    p_pur = [lam / np.sum(lam) for lam in lambdas]
    fid = None
    if reference is not None:
        from .metrics import uhlmann_fidelity

        fid = uhlmann_fidelity(reference, mpdo.to_dense(state))
    pinf = None
    if previous is not None and previous.anc_dims == state.anc_dims:
        pinf = 1.0 - mpdo.purification_fidelity(previous, state)
    return SweepRecord(
        sweep=sweep,
        entanglement_entropy_1=[mpdo.renyi_entropy(p, 1) for p in p_ent],
        entanglement_entropy_2=[mpdo.renyi_entropy(p, 2) for p in p_ent],
        purification_entropy_1=[mpdo.renyi_entropy(p, 1) for p in p_pur],
        purification_entropy_2=[mpdo.renyi_entropy(p, 2) for p in p_pur],
        chi=state.bond_dims,
        r=state.anc_dims,
        memory_bytes=mpdo.memory_footprint(state),
        discarded_weight=discarded,
        optimizer_iterations=iters,
        fidelity=fid,
        purification_infidelity=pinf,
    )


def ipd_compress(
    state: MpdoState,
    cfg: CompressionConfig,
    reference: np.ndarray | None = None,
    record: bool = True,
) -> tuple[MpdoState, CompressionReport]:
    """Alternating two-site disentangling sweeps followed by purification truncation.

    Even sweeps run left to right over pairs ``0..n-2``, odd sweeps right to left.
    With ``reference`` (a dense density matrix) each sweep record carries the
    Uhlmann fidelity to it; with ``record=False`` no per-sweep diagnostics are
    computed.
    """
    work = state.copy()
    report = CompressionReport("ipd", initial_memory_bytes=mpdo.memory_footprint(work))
    if record:
        report.sweeps.append(_record(work, 0, 0.0, 0, reference, None))
    total = 0.0
    for s in range(cfg.sweeps):
        previous = work.copy() if record else None
        iters = 0
        if s % 2 == 0:
            pairs, direction = range(work.n - 1), "right"
        else:
            pairs, direction = range(work.n - 2, -1, -1), "left"
        for i in pairs:
            w, tr = disentangle_pair_inplace(work, i, cfg, direction)
            total += w
            if tr is not None:
                iters += tr.iterations
        if cfg.truncate_purification:
            total += truncate_purifications(work, cfg.eps_rel, cfg.r_max)
        if record:
            report.sweeps.append(_record(work, s + 1, total, iters, reference, previous))
    if work.center is None:
        work.move_center(0)
    work.normalize()
    report.final_memory_bytes = mpdo.memory_footprint(work)
    report.discarded_weight = total
    return work, report


def lc_compress(
    state: MpdoState,
    eps_rel: float,
    chi_max: int | None = None,
    r_max: int | None = None,
) -> tuple[MpdoState, CompressionReport]:
    """One left-to-right pass of truncated SVDs on every purification and entanglement bond."""
    work = state.copy()
    report = CompressionReport("lc", initial_memory_bytes=mpdo.memory_footprint(work))
    work.move_center(0)
    total = 0.0
    for i in range(work.n):
        total += mpdo.truncate_bond_inplace(work, "purification", i, eps_rel, r_max)
        if i < work.n - 1:
            total += mpdo.truncate_bond_inplace(work, "entanglement", i, eps_rel, chi_max)
    report.final_memory_bytes = mpdo.memory_footprint(work)
    report.discarded_weight = total
    return work, report
