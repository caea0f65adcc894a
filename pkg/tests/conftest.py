from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mpdosim import mpdo
from mpdosim.mpdo import MpdoState

settings.register_profile(
    "default",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_mpdo(
    rng: np.random.Generator,
    n: int,
    chi: int = 3,
    r: int = 2,
    d: int = 2,
    center: int | None = 0,
) -> MpdoState:
    """Random trace-one MPDO with uniform interior bonds, canonicalized at ``center``."""
    bonds = [1] + [chi] * (n - 1) + [1]
    sites = []
    for i in range(n):
        shape = (bonds[i], d, r, bonds[i + 1])
        sites.append(rng.normal(size=shape) + 1j * rng.normal(size=shape))
    state = MpdoState(sites)
    if center is not None:
        state.move_center(center)
    state.normalize()
    return state


def random_density(rng: np.random.Generator, dim: int, rank: int | None = None) -> np.ndarray:
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def purification_vector(state: MpdoState) -> np.ndarray:
    """Dense ``|Psi>`` with axes ``(s_0, a_0, s_1, a_1, ...)``, built by plain contraction."""
    psi = state.sites[0][0]
    for t in state.sites[1:]:
        psi = np.tensordot(psi, t, axes=(psi.ndim - 1, 0))
    return psi[..., 0]


def dense_from_purification(state: MpdoState) -> np.ndarray:
    """Independent oracle for ``to_dense``: trace the ancillas out of ``|Psi><Psi|``."""
    psi = purification_vector(state)
    n = state.n
    phys = [2 * i for i in range(n)]
    anc = [2 * i + 1 for i in range(n)]
    dim = int(np.prod([psi.shape[a] for a in phys]))
    m = psi.transpose(phys + anc).reshape(dim, -1)
    return m @ m.conj().T


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def bell_purification() -> MpdoState:
    """``(|00> + |11>)/sqrt(2)`` as a two-site MPDO with trivial ancillas."""
    a = np.zeros((1, 2, 1, 2), dtype=complex)
    b = np.zeros((2, 2, 1, 1), dtype=complex)
    a[0, 0, 0, 0] = a[0, 1, 0, 1] = 1.0
    b[0, 0, 0, 0] = b[1, 1, 0, 0] = 1.0 / np.sqrt(2.0)
    return MpdoState([a, b], center=1)


def fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    from mpdosim.metrics import uhlmann_fidelity

    return uhlmann_fidelity(rho, sigma)


__all__ = ["random_mpdo", "random_density", "random_unitary", "dense_from_purification", "mpdo"]
