"""Random brick-wall circuits, random MPDO states and the circuit JSON format.

Randomness comes from counter-based Philox streams. Every draw uses its own
stream keyed by ``(seed, layer, qubit, purpose)``, so circuits do not depend on
generation order and any layer can be regenerated on its own.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import channels, mpdo
from .compression import lc_compress
from .mpdo import MpdoState

CIRCUIT_VERSION = 1
GATE_KINDS = ("cnot", "cz")

# stream purposes
PURPOSE_ROTATION = 0
PURPOSE_GATE = 1
PURPOSE_TENSOR = 2


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent Philox generator for ``(seed, *key)``."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, index: int) -> int:
    """Seed of the ``index``-th repeat of a run seeded with ``seed``."""
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(index,)).generate_state(1, np.uint32)[0])


@dataclass
class Rotation:
    q: int
    alpha: float
    theta: float
    phi: float


@dataclass
class PairGate:
    q1: int
    q2: int
    kind: str


@dataclass
class Layer:
    rotations: list[Rotation] = field(default_factory=list)
    pairs: list[PairGate] = field(default_factory=list)


@dataclass
class Circuit:
    n: int
    layers: list[Layer]
    noise_p: float
    seed: int | None = None

    @property
    def depth(self) -> int:
        return len(self.layers)

    def to_dict(self) -> dict:
        return {
            "version": CIRCUIT_VERSION,
            "n": self.n,
            "noise_p": self.noise_p,
            "seed": self.seed,
            "layers": [asdict(layer) for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> Circuit:
        if "version" not in obj:
            raise ValueError("circuit file has no version field")
        if obj["version"] != CIRCUIT_VERSION:
            raise ValueError(f"unsupported circuit version {obj['version']!r}")
        try:
            n = int(obj["n"])
            layers = []
            for lobj in obj["layers"]:
                rots = [Rotation(int(r["q"]), float(r["alpha"]), float(r["theta"]), float(r["phi"])) for r in lobj["rotations"]]
                pairs = []
                for p in lobj["pairs"]:
                    if p["kind"] not in (*GATE_KINDS, "swap"):
                        raise ValueError(f"unknown gate kind {p['kind']!r}")
                    pairs.append(PairGate(int(p["q1"]), int(p["q2"]), p["kind"]))
                layers.append(Layer(rots, pairs))
            circ = cls(n, layers, float(obj["noise_p"]), obj.get("seed"))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed circuit file: {exc}") from exc
        circ.validate()
        return circ

    def validate(self) -> None:
        for k, layer in enumerate(self.layers):
            used: set[int] = set()
            for p in layer.pairs:
                for q in (p.q1, p.q2):
                    if not 0 <= q < self.n:
                        raise ValueError(f"layer {k}: qubit {q} out of range")
                if p.q1 in used or p.q2 in used or p.q1 == p.q2:
                    raise ValueError(f"layer {k}: overlapping two-qubit gates")
                used.update((p.q1, p.q2))
            qs = [r.q for r in layer.rotations]
            if len(set(qs)) != len(qs) or any(not 0 <= q < self.n for q in qs):
                raise ValueError(f"layer {k}: invalid rotation targets")


def brick_pairs(n: int, layer: int) -> list[tuple[int, int]]:
    """Neighbour pairs of a layer: ``(0,1),(2,3),..`` on even layers, ``(1,2),(3,4),..`` on odd ones."""
    start = layer % 2
    return [(q, q + 1) for q in range(start, n - 1, 2)]


def random_circuit(n: int, depth: int, p: float, seed: int) -> Circuit:
    """Random rotations on every qubit, then CNOT or CZ (probability 1/2) on alternating pairs."""
    if n < 2:
        raise ValueError("random circuits need at least two qubits")
    if depth < 1:
        raise ValueError("depth must be at least 1")
    if not 0.0 <= p <= 1.0:
        raise ValueError("noise level must lie in [0, 1]")
    two_pi = 2.0 * math.pi
    layers = []
    for k in range(depth):
        rots = []
        for q in range(n):
            a, t, f = stream(seed, k, q, PURPOSE_ROTATION).uniform(0.0, two_pi, size=3)
            rots.append(Rotation(q, float(a), float(t), float(f)))
        pairs = []
        for q1, q2 in brick_pairs(n, k):
            coin = stream(seed, k, q1, PURPOSE_GATE).integers(0, 2)
            pairs.append(PairGate(q1, q2, GATE_KINDS[int(coin)]))
        layers.append(Layer(rots, pairs))
    return Circuit(n, layers, p, seed)


def save_circuit(c: Circuit, path: str | Path) -> None:
    Path(path).write_text(json.dumps(c.to_dict(), indent=1))


def load_circuit(path: str | Path) -> Circuit:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed circuit file {path}: {exc}") from exc
    return Circuit.from_dict(obj)


def layer_operations(c: Circuit, k: int) -> list[tuple[tuple[int, ...], channels.KrausChannel]]:
    """Channels of layer ``k`` in application order: rotations, two-qubit gates, noise."""
    layer = c.layers[k]
    ops: list[tuple[tuple[int, ...], channels.KrausChannel]] = []
    for r in layer.rotations:
        ops.append(((r.q,), channels.rotation_gate(r.alpha, r.theta, r.phi)))
    for g in layer.pairs:
        ops.append(((g.q1, g.q2), channels.gate_channel(g.kind)))
    if c.noise_p > 0:
        noise = channels.depolarizing(c.noise_p)
        for q in range(c.n):
            ops.append(((q,), noise))
    return ops


def apply_layer_mpdo(state: MpdoState, c: Circuit, k: int) -> MpdoState:
    for sites, ch in layer_operations(c, k):
        state = channels.apply_channel(state, sites, ch)
    return state


def random_mpdo_state(
    n: int, n_layers: int, p: float, chi_fix: int, r_fix: int, seed: int
) -> MpdoState:
    """State after ``n_layers`` noisy random layers with bonds capped after each layer."""
    if chi_fix < 1 or r_fix < 1:
        raise ValueError("bond caps must be at least 1")
    c = random_circuit(n, n_layers, p, seed)
    state = mpdo.product_state(n, [0] * n)
    for k in range(n_layers):
        state = apply_layer_mpdo(state, c, k)
        state, _ = lc_compress(state, 0.0, chi_fix, r_fix)
    return state


def random_two_qudit_state(d: int, r: int, chi: int, seed: int) -> MpdoState:
    """Two sites with i.i.d. entries uniform on ``[-1, 1) x [-1, 1)``, normalized to unit trace."""
    if min(d, r, chi) < 1:
        raise ValueError("dimensions must be positive")
    rng = stream(seed, 0, 0, PURPOSE_TENSOR)

    def draw(shape):
        return rng.uniform(-1.0, 1.0, size=shape) + 1j * rng.uniform(-1.0, 1.0, size=shape)

    state = MpdoState([draw((1, d, r, chi)), draw((chi, d, r, 1))])
    state.normalize()
    return state
