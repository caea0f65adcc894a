"""Fidelities, purity and per-layer bookkeeping for simulation runs."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import mpdo, numerics
from .mpdo import MpdoState


@dataclass
class MetricsRecord:
    layer: int
    pseudo_fidelity: float
    oee: float
    purification_entropy: float
    avg_chi: float
    avg_r: float
    memory_bytes: int
    purity: float
    mms_fidelity: float
    wall_ms: int = 0

    # wall_ms is excluded from the CSV so that outputs are reproducible byte for byte
    CSV_FIELDS = (
        "layer",
        "pseudo_fidelity",
        "oee",
        "purification_entropy",
        "avg_chi",
        "avg_r",
        "memory_bytes",
        "purity",
        "mms_fidelity",
    )

    def row(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in self.CSV_FIELDS}


def _validate_density(rho: np.ndarray, name: str) -> np.ndarray:
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"{name} is not a square matrix")
    return 0.5 * (rho + rho.conj().T)


def uhlmann_fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """``[Tr sqrt(sqrt(rho) sigma sqrt(rho))]^2``, clamped to ``[0, 1]``."""
    rho = _validate_density(rho, "rho")
    sigma = _validate_density(sigma, "sigma")
    for name, m in (("rho", rho), ("sigma", sigma)):
        wmin = np.linalg.eigvalsh(m)[0]
        if wmin < -1e-8:
            raise ValueError(f"{name} has a negative eigenvalue {wmin:.3e}")
    # nuclear norm of sqrt(rho) sqrt(sigma); avoids square-rooting roundoff-level eigenvalues
    rtol = 10 * rho.shape[0] * np.finfo(float).eps
    prod = numerics.psd_sqrt(rho, rtol) @ numerics.psd_sqrt(sigma, rtol)
    f = float(np.sum(numerics.singular_values(prod)) ** 2)
    return min(max(f, 0.0), 1.0)


def pseudo_fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """``|Tr(rho^dagger sigma)| / sqrt(Tr(rho^dagger rho) Tr(sigma^dagger sigma))``.

    Defined for any non-zero operators, positive or not.
    """
    a = np.vdot(rho, rho).real
    b = np.vdot(sigma, sigma).real
    if a <= 0 or b <= 0:
        raise ValueError("pseudo-fidelity needs operators of non-zero norm")
    return float(abs(np.vdot(rho, sigma)) / math.sqrt(a * b))


def purity(rho: np.ndarray) -> float:
    return float(np.vdot(rho, rho).real)


def mms_fidelity(rho: np.ndarray) -> float:
    """Uhlmann fidelity to the maximally mixed state, ``(Tr sqrt(rho))^2 / dim``."""
    rho = _validate_density(rho, "rho")
    w = np.linalg.eigvalsh(rho)
    if w[0] < -1e-8:
        raise ValueError(f"rho has a negative eigenvalue {w[0]:.3e}")
    f = float(np.sum(np.sqrt(np.maximum(w, 0.0))) ** 2 / rho.shape[0])
    return min(max(f, 0.0), 1.0)


@dataclass
class StateStatistics:
    avg_chi: float
    avg_r: float
    memory_bytes: int
    middle_entropy: float
    max_chi: int
    max_r: int


def state_statistics(state: MpdoState) -> StateStatistics:
    """Bond-dimension averages (interior bonds only for ``chi``), memory and the middle-bond entropy."""
    chi = state.bond_dims
    r = state.anc_dims
    if state.n > 1:
        b = state.n // 2 - 1
        s = mpdo.entanglement_spectrum(state, b).values
        p = s**2 / np.sum(s**2)
        ent = mpdo.renyi_entropy(p, 1)
    else:
        ent = 0.0
    return StateStatistics(
        avg_chi=float(np.mean(chi)) if chi else 1.0,
        avg_r=float(np.mean(r)),
        memory_bytes=mpdo.memory_footprint(state),
        middle_entropy=ent,
        max_chi=max(chi) if chi else 1,
        max_r=max(r),
    )


def records_to_csv(records: list[MetricsRecord], extra: dict | None = None) -> str:
    """CSV with a fixed header; ``extra`` columns (e.g. seed) are prepended."""
    buf = io.StringIO()
    extra = extra or {}
    writer = csv.DictWriter(buf, fieldnames=[*extra, *MetricsRecord.CSV_FIELDS], lineterminator="\n")
    writer.writeheader()
    for rec in records:
        writer.writerow({**extra, **{k: _fmt(v) for k, v in rec.row().items()}})
    return buf.getvalue()


def records_to_jsonl(records: list[MetricsRecord]) -> str:
    return "".join(json.dumps(rec.row()) + "\n" for rec in records)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


METRIC_FIELDS = tuple(f.name for f in fields(MetricsRecord) if f.name not in ("layer", "wall_ms"))
