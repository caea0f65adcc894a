"""Experiment drivers behind the ``mpdo-sim`` command.

Every driver takes a :class:`RunConfig`, returns an in-memory result and, when
``cfg.out`` is set, writes CSV/JSON artifacts into that directory. Outputs
contain no timestamps or wall-clock data (those go to ``timings.csv``), so two
runs with the same configuration produce byte-identical metrics files.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__, baselines, channels, circuits, compression, metrics, mpdo, numerics
from .baselines import MpoState
from .compression import CompressionConfig
from .metrics import MetricsRecord
from .mpdo import MpdoState

EXPERIMENTS = ("two-qudit", "one-shot", "circuit", "gradcheck", "mms-scan")
METHODS = ("ipd", "lc", "mpo", "dense")

# default thresholds per simulator in adaptive circuit runs
ADAPTIVE_EPS = {"ipd": 1e-3, "lc": 0.015, "mpo": 0.01, "dense": 0.0}

# per-layer purity, OEE and MMS fidelity are evaluated densely up to this size
DENSE_METRICS_MAX_QUBITS = 10

# fixed-bond circuit mode: caps only, applied after every layer
FIXED_BONDS = {"eps_rel": 0.0, "chi_max": 32, "r_max": 2}

LC_SCAN_EPS = tuple(float(10.0**e) for e in np.arange(-6.0, -0.24, 0.25))


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass
class RunConfig:
    experiment: str
    method: str = "ipd"
    n: int = 8
    depth: int = 20
    noise: tuple[float, ...] = (0.1,)
    sweeps: int = 8
    alpha: int = 2
    eps_rel: float | None = None
    chi_max: int | None = 64
    r_max: int | None = 64
    seed: int = 0
    repeats: int = 1
    out: str | None = None
    dense_check: bool = False
    truncate_purification: bool = True
    fixed_bonds: bool = False
    opt_tol: float = 1e-5
    opt_max_iters: int = 500
    snapshots: bool = False
    # random input states of the two-qudit and one-shot studies
    d: int = 4
    chi_init: int = 12
    r_init: int = 8
    r_trunc: int = 4

    def __post_init__(self) -> None:
        self.noise = tuple(float(p) for p in self.noise)
        if self.eps_rel is None:
            self.eps_rel = ADAPTIVE_EPS.get(self.method, 1e-3)
        self.validate()

    @property
    def noise_p(self) -> float:
        if len(self.noise) != 1:
            raise ConfigError(f"{self.experiment} takes a single noise level, got {list(self.noise)}")
        return self.noise[0]

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.n < 1 or self.depth < 0 or self.repeats < 1:
            raise ConfigError("qubits, depth and repeats must be positive")
        if self.experiment in ("circuit", "mms-scan") and self.n < 2:
            raise ConfigError("circuits need at least two qubits")
        if self.method == "dense" and self.n > mpdo.DENSE_MAX_QUBITS:
            raise ConfigError(f"dense simulation is limited to {mpdo.DENSE_MAX_QUBITS} qubits")
        if self.dense_check and self.n > mpdo.DENSE_MAX_QUBITS:
            raise ConfigError(f"dense checks are limited to {mpdo.DENSE_MAX_QUBITS} qubits")
        if not self.noise or any(not 0.0 <= p <= 1.0 for p in self.noise):
            raise ConfigError("noise levels must lie in [0, 1]")
        if self.alpha not in (1, 2):
            raise ConfigError("alpha must be 1 or 2")
        if self.eps_rel < 0 or self.sweeps < 0:
            raise ConfigError("eps and sweeps must be non-negative")
        for name in ("chi_max", "r_max"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name} must be at least 1")
        if min(self.d, self.chi_init, self.r_init, self.r_trunc) < 1:
            raise ConfigError("state dimensions must be positive")

    def compression(self, sweeps: int | None = None) -> CompressionConfig:
        return CompressionConfig(
            alpha=self.alpha,
            eps_rel=self.eps_rel,
            chi_max=self.chi_max,
            r_max=self.r_max,
            sweeps=self.sweeps if sweeps is None else sweeps,
            opt_tol=self.opt_tol,
            opt_max_iters=self.opt_max_iters,
            truncate_purification=self.truncate_purification,
        )

    def seeds(self) -> list[int]:
        return [self.seed + k for k in range(self.repeats)]


PRESETS: dict[str, dict] = {
    "two-qudit": {"n": 2, "depth": 0, "chi_init": 32, "r_init": 8, "d": 4},
    "one-shot": {
        "n": 6,
        "depth": 10,
        "noise": (0.1,),
        "sweeps": 16,
        "eps_rel": 1e-3,
        "chi_max": 64,
        "r_max": None,
        "dense_check": True,
    },
    "circuit": {"n": 8, "depth": 20, "noise": (0.1,), "sweeps": 8, "chi_max": 64, "r_max": 64},
    "gradcheck": {"repeats": 20},
    "mms-scan": {"n": 8, "depth": 20, "noise": (0.0, 0.01, 0.05, 0.1), "repeats": 4, "method": "dense"},
}


def make_config(experiment: str, **overrides) -> RunConfig:
    """Experiment presets overridden by the non-``None`` entries of ``overrides``."""
    if experiment not in PRESETS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    opts = dict(PRESETS[experiment])
    if overrides.get("fixed_bonds"):
        opts.update(FIXED_BONDS)
    opts.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(experiment=experiment, **opts)


# -- output helpers ----------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def _csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def manifest(cfg: RunConfig, files: Sequence[str]) -> str:
    obj = {"tool": "mpdo-sim", "version": __version__, "config": asdict(cfg), "files": sorted(files)}
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_outputs(cfg: RunConfig, files: dict[str, str]) -> list[Path]:
    """Write ``files`` (name -> text) and the run manifest into ``cfg.out``."""
    if cfg.out is None:
        return []
    root = Path(cfg.out)
    root.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in files.items():
        path = root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        written.append(path)
    mpath = root / "manifest.json"
    mpath.write_text(manifest(cfg, list(files)))
    return [*written, mpath]


# -- two-qudit study ---------------------------------------------------------------------


def _normalized(p: np.ndarray) -> np.ndarray:
    return p / np.sum(p)


def pair_spectra(pair: np.ndarray, split: tuple[int, int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(sigma^2, lambda_left, lambda_right)`` of a pair tensor ``(L, r1 r2, R)``, each normalized."""
    L, _, R = pair.shape
    r1, r2 = split
    t = pair.reshape(L, r1, r2, R)
    sig = numerics.singular_values(t.reshape(L * r1, r2 * R))
    lam_l = numerics.singular_values(t.transpose(1, 0, 2, 3).reshape(r1, -1))
    lam_r = numerics.singular_values(t.transpose(2, 0, 1, 3).reshape(r2, -1))
    return _normalized(sig**2), _normalized(lam_l**2), _normalized(lam_r**2)


@dataclass
class TwoQuditResult:
    seed: int
    iterations: list[tuple[int, float, float, float, float]]
    before: tuple[np.ndarray, np.ndarray, np.ndarray]
    after: tuple[np.ndarray, np.ndarray, np.ndarray]
    lambda_ratio_left: float
    lambda_ratio_right: float
    truncated_fidelity: float
    trace: compression.OptimizationTrace


def two_qudit_study(cfg: RunConfig, seed: int) -> TwoQuditResult:
    """Optimize the gauge of a random two-qudit MPDO and truncate its ancillas to ``cfg.r_trunc``."""
    state = circuits.random_two_qudit_state(cfg.d, cfg.r_init, cfg.chi_init, seed)
    state.move_center(0)
    pair, dims = compression.pair_tensor(state, 0)
    split = (dims[2], dims[3])
    rows: list[tuple[int, float, float, float, float]] = []
    norm = np.linalg.norm(pair)

    def log(u: np.ndarray) -> None:
        sig2, lam_l, lam_r = pair_spectra(compression._gauge(u, pair / norm), split)
        rows.append(
            (
                len(rows),
                mpdo.renyi_entropy(sig2, 1),
                mpdo.renyi_entropy(sig2, 2),
                mpdo.renyi_entropy(lam_l, 1),
                mpdo.renyi_entropy(lam_r, 1),
            )
        )

    u, trace = compression.minimize_unitary(pair, split, cfg.compression(), callback=log)
    before = pair_spectra(pair, split)
    after = pair_spectra(compression._gauge(u, pair), split)
    k = cfg.r_trunc

    def ratio(lam: np.ndarray) -> float:
        return float(lam[k] / lam[0]) if lam.size > k else 0.0

    gauged, _ = compression.apply_pair_gauge(state, 0, u)
    for i in range(2):
        mpdo.truncate_bond_inplace(gauged, "purification", i, 0.0, k)
    fid = metrics.uhlmann_fidelity(mpdo.to_dense(state), mpdo.to_dense(gauged))
    return TwoQuditResult(seed, rows, before, after, ratio(after[1]), ratio(after[2]), fid, trace)


def run_two_qudit(cfg: RunConfig) -> list[TwoQuditResult]:
    results = [two_qudit_study(cfg, s) for s in cfg.seeds()]
    it_rows = [(r.seed, *row) for r in results for row in r.iterations]
    sp_rows = []
    for r in results:
        size = max(len(v) for v in (*r.before, *r.after))
        for j in range(size):
            vals = []
            for a, b in zip(r.before, r.after):
                vals += [a[j] if j < a.size else None, b[j] if j < b.size else None]
            sp_rows.append((r.seed, j, *vals))
    summary = [
        (r.seed, r.trace.iterations, r.trace.objective[0], r.trace.objective[-1], r.lambda_ratio_left, r.lambda_ratio_right, r.truncated_fidelity)
        for r in results
    ]
    write_outputs(
        cfg,
        {
            "iterations.csv": _csv(
                ("seed", "iteration", "entanglement_entropy_1", "entanglement_entropy_2", "left_purification_entropy_1", "right_purification_entropy_1"),
                it_rows,
            ),
            "spectra.csv": _csv(
                ("seed", "index", "sigma2_before", "sigma2_after", "lambda_left_before", "lambda_left_after", "lambda_right_before", "lambda_right_after"),
                sp_rows,
            ),
            "summary.csv": _csv(
                ("seed", "iterations", "objective_initial", "objective_final", "lambda_ratio_left", "lambda_ratio_right", "truncated_fidelity"),
                summary,
            ),
        },
    )
    return results


# -- one-shot compression ----------------------------------------------------------------


@dataclass
class LcScanPoint:
    eps_rel: float
    fidelity: float
    memory_ratio: float
    avg_chi: float
    avg_r: float


@dataclass
class OneShotResult:
    seed: int
    initial: MpdoState
    final: MpdoState | None
    report: compression.CompressionReport | None
    scan: list[LcScanPoint]

    @property
    def fidelity(self) -> float | None:
        if self.report is None or not self.report.sweeps:
            return None
        return self.report.sweeps[-1].fidelity

    def lc_best_fidelity(self, max_ratio: float) -> float | None:
        """Best LC fidelity among scan points at or below ``max_ratio``."""
        pts = [p.fidelity for p in self.scan if p.memory_ratio <= max_ratio]
        return max(pts) if pts else None

    def lc_min_ratio(self, max_infidelity: float) -> float | None:
        """Smallest LC memory ratio with infidelity within ``max_infidelity``."""
        pts = [p.memory_ratio for p in self.scan if 1.0 - p.fidelity <= max_infidelity]
        return min(pts) if pts else None


def one_shot_state(cfg: RunConfig, seed: int) -> MpdoState:
    return circuits.random_mpdo_state(cfg.n, cfg.depth, cfg.noise_p, cfg.chi_init, cfg.r_init, seed)


def lc_scan(state: MpdoState, reference: np.ndarray, eps_values: Sequence[float] = LC_SCAN_EPS) -> list[LcScanPoint]:
    m0 = mpdo.memory_footprint(state)
    pts = []
    for eps in eps_values:
        out, _ = compression.lc_compress(state, eps)
        st = metrics.state_statistics(out)
        f = metrics.uhlmann_fidelity(reference, mpdo.to_dense(out))
        pts.append(LcScanPoint(eps, f, st.memory_bytes / m0, st.avg_chi, st.avg_r))
    return pts


def one_shot_study(cfg: RunConfig, seed: int) -> OneShotResult:
    state = one_shot_state(cfg, seed)
    ref = mpdo.to_dense(state) if cfg.dense_check else None
    final, report = None, None
    if cfg.method == "ipd":
        final, report = compression.ipd_compress(state, cfg.compression(), reference=ref)
    elif cfg.method != "lc":
        raise ConfigError("one-shot compression supports the ipd and lc methods")
    scan = lc_scan(state, ref) if ref is not None else []
    return OneShotResult(seed, state, final, report, scan)


def _spectra_rows(seed: int, stage: str, state: MpdoState) -> list[tuple]:
    sigmas, lambdas = mpdo.all_spectra(state)
    rows = []
    for b, s in enumerate(sigmas):
        rows += [(seed, stage, "entanglement", b, j, v) for j, v in enumerate(_normalized(s**2))]
    for i, lam in enumerate(lambdas):
        rows += [(seed, stage, "purification", i, j, v) for j, v in enumerate(_normalized(lam))]
    return rows


def run_one_shot(cfg: RunConfig) -> list[OneShotResult]:
    results = [one_shot_study(cfg, s) for s in cfg.seeds()]
    files: dict[str, str] = {}
    sweep_rows, spectra_rows, scan_rows = [], [], []
    for r in results:
        spectra_rows += _spectra_rows(r.seed, "initial", r.initial)
        if r.report is not None:
            m0 = r.report.initial_memory_bytes
            for s in r.report.sweeps:
                sweep_rows.append(
                    (
                        r.seed,
                        s.sweep,
                        s.fidelity,
                        s.memory_bytes,
                        s.memory_bytes / m0,
                        float(np.mean(s.chi)) if s.chi else 1.0,
                        float(np.mean(s.r)),
                        s.discarded_weight,
                        s.optimizer_iterations,
                        s.purification_infidelity,
                        float(np.mean(s.entanglement_entropy_1)) if s.entanglement_entropy_1 else 0.0,
                        float(np.mean(s.purification_entropy_1)),
                    )
                )
            spectra_rows += _spectra_rows(r.seed, "final", r.final)
            files[f"report_seed{r.seed}.json"] = r.report.to_json() + "\n"
            if cfg.snapshots:
                files[f"snapshots/final_seed{r.seed}.json"] = json.dumps(mpdo.state_to_json(r.final))
        scan_rows += [(r.seed, p.eps_rel, p.fidelity, p.memory_ratio, p.avg_chi, p.avg_r) for p in r.scan]
    files["sweeps.csv"] = _csv(
        (
            "seed",
            "sweep",
            "fidelity",
            "memory_bytes",
            "memory_ratio",
            "avg_chi",
            "avg_r",
            "discarded_weight",
            "optimizer_iterations",
            "purification_infidelity",
            "mean_entanglement_entropy_1",
            "mean_purification_entropy_1",
        ),
        sweep_rows,
    )
    files["spectra.csv"] = _csv(("seed", "stage", "kind", "bond", "index", "weight"), spectra_rows)
    files["lc_scan.csv"] = _csv(("seed", "eps", "fidelity", "memory_ratio", "avg_chi", "avg_r"), scan_rows)
    write_outputs(cfg, files)
    return results


# -- circuit simulation ------------------------------------------------------------------


@dataclass
class CircuitRun:
    seed: int
    method: str
    records: list[MetricsRecord] = field(default_factory=list)
    min_eigenvalues: list[float] = field(default_factory=list)
    final: MpdoState | MpoState | np.ndarray | None = None


def _compress_mpdo(state: MpdoState, method: str, cfg: CompressionConfig, fixed_bonds: bool = False) -> MpdoState:
    if method == "ipd" and cfg.sweeps > 0:
        if fixed_bonds:
            state, _ = compression.lc_compress(state, cfg.eps_rel, cfg.chi_max, cfg.r_max)
        state, _ = compression.ipd_compress(state, cfg, record=False)
    state, _ = compression.lc_compress(state, cfg.eps_rel, cfg.chi_max, cfg.r_max)
    return state


def _mpdo_metrics(state: MpdoState) -> tuple[float, float, int, float]:
    st = metrics.state_statistics(state)
    return st.avg_chi, st.avg_r, st.memory_bytes, st.middle_entropy


def _operator_oee(state) -> float:
    if isinstance(state, MpdoState):
        return baselines.oee(mpdo.to_mpo(state))
    return baselines.oee(state)


def simulate_circuit(
    circ: circuits.Circuit,
    method: str,
    cfg: CompressionConfig,
    dense_check: bool = False,
    on_layer: Callable[[MetricsRecord], None] | None = None,
    fixed_bonds: bool = False,
) -> CircuitRun:
    """Run ``circ`` layer by layer with one simulator, compressing after every layer.

    IPD applies ``cfg.sweeps`` disentangling sweeps followed by a threshold
    truncation, LC and MPO only the truncation, and the dense simulator is
    exact. With ``dense_check`` an exact dense oracle runs alongside and each
    record carries the pseudo-fidelity to it; for MPDO methods the smallest
    eigenvalue of the represented state is tracked too. Fields that need a dense
    density matrix are ``nan`` when none is available.

    With ``fixed_bonds`` IPD truncates to the caps right after the layer as well,
    so the sweeps act on the capped state.
    """
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}")
    n = circ.n
    if method == "dense" and n > mpdo.DENSE_MAX_QUBITS:
        raise ConfigError(f"dense simulation is limited to {mpdo.DENSE_MAX_QUBITS} qubits")
    zeros = [0] * n
    if method in ("ipd", "lc"):
        state: MpdoState | MpoState | np.ndarray = mpdo.product_state(n, zeros)
    elif method == "mpo":
        state = baselines.mpo_product_state(zeros)
    else:
        state = baselines.dense_product_state(zeros)
    oracle = baselines.dense_product_state(zeros) if dense_check else None
    run = CircuitRun(circ.seed if circ.seed is not None else -1, method)
    for k in range(circ.depth):
        ops = circuits.layer_operations(circ, k)
        t0 = time.perf_counter()
        if method in ("ipd", "lc"):
            for sites, ch in ops:
                state = channels.apply_channel(state, sites, ch)
            state = _compress_mpdo(state, method, cfg, fixed_bonds)
        elif method == "mpo":
            for sites, ch in ops:
                state = baselines.mpo_apply_channel(state, sites, ch)
            state, _ = baselines.mpo_truncate(state, cfg.eps_rel, cfg.chi_max)
        else:
            for sites, ch in ops:
                state = baselines.dense_apply_channel(state, sites, ch)
        wall_ms = int(round(1000 * (time.perf_counter() - t0)))
        if oracle is not None:
            for sites, ch in ops:
                oracle = baselines.dense_apply_channel(oracle, sites, ch)
        rec = _layer_record(k + 1, state, method, oracle, run, wall_ms)
        run.records.append(rec)
        if on_layer is not None:
            on_layer(rec)
    run.final = state
    return run


def _layer_record(layer: int, state, method: str, oracle, run: CircuitRun, wall_ms: int) -> MetricsRecord:
    nan = float("nan")
    if isinstance(state, np.ndarray):
        rho = state
    elif oracle is not None or state.n <= DENSE_METRICS_MAX_QUBITS:
        rho = mpdo.to_dense(state) if isinstance(state, MpdoState) else baselines.mpo_to_dense(state)
    else:
        rho = None
    if isinstance(state, MpdoState):
        avg_chi, avg_r, mem, pur_ent = _mpdo_metrics(state)
    elif isinstance(state, MpoState):
        avg_chi = float(np.mean(state.bond_dims)) if state.bond_dims else 1.0
        avg_r, mem, pur_ent = nan, state.memory_bytes(), nan
    else:
        avg_chi, avg_r, mem, pur_ent = nan, nan, int(state.nbytes), nan
    pf = pur = mms = nan
    if rho is None:
        oee = _operator_oee(state)
    else:
        rho = rho / np.trace(rho).real
        rho = 0.5 * (rho + rho.conj().T)
        if oracle is not None:
            pf = metrics.pseudo_fidelity(oracle, rho)
        oee = baselines.dense_oee(rho)
        pur = metrics.purity(rho)
        w = np.linalg.eigvalsh(rho)
        if isinstance(state, MpdoState):
            run.min_eigenvalues.append(float(w[0]))
        # MPO truncations may leave rho indefinite; the MMS fidelity is then undefined
        if w[0] >= -1e-8:
            mms = metrics.mms_fidelity(rho)
    return MetricsRecord(layer, pf, oee, pur_ent, avg_chi, avg_r, int(mem), pur, mms, wall_ms)


def circuit_for(cfg: RunConfig, seed: int) -> circuits.Circuit:
    return circuits.random_circuit(cfg.n, cfg.depth, cfg.noise_p, seed)


def aggregate(runs: Sequence[CircuitRun]) -> list[dict]:
    """Per-layer mean and standard deviation (``ddof=0``) of every metric over runs."""
    if not runs:
        return []
    depth = min(len(r.records) for r in runs)
    rows = []
    for k in range(depth):
        row: dict = {"layer": runs[0].records[k].layer}
        for name in metrics.METRIC_FIELDS:
            vals = np.array([getattr(r.records[k], name) for r in runs], dtype=float)
            row[f"{name}_mean"] = float(np.mean(vals))
            row[f"{name}_std"] = float(np.std(vals))
        rows.append(row)
    return rows


def run_circuit(cfg: RunConfig) -> list[CircuitRun]:
    ccfg = cfg.compression()
    runs: list[CircuitRun] = []
    files: dict[str, str] = {}
    for s in cfg.seeds():
        partial = CircuitRun(s, cfg.method)
        try:
            run = simulate_circuit(
                circuit_for(cfg, s),
                cfg.method,
                ccfg,
                cfg.dense_check,
                on_layer=partial.records.append,
                fixed_bonds=cfg.fixed_bonds,
            )
        except Exception:
            # keep the layers that did complete
            _write_circuit_outputs(cfg, [*runs, partial], files)
            raise
        runs.append(run)
        if cfg.snapshots and not isinstance(run.final, np.ndarray):
            files[f"snapshots/final_seed{s}.json"] = json.dumps(mpdo.state_to_json(run.final))
    _write_circuit_outputs(cfg, runs, files)
    return runs


def _write_circuit_outputs(cfg: RunConfig, runs: list[CircuitRun], files: dict[str, str]) -> None:
    header = ("seed", *MetricsRecord.CSV_FIELDS)
    rows = [(r.seed, *(rec.row()[f] for f in MetricsRecord.CSV_FIELDS)) for r in runs for rec in r.records]
    files["metrics.csv"] = _csv(header, rows)
    agg = aggregate(runs)
    if agg:
        files["summary.csv"] = _csv(tuple(agg[0]), [tuple(row.values()) for row in agg])
    timings = _csv(("seed", "layer", "wall_ms"), [(r.seed, rec.layer, rec.wall_ms) for r in runs for rec in r.records])
    write_outputs(cfg, files)
    if cfg.out is not None:
        (Path(cfg.out) / "timings.csv").write_text(timings)


# -- gradient checks ---------------------------------------------------------------------


@dataclass
class GradCheck:
    check: str
    instance: int
    dim: int
    rel_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.rel_err < self.tol)


def _random_density(rng: np.random.Generator, dim: int) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    x = g @ g.conj().T + 0.1 * np.eye(dim)
    return x / np.trace(x).real


def _random_hermitian(rng: np.random.Generator, dim: int) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return 0.5 * (g + g.conj().T)


def _five_point(f: Callable[[float], float], h: float) -> float:
    return (f(-2 * h) - 8 * f(-h) + 8 * f(h) - f(2 * h)) / (12 * h)


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-12)


def gradient_checks(
    instances: int = 20,
    seed: int = 0,
    grad1: Callable[[np.ndarray], np.ndarray] = compression.grad_entropy_alpha1,
    grad2: Callable[[np.ndarray], np.ndarray] = compression.grad_entropy_alpha2,
    grad_u: Callable[..., np.ndarray] = compression.gradient_wrt_unitary,
) -> list[GradCheck]:
    """Compare analytic entropy gradients with five-point finite differences.

    Matrix gradients ``G = dE/dX`` are probed along random Hermitian directions
    ``D`` through ``dE = sum_ij G_ij D_ij``; the unitary gradient along random
    complex directions through ``dE = 2 Re Tr(G^dagger D)``.
    """
    rng = circuits.stream(seed, 0, 0, 3)
    out: list[GradCheck] = []
    for k in range(instances):
        dim = int(rng.integers(2, 9))
        x = _random_density(rng, dim)
        d = _random_hermitian(rng, dim)
        for alpha, grad, tol in ((1, grad1, 1e-6), (2, grad2, 1e-8)):
            an = float(np.sum(grad(x) * d).real)
            fd = _five_point(lambda t: compression.entropy_of_gram(x + t * d, alpha), 1e-5)
            out.append(GradCheck(f"grad_entropy_alpha{alpha}", k, dim, _rel(an, fd), tol))
        r1, r2 = int(rng.choice([1, 2])), int(rng.choice([2, 4]))
        L, R = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        a = rng.normal(size=(L, r1 * r2, R)) + 1j * rng.normal(size=(L, r1 * r2, R))
        a /= np.linalg.norm(a)
        g = rng.normal(size=(r1 * r2, r1 * r2)) + 1j * rng.normal(size=(r1 * r2, r1 * r2))
        u, _ = np.linalg.qr(g)
        delta = rng.normal(size=u.shape) + 1j * rng.normal(size=u.shape)
        for alpha in (1, 2):
            prob = compression._PairProblem(a, (r1, r2), alpha)
            an = 2.0 * float(np.vdot(grad_u(u, a, (r1, r2), alpha), delta).real)
            fd = _five_point(lambda t: prob.value(u + t * delta), 1e-4)
            out.append(GradCheck(f"gradient_wrt_unitary_alpha{alpha}", k, r1 * r2, _rel(an, fd), 1e-6))
    return out


def run_gradcheck(cfg: RunConfig, **grads) -> list[GradCheck]:
    checks = gradient_checks(cfg.repeats, cfg.seed, **grads)
    report = {
        "passed": all(c.passed for c in checks),
        "max_rel_err": {name: max(c.rel_err for c in checks if c.check == name) for name in sorted({c.check for c in checks})},
        "checks": [asdict(c) | {"passed": c.passed} for c in checks],
    }
    write_outputs(cfg, {"gradcheck.json": json.dumps(report, indent=2) + "\n"})
    return checks


# -- approach to the maximally mixed state ------------------------------------------------


@dataclass
class MmsRow:
    noise_p: float
    layer: int
    purity_mean: float
    purity_std: float
    mms_fidelity_mean: float
    mms_fidelity_std: float
    oee_mean: float
    oee_std: float


def run_mms_scan(cfg: RunConfig) -> list[MmsRow]:
    """Dense simulation over every noise level in ``cfg.noise``, averaged over ``cfg.repeats`` circuits."""
    if cfg.n > mpdo.DENSE_MAX_QUBITS:
        raise ConfigError(f"the scan runs densely and is limited to {mpdo.DENSE_MAX_QUBITS} qubits")
    rows: list[MmsRow] = []
    nocheck = CompressionConfig(eps_rel=0.0, chi_max=None, r_max=None, sweeps=0)
    for p in cfg.noise:
        runs = [
            simulate_circuit(circuits.random_circuit(cfg.n, cfg.depth, p, s), "dense", nocheck)
            for s in cfg.seeds()
        ]
        for row in aggregate(runs):
            rows.append(
                MmsRow(
                    p,
                    row["layer"],
                    row["purity_mean"],
                    row["purity_std"],
                    row["mms_fidelity_mean"],
                    row["mms_fidelity_std"],
                    row["oee_mean"],
                    row["oee_std"],
                )
            )
    header = tuple(f.name for f in MmsRow.__dataclass_fields__.values())
    write_outputs(cfg, {"mms_scan.csv": _csv(header, [tuple(asdict(r).values()) for r in rows])})
    return rows


RUNNERS: dict[str, Callable[[RunConfig], object]] = {
    "two-qudit": run_two_qudit,
    "one-shot": run_one_shot,
    "circuit": run_circuit,
    "gradcheck": run_gradcheck,
    "mms-scan": run_mms_scan,
}


def run(cfg: RunConfig):
    return RUNNERS[cfg.experiment](cfg)


__all__ = [
    "ConfigError",
    "RunConfig",
    "make_config",
    "run",
    "run_circuit",
    "run_gradcheck",
    "run_mms_scan",
    "run_one_shot",
    "run_two_qudit",
    "simulate_circuit",
]
