"""Monte-Carlo reconstruction of C(phi) = <phi| rho |phi> for the heralded mixture.

|phi> = (|ooo> + e^{i phi}|eee>)/sqrt2 with |ooo> = |1a_o 1b_o 1c_o> and
|eee> = |1a_e 1b_e 1c_e>. Only three matrix elements are needed,

    C(phi) = (Re D_o + Re D_e)/2 + Re(e^{i phi} O),

with D_o = <ooo|rho|ooo>, D_e = <eee|rho|eee>, O = <ooo|rho|eee>. Each is
estimated by averaging the product of the three single-detector kernels over
the same homodyne data set, so all grid points share one sample.
"""

from __future__ import annotations

import cmath
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .fock import MixedEnsemble, PureKet, inner_product
from .homodyne import draw_settings, sample
from .kernel import KernelRequest, kappa, kernel_values
from .source import SIGNAL_LAYOUT, CrystalParams, HeraldedOutput, herald

log = logging.getLogger(__name__)

REQUESTS = {
    "D_o": KernelRequest((1, 0), (1, 0)),
    "D_e": KernelRequest((0, 1), (0, 1)),
    "O": KernelRequest((1, 0), (0, 1)),
}
WORKERS_ENV = "GHZTOMO_WORKERS"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PhiGrid:
    start: float = 0.0
    stop: float = 2 * math.pi
    points: int = 16
    endpoint: bool = False

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.points, endpoint=self.endpoint)


@dataclass(frozen=True)
class ExperimentConfig:
    crystal: CrystalParams = field(default_factory=CrystalParams)
    eta: float = 0.85
    samples: int = 1_000_000
    blocks: int = 20
    seed: int = 0
    grid: PhiGrid = field(default_factory=PhiGrid)
    output: Path | None = None
    workers: int = 1
    chunk: int = 20_000

    def __post_init__(self):
        if not (self.samples >= self.blocks >= 2):
            raise ConfigError(f"N ≥ B ≥ 2 violated (N={self.samples}, B={self.blocks})")
        if not 0.5 < self.eta <= 1:
            raise ConfigError(f"homodyne eta must lie in (0.5, 1], got {self.eta}")
        if self.grid.points < 1:
            raise ConfigError("phi grid must have at least one point")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.workers < 1 or self.chunk < 1:
            raise ConfigError("workers and chunk must be positive")


@dataclass
class ResultTable:
    phi: np.ndarray
    c_est: np.ndarray
    c_err: np.ndarray
    c_theory: np.ndarray
    metadata: dict
    elements: dict  # name -> (mean, stderr)

    def rows(self):
        return list(zip(self.phi, self.c_est, self.c_err, self.c_theory))

    def to_csv(self, path, timestamp: bool = True):
        path = Path(path)
        if not path.parent.is_dir():
            raise FileNotFoundError(f"output directory does not exist: {path.parent}")
        meta = dict(self.metadata)
        if not timestamp:
            meta.pop("timestamp", None)
            meta.pop("wall_clock_s", None)
        lines = [f"# {k}: {_plain(v)}" for k, v in meta.items()]
        lines.append("phi,c_est,c_err,c_theory")
        lines += [",".join(repr(float(v)) for v in row) for row in self.rows()]
        path.write_text("\n".join(lines) + "\n")


def _plain(value):
    """Metadata value as text, with numpy scalars shown as Python numbers."""
    return value.item() if isinstance(value, np.generic) else value


def theoretical_C(config: ExperimentConfig, phi, weights: HeraldedOutput | None = None):
    """(p1/2) (1 - cos(phi - ghz_phase))."""
    p1 = (weights or herald(config.crystal)).p1
    return 0.5 * p1 * (1 - np.cos(np.asarray(phi) - config.crystal.ghz_phase))


def projector_ket(phi: float) -> PureKet:
    r = 1 / math.sqrt(2)
    return PureKet.from_counts(SIGNAL_LAYOUT, [
        ({"a_o": 1, "b_o": 1, "c_o": 1}, r),
        ({"a_e": 1, "b_e": 1, "c_e": 1}, r * cmath.exp(1j * phi)),
    ])


def oracle_C(config: ExperimentConfig, phi: float, ensemble: MixedEnsemble | None = None) -> float:
    """<phi| rho |phi> by direct contraction with the heralded ensemble."""
    if ensemble is None:
        ensemble = herald(config.crystal).state
    bra = projector_ket(phi)
    return float(sum(w * abs(inner_product(bra, k)) ** 2 for w, k in ensemble.components))


def _block_sizes(n: int, blocks: int) -> list[int]:
    base, extra = divmod(n, blocks)
    return [base + (1 if b < extra else 0) for b in range(blocks)]


def estimator_products(samples, requests) -> np.ndarray:
    """Per-sample product over detectors of the single-detector kernels.

    Returns an array (len(requests), N); each request is a tuple of one
    KernelRequest per detector.
    """
    x = samples.x
    u = samples.settings.u
    psi = samples.settings.psi
    n_pairs = x.shape[1]
    out = np.ones((len(requests), x.shape[0]), dtype=complex)
    for j in range(n_pairs):
        pair_reqs = sorted({r[j] for r in requests}, key=lambda r: (r.n, r.m))
        vals = kernel_values(x[:, j], u[:, j], psi[:, j], pair_reqs, samples.eta)
        lookup = dict(zip(pair_reqs, vals))
        for i, r in enumerate(requests):
            out[i] *= lookup[r[j]]
    return out


def _run_block(args):
    ensemble, eta, seed_seq, n, chunk, requests = args
    rng = np.random.default_rng(seed_seq)
    n_pairs = len(ensemble.layout.pairs)
    total = np.zeros(len(requests), dtype=complex)
    done = 0
    while done < n:
        m = min(chunk, n - done)
        settings = draw_settings(rng, m, n_pairs)
        data = sample(ensemble, settings, eta, rng)
        total += estimator_products(data, requests).sum(axis=1)
        done += m
    return total


def estimator_average(ensemble: MixedEnsemble, eta: float, requests, samples: int, blocks: int,
                      seed: int, workers: int = 1, chunk: int = 20_000):
    """Block-averaged estimates of several matrix elements from one simulated data set.

    Block b draws from its own stream spawned off ``seed``; block results are
    merged in block order, so the output does not depend on ``workers``.
    Returns (mean, stderr, block_means) with shapes (R,), (R,), (B, R).
    """
    if samples < blocks:
        raise ValueError(f"fewer samples ({samples}) than blocks ({blocks})")
    sizes = _block_sizes(samples, blocks)
    streams = np.random.SeedSequence(seed).spawn(blocks)
    jobs = [(ensemble, eta, s, n, chunk, requests) for s, n in zip(streams, sizes)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            sums = list(pool.map(_run_block, jobs))
    else:
        sums = [_run_block(j) for j in jobs]
    sums = np.array(sums)
    block_means = sums / np.array(sizes)[:, None]
    mean = sums.sum(axis=0) / samples
    stderr = (block_means.real.std(axis=0, ddof=1) + 1j * block_means.imag.std(axis=0, ddof=1)) / math.sqrt(blocks)
    return mean, stderr, block_means


def assemble_C(d_o, d_e, o, phi):
    phi = np.asarray(phi)
    return 0.5 * (np.real(d_o) + np.real(d_e)) + np.real(np.exp(1j * phi) * o)


def resolve_workers(config: ExperimentConfig) -> int:
    """Worker count, with the environment variable taking precedence."""
    env = os.environ.get(WORKERS_ENV)
    if not env:
        return config.workers
    try:
        workers = int(env)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be a positive integer, got {env!r}") from None
    if workers < 1:
        raise ConfigError(f"{WORKERS_ENV} must be a positive integer, got {env!r}")
    return workers


def run(config: ExperimentConfig, ensemble: MixedEnsemble | None = None) -> ResultTable:
    """Simulate the tomographic measurement of C(phi) on the heralded state.

    ``ensemble`` replaces the heralded mixture (the heralding metadata is
    still computed from the crystal parameters).
    """
    t0 = time.perf_counter()
    out = herald(config.crystal)
    ens = out.state if ensemble is None else ensemble
    kappa(config.eta)
    names = list(REQUESTS)
    requests = [(REQUESTS[k],) * 3 for k in names]
    workers = resolve_workers(config)
    log.info("running %d samples in %d blocks (%d workers)", config.samples, config.blocks, workers)
    mean, stderr, block_means = estimator_average(
        ens, config.eta, requests, config.samples, config.blocks, config.seed, workers, config.chunk
    )
    phi = config.grid.values()
    c_est = assemble_C(mean[0], mean[1], mean[2], phi)
    c_blocks = assemble_C(block_means[:, 0:1], block_means[:, 1:2], block_means[:, 2:3], phi[None, :])
    c_err = c_blocks.std(axis=0, ddof=1) / math.sqrt(config.blocks)
    c_theory = theoretical_C(config, phi, out)
    meta = {
        "eta": config.eta,
        **{k: v for k, v in asdict(config.crystal).items()},
        "ghz_phase": config.crystal.ghz_phase,
        "samples": config.samples,
        "blocks": config.blocks,
        "seed": config.seed,
        "p1": out.p1,
        "p2": out.p2,
        "p3": out.p3,
        "p_phi": out.p_phi,
        "p_rho": out.p_rho,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "wall_clock_s": round(time.perf_counter() - t0, 3),
    }
    elements = {k: (mean[i], stderr[i]) for i, k in enumerate(names)}
    return ResultTable(phi, c_est, c_err, c_theory, meta, elements)
