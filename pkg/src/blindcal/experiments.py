"""Monte-Carlo phase-transition sweeps and the compressive imaging demo."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .geometry import GainFeasibleSet
from .pnm import read_pnm, write_pnm
from .sensing import Dimensions, derive_seed, draw_ensemble, draw_gains, make_instance, \
    synthesize
from .solver import SolverConfig, SolverResult, bc_iht_solve, evaluate, \
    iht_solve_uncalibrated
from .wavelet import WaveletBasis, sparsify_top_k

log = logging.getLogger(__name__)

__all__ = [
    "CSV_HEADER",
    "PhaseGridSpec",
    "PhaseCell",
    "PhaseGridResult",
    "run_trial",
    "run_phase_grid",
    "emit_phase_csv",
    "parse_phase_csv",
    "reference_curve",
    "fit_reference_constant",
    "synthetic_image",
    "prepare_image",
    "run_imaging_demo",
]

CSV_HEADER = ["n", "k", "m", "p", "trials", "successes", "probability", "mean_iters",
              "mean_seconds"]


@dataclass
class PhaseGridSpec:
    n_values: list = field(default_factory=lambda: [256])
    k_values: list = field(default_factory=lambda: [16])
    m_over_k_exponents: list = field(default_factory=lambda: [1.0, 2.0, 3.0])
    p_exponents: list = field(default_factory=lambda: [1.0, 2.0, 3.0])
    rho: float = 0.5
    trials: int = 24
    zeta_db: float = -60.0
    master_seed: int = 0
    stop_tol: float = 1e-7
    max_iters: int = 5000

    @classmethod
    def paper(cls, trials: int = 144, master_seed: int = 0) -> "PhaseGridSpec":
        """The full published grid: n in {2^9, 2^10}, k in {2^5, 2^6, 2^7},
        log2(m/k) and log2(p) from 1 to 5 in steps of 1/4."""
        exps = [1 + 0.25 * i for i in range(17)]
        return cls([512, 1024], [32, 64, 128], exps, list(exps), 0.5, trials, -60.0,
                   master_seed)

    @classmethod
    def from_dict(cls, doc: dict) -> "PhaseGridSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown grid spec fields: {sorted(unknown)}")
        spec = cls(**doc)
        spec.validate()
        return spec

    @classmethod
    def load(cls, path) -> "PhaseGridSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def zeta(self) -> float:
        return 10 ** (self.zeta_db / 20)

    def validate(self) -> None:
        for name in ("n_values", "k_values", "m_over_k_exponents", "p_exponents"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be non-empty")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not (0.0 <= self.rho < 1.0):
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        for n in self.n_values:
            for k in self.k_values:
                if not (1 <= k <= n):
                    raise ValueError(f"infeasible cell: k={k} with n={n}")

    def cells(self) -> list[tuple[int, int, int, int]]:
        """Distinct ``(n, k, m, p)`` cells sorted lexicographically."""
        self.validate()
        out = set()
        for n in self.n_values:
            for k in self.k_values:
                for em in self.m_over_k_exponents:
                    m = math.ceil(2.0 ** em * k)
                    for ep in self.p_exponents:
                        out.add((int(n), int(k), int(m), math.ceil(2.0 ** ep)))
        return sorted(out)


@dataclass(frozen=True)
class PhaseCell:
    n: int
    k: int
    m: int
    p: int
    trials: int
    successes: int
    probability: float
    mean_iters: float
    mean_seconds: float


@dataclass
class PhaseGridResult:
    cells: list[PhaseCell]

    def lookup(self, n, k, m, p) -> PhaseCell:
        for c in self.cells:
            if (c.n, c.k, c.m, c.p) == (n, k, m, p):
                return c
        raise KeyError((n, k, m, p))


def run_trial(n, k, m, p, trial, rho, master_seed, stop_tol=1e-7, max_iters=5000,
              zeta=10 ** -3):
    """Solve one seeded instance; returns ``(success, iterations, seconds)``."""
    seed = derive_seed(master_seed, n, k, m, p, trial)
    inst = make_instance(Dimensions(n, m, p, k), rho, seed)
    cfg = SolverConfig(k=k, rho=rho, stop_tol=stop_tol, max_iters=max_iters)
    t0 = time.perf_counter()
    res = bc_iht_solve(inst.ensemble, inst.y, cfg, trace=False)
    dt = time.perf_counter() - t0
    rep = evaluate(inst.x, inst.g, res, zeta=zeta)
    return rep.success, res.iterations, dt


def _run_chunk(args):
    return [run_trial(*a) for a in args]


def run_phase_grid(spec: PhaseGridSpec, threads: int = 1, progress=None) -> PhaseGridResult:
    """Run every ``(cell, trial)`` pair of ``spec`` and aggregate per cell.

    Trial seeds depend only on ``(master_seed, n, k, m, p, trial)``, so results do
    not depend on ``threads`` or on the order in which work is executed.
    """
    cells = spec.cells()
    jobs = [(n, k, m, p, t, spec.rho, spec.master_seed, spec.stop_tol, spec.max_iters,
             spec.zeta)
            for (n, k, m, p) in cells for t in range(spec.trials)]
    if threads <= 1:
        outcomes = []
        for i, j in enumerate(jobs):
            outcomes.append(run_trial(*j))
            if progress:
                progress(i + 1, len(jobs))
    else:
        chunk = max(1, len(jobs) // (4 * threads))
        chunks = [jobs[i:i + chunk] for i in range(0, len(jobs), chunk)]
        outcomes = []
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for part in pool.map(_run_chunk, chunks):
                outcomes.extend(part)
                if progress:
                    progress(len(outcomes), len(jobs))

    out = []
    for ci, (n, k, m, p) in enumerate(cells):
        block = outcomes[ci * spec.trials:(ci + 1) * spec.trials]
        succ = sum(1 for s, _, _ in block if s)
        out.append(PhaseCell(n, k, m, p, spec.trials, succ, succ / spec.trials,
                             float(np.mean([it for _, it, _ in block])),
                             float(np.mean([dt for _, _, dt in block]))))
    return PhaseGridResult(out)


def emit_phase_csv(result: PhaseGridResult, path, timing: bool = True) -> None:
    """Write one row per cell sorted by ``(n, k, m, p)``.

    With ``timing=False`` the ``mean_seconds`` column is written as 0 so the file
    is byte-reproducible.
    """
    rows = sorted(result.cells, key=lambda c: (c.n, c.k, c.m, c.p))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for c in rows:
            w.writerow([c.n, c.k, c.m, c.p, c.trials, c.successes, repr(float(c.probability)),
                        repr(float(c.mean_iters)),
                        repr(float(c.mean_seconds) if timing else 0.0)])


def parse_phase_csv(path) -> PhaseGridResult:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        cells = [PhaseCell(int(r[0]), int(r[1]), int(r[2]), int(r[3]), int(r[4]), int(r[5]),
                           float(r[6]), float(r[7]), float(r[8])) for r in reader if r]
    return PhaseGridResult(cells)


def reference_curve(k, m_values, C) -> list[tuple[float, float]]:
    """Points ``(m, p)`` on ``m p = C (k + m)``, i.e. ``p = C (1 + k/m)``."""
    if C <= 0 or k <= 0:
        raise ValueError("k and C must be positive")
    pts = []
    for m in m_values:
        if m <= 0:
            raise ValueError(f"m must be positive, got {m}")
        pts.append((m, C * (1.0 + k / m)))
    return pts


def fit_reference_constant(result: PhaseGridResult, n: int, k: int,
                           level: float = 0.5) -> float:
    """Least-squares ``C`` for the ``level`` contour of one ``(n, k)`` panel.

    For each ``m`` the crossing ``p`` is interpolated linearly in ``log2 p``; the fit
    is ``log2 C = mean(log2 p_c - log2(1 + k/m))``. Columns that never cross
    the level are skipped.
    """
    logs = []
    ms = sorted({c.m for c in result.cells if c.n == n and c.k == k})
    for m in ms:
        col = sorted((c for c in result.cells if (c.n, c.k, c.m) == (n, k, m)),
                     key=lambda c: c.p)
        for a, b in zip(col, col[1:]):
            if a.probability < level <= b.probability:
                la, lb = math.log2(a.p), math.log2(b.p)
                t = (level - a.probability) / (b.probability - a.probability)
                lp = la + t * (lb - la)
                logs.append(lp - math.log2(1.0 + k / m))
                break
    if not logs:
        raise ValueError(f"no column of panel n={n}, k={k} crosses probability {level}")
    return 2.0 ** float(np.mean(logs))


def synthetic_image(side: int) -> np.ndarray:
    """Piecewise-smooth grayscale test image in ``[0, 1]``."""
    u = (np.arange(side) + 0.5) / side
    X, Y = np.meshgrid(u, u)
    img = 0.25 + 0.3 * X * (1 - Y)
    img = img + 0.35 * ((X - 0.62) ** 2 + (Y - 0.4) ** 2 < 0.05)
    img = img - 0.2 * ((np.abs(X - 0.3) < 0.12) & (np.abs(Y - 0.7) < 0.18))
    img = img + 0.1 * np.sin(6 * np.pi * X) * (Y > 0.8)
    return np.clip(img, 0.0, 1.0)


def prepare_image(img: np.ndarray, side: int) -> np.ndarray:
    """Center-crop to a square and resample to ``side x side``.

    Downscaling by an integer factor averages blocks; other ratios use
    nearest-neighbour sampling.
    """
    h, w = img.shape[:2]
    s = min(h, w)
    top, left = (h - s) // 2, (w - s) // 2
    img = img[top:top + s, left:left + s]
    if s == side:
        return img.copy()
    if s % side == 0:
        f = s // side
        shp = (side, f, side, f) + img.shape[2:]
        return img.reshape(shp).mean(axis=(1, 3))
    idx = np.minimum(((np.arange(side) + 0.5) * s / side).astype(int), s - 1)
    return img[np.ix_(idx, idx)]


def _channels(img):
    if img.ndim == 2:
        return [img]
    return [img[..., c] for c in range(img.shape[2])]


def _stack(chans, side):
    planes = [c.reshape(side, side) for c in chans]
    return planes[0] if len(planes) == 1 else np.stack(planes, axis=-1)


def run_imaging_demo(image_path=None, side=64, k=300, m=1764, p=5, rho=0.5, seed=0,
                     out_dir=".", stop_tol=1e-7, max_iters=5000,
                     memory_budget=2 * 1024 ** 3, levels=None, grayscale=False) -> dict:
    """Blind calibration of a sparsified image, compared with uncalibrated IHT.

    Writes the ground truth and both reconstructions as PNM files, the raw
    estimates as ``estimates.json`` and the summary as ``report.json``. The
    summary reports the worst channel for each metric.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if image_path is None:
        img = synthetic_image(side)
    else:
        img = prepare_image(read_pnm(image_path), side)
    if grayscale and img.ndim == 3:
        img = img.mean(axis=2)

    basis = WaveletBasis(side, levels)
    n = basis.n
    dims = Dimensions(n, m, p, k)
    g = draw_gains(m, rho, derive_seed(seed, 1))
    compact = 8 * n * m * p > memory_budget
    ens = draw_ensemble(dims, derive_seed(seed, 2), compact=compact)
    log.info("imaging demo: n=%d m=%d p=%d k=%d, %s ensemble", n, m, p, k,
             "seed-regenerated" if compact else "dense")
    cfg = SolverConfig(k=k, rho=rho, stop_tol=stop_tol, max_iters=max_iters, basis=basis)

    truths, bc_runs, iht_runs, channel_reports = [], [], [], []
    for ci, chan in enumerate(_channels(img)):
        x, _ = sparsify_top_k(basis, chan.ravel(), k)
        y = synthesize(ens, x, g)
        t0 = time.perf_counter()
        bc = bc_iht_solve(ens, y, cfg, trace=False)
        t_bc = time.perf_counter() - t0
        t0 = time.perf_counter()
        iht = iht_solve_uncalibrated(ens, y, cfg, trace=False)
        t_iht = time.perf_counter() - t0
        eb = evaluate(x, g, bc)
        ei = evaluate(x, g, iht)
        log.info("channel %d: BC-IHT %.2f dB in %d its, IHT %.2f dB in %d its", ci,
                 eb.rsnr_x_db, bc.iterations, ei.rsnr_x_db, iht.iterations)
        truths.append(x)
        bc_runs.append(bc)
        iht_runs.append(iht)
        channel_reports.append({
            "channel": ci,
            "bciht": {**asdict(eb), "iterations": bc.iterations,
                      "termination": bc.termination, "seconds": t_bc},
            "iht": {**asdict(ei), "iterations": iht.iterations,
                    "termination": iht.termination, "seconds": t_iht},
        })

    ext = "pgm" if len(truths) == 1 else "ppm"
    write_pnm(out_dir / f"truth.{ext}", _stack(truths, side))
    # estimates are shown in the canonical gain scale of the truth
    write_pnm(out_dir / f"bciht.{ext}",
              _stack([r.x_hat * r.g_hat.mean() for r in bc_runs], side))
    write_pnm(out_dir / f"iht.{ext}", _stack([r.x_hat for r in iht_runs], side))
    gside = math.isqrt(m)
    if gside * gside == m and rho > 0:
        def gain_img(v):
            return ((v - (1 - rho)) / (2 * rho)).reshape(gside, gside)
        write_pnm(out_dir / "gains_truth.pgm", gain_img(g))
        worst = int(np.argmin([c["bciht"]["rsnr_g_db"] for c in channel_reports]))
        write_pnm(out_dir / "gains_bciht.pgm",
                  gain_img(bc_runs[worst].g_hat / bc_runs[worst].g_hat.mean()))

    estimates = {
        "side": side, "rho": rho, "gains": g.tolist(),
        "channels": [{"truth": x.tolist(), "bciht": b.to_dict(), "iht": i.to_dict()}
                     for x, b, i in zip(truths, bc_runs, iht_runs)],
    }
    (out_dir / "estimates.json").write_text(json.dumps(estimates))

    def worst(solver, key):
        return min(c[solver][key] for c in channel_reports)

    report = {
        "side": side, "n": n, "k": k, "m": m, "p": p, "rho": rho, "seed": seed,
        "stop_tol": stop_tol, "levels": basis.levels, "compact_ensemble": compact,
        "image": None if image_path is None else str(image_path),
        "bciht_rsnr_x_db": worst("bciht", "rsnr_x_db"),
        "bciht_rsnr_g_db": worst("bciht", "rsnr_g_db"),
        "iht_rsnr_x_db": worst("iht", "rsnr_x_db"),
        "bciht_iterations": max(c["bciht"]["iterations"] for c in channel_reports),
        "iht_iterations": max(c["iht"]["iterations"] for c in channel_reports),
        "bciht_gains_feasible": all(GainFeasibleSet(m, rho).contains(r.g_hat)
                                    for r in bc_runs),
        "channels": channel_reports,
    }
    (out_dir / "report.json").write_text(json.dumps(report, indent=2))
    return report


def recompute_demo_report(out_dir) -> dict:
    """Worst-channel RSNRs recomputed from ``estimates.json``."""
    doc = json.loads((Path(out_dir) / "estimates.json").read_text())
    g = np.asarray(doc["gains"])
    bx, bg, ix = [], [], []
    for ch in doc["channels"]:
        x = np.asarray(ch["truth"])
        eb = evaluate(x, g, SolverResult.from_dict(ch["bciht"]))
        ei = evaluate(x, g, SolverResult.from_dict(ch["iht"]))
        bx.append(eb.rsnr_x_db)
        bg.append(eb.rsnr_g_db)
        ix.append(ei.rsnr_x_db)
    return {"bciht_rsnr_x_db": min(bx), "bciht_rsnr_g_db": min(bg), "iht_rsnr_x_db": min(ix)}


def default_threads() -> int:
    return max(1, os.cpu_count() or 1)
