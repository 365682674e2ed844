"""Multi-snapshot sensing model with unknown sensor gains.

Each snapshot is ``y_l = diag(g) A_l x`` for a fresh Gaussian matrix ``A_l``
and a gain vector ``g`` that is shared by all snapshots.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Dimensions",
    "SensingEnsemble",
    "ProblemInstance",
    "derive_seed",
    "draw_ensemble",
    "draw_sparse_signal",
    "draw_gains",
    "synthesize",
    "loss",
    "backproject_init",
    "make_instance",
    "instance_to_dict",
    "instance_from_dict",
    "save_instance",
    "load_instance",
]

_MAX_REJECTIONS = 100_000


def derive_seed(master: int, *key: int) -> int:
    """Map ``(master, key...)`` to an independent 64-bit seed.

    The mapping is counter based: a seed depends only on its own key, so adding
    trials or cells never perturbs the streams of existing ones.
    """
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


@dataclass(frozen=True)
class Dimensions:
    n: int
    m: int
    p: int
    k: int

    def __post_init__(self):
        for name in ("n", "m", "p", "k"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.k > self.n:
            raise ValueError(f"sparsity k={self.k} exceeds signal length n={self.n}")


class SensingEnsemble:
    """The ``p`` sensing matrices ``A_l`` of shape ``(m, n)``.

    Matrices are either held densely (``matrices`` of shape ``(p, m, n)``) or,
    in compact mode, regenerated from ``seed`` one snapshot at a time. Both paths
    produce bit-identical matrices because snapshot ``l`` always draws from the
    stream keyed by ``(seed, l)``.
    """

    def __init__(self, n: int, m: int, p: int, seed: int | None = None,
                 matrices: np.ndarray | None = None):
        self.n, self.m, self.p = int(n), int(m), int(p)
        self.seed = None if seed is None else int(seed)
        if matrices is None and seed is None:
            raise ValueError("an ensemble needs explicit matrices or a seed")
        if matrices is not None:
            matrices = np.asarray(matrices, dtype=np.float64)
            if matrices.shape != (self.p, self.m, self.n):
                raise ValueError(
                    f"matrices have shape {matrices.shape}, expected "
                    f"{(self.p, self.m, self.n)}")
            matrices.setflags(write=False)
        self._dense = matrices

    @property
    def compact(self) -> bool:
        return self._dense is None

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.p, self.m, self.n

    @property
    def nbytes(self) -> int:
        return 8 * self.p * self.m * self.n

    def matrix(self, l: int) -> np.ndarray:
        if self._dense is not None:
            return self._dense[l]
        return _rng(self.seed, l).standard_normal((self.m, self.n))

    @property
    def matrices(self) -> np.ndarray:
        """Dense ``(p, m, n)`` stack (materialized on demand in compact mode)."""
        if self._dense is not None:
            return self._dense
        return np.stack([self.matrix(l) for l in range(self.p)])

    def densify(self) -> "SensingEnsemble":
        if self._dense is not None:
            return self
        return SensingEnsemble(self.n, self.m, self.p, self.seed, self.matrices)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Stack of ``A_l x`` with shape ``(p, m)``."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise ValueError(f"signal has shape {x.shape}, expected ({self.n},)")
        if self._dense is not None:
            return self._dense @ x
        return np.stack([self.matrix(l) @ x for l in range(self.p)])

    def adjoint(self, r: np.ndarray) -> np.ndarray:
        """``sum_l A_l^T r_l`` for a ``(p, m)`` stack ``r``."""
        r = np.asarray(r, dtype=np.float64)
        if r.shape != (self.p, self.m):
            raise ValueError(f"residual has shape {r.shape}, expected {(self.p, self.m)}")
        if self._dense is not None:
            # fixed reduction order over snapshots
            out = np.zeros(self.n)
            for l in range(self.p):
                out += r[l] @ self._dense[l]
            return out
        out = np.zeros(self.n)
        for l in range(self.p):
            out += r[l] @ self.matrix(l)
        return out

    def forward_many(self, xs: list[np.ndarray]) -> list[np.ndarray]:
        """Apply the ensemble to several signals with one pass over the matrices."""
        if self._dense is not None:
            return [self.forward(x) for x in xs]
        outs = [np.empty((self.p, self.m)) for _ in xs]
        for l in range(self.p):
            a = self.matrix(l)
            for out, x in zip(outs, xs):
                out[l] = a @ x
        return outs

    def __eq__(self, other):
        if not isinstance(other, SensingEnsemble):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.matrices, other.matrices)

    def __repr__(self):
        mode = "compact" if self.compact else "dense"
        return f"SensingEnsemble(p={self.p}, m={self.m}, n={self.n}, seed={self.seed}, {mode})"


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    dims: Dimensions
    x: np.ndarray
    g: np.ndarray
    ensemble: SensingEnsemble
    y: np.ndarray
    rho: float
    seed: int | None = None
    extra: dict = field(default_factory=dict)


def draw_ensemble(dims: Dimensions, seed: int, compact: bool = False) -> SensingEnsemble:
    """Draw ``p`` i.i.d. standard Gaussian ``m x n`` matrices from ``seed``."""
    if not isinstance(dims, Dimensions):
        raise TypeError("dims must be a Dimensions instance")
    ens = SensingEnsemble(dims.n, dims.m, dims.p, seed=seed)
    return ens if compact else ens.densify()


def draw_sparse_signal(n: int, k: int, seed: int) -> np.ndarray:
    """Exactly ``k`` nonzeros on a uniformly drawn support, i.i.d. N(0, 1) values."""
    if not (1 <= k <= n):
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = _rng(seed)
    x = np.zeros(n)
    support = rng.choice(n, size=k, replace=False)
    vals = rng.standard_normal(k)
    # a standard normal draw of exactly 0.0 would lose a support entry
    vals[vals == 0.0] = np.finfo(float).tiny
    x[support] = vals
    return x


def draw_gains(m: int, rho: float, seed: int) -> np.ndarray:
    """Draw gains in ``G_rho``: entries in ``[1-rho, 1+rho]`` with mean one.

    Offsets are i.i.d. uniform on ``[-rho, rho]``, centered, and rejected if
    centering pushed any offset outside the box. The result is rescaled so the
    entries sum to ``m``.
    """
    if m < 1:
        raise ValueError(f"m must be positive, got {m}")
    if not (0.0 <= rho < 1.0):
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    if rho == 0.0:
        return np.ones(m)
    rng = _rng(seed)
    for _ in range(_MAX_REJECTIONS):
        e = rng.uniform(-rho, rho, size=m)
        e -= e.mean()
        if np.all(np.abs(e) <= rho):
            g = 1.0 + e
            g *= m / g.sum()
            return g
    raise RuntimeError(f"gain sampler rejected {_MAX_REJECTIONS} draws (m={m}, rho={rho})")


def _check_pair(ensemble: SensingEnsemble, x, g):
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if x.shape != (ensemble.n,):
        raise ValueError(f"signal has shape {x.shape}, expected ({ensemble.n},)")
    if g.shape != (ensemble.m,):
        raise ValueError(f"gains have shape {g.shape}, expected ({ensemble.m},)")
    return x, g


def _check_snapshots(ensemble: SensingEnsemble, y):
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (ensemble.p, ensemble.m):
        raise ValueError(f"snapshots have shape {y.shape}, expected {(ensemble.p, ensemble.m)}")
    return y


def synthesize(ensemble: SensingEnsemble, x, g) -> np.ndarray:
    """Snapshots ``y_l = diag(g) A_l x`` as a ``(p, m)`` array."""
    x, g = _check_pair(ensemble, x, g)
    return g * ensemble.forward(x)


def loss(ensemble: SensingEnsemble, y, xi, gamma) -> float:
    """``1/(2mp) sum_l ||diag(gamma) A_l xi - y_l||^2``."""
    xi, gamma = _check_pair(ensemble, xi, gamma)
    y = _check_snapshots(ensemble, y)
    r = gamma * ensemble.forward(xi) - y
    return float(np.sum(r * r) / (2.0 * ensemble.m * ensemble.p))


def backproject_init(ensemble: SensingEnsemble, y) -> np.ndarray:
    """Backprojection ``1/(mp) sum_l A_l^T y_l``."""
    y = _check_snapshots(ensemble, y)
    return ensemble.adjoint(y) / (ensemble.m * ensemble.p)


def make_instance(dims: Dimensions, rho: float, seed: int,
                  compact: bool = False) -> ProblemInstance:
    """Random instance: sparse Gaussian signal, gains in ``G_rho``, Gaussian ensemble.

    Signal, gains and ensemble use independent streams derived from ``seed``.
    """
    x = draw_sparse_signal(dims.n, dims.k, derive_seed(seed, 0))
    g = draw_gains(dims.m, rho, derive_seed(seed, 1))
    ens = draw_ensemble(dims, derive_seed(seed, 2), compact=compact)
    y = synthesize(ens, x, g)
    return ProblemInstance(dims, x, g, ens, y, float(rho), int(seed))


def instance_to_dict(inst: ProblemInstance, compact: bool = False) -> dict:
    """JSON-ready dict. ``compact`` stores only the seed for regeneration."""
    d = inst.dims
    out = {"n": d.n, "m": d.m, "p": d.p, "k": d.k, "rho": inst.rho,
           "seed": inst.seed, "compact": bool(compact)}
    if compact:
        if inst.seed is None:
            raise ValueError("compact serialization needs an instance seed")
        return out
    out["ensemble_seed"] = inst.ensemble.seed
    out["signal"] = inst.x.tolist()
    out["gains"] = inst.g.tolist()
    out["matrices"] = inst.ensemble.matrices.ravel().tolist()
    out["snapshots"] = inst.y.ravel().tolist()
    return out


def instance_from_dict(doc: dict) -> ProblemInstance:
    try:
        dims = Dimensions(int(doc["n"]), int(doc["m"]), int(doc["p"]), int(doc["k"]))
        rho = float(doc["rho"])
        seed = doc.get("seed")
        if doc.get("compact", False):
            if seed is None:
                raise ValueError("compact instance document lacks a seed")
            return make_instance(dims, rho, int(seed))
        mats = np.asarray(doc["matrices"], dtype=np.float64).reshape(dims.p, dims.m, dims.n)
        ens = SensingEnsemble(dims.n, dims.m, dims.p, seed=doc.get("ensemble_seed"),
                              matrices=mats)
        x = np.asarray(doc["signal"], dtype=np.float64)
        g = np.asarray(doc["gains"], dtype=np.float64)
        if "snapshots" in doc:
            y = np.asarray(doc["snapshots"], dtype=np.float64).reshape(dims.p, dims.m)
        else:
            y = synthesize(ens, x, g)
    except KeyError as exc:
        raise ValueError(f"instance document is missing field {exc}") from None
    _check_pair(ens, x, g)
    return ProblemInstance(dims, x, g, ens, y, rho, None if seed is None else int(seed))


def save_instance(inst: ProblemInstance, path, compact: bool = False) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst, compact)))


def load_instance(path) -> ProblemInstance:
    return instance_from_dict(json.loads(Path(path).read_text()))
