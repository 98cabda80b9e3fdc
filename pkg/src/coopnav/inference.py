"""Node inference: sigma-point BP measurement update and the LS baseline.

The measurement update stacks the agent state with the position beliefs of
every measured neighbor, runs a single unscented Bayes update against the
stacked range map, and marginalizes the agent block back out. The unscented
transform is exact for linear maps, which pins down the correctness tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EstimationFailureError, InvalidArgumentError, NumericFailureError
from .model import GaussianBelief, STATE_DIM, symmetrize


@dataclass(frozen=True)
class UtParams:
    """Scaled unscented-transform parameters. kappa=None means 3 - L."""

    alpha: float = 1.0
    beta: float = 2.0
    kappa: float | None = None

    def lam(self, dim: int) -> float:
        kappa = (3.0 - dim) if self.kappa is None else self.kappa
        return self.alpha * self.alpha * (dim + kappa) - dim


DEFAULT_UT = UtParams()


@dataclass(frozen=True)
class SigmaPointSet:
    points: np.ndarray  # (2L+1, L)
    mean_weights: np.ndarray  # (2L+1,)
    cov_weights: np.ndarray  # (2L+1,)


@dataclass(frozen=True)
class MeasurementEntry:
    """One averaged range measurement plus the neighbor's position belief."""

    neighbor: object  # NodeId or any hashable, kept opaque here
    z: float
    variance: float
    mu_p: np.ndarray  # (3,)
    c_p: np.ndarray  # (3, 3)

    def __post_init__(self):
        if self.variance <= 0:
            raise InvalidArgumentError("measurement variance must be > 0")
        object.__setattr__(self, "mu_p", np.asarray(self.mu_p, dtype=float))
        object.__setattr__(self, "c_p", np.asarray(self.c_p, dtype=float))
        if self.mu_p.shape != (3,) or self.c_p.shape != (3, 3):
            raise InvalidArgumentError("neighbor belief must be 3-D position mean/cov")


@dataclass(frozen=True)
class MeasurementBatch:
    entries: tuple[MeasurementEntry, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        neighbors = [e.neighbor for e in entries]
        if len(set(neighbors)) != len(neighbors):
            raise InvalidArgumentError("batch neighbors must be distinct")
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class StackedGaussian:
    """Agent state stacked with neighbor positions, block-diagonal at construction."""

    mean: np.ndarray
    covariance: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def _matrix_sqrt(c: np.ndarray, scale: float) -> np.ndarray:
    """Columns of a square root of scale * c; Cholesky with eigen fallback."""
    m = scale * c
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(symmetrize(m))
        tol = 1e-9 * max(1.0, float(np.max(np.abs(vals))))
        if vals[0] < -tol:
            raise NumericFailureError(
                f"covariance not PSD (min eigenvalue {vals[0]:.3e})",
                min_eigenvalue=float(vals[0]),
            ) from None
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


def generate_sigma_points(mean, cov, params: UtParams = DEFAULT_UT) -> SigmaPointSet:
    """Standard scaled unscented sigma-point set for N(mean, cov)."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    dim = mean.shape[0]
    lam = params.lam(dim)
    root = _matrix_sqrt(cov, dim + lam)
    points = np.empty((2 * dim + 1, dim))
    points[0] = mean
    points[1 : dim + 1] = mean + root.T
    points[dim + 1 :] = mean - root.T
    wm = np.full(2 * dim + 1, 0.5 / (dim + lam))
    wc = wm.copy()
    wm[0] = lam / (dim + lam)
    wc[0] = wm[0] + (1.0 - params.alpha * params.alpha + params.beta)
    return SigmaPointSet(points, wm, wc)


def sigma_point_update(mean, cov, h, z, noise_cov, params: UtParams = DEFAULT_UT):
    """Unscented Bayes update of N(mean, cov) against z = h(x) + noise.

    Returns (mean', cov', diagnostics dict). The posterior covariance is
    computed as cov - K S K^T, symmetrized, with negative eigenvalues
    clamped at zero.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    noise_cov = np.atleast_2d(np.asarray(noise_cov, dtype=float))
    sp = generate_sigma_points(mean, cov, params)
    zp = np.array([np.atleast_1d(h(x)) for x in sp.points])
    if zp.shape[1] != z.shape[0]:
        raise InvalidArgumentError("measurement dimension mismatch")
    z_hat = sp.mean_weights @ zp
    dz = zp - z_hat
    dx = sp.points - mean
    s = dz.T @ (sp.cov_weights[:, None] * dz) + noise_cov
    c_xz = dx.T @ (sp.cov_weights[:, None] * dz)
    diagnostics = {"regularized": False}
    try:
        gain = np.linalg.solve(s, c_xz.T).T
    except np.linalg.LinAlgError:
        s = s + 1e-9 * np.eye(s.shape[0])
        gain = np.linalg.solve(s, c_xz.T).T
        diagnostics["regularized"] = True
    post_mean = mean + gain @ (z - z_hat)
    post_cov = symmetrize(cov - gain @ s @ gain.T)
    vals = np.linalg.eigvalsh(post_cov)
    if vals[0] < 0.0:
        vals, vecs = np.linalg.eigh(post_cov)
        post_cov = symmetrize((vecs * np.clip(vals, 0.0, None)) @ vecs.T)
        diagnostics["clamped"] = True
    return post_mean, post_cov, diagnostics


def build_stacked_prior(prior: GaussianBelief, batch: MeasurementBatch) -> StackedGaussian:
    """Block-diagonal stacked prior: own (predicted) state, then neighbor positions."""
    blocks_mu = [prior.mean] + [e.mu_p for e in batch.entries]
    mean = np.concatenate(blocks_mu)
    dim = mean.shape[0]
    cov = np.zeros((dim, dim))
    cov[: prior.dim, : prior.dim] = prior.covariance
    off = prior.dim
    for e in batch.entries:
        cov[off : off + 3, off : off + 3] = e.c_p
        off += 3
    return StackedGaussian(mean, cov)


def _stacked_range_map(state_dim: int, n_neighbors: int):
    def h(x):
        p = x[:3]
        out = np.empty(n_neighbors)
        for i in range(n_neighbors):
            q = x[state_dim + 3 * i : state_dim + 3 * i + 3]
            out[i] = np.linalg.norm(p - q)
        return out

    return h


def spbp_update(
    prior: GaussianBelief, batch: MeasurementBatch, params: UtParams = DEFAULT_UT
) -> GaussianBelief:
    """Sigma-point measurement update of an already-predicted belief.

    Stacks the neighbor position beliefs, updates against the stacked range
    measurements, and marginalizes the own-state block. Empty batches are the
    caller's responsibility (the prediction is already the belief).
    """
    if len(batch) == 0:
        raise InvalidArgumentError("batch must be nonempty; use the prediction directly")
    stacked = build_stacked_prior(prior, batch)
    z = np.array([e.z for e in batch.entries])
    noise = np.diag([e.variance for e in batch.entries])
    h = _stacked_range_map(prior.dim, len(batch))
    post_mean, post_cov, _ = sigma_point_update(
        stacked.mean, stacked.covariance, h, z, noise, params
    )
    nx = prior.dim
    return GaussianBelief(post_mean[:nx], symmetrize(post_cov[:nx, :nx]))


def marginalize_position(belief: GaussianBelief) -> tuple[np.ndarray, np.ndarray]:
    """Position-block mean and covariance of a belief."""
    return belief.mean[:3].copy(), np.array(belief.covariance[:3, :3])


@dataclass(frozen=True)
class LsOptions:
    step: float = 0.1
    max_iters: int = 500
    tol: float = 1e-6  # on gradient norm
    divergence_norm: float = 1e6


def ls_estimate(prev, batch: MeasurementBatch, options: LsOptions = LsOptions()) -> np.ndarray:
    """Gradient descent on the squared range-residual cost, warm-started at prev."""
    if len(batch) < 1:
        raise InvalidArgumentError("LS requires at least one measurement")
    p = np.array(prev, dtype=float)
    anchors = np.array([e.mu_p for e in batch.entries])
    zs = np.array([e.z for e in batch.entries])
    for _ in range(options.max_iters):
        diff = p - anchors
        dists = np.linalg.norm(diff, axis=1)
        safe = np.where(dists > 1e-12, dists, 1.0)
        resid = dists - zs
        grad = 2.0 * (resid / safe) @ diff
        if np.linalg.norm(grad) <= options.tol:
            break
        p = p - options.step * grad
        if np.linalg.norm(p) > options.divergence_norm:
            raise EstimationFailureError("LS gradient descent diverged")
    return p


def ls_residual(p, batch: MeasurementBatch) -> float:
    """Value of the LS cost at p."""
    p = np.asarray(p, dtype=float)
    total = 0.0
    for e in batch.entries:
        total += (np.linalg.norm(p - e.mu_p) - e.z) ** 2
    return float(total)
