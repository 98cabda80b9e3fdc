"""Domain types and the constant-velocity motion / range measurement models.

State convention: x = [p, v] with p the 3-D position [m] and v the 3-D
velocity [m/s], so the state dimension is 6. Anchors are represented as
beliefs with exactly-zero covariance rather than a separate type.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

STATE_DIM = 6

# Max tolerated asymmetry / negative eigenvalue on covariance matrices.
SYM_TOL = 1e-9
PSD_TOL = 1e-9


class NodeKind(enum.Enum):
    AGENT = "agent"
    ANCHOR = "anchor"


@dataclass(frozen=True, order=True)
class NodeId:
    """Network-unique node identifier."""

    id: int
    kind: NodeKind = field(compare=False, default=NodeKind.AGENT)

    def __post_init__(self):
        if self.id < 0:
            raise InvalidArgumentError(f"node id must be nonnegative, got {self.id}")

    @property
    def is_anchor(self) -> bool:
        return self.kind is NodeKind.ANCHOR


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class NodeState:
    """Kinematic ground-truth state of a node."""

    position: np.ndarray  # (3,) meters
    velocity: np.ndarray  # (3,) meters/second

    def __post_init__(self):
        p = _readonly(self.position)
        v = _readonly(self.velocity)
        if p.shape != (3,) or v.shape != (3,):
            raise InvalidArgumentError("position and velocity must be 3-vectors")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(v))):
            raise InvalidArgumentError("state components must be finite")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "velocity", v)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity])


def symmetrize(c: np.ndarray) -> np.ndarray:
    """Enforce exact symmetry; applied after every covariance-producing op."""
    return (c + c.T) / 2.0


@dataclass(frozen=True)
class GaussianBelief:
    """Mean/covariance representation of a node's marginal state posterior."""

    mean: np.ndarray  # (STATE_DIM,)
    covariance: np.ndarray  # (STATE_DIM, STATE_DIM)

    def __post_init__(self):
        mu = _readonly(self.mean)
        c = np.array(self.covariance, dtype=float, copy=True)
        if mu.ndim != 1 or c.shape != (mu.shape[0], mu.shape[0]):
            raise InvalidArgumentError("covariance shape must match mean dimension")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(c))):
            raise InvalidArgumentError("belief components must be finite")
        if np.max(np.abs(c - c.T)) > SYM_TOL:
            raise InvalidArgumentError("covariance asymmetry exceeds tolerance")
        c = symmetrize(c)
        c.setflags(write=False)
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "covariance", c)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.covariance)[0])

    def is_psd(self, tol: float = PSD_TOL) -> bool:
        return self.min_eigenvalue() >= -tol


def anchor_belief(position) -> GaussianBelief:
    """Belief of a perfectly known static node: zero velocity, zero covariance."""
    p = np.asarray(position, dtype=float)
    mean = np.concatenate([p, np.zeros(3)])
    return GaussianBelief(mean, np.zeros((STATE_DIM, STATE_DIM)))


@dataclass(frozen=True)
class MotionModel:
    """Constant-velocity model driven by white acceleration noise.

    sigma_*2 are the per-axis driving-noise variances in (m/s^2)^2.
    """

    sigma_x2: float
    sigma_y2: float
    sigma_z2: float

    def __post_init__(self):
        for v in (self.sigma_x2, self.sigma_y2, self.sigma_z2):
            if v < 0:
                raise InvalidArgumentError("driving-noise variances must be >= 0")

    @property
    def noise_diag(self) -> np.ndarray:
        return np.array([self.sigma_x2, self.sigma_y2, self.sigma_z2])


def motion_matrices(model: MotionModel, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """State-transition matrix A(dt) and driving-noise covariance Cw(dt).

    A = [[I, dt I], [0, I]]; Cw = B(dt) Cu B(dt)^T with B = [[dt^2/2 I], [dt I]].
    """
    if dt < 0:
        raise InvalidArgumentError(f"dt must be >= 0, got {dt}")
    i3 = np.eye(3)
    a = np.block([[i3, dt * i3], [np.zeros((3, 3)), i3]])
    cu = np.diag(model.noise_diag)
    b = np.vstack([0.5 * dt * dt * i3, dt * i3])
    cw = b @ cu @ b.T
    return a, symmetrize(cw)


def predict_belief(belief: GaussianBelief, model: MotionModel, dt: float) -> GaussianBelief:
    """Propagate a belief through the motion model over dt seconds."""
    a, cw = motion_matrices(model, dt)
    mean = a @ belief.mean
    cov = symmetrize(a @ belief.covariance @ a.T + cw)
    return GaussianBelief(mean, cov)


def true_range(p_j, p_k) -> float:
    """Euclidean distance between two positions."""
    return float(np.linalg.norm(np.asarray(p_j, dtype=float) - np.asarray(p_k, dtype=float)))


def measurement_variance(m: int, xi: float) -> float:
    """Variance of the averaged range measurement: (m * xi)^-1."""
    if m < 1:
        raise InvalidArgumentError(f"measurement count must be >= 1, got {m}")
    if xi <= 0:
        raise InvalidArgumentError(f"ranging coefficient must be > 0, got {xi}")
    return 1.0 / (m * xi)


# Default channel-quality bounds for the equivalent ranging coefficient [1/m^2].
ERC_MIN = 16.0
ERC_MAX = 100.0


@dataclass(frozen=True)
class Erc:
    """Equivalent ranging coefficient: inverse-variance intensity of one measurement."""

    value: float

    def __post_init__(self):
        if self.value <= 0:
            raise InvalidArgumentError("ranging coefficient must be > 0")


@dataclass(frozen=True)
class RangeMeasurement:
    """Averaged pairwise range measurement between an initiator and a responder."""

    initiator: NodeId
    responder: NodeId
    value: float  # meters
    count: int  # number of averaged single exchanges
    variance: float  # meters^2, (count * xi)^-1

    def __post_init__(self):
        if self.count < 1:
            raise InvalidArgumentError("measurement count must be >= 1")
        if self.variance <= 0:
            raise InvalidArgumentError("measurement variance must be > 0")
