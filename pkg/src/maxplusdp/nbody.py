"""Trapped-swarm problem: N softened-Coulomb particles in a quadratic trap.

State x stacks N particle positions of dimension d. Controls are velocities
(x+ = x + h u). Stage reward

    l(x, u) = -( (k_trap/2)||x||^2 + W_eps(x) + (1/2) u' R u ),
    W_eps(x) = sum_{i<j} kappa / sqrt(||x_i - x_j||^2 + eps^2),

and terminal reward -(k_T/2)||x||^2. All rewards are concave-ish only through
the semiconvexity constant: the softened Coulomb Hessian is bounded in norm by
2 (N-1) kappa / eps^3, which gives the certified gamma_h below.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .control import AffineDynamics, ControlProblem, ControlSet, RewardModel
from .errors import ConfigError, DimensionMismatchError
from .maxplus import MaxPlusValueTable, QuadraticSupport, _as_vector


@dataclass(frozen=True)
class NBodyParams:
    """Physical and discretization constants. Requires K * h == T."""

    N: int
    d: int
    k_trap: float
    k_T: float
    R_diag: float
    kappa: float
    eps: float
    T: float
    h: float
    K: int

    def __post_init__(self):
        if self.N < 1:
            raise ConfigError(f"N must be >= 1, got {self.N}")
        if self.d < 1:
            raise ConfigError(f"d must be >= 1, got {self.d}")
        for name in ("k_trap", "k_T", "R_diag", "eps", "T", "h"):
            if not (getattr(self, name) > 0 and np.isfinite(getattr(self, name))):
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.kappa < 0 or not np.isfinite(self.kappa):
            raise ConfigError(f"kappa must be >= 0, got {self.kappa}")
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}")
        if abs(self.K * self.h - self.T) > 1e-12 * max(1.0, abs(self.T)):
            raise ConfigError(
                f"K * h = {self.K * self.h!r} does not match T = {self.T!r}")

    @property
    def state_dim(self) -> int:
        return self.N * self.d


def blocks(params: NBodyParams, x: np.ndarray) -> np.ndarray:
    """View of the state as an (N, d) array of particle positions."""
    xv = _as_vector(x, params.state_dim)
    return xv.reshape(params.N, params.d)


def _pair_squares(params: NBodyParams, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    diffs = X[:, None, :] - X[None, :, :]
    sq = (diffs * diffs).sum(axis=-1) + params.eps * params.eps
    return diffs, sq


def coulomb_potential(params: NBodyParams, x) -> float:
    """W_eps(x); 0 for a single particle."""
    if params.N == 1:
        _as_vector(x, params.state_dim)
        return 0.0
    X = blocks(params, x)
    _, sq = _pair_squares(params, X)
    iu = np.triu_indices(params.N, 1)
    return float((params.kappa / np.sqrt(sq[iu])).sum())


def coulomb_gradient(params: NBodyParams, x) -> np.ndarray:
    """Gradient of W_eps; block i is sum_{j!=i} -kappa (x_i - x_j) / s_ij^{3/2}."""
    if params.N == 1:
        return np.zeros(params.state_dim)
    X = blocks(params, x)
    diffs, sq = _pair_squares(params, X)
    inv32 = sq ** (-1.5)
    np.fill_diagonal(inv32, 0.0)
    g = -params.kappa * (diffs * inv32[:, :, None]).sum(axis=1)
    return g.reshape(-1)


def coulomb_hessian(params: NBodyParams, x) -> np.ndarray:
    """Dense Hessian of W_eps, assembled per pair. Used by the sampled
    curvature mode and by validation tests; O((N d)^2) memory."""
    n = params.state_dim
    H = np.zeros((n, n))
    if params.N == 1:
        return H
    X = blocks(params, x)
    d = params.d
    eye = np.eye(d)
    for i in range(params.N):
        for j in range(i + 1, params.N):
            z = X[i] - X[j]
            s = float(z @ z) + params.eps * params.eps
            Hp = params.kappa * (3.0 * np.outer(z, z) * s ** (-2.5) - s ** (-1.5) * eye)
            si, sj = slice(i * d, (i + 1) * d), slice(j * d, (j + 1) * d)
            H[si, si] += Hp
            H[sj, sj] += Hp
            H[si, sj] -= Hp
            H[sj, si] -= Hp
    return H


def state_reward(params: NBodyParams, x) -> tuple[float, np.ndarray]:
    """rho(x) = -((k_trap/2)||x||^2 + W_eps(x)) and its gradient."""
    xv = _as_vector(x, params.state_dim)
    w = coulomb_potential(params, xv)
    value = -(0.5 * params.k_trap * float((xv * xv).sum()) + w)
    grad = -(params.k_trap * xv + coulomb_gradient(params, xv))
    return value, grad


def running_reward(params: NBodyParams, x, u) -> tuple[float, np.ndarray]:
    """l(x, u) and its x-gradient."""
    uv = _as_vector(u, params.state_dim, name="u")
    rho, grad = state_reward(params, x)
    return rho - 0.5 * params.R_diag * float((uv * uv).sum()), grad


def terminal_reward(params: NBodyParams, x) -> float:
    xv = _as_vector(x, params.state_dim)
    return -0.5 * params.k_T * float((xv * xv).sum())


def terminal_table(params: NBodyParams) -> MaxPlusValueTable:
    """Exact rank-one table for the terminal reward: anchor 0, slope 0,
    curvature k_T."""
    n = params.state_dim
    table = MaxPlusValueTable(n, params.k_T)
    table.append(QuadraticSupport(0.0, np.zeros(n), np.zeros(n), params.k_T))
    return table


def curvature_gamma(params: NBodyParams, mode: str = "analytic", *,
                    rng: np.random.Generator | None = None,
                    count: int = 256, box: float = 10.0) -> float:
    """Semiconvexity constant of x -> h l(x, u).

    analytic: h (k_trap + 2 (N-1) kappa / eps^3), a certified bound (block
    row-sum bound on the Coulomb Hessian norm).
    sampled: 1.5x the largest sampled spectral norm of k_trap I + Hess W_eps
    over ``count`` uniform states in ||x||_inf <= box. Cheaper constants, but
    not certified; outputs produced with it must be labeled accordingly.
    trap: h k_trap, the interaction-free constant. Exact for kappa = 0 or
    N = 1; with interaction it is a deliberate under-bound that is accurate
    only while particles stay well separated (pair curvature 2 kappa / d^3
    small next to k_trap), which holds along repulsion-dominated swarm
    trajectories. Uncertified; both certified modes freeze the swarm at
    experiment scales because c_0 grows like K gamma_h.
    """
    if mode == "analytic":
        c_w = 2.0 * (params.N - 1) * params.kappa / params.eps ** 3
        return params.h * (params.k_trap + c_w)
    if mode == "trap":
        return params.h * params.k_trap
    if mode == "sampled":
        if rng is None:
            raise ValueError("sampled mode needs an rng")
        worst = params.k_trap
        if params.N > 1 and params.kappa > 0:
            n = params.state_dim
            for _ in range(count):
                x = rng.uniform(-box, box, size=n)
                H = coulomb_hessian(params, x)
                H[np.diag_indices_from(H)] += params.k_trap
                worst = max(worst, float(np.abs(np.linalg.eigvalsh(H)).max()))
        return 1.5 * params.h * worst
    raise ValueError(f"unknown curvature mode {mode!r}")


def build_problem(params: NBodyParams, *, curvature_mode: str = "analytic",
                  curvature_rng: np.random.Generator | None = None,
                  curvature_count: int = 256, curvature_box: float = 10.0,
                  control_box: float | None = None) -> ControlProblem:
    """Assemble the ControlProblem for these constants."""
    n = params.state_dim
    gamma = curvature_gamma(params, curvature_mode, rng=curvature_rng,
                            count=curvature_count, box=curvature_box)
    # trap mode's constant is exact only without interaction; sampled is
    # never certified
    certified = curvature_mode == "analytic" or (
        curvature_mode == "trap" and (params.kappa == 0.0 or params.N == 1))
    reward = RewardModel(
        state_reward=lambda x: state_reward(params, x),
        control_quadratic=params.R_diag * np.eye(n),
        gamma_h=gamma,
        gamma_certified=certified,
    )
    if control_box is None:
        ctrl = ControlSet.unconstrained()
    else:
        half = float(control_box)
        if half <= 0:
            raise ConfigError("control_box must be positive")
        ctrl = ControlSet.box(-half * np.ones(n), half * np.ones(n))
    return ControlProblem(
        dyn=AffineDynamics.velocity_integrator(n, params.h),
        reward=reward,
        ctrl=ctrl,
        terminal=terminal_table(params),
        K=params.K,
    )


@dataclass(frozen=True)
class RadiiDiagnostics:
    """Per-step radius statistics and plateau summary over [0.2 K, 0.8 K]."""

    mean_radius: np.ndarray
    max_radius: np.ndarray
    window: tuple[int, int]
    plateau_radius: float
    plateau_dispersion: float


def radii_diagnostics(params: NBodyParams, states: np.ndarray) -> RadiiDiagnostics:
    """Mean/max particle radius per step plus plateau mean and std.

    states: (K+1, N*d) trajectory. The plateau window is the inclusive index
    range [round(0.2 K), round(0.8 K)]; dispersion is the population std of
    the mean radius over that window.
    """
    S = np.asarray(states, dtype=np.float64)
    if S.ndim != 2 or S.shape[1] != params.state_dim:
        raise DimensionMismatchError(
            f"states must be (K+1, {params.state_dim}), got {S.shape}")
    radii = np.linalg.norm(S.reshape(S.shape[0], params.N, params.d), axis=2)
    mean_r = radii.mean(axis=1)
    max_r = radii.max(axis=1)
    K = S.shape[0] - 1
    lo = int(round(0.2 * K))
    hi = int(round(0.8 * K))
    window = mean_r[lo:hi + 1]
    return RadiiDiagnostics(
        mean_radius=mean_r,
        max_radius=max_r,
        window=(lo, hi),
        plateau_radius=float(window.mean()),
        plateau_dispersion=float(window.std()),
    )


def turnpike_radius_scale(params: NBodyParams) -> float:
    """(kappa N^2 / k_trap)^(1/3): an ordering diagnostic for the plateau
    radius, not a calibrated prediction."""
    return float((params.kappa * params.N ** 2 / params.k_trap) ** (1.0 / 3.0))


def initial_circle(params: NBodyParams, radius: float) -> np.ndarray:
    """N particles equally spaced on a circle; requires d == 2."""
    if params.d != 2:
        raise ConfigError("circle initial state requires d == 2")
    angles = 2.0 * np.pi * np.arange(params.N) / params.N
    pts = np.stack([radius * np.cos(angles), radius * np.sin(angles)], axis=1)
    return pts.reshape(-1)


def initial_annulus(params: NBodyParams, r_min: float, r_max: float,
                    rng: np.random.Generator) -> np.ndarray:
    """N particles uniform by area in the annulus [r_min, r_max]; d == 2."""
    if params.d != 2:
        raise ConfigError("annulus initial state requires d == 2")
    if not (0 <= r_min < r_max):
        raise ConfigError("annulus needs 0 <= r_min < r_max")
    radii = np.sqrt(rng.uniform(r_min * r_min, r_max * r_max, size=params.N))
    angles = rng.uniform(0.0, 2.0 * np.pi, size=params.N)
    pts = np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)
    return pts.reshape(-1)
