"""Model parameters, grids and initial conditions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curves import MonotoneCurve
from .kernels import _H, _dh, _h, _kappa


def _finite(name, v):
    v = float(v)
    if not np.isfinite(v):
        raise ValueError(f"{name} must be finite")
    return v


@dataclass(frozen=True)
class ModelParams:
    """Drift ``nu``, coupling ``lam``, reset level ``Lambda_reset`` and refractory period ``epsilon``.

    ``lam = 0`` is accepted and gives independent renewal processes.
    """
    nu: float
    lam: float
    Lambda_reset: float
    epsilon: float

    def __post_init__(self):
        for name in ("nu", "lam", "Lambda_reset", "epsilon"):
            object.__setattr__(self, name, _finite(name, getattr(self, name)))
        if self.nu <= 0:
            raise ValueError("nu must be positive")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.Lambda_reset <= 0:
            raise ValueError("Lambda_reset must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class GridSpec:
    """Uniform time-changed grid and spatial grid for density output."""
    sigma_step: float
    horizon_sigma: float
    x_step: float = 0.01
    x_max: float = 10.0

    def __post_init__(self):
        for name in ("sigma_step", "horizon_sigma", "x_step", "x_max"):
            v = _finite(name, getattr(self, name))
            if v <= 0:
                raise ValueError(f"{name} must be positive")
            object.__setattr__(self, name, v)

    @property
    def sigma(self):
        n = int(np.floor(self.horizon_sigma / self.sigma_step + 1e-9))
        return self.sigma_step * np.arange(n + 1)

    @property
    def x(self):
        n = int(np.floor(self.x_max / self.x_step + 1e-9))
        return self.x_step * np.arange(n + 1)


def validate_params(params: ModelParams, grid: GridSpec) -> None:
    """Cross-checks between parameters and grid; raises ``ValueError``."""
    if grid.sigma_step >= params.nu * params.epsilon:
        raise ValueError("sigma_step must be below nu*epsilon")
    if grid.x_max <= params.Lambda_reset:
        raise ValueError("x_max must exceed the reset level")


# ---------------------------------------------------------------------------
# initial active densities


@dataclass(frozen=True)
class Atom:
    """Point mass ``mass`` at ``x0 > 0``."""
    x0: float
    mass: float = 1.0

    def __post_init__(self):
        if not self.x0 > 0:
            raise ValueError("atom location must be positive")
        if self.mass < 0:
            raise ValueError("atom mass must be nonnegative")

    @property
    def total(self):
        return float(self.mass)

    def cdf(self, sigma):
        return self.mass * _H(sigma, self.x0)

    def flux(self, sigma):
        return self.mass * _h(sigma, self.x0)

    def flux_dt(self, sigma):
        return self.mass * _dh(sigma, self.x0)

    def density(self, sigma, y):
        return self.mass * _kappa(sigma, y, self.x0)

    def sample(self, rng, n):
        return np.full(n, float(self.x0))

    def check_regular(self, lam):
        return None


@dataclass(frozen=True)
class GriddedDensity:
    """Piecewise-linear density sampled on a grid starting at ``x = 0``."""
    x: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if x.ndim != 1 or x.shape != v.shape or x.size < 3:
            raise ValueError("grid and values must be 1-d of equal length >= 3")
        if np.any(np.diff(x) <= 0) or x[0] < 0:
            raise ValueError("density grid must be increasing and start at x >= 0")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("density values must be finite and nonnegative")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "values", v)

    @property
    def weights(self):
        dx = np.diff(self.x)
        w = np.zeros_like(self.x)
        w[:-1] += dx / 2
        w[1:] += dx / 2
        return w * self.values

    @property
    def total(self):
        return float(self.weights.sum())

    def _apply(self, kern, sigma):
        s = np.asarray(sigma, dtype=float)
        return (kern(s[..., None], self.x) * self.weights).sum(axis=-1)

    def cdf(self, sigma):
        return self._apply(_H, sigma)

    def flux(self, sigma):
        s = np.asarray(sigma, dtype=float)
        out = self._apply(_h, s)
        # the sigma -> 0 limit is half the boundary slope
        return np.where(s > 0, out, 0.5 * self.slope_at_zero)

    def flux_dt(self, sigma):
        return self._apply(_dh, sigma)

    def density(self, sigma, y):
        y = np.asarray(y, dtype=float)
        keep = self.x > 0
        return (_kappa(sigma, y[..., None], self.x[keep]) * self.weights[keep]).sum(axis=-1)

    @property
    def slope_at_zero(self):
        if self.x[0] > 0:
            return 0.0
        return float((self.values[1] - self.values[0]) / (self.x[1] - self.x[0]))

    def sample(self, rng, n):
        cells = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(self.x) * (self.values[:-1] + self.values[1:]))])
        u = rng.random(n) * cells[-1]
        return np.interp(u, cells, self.x)

    def check_regular(self, lam):
        if self.x[0] == 0 and self.values[0] > 1e-12:
            raise ValueError("initial density must vanish at zero")
        if lam > 0 and 0.5 * self.slope_at_zero >= 1.0 / lam:
            raise ValueError("initial boundary flux already at the blowup threshold")


# ---------------------------------------------------------------------------
# initial condition


@dataclass
class InitialCondition:
    """Active density ``q0`` plus the refractory history on ``[-epsilon, 0)``.

    The cumulative flux ``G`` is normalised so that ``G(0) = 0``; on the
    history window it runs from ``-refractory_mass`` at ``xi0`` up to 0.
    """
    q0: object
    f0_t: np.ndarray
    f0: np.ndarray
    xi0: float
    refractory_mass: float
    pre_sigma: np.ndarray = field(repr=False)
    pre_psi: np.ndarray = field(repr=False)
    pre_G: np.ndarray = field(repr=False)
    pre_g: np.ndarray = field(repr=False)

    @property
    def psi0(self):
        return MonotoneCurve(self.pre_sigma, self.pre_psi)

    @property
    def G0(self):
        return MonotoneCurve(self.pre_sigma, self.pre_G)

    @property
    def phi0(self):
        return self.psi0.right_inverse()


def build_initial(params: ModelParams, q0, f0=None, tol=None) -> InitialCondition:
    """Assemble the history objects from ``q0`` and an optional refractory rate.

    Parameters
    ----------
    params : ModelParams
    q0 : Atom or GriddedDensity
        Initial active density.
    f0 : tuple of arrays, optional
        ``(t, values)`` sampling the past firing rate on ``[-epsilon, 0]``.
        Missing means no refractory mass.
    tol : float, optional
        Mass tolerance; defaults to 1e-8 for atoms and 1e-4 for gridded data.
    """
    eps, nu, lam = params.epsilon, params.nu, params.lam
    if f0 is None:
        t = np.array([-eps, 0.0])
        f = np.zeros(2)
    else:
        t = np.asarray(f0[0], dtype=float)
        f = np.asarray(f0[1], dtype=float)
        if t.shape != f.shape or t.size < 2:
            raise ValueError("history times and values must match and have >= 2 samples")
        if np.any(np.diff(t) <= 0):
            raise ValueError("history times must be increasing")
        if abs(t[0] + eps) > 1e-9 * max(1.0, eps) or abs(t[-1]) > 1e-9 * max(1.0, eps):
            raise ValueError("history must span [-epsilon, 0]")
        if np.any(f < 0) or not np.all(np.isfinite(f)):
            raise ValueError("history rate must be finite and nonnegative")
        t = t.copy()
        t[0], t[-1] = -eps, 0.0
    F = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (f[:-1] + f[1:]))])
    m_r = float(F[-1])
    if tol is None:
        tol = 1e-8 if isinstance(q0, Atom) else 1e-4
    if abs(q0.total + m_r - 1.0) > tol:
        raise ValueError(f"total mass {q0.total + m_r:.6g} differs from 1")
    q0.check_regular(lam)
    pre_sigma = nu * t + lam * (F - m_r)
    pre_G = F - m_r
    pre_g = f / (nu + lam * f)
    return InitialCondition(q0=q0, f0_t=t, f0=f, xi0=float(pre_sigma[0]),
                            refractory_mass=m_r, pre_sigma=pre_sigma, pre_psi=t,
                            pre_G=pre_G, pre_g=pre_g)
