"""Time-varying-parameter distributional regression, probit link.

The conditional CDF of the outcome at each threshold y on a grid is modeled
as Lambda(g(x_t)' beta_{y,t}) with the coefficient path beta_{y,:} following
a random walk. Estimation is Gibbs: latent-utility augmentation per
observation, a precision-based joint draw of each threshold's path, inverse
gamma updates for the innovation variances, and, in monotone mode, a
marginal/conditional split of each path so the T intercepts can be drawn
inside the box that keeps fitted CDF values ordered across thresholds.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .banded import BandedMatrix, assemble_precision, cholesky_banded, solve_banded
from .distribution import ThresholdGrid
from .samplers import RngHandle, as_generator, sample_truncated_mvn, sample_truncated_normal

__all__ = [
    "LinkFunction",
    "PROBIT",
    "LINKS",
    "DESIGN_TRANSFORMS",
    "apply_design_transform",
    "ModelSpec",
    "GibbsState",
    "PosteriorDraws",
    "MonotonicityError",
    "EstimationError",
    "fitted_values",
    "draw_latent",
    "draw_beta_unconstrained",
    "draw_sigma2",
    "draw_beta_monotone",
    "initial_state",
    "run_gibbs",
]


class MonotonicityError(RuntimeError):
    """Neighbor threshold paths cross; the truncation box is empty."""


class EstimationError(RuntimeError):
    """A Gibbs update failed; message carries iteration and threshold."""


def _phi(z):
    return np.exp(-0.5 * np.square(z)) / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class LinkFunction:
    """CDF link Lambda with its density and inverse."""

    kind: str
    cdf: callable
    pdf: callable
    inverse: callable


PROBIT = LinkFunction(kind="probit", cdf=ndtr, pdf=_phi, inverse=ndtri)

LINKS = {"probit": PROBIT}


def _transform_identity(x: np.ndarray) -> np.ndarray:
    return x


def _transform_quadratic(x: np.ndarray) -> np.ndarray:
    # squares of the non-intercept columns appended on the right
    return np.hstack([x, x[:, 1:] ** 2])


DESIGN_TRANSFORMS = {
    "identity": _transform_identity,
    "quadratic": _transform_quadratic,
}


def apply_design_transform(x: np.ndarray, name: str) -> np.ndarray:
    """Map raw design rows (intercept first) through a named expansion g."""
    try:
        fn = DESIGN_TRANSFORMS[name]
    except KeyError:
        raise ValueError(f"unknown design transform {name!r}") from None
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return fn(x)


def fitted_values(design: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """g(x_t)' beta_t for every t.

    This einsum is the one accumulation order used everywhere the ordering
    constraint is produced or checked, so monotonicity comparisons are exact
    in floating point rather than within some tolerance.
    """
    return np.einsum("td,td->t", design, beta)


@dataclass(frozen=True)
class ModelSpec:
    """Everything that defines one estimation run except the data and rng."""

    d: int
    grid: ThresholdGrid
    design_transform: str = "identity"
    link: str = "probit"
    iterations: int = 10000
    burnin: int = 5000
    monotone: bool = True
    truncation_sweeps: int = 5
    include_initial_state_in_ig: bool = False
    ridge_scale: float = 0.0
    ig_prior_nu: float = 3.0
    ig_prior_s: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be at least 1")
        if self.link not in LINKS:
            raise ValueError(f"unsupported link {self.link!r} (probit only)")
        if self.design_transform not in DESIGN_TRANSFORMS:
            raise ValueError(f"unknown design transform {self.design_transform!r}")
        if self.burnin < 0 or self.iterations <= self.burnin:
            raise ValueError("need iterations > burnin >= 0")
        if self.truncation_sweeps < 1:
            raise ValueError("truncation_sweeps must be >= 1")
        if self.ridge_scale < 0.0:
            raise ValueError("ridge_scale must be >= 0")
        nu, s = self.prior_arrays()
        if not (np.all(nu > 0.0) and np.all(s > 0.0)):
            raise ValueError("inverse gamma prior parameters must be positive")

    def prior_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        nu = np.broadcast_to(np.asarray(self.ig_prior_nu, dtype=np.float64), (self.d,))
        s = np.broadcast_to(np.asarray(self.ig_prior_s, dtype=np.float64), (self.d,))
        return np.array(nu), np.array(s)

    def link_function(self) -> LinkFunction:
        return LINKS[self.link]

    def canonical(self) -> dict:
        nu, s = self.prior_arrays()
        return {
            "d": self.d,
            "grid": self.grid.canonical(),
            "design_transform": self.design_transform,
            "link": self.link,
            "iterations": self.iterations,
            "burnin": self.burnin,
            "monotone": self.monotone,
            "truncation_sweeps": self.truncation_sweeps,
            "include_initial_state_in_ig": self.include_initial_state_in_ig,
            "ridge_scale": self.ridge_scale,
            "ig_prior_nu": nu.tolist(),
            "ig_prior_s": s.tolist(),
        }

    def spec_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def hash_data(y: np.ndarray, x: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.asarray(y, dtype="<f8").tobytes())
    h.update(repr(np.asarray(x).shape).encode())
    h.update(np.ascontiguousarray(x, dtype="<f8").tobytes())
    return h.hexdigest()


@dataclass
class GibbsState:
    """Mutable sampler state: one path and variance vector per threshold."""

    beta: np.ndarray    # (K, T, d)
    sigma2: np.ndarray  # (K, d)
    fitted: np.ndarray  # (K, T), always fitted_values of beta


@dataclass(eq=False)
class PosteriorDraws:
    """Kept draws, iteration-major, plus enough metadata to reproduce them."""

    grid: ThresholdGrid
    beta: np.ndarray    # (kept, K, T, d)
    sigma2: np.ndarray  # (kept, K, d)
    seed: int
    stream: int
    spec_hash: str
    data_hash: str
    design_transform: str = "identity"
    link: str = "probit"
    info: dict = field(default_factory=dict)

    @property
    def kept(self) -> int:
        return self.beta.shape[0]

    @property
    def n_thresholds(self) -> int:
        return self.beta.shape[1]

    @property
    def n_obs(self) -> int:
        return self.beta.shape[2]

    @property
    def d(self) -> int:
        return self.beta.shape[3]


def draw_latent(threshold: float, y: np.ndarray, design: np.ndarray, beta: np.ndarray, rng) -> np.ndarray:
    """Latent utilities: one-sided truncated normals around the fitted index.

    Observations with y_t <= threshold draw from N(fit, 1) on (0, inf), the
    rest on (-inf, 0), so the sign always reproduces the indicator.
    """
    mean = fitted_values(design, beta)
    below = y <= threshold
    lower = np.where(below, 0.0, -np.inf)
    upper = np.where(below, np.inf, 0.0)
    return sample_truncated_normal(mean, 1.0, lower, upper, rng)


def draw_beta_unconstrained(design, latent, sigma2, rng, ridge_scale: float = 0.0) -> np.ndarray:
    """Joint draw of one threshold's path from N(K^{-1} X'z, K^{-1})."""
    design = np.asarray(design, dtype=np.float64)
    t_len, d = design.shape
    precision = assemble_precision(design, sigma2, ridge_scale)
    b = (design * np.asarray(latent, dtype=np.float64)[:, None]).ravel()
    factor = cholesky_banded(precision)
    gen = as_generator(rng)
    mu = solve_banded(factor, b, mode="full")
    draw = mu + solve_banded(factor, gen.standard_normal(precision.dim), mode="backward")
    return draw.reshape(t_len, d)


def draw_sigma2(beta, nu, s, rng, include_initial: bool = False) -> np.ndarray:
    """Conjugate inverse gamma update of the innovation variances.

    Shape nu + (T-1)/2 and scale S + sum of squared increments / 2 per
    coefficient. With ``include_initial`` the initial condition joins the
    sum of squares and the shape becomes nu + T/2.
    """
    beta = np.asarray(beta, dtype=np.float64)
    if beta.ndim != 2 or beta.shape[0] < 2:
        raise ValueError("beta must be (T, d) with T >= 2")
    t_len, d = beta.shape
    nu = np.broadcast_to(np.asarray(nu, dtype=np.float64), (d,))
    s = np.broadcast_to(np.asarray(s, dtype=np.float64), (d,))
    if not (np.all(nu > 0.0) and np.all(s > 0.0)):
        raise ValueError("prior parameters must be positive")
    rss = np.sum(np.diff(beta, axis=0) ** 2, axis=0)
    if include_initial:
        shape = nu + 0.5 * t_len
        scale = s + 0.5 * (rss + beta[0] ** 2)
    else:
        shape = nu + 0.5 * (t_len - 1)
        scale = s + 0.5 * rss
    gen = as_generator(rng)
    return 1.0 / gen.gamma(shape, 1.0 / scale)


def _tridiag_submatrix(diag, off, keep):
    """Banded matrix for the kept coordinates of a tridiagonal system."""
    idx = np.nonzero(keep)[0]
    n = idx.size
    sub_diag = diag[idx]
    if n == 1:
        return BandedMatrix(dim=1, bandwidth=0, diagonals=sub_diag[None, :].copy())
    adjacent = idx[1:] == idx[:-1] + 1
    sub_off = np.where(adjacent, off[idx[:-1]], 0.0)
    bands = np.vstack([sub_diag, np.append(sub_off, 0.0)])
    return BandedMatrix(dim=n, bandwidth=1, diagonals=bands)


def _repair_ordering(beta, design, lower_path, upper_path):
    """Nudge intercepts so recomputed fits land inside [lower, upper].

    Truncation operates on the intercept, but the ordering is checked on the
    recomputed inner product, whose rounding can differ by an ulp. This walks
    each offending intercept with error feedback until the canonical fit is
    inside its box. With continuous data this loop almost never runs; with a
    degenerate box (equal bounds) an exact hit may be unrepresentable and the
    closest value stands after the iteration cap.
    """
    fits = fitted_values(design, beta)
    bad = np.nonzero((fits < lower_path) | (fits > upper_path))[0]
    for t in bad:
        lo, up = lower_path[t], upper_path[t]
        row = design[t : t + 1]
        for _ in range(64):
            ft = fitted_values(row, beta[t : t + 1])[0]
            if lo <= ft <= up:
                break
            target = lo if ft < lo else up
            step = target - ft
            if step == 0.0 or not np.isfinite(step):
                break
            beta[t, 0] += step
            ft2 = fitted_values(row, beta[t : t + 1])[0]
            if ft2 == ft:
                # below the resolution of the fit; force one fit-scale ulp
                beta[t, 0] += np.copysign(np.spacing(abs(ft)), step)
    return beta


def draw_beta_monotone(
    lower_path,
    upper_path,
    design,
    latent,
    sigma2,
    rng,
    sweeps: int = 5,
    warm_start=None,
    ridge_scale: float = 0.0,
) -> np.ndarray:
    """Path draw for one threshold under the fitted-value ordering box.

    The non-intercept block comes from its unconstrained marginal posterior
    (taken from one joint precision-based draw), then the T intercepts are
    drawn from their exact Gaussian conditional truncated to the box

        lower_path - c_t  <=  beta_{t,1}  <=  upper_path - c_t,

    where c_t is the non-intercept part of the fitted value. ``lower_path``
    and ``upper_path`` are the neighboring thresholds' fitted paths, or None
    when unbounded on that side. The intercept column of ``design`` must be
    identically one, otherwise the box above would not be the constraint.
    """
    gen = as_generator(rng)
    design = np.asarray(design, dtype=np.float64)
    t_len, d = design.shape
    if not np.all(design[:, 0] == 1.0):
        raise ValueError("monotone updates require a leading intercept column of ones")
    latent = np.asarray(latent, dtype=np.float64)

    precision = assemble_precision(design, sigma2, ridge_scale)
    factor = cholesky_banded(precision)
    b = (design * latent[:, None]).ravel()
    mu = solve_banded(factor, b, mode="full")
    joint = mu + solve_banded(factor, gen.standard_normal(precision.dim), mode="backward")
    beta = joint.reshape(t_len, d).copy()

    if lower_path is None and upper_path is None:
        return beta

    lo_path = (
        np.full(t_len, -np.inf)
        if lower_path is None
        else np.asarray(lower_path, dtype=np.float64)
    )
    up_path = (
        np.full(t_len, np.inf)
        if upper_path is None
        else np.asarray(upper_path, dtype=np.float64)
    )
    if lo_path.shape != (t_len,) or up_path.shape != (t_len,):
        raise ValueError("neighbor paths must have one entry per time point")
    if np.any(lo_path > up_path):
        t_bad = int(np.argmax(lo_path > up_path))
        raise MonotonicityError(
            f"neighbor threshold paths cross at t={t_bad}: "
            f"lower {lo_path[t_bad]:.6g} > upper {up_path[t_bad]:.6g}"
        )

    # box on the intercepts given the non-intercept block
    rest = beta.copy()
    rest[:, 0] = 0.0
    base = fitted_values(design, rest)
    lo = lo_path - base
    up = up_path - base

    # conditional moments of the intercepts: K11 is tridiagonal because only
    # the random-walk prior couples neighboring intercepts
    pos = np.arange(t_len) * d
    k_diag = precision.diagonals[0][pos]
    k_off = precision.diagonals[d][pos[:-1]]
    resid = mu.reshape(t_len, d).copy()
    resid[:, 1:] -= beta[:, 1:]
    rhs = precision.matvec(resid.ravel())[pos]
    k11 = BandedMatrix(
        dim=t_len, bandwidth=1, diagonals=np.vstack([k_diag, np.append(k_off, 0.0)])
    )
    mu1 = solve_banded(cholesky_banded(k11), rhs, mode="full")

    pinned = np.isfinite(lo) & (lo >= up)
    x1 = np.empty(t_len)
    x1[pinned] = lo[pinned]
    free = ~pinned
    if free.any():
        if pinned.any():
            # condition the free intercepts on the pinned ones
            w = np.zeros(t_len)
            w[pinned] = x1[pinned] - mu1[pinned]
            coupling = k11.matvec(w)[free]
            k_ff = _tridiag_submatrix(k_diag, k_off, free)
            mean_f = mu1[free] - solve_banded(cholesky_banded(k_ff), coupling, mode="full")
        else:
            k_ff = k11
            mean_f = mu1
        start = beta[:, 0] if warm_start is None else np.asarray(warm_start, dtype=np.float64)[:, 0]
        init = np.clip(start[free], lo[free], up[free])
        x1[free] = sample_truncated_mvn(
            k_ff, mean_f, lo[free], up[free], init, sweeps, gen
        )

    beta[:, 0] = x1
    return _repair_ordering(beta, design, lo_path, up_path)


def initial_state(y: np.ndarray, grid: ThresholdGrid, t_len: int, d: int, link: LinkFunction) -> GibbsState:
    """Deterministic start: intercepts at Lambda^{-1} of a smoothed empirical
    CDF (strictly increasing across thresholds), zero slopes, sigma2 = 0.01."""
    k = grid.n
    counts = (np.asarray(y)[None, :] <= grid.points[:, None]).sum(axis=1)
    p = (counts + (np.arange(k) + 1.0) / (k + 1.0)) / (len(y) + 1.0)
    beta = np.zeros((k, t_len, d))
    beta[:, :, 0] = link.inverse(p)[:, None]
    sigma2 = np.full((k, d), 0.01)
    fitted = np.broadcast_to(link.inverse(p)[:, None], (k, t_len)).copy()
    return GibbsState(beta=beta, sigma2=sigma2, fitted=fitted)


def run_gibbs(spec: ModelSpec, data, rng=None) -> PosteriorDraws:
    """Full Gibbs pass over thresholds and iterations.

    ``data`` is (y, x): outcomes of length T and raw design rows (T, d0)
    with an intercept first; the spec's design transform maps them to the
    model design. Per iteration and per threshold, in order: latent draw,
    path draw (monotone or not), variance draw. Monotone mode bounds each
    threshold below by the current iteration's previous-threshold fit and
    above by the last iteration's next-threshold fit, which leaves every
    kept iteration exactly ordered across the whole grid.
    """
    y, x_raw = data
    y = np.asarray(y, dtype=np.float64)
    x_raw = np.atleast_2d(np.asarray(x_raw, dtype=np.float64))
    if y.ndim != 1 or x_raw.shape[0] != y.size:
        raise ValueError("data must be (y, x) with matching lengths")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x_raw))):
        raise ValueError("estimation data must be free of missing values")
    design = apply_design_transform(x_raw, spec.design_transform)
    t_len, d = design.shape
    if d != spec.d:
        raise ValueError(f"design has {d} columns after transform, spec says {spec.d}")
    if t_len < 2:
        raise ValueError("need at least two time points")
    if spec.monotone and not np.all(design[:, 0] == 1.0):
        raise ValueError("monotone estimation requires an intercept column of ones")

    if rng is None:
        rng = RngHandle(spec.seed)
    handle = rng if isinstance(rng, RngHandle) else None
    gen = as_generator(rng)
    link = spec.link_function()
    nu, s = spec.prior_arrays()
    grid = spec.grid
    k = grid.n

    state = initial_state(y, grid, t_len, d, link)
    kept = spec.iterations - spec.burnin
    out_beta = np.empty((kept, k, t_len, d))
    out_sigma2 = np.empty((kept, k, d))

    for it in range(spec.iterations):
        fitted_before = state.fitted.copy() if spec.monotone else None
        for j in range(k):
            try:
                latent = draw_latent(grid.points[j], y, design, state.beta[j], gen)
                if spec.monotone:
                    lower_path = state.fitted[j - 1] if j > 0 else None
                    upper_path = fitted_before[j + 1] if j < k - 1 else None
                    state.beta[j] = draw_beta_monotone(
                        lower_path,
                        upper_path,
                        design,
                        latent,
                        state.sigma2[j],
                        gen,
                        sweeps=spec.truncation_sweeps,
                        warm_start=state.beta[j],
                        ridge_scale=spec.ridge_scale,
                    )
                    state.fitted[j] = fitted_values(design, state.beta[j])
                else:
                    state.beta[j] = draw_beta_unconstrained(
                        design, latent, state.sigma2[j], gen, ridge_scale=spec.ridge_scale
                    )
                state.sigma2[j] = draw_sigma2(
                    state.beta[j], nu, s, gen,
                    include_initial=spec.include_initial_state_in_ig,
                )
            except Exception as exc:
                raise EstimationError(
                    f"iteration {it}, threshold {j} (y={grid.points[j]:.6g}): {exc}"
                ) from exc
        if it >= spec.burnin:
            out_beta[it - spec.burnin] = state.beta
            out_sigma2[it - spec.burnin] = state.sigma2

    return PosteriorDraws(
        grid=grid,
        beta=out_beta,
        sigma2=out_sigma2,
        seed=int(handle.seed) if handle is not None else int(spec.seed),
        stream=int(handle.stream) if handle is not None else 0,
        spec_hash=spec.spec_hash(),
        data_hash=hash_data(y, x_raw),
        design_transform=spec.design_transform,
        link=spec.link,
    )
