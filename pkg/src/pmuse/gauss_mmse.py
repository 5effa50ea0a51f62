"""Gaussian conditional-mean oracle and the five-case 3-bus study.

Two independent routes to E(x | z) for a jointly Gaussian vector: the
closed form ``mu_x + S_xz S_zz^-1 (z - mu_z)`` and direct quadrature of
``x p(x, z) / p(z)`` over x using the two Gaussian densities.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson
from scipy.stats import multivariate_normal

from pmuse.errors import DivergenceError, GenerationError, QuadratureError, SingularCovarianceError
from pmuse.netmodel.presets import THREE_BUS_IMPEDANCES, three_bus
from pmuse.powerflow import PfOptions, PowerFlowSolver

REGULARIZATION = 1e-12


class RegularizationWarning(RuntimeWarning):
    """A conditioning covariance block needed a diagonal nudge to factor."""


@dataclass(frozen=True)
class GaussianJoint:
    labels: tuple[str, ...]
    mu: np.ndarray
    sigma: np.ndarray
    degenerate: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        mu = np.asarray(self.mu, dtype=float)
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        d = len(self.labels)
        if mu.shape != (d,) or sigma.shape != (d, d):
            raise ValueError("mu/sigma shapes do not match the label count")
        if not np.allclose(sigma, sigma.T, rtol=0, atol=1e-12 * max(1.0, np.abs(sigma).max())):
            raise ValueError("covariance must be symmetric")
        if d and np.linalg.eigvalsh(sigma).min() < -1e-10:
            raise ValueError("covariance is not positive semi-definite")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    def index(self, key) -> int:
        if isinstance(key, (int, np.integer)):
            return int(key)
        return self.labels.index(key)


def fit_gaussian(samples: np.ndarray, labels) -> GaussianJoint:
    """Sample mean and unbiased covariance; constant columns are flagged."""
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2 or x.shape[1] != len(labels):
        raise ValueError("samples must be F x d with one label per column")
    if x.shape[0] < 2:
        raise ValueError("need at least two samples")
    mu = x.mean(axis=0)
    sigma = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))
    sigma = 0.5 * (sigma + sigma.T)
    spread = np.ptp(x, axis=0)
    degenerate = tuple(lab for lab, s in zip(labels, spread) if s == 0.0)
    return GaussianJoint(tuple(labels), mu, sigma, degenerate)


def _informative(joint: GaussianJoint, given) -> list[int]:
    # a constant conditioning variable carries no information about x
    return [g for g in given if joint.sigma[g, g] > 0.0]


def _factor(block: np.ndarray):
    try:
        return np.linalg.cholesky(block), False
    except np.linalg.LinAlgError:
        pass
    reg = block + REGULARIZATION * np.eye(len(block))
    try:
        chol = np.linalg.cholesky(reg)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError("conditioning covariance is singular after regularization") from None
    warnings.warn("conditioning covariance regularized by 1e-12 on the diagonal", RegularizationWarning,
                  stacklevel=3)
    return chol, True


def cond_mean_closed(joint: GaussianJoint, target, given, z_values) -> np.ndarray | float:
    """``mu_x + S_xz S_zz^-1 (z - mu_z)``; ``z_values`` may be one row or F rows."""
    t = joint.index(target)
    g_all = [joint.index(g) for g in given]
    z = np.asarray(z_values, dtype=float)
    single = z.ndim <= 1 and z.size == len(g_all)
    if g_all:
        z = z.reshape(-1, len(g_all))
    else:
        z = np.empty((z.shape[0] if z.ndim == 2 else 1, 0))
    keep = [k for k, g in enumerate(g_all) if g in _informative(joint, g_all)]
    g = [g_all[k] for k in keep]
    if not g:
        out = np.full(len(z), joint.mu[t])
        return float(out[0]) if single else out
    chol, _ = _factor(joint.sigma[np.ix_(g, g)])
    dz = z[:, keep] - joint.mu[g]
    w = np.linalg.solve(chol.T, np.linalg.solve(chol, joint.sigma[g, t]))
    out = joint.mu[t] + dz @ w
    return float(out[0]) if single else out


@dataclass(frozen=True)
class QuadratureConfig:
    half_width: float = 8.0  # in conditional standard deviations
    nodes: int = 2001
    max_doublings: int = 2
    mass_tol: float = 1e-8

    def __post_init__(self):
        if self.nodes < 2001:
            raise ValueError("quadrature needs at least 2001 nodes")
        if self.nodes % 2 == 0:
            object.__setattr__(self, "nodes", self.nodes + 1)


def _logpdf(x: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    try:
        return multivariate_normal(mu, sigma).logpdf(x)
    except (np.linalg.LinAlgError, ValueError):
        reg = sigma + REGULARIZATION * np.eye(len(sigma))
        return multivariate_normal(mu, reg, allow_singular=True).logpdf(x)


def cond_mean_integral(joint: GaussianJoint, target, given, z_values, config: QuadratureConfig | None = None) -> float:
    """Integrate ``x * p(x, z) / p(z)`` over x on a uniform grid (Simpson).

    The grid is centred on the peak of the joint density along x, found by
    a three-point parabola fit of its logarithm, and spans ``half_width``
    conditional standard deviations read off the precision matrix. If the
    density ratio does not integrate to one the range is doubled.
    """
    cfg = config or QuadratureConfig()
    t = joint.index(target)
    g_all = [joint.index(g) for g in given]
    z_all = np.atleast_1d(np.asarray(z_values, dtype=float)).ravel()
    if len(z_all) != len(g_all):
        raise ValueError("one z value per conditioning variable required")
    keep = [k for k, g in enumerate(g_all) if g in _informative(joint, g_all)]
    g = [g_all[k] for k in keep]
    z = z_all[keep]

    idx = [t] + g
    mu_p = joint.mu[idx]
    sig_p = joint.sigma[np.ix_(idx, idx)]
    if g:
        log_pz = float(_logpdf(z, joint.mu[g], joint.sigma[np.ix_(g, g)]))
    else:
        log_pz = 0.0  # p(z) := 1 for an empty conditioning set

    def log_joint(xs):
        pts = np.column_stack([xs, np.broadcast_to(z, (len(xs), len(z)))])
        return np.atleast_1d(_logpdf(pts, mu_p, sig_p))

    if sig_p[0, 0] <= 0:
        return float(joint.mu[t])
    prec = np.linalg.pinv(sig_p) if g else np.array([[1.0 / sig_p[0, 0]]])
    cstd = 1.0 / np.sqrt(prec[0, 0])
    # coarse centre: vertex of the parabola through three log-density samples
    h = cstd
    x0 = joint.mu[t]
    f = log_joint(np.array([x0 - h, x0, x0 + h]))
    curv = f[0] - 2 * f[1] + f[2]
    centre = x0 - 0.5 * h * (f[2] - f[0]) / curv if curv < 0 else x0

    width = cfg.half_width * cstd
    for _ in range(cfg.max_doublings + 1):
        xs = np.linspace(centre - width, centre + width, cfg.nodes)
        dens = np.exp(log_joint(xs) - log_pz)
        mass = simpson(dens, x=xs)
        if abs(mass - 1.0) < cfg.mass_tol:
            return float(simpson(xs * dens, x=xs))
        width *= 2.0
    raise QuadratureError(f"conditional density integrates to {mass:.6g}, not 1, after range doubling")


# --- five-case 3-bus study ------------------------------------------------------

STUDY_LABELS = ("|V3|", "|I12|", "|I21|", "|I3|", "angV1")
STUDY_CASES = {
    1: ("angV1",),
    2: ("|I12|",),
    3: ("|I3|",),
    4: ("|I12|", "|I21|"),
    5: ("|I12|", "|I3|"),
}

# Nominal value and noise std of each random injection term of the 3-bus example.
THREE_BUS_TERMS = {
    "P2g": (2.0, 0.04),
    "Pb": (0.5, 0.04),  # bus-2 load or bus-3 generation; see ThreeBusReading
    "Q2g": (0.1, 0.04),
    "P3l": (2.0, 0.04),
    "Q3l": (0.5, 0.04),
}
THREE_BUS_V1 = (1.0, 1e-4)


@dataclass(frozen=True)
class CaseStudySpec:
    target: str = "|V3|"
    cases: dict = field(default_factory=lambda: dict(STUDY_CASES))

    def __post_init__(self):
        for subset in self.cases.values():
            for lab in subset:
                if lab not in STUDY_LABELS:
                    raise ValueError(f"unknown study variable {lab!r}")


@dataclass(frozen=True)
class ThreeBusReading:
    """How the five random injection terms are turned into net bus injections.

    ``labels="bus2load"``: the 0.5 pu active-power entry is a load at bus 2,
    so bus 3 carries load only. ``labels="literal"``: it is a generator at
    bus 3. ``draws="shared"``: one standard-normal draw scales every
    injection term (a system-wide fluctuation); ``"independent"``: one draw
    per term.
    """

    labels: str = "bus2load"
    draws: str = "shared"

    def __post_init__(self):
        if self.labels not in ("bus2load", "literal"):
            raise ValueError("labels must be 'bus2load' or 'literal'")
        if self.draws not in ("shared", "independent"):
            raise ValueError("draws must be 'shared' or 'independent'")

    def injections(self, terms: dict) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        if self.labels == "bus2load":
            p2 = terms["P2g"] - terms["Pb"]
            p3 = -terms["P3l"]
        else:
            p2 = terms["P2g"]
            p3 = terms["Pb"] - terms["P3l"]
        return p2, terms["Q2g"], p3, -terms["Q3l"]


def sample_three_bus_terms(F: int, seed: int, reading: ThreeBusReading) -> tuple[dict, np.ndarray]:
    rng = np.random.default_rng(seed)
    names = list(THREE_BUS_TERMS)
    if reading.draws == "shared":
        e = np.repeat(rng.standard_normal((F, 1)), len(names), axis=1)
    else:
        e = rng.standard_normal((F, len(names)))
    terms = {n: THREE_BUS_TERMS[n][0] + THREE_BUS_TERMS[n][1] * e[:, j] for j, n in enumerate(names)}
    v1 = THREE_BUS_V1[0] + THREE_BUS_V1[1] * rng.standard_normal(F)
    return terms, v1


def three_bus_samples(F: int = 10_000, seed: int = 0, reading: ThreeBusReading | None = None,
                      pf_options: PfOptions | None = None) -> np.ndarray:
    """F x 5 matrix over ``STUDY_LABELS`` from converged 3-bus power flows."""
    reading = reading or ThreeBusReading()
    case = three_bus()
    solver = PowerFlowSolver(case, pf_options)
    y = solver.ybus.toarray()
    z12 = THREE_BUS_IMPEDANCES[(1, 2)]
    out = np.empty((F, len(STUDY_LABELS)))
    filled, failures, block = 0, 0, 0
    while filled < F:
        terms, v1 = sample_three_bus_terms(F - filled, seed + 7919 * block, reading)
        p2, q2, p3, q3 = reading.injections(terms)
        for k in range(F - filled):
            try:
                sol = solver.solve(
                    p=np.array([0.0, p2[k], p3[k]]),
                    q=np.array([0.0, q2[k], q3[k]]),
                    v_set=np.array([v1[k], 1.0, 1.0]),
                )
            except DivergenceError:
                failures += 1
                continue
            v = sol.v
            i12 = (v[0] - v[1]) / z12
            i21 = (v[1] - v[0]) / z12
            i3 = y[2] @ v
            out[filled] = (abs(v[2]), abs(i12), abs(i21), abs(i3), sol.v_ang[0])
            filled += 1
        block += 1
        if failures > 0.1 * F:
            raise GenerationError(f"{failures} of the sampled 3-bus operating points failed to converge")
    return out


@dataclass(frozen=True)
class StudyResult:
    mae: dict
    joint: GaussianJoint
    F: int
    reading: ThreeBusReading

    def ordering_checks(self) -> dict:
        m = self.mae
        return {
            "case5<case2": m[5] < m[2],
            "case5<case3": m[5] < m[3],
            "case4>case2": m[4] > m[2],
            "case1=max": m[1] == max(m.values()),
        }


def run_3bus_study(F: int = 10_000, seed: int = 0, reading: ThreeBusReading | None = None,
                   spec: CaseStudySpec | None = None) -> StudyResult:
    """Mean absolute error of E(|V3| | z) against |V3| for each conditioning set.

    The Gaussian is fitted on all F samples and every sample is evaluated
    against that fit.
    """
    reading = reading or ThreeBusReading()
    spec = spec or CaseStudySpec()
    samples = three_bus_samples(F, seed, reading)
    joint = fit_gaussian(samples, STUDY_LABELS)
    t = joint.index(spec.target)
    mae = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegularizationWarning)
        for case_id, given in spec.cases.items():
            cols = [joint.index(g) for g in given]
            est = cond_mean_closed(joint, t, cols, samples[:, cols])
            mae[case_id] = float(np.mean(np.abs(samples[:, t] - est)))
    return StudyResult(mae, joint, F, reading)
