"""Statistical coordination detector.

For each agent, ``phi_hat`` is the smallest uniform perturbation ``phi`` for
which the relaxed Afriat system

    u_s - u_t - lambda_t (a[t, s] + phi) <= 0,   lambda_t >= 1

is feasible; ``phi_star`` is the worst agent's value. The statistic is
``1 - F(phi_star)`` where F is the empirical CDF of the noise bound

    Psi = max_i max_{t != s} alpha_t'(eps_t^i - eps_s^i)

simulated under the assumed noise law. Coordination (H0) is accepted when
the statistic exceeds the threshold gamma.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from numpy.typing import NDArray

from radarcoord.afriat import (
    AfriatCertificate,
    afriat_matrix,
    certificate_slack,
    cyclically_consistent,
    solve_afriat,
)
from radarcoord.core import NoiseModel, ProbeResponseDataset, derive_seed, fmt, substream
from radarcoord.forward import GenerationConfig, add_noise, generate_coordinated

DEFAULT_TOL = 1e-9
DEFAULT_L = 500
PHI_FLOOR = -1e6
CERT_SLACK = 1e-8


class Hypothesis(str, Enum):
    H0 = "H0"  # coordinated
    H1 = "H1"


@dataclass(frozen=True, eq=False)
class PhiHat:
    """Minimal perturbation for one agent.

    ``certificate`` solves the relaxed system at ``certified_at``, which is
    ``value`` itself when the minimum is attained and slightly above it
    otherwise.
    """

    value: float
    certificate: AfriatCertificate
    attained: bool = True
    degenerate: bool = False
    certified_at: float = 0.0


@dataclass(frozen=True, eq=False)
class RelaxedStatistic:
    per_radar: NDArray
    phi_star: float
    certificates: tuple[AfriatCertificate, ...]
    degenerate: bool = False
    certified_at: tuple[float, ...] = ()


@dataclass(frozen=True, eq=False)
class EmpiricalCdf:
    samples: NDArray

    def __post_init__(self):
        s = np.sort(np.asarray(self.samples, dtype=float).reshape(-1))
        if s.size < 1:
            raise ValueError("empirical CDF needs at least one sample")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def L(self) -> int:
        return self.samples.size


@dataclass(frozen=True)
class DetectorDecision:
    statistic: float
    gamma: float
    hypothesis: Hypothesis
    phi_star: float


# -- relaxed statistic ----------------------------------------------------------


def relaxed_feasible(a: NDArray, phi: float) -> bool:
    """Exact feasibility of the relaxed system at ``phi`` (no LP involved)."""
    return cyclically_consistent(a + phi)


def relaxed_feasible_lp(a: NDArray, phi: float) -> bool:
    """LP verdict for the same question; unreliable within ~1e-5 of a breakpoint."""
    return solve_afriat(a, phi) is not None


def _phi_exact(a: NDArray) -> tuple[float, bool]:
    """Infimum of the feasible phi and whether it is attained.

    Feasibility only depends on the sign pattern of ``a + phi``, which is
    constant at each breakpoint ``-a[t, s]`` and on each open gap between
    consecutive breakpoints. Feasibility is monotone along the ordered cells
    (point, gap, point, ...), so bisection over cell indices finds the
    boundary exactly.
    """
    T = a.shape[0]
    off = ~np.eye(T, dtype=bool)
    knots = np.unique(-a[off])

    def probe(cell: int) -> float:
        k, gap = divmod(cell, 2)
        return knots[k] if not gap else 0.5 * (knots[k] + knots[k + 1])

    # every entry of a + phi is >= 0 at the last knot: u constant, lambda = 1
    lo, hi = -1, 2 * (knots.size - 1)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if relaxed_feasible(a, probe(mid)):
            hi = mid
        else:
            lo = mid
    k, gap = divmod(hi, 2)
    return float(knots[k]) + 0.0, not gap  # + 0.0 folds -0.0


def _phi_bisection(a: NDArray, tol: float, feasible=relaxed_feasible) -> float:
    """Plain bisection on phi down to ``tol``; the upper end is always feasible."""
    T = a.shape[0]
    off = ~np.eye(T, dtype=bool)
    hi = max(0.0, float(np.max(-a[off])))
    lo = -hi - 1.0
    while feasible(a, lo):
        hi = lo
        if lo <= PHI_FLOOR:
            return PHI_FLOOR
        lo = max(2.0 * lo, PHI_FLOOR)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(a, mid):
            hi = mid
        else:
            lo = mid
    return hi


def _certify(a: NDArray, phi: float, attained: bool, tol: float) -> tuple[float, NDArray, NDArray]:
    """LP certificate at ``phi`` (if attained) or the first ``phi + tol * 10^k`` that verifies.

    Just above an unattained infimum the multipliers grow like 1/(distance),
    so the LP is retried further out until the returned point checks out.
    """
    T = a.shape[0]
    off = ~np.eye(T, dtype=bool)
    top = max(0.0, float(np.max(-a[off])))
    steps = ([0.0] if attained else []) + [tol * 10.0**k for k in range(20)]
    for d in steps:
        at = min(phi + d, top) if phi < top else phi + d
        sol = solve_afriat(a, at)
        if sol is not None and certificate_slack(a, *sol, at) <= CERT_SLACK:
            return at, *sol
    # constant u with unit multipliers is feasible above every breakpoint
    return top, np.ones(T), np.ones(T)


def phi_hat(ds: ProbeResponseDataset, i: int, tol: float = DEFAULT_TOL, method: str = "breakpoints") -> PhiHat:
    """Minimal perturbation making agent ``i``'s Afriat system feasible.

    ``method="breakpoints"`` (default) is exact; ``"bisection"`` bisects on
    phi down to ``tol``. A single observation has no cross constraints and
    returns 0 flagged as degenerate.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if ds.T == 1:
        cert = AfriatCertificate(i, np.ones(1), np.ones(1))
        return PhiHat(0.0, cert, True, degenerate=True, certified_at=0.0)
    a = afriat_matrix(ds, i)
    if method == "breakpoints":
        value, attained = _phi_exact(a)
    elif method == "bisection":
        value, attained = _phi_bisection(a, tol), True
    else:
        raise ValueError(f"unknown method {method!r}")
    at, u, lam = _certify(a, value, attained, tol)
    return PhiHat(value, AfriatCertificate(i, u, lam), attained, value <= PHI_FLOOR, at)


def phi_star(ds: ProbeResponseDataset, tol: float = DEFAULT_TOL) -> RelaxedStatistic:
    hats = [phi_hat(ds, i, tol) for i in range(ds.M)]
    per = np.array([h.value for h in hats])
    return RelaxedStatistic(
        per,
        float(per.max()),
        tuple(h.certificate for h in hats),
        ds.T == 1,
        tuple(h.certified_at for h in hats),
    )


# -- noise bound ----------------------------------------------------------------


def psi_per_radar(probes: NDArray, eps: NDArray) -> NDArray:
    """``max_{t != s} alpha_t'(eps_t - eps_s)`` per agent.

    ``eps`` has shape (..., M, T, n); the result has shape (..., M).
    """
    T = probes.shape[0]
    if T < 2:
        return np.zeros(eps.shape[:-2])
    cross = np.einsum("tn,...sn->...ts", probes, eps)  # alpha_t' eps_s
    own = np.einsum("...tt->...t", cross)
    diff = own[..., :, None] - cross
    idx = np.arange(T)
    diff[..., idx, idx] = -np.inf
    return diff.max(axis=(-2, -1))


def sample_psi(probes, M: int, noise: NoiseModel, L: int = DEFAULT_L,
               rng: np.random.Generator | None = None, chunk: int = 20_000) -> EmpiricalCdf:
    """Empirical law of Psi for the given probes under ``noise``."""
    probes = np.asarray(probes, dtype=float)
    if L < 1:
        raise ValueError("L must be >= 1")
    if probes.ndim != 2 or probes.shape[0] < 1:
        raise ValueError("probes must be a nonempty (T, n) array")
    rng = rng if rng is not None else np.random.default_rng()
    T, n = probes.shape
    out = []
    for start in range(0, L, chunk):
        size = min(chunk, L - start)
        if noise.sigma > 0:
            eps = rng.normal(0.0, noise.sigma, size=(size, M, T, n))
        else:
            eps = np.zeros((size, M, T, n))
        out.append(psi_per_radar(probes, eps).max(axis=-1))
    return EmpiricalCdf(np.concatenate(out))


def cdf_value(cdf: EmpiricalCdf, x: float) -> float:
    """Fraction of samples ``<= x``."""
    return np.searchsorted(cdf.samples, x, side="right") / cdf.L


# -- decision -------------------------------------------------------------------


def decide(phi: float, cdf: EmpiricalCdf, gamma: float) -> DetectorDecision:
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    stat = 1.0 - cdf_value(cdf, phi)
    hyp = Hypothesis.H0 if stat > gamma else Hypothesis.H1
    return DetectorDecision(float(stat), gamma, hyp, float(phi))


def detect(ds: ProbeResponseDataset, cdf: EmpiricalCdf, gamma: float, tol: float = DEFAULT_TOL,
           stat: RelaxedStatistic | None = None) -> DetectorDecision:
    """H0 (coordinated) iff ``1 - F(phi_star) > gamma``."""
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    stat = stat if stat is not None else phi_star(ds, tol)
    return decide(stat.phi_star, cdf, gamma)


@dataclass(frozen=True)
class Trial:
    """One Monte-Carlo detector run."""

    phi_star: float
    statistic: float
    hypothesis: Hypothesis


def run_trial(clean: ProbeResponseDataset, noise: NoiseModel, gamma: float, L: int, seed: int,
              assumed: NoiseModel | None = None) -> Trial:
    """Add noise, simulate the Psi law on the same probes, decide.

    Noise uses substream ``(seed, 1)``, Psi sampling ``(seed, 2)``.
    """
    noisy = add_noise(clean, noise, substream(seed, 1))
    cdf = sample_psi(clean.probes, clean.M, assumed or noise, L, substream(seed, 2))
    stat = phi_star(noisy)
    dec = decide(stat.phi_star, cdf, gamma)
    return Trial(stat.phi_star, dec.statistic, dec.hypothesis)


def type1_mc(gen: GenerationConfig, noise: NoiseModel, gamma: float, trials: int,
             L: int = DEFAULT_L, seed: int = 0) -> float:
    """Fraction of coordinated noisy datasets on which H1 is decided.

    Trial k generates with seed ``derive_seed(seed, k)`` and runs its noise
    and Psi draws on substreams of that seed.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rejections = 0
    for k in range(trials):
        s = derive_seed(seed, k)
        clean = generate_coordinated(replace(gen, seed=s))
        rejections += run_trial(clean, noise, gamma, L, s).hypothesis is Hypothesis.H1
    return rejections / trials


def report_json(stat: RelaxedStatistic, decision: DetectorDecision, L: int, seed: int,
                sigma_assumed: float | None = None) -> str:
    """Detector report; floats use 17 significant digits."""
    doc = {
        "phi_per_radar": [float(fmt(v)) for v in stat.per_radar],
        "phi_star": float(fmt(stat.phi_star)),
        "statistic": float(fmt(decision.statistic)),
        "gamma": decision.gamma,
        "hypothesis": decision.hypothesis.value,
        "L": L,
        "seed": seed,
        "sigma_assumed": sigma_assumed,
        "degenerate": stat.degenerate,
        "certificates": [c.to_json() for c in stat.certificates],
        "certified_phi": [float(fmt(v)) for v in stat.certified_at],
    }
    return json.dumps(doc, indent=2) + "\n"
