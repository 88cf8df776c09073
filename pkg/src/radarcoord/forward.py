"""Data generation: probes, coordinated and uncoordinated responses, noise.

Coordinated responses maximize the weighted sum ``sum_i mu_i f_i(beta_i)``
subject to the joint budget ``alpha_t'(sum_i beta_i) <= p*``. Two solvers:

* ``BUDGET_SHARE`` gives agent i the budget ``mu_i p*`` and solves its own
  problem in closed form. The result is Pareto efficient and reproducible.
* ``JOINT_ASCENT`` runs multi-start projected gradient ascent on the joint
  program and keeps the best KKT point. With the shipped utilities the
  optimum usually puts the whole budget on one agent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numpy.typing import NDArray

from radarcoord.afriat import eval_utility
from radarcoord.core import (
    BudgetSpec,
    NoiseModel,
    ProbeResponseDataset,
    SimplexWeights,
    Utility,
    UtilityKind,
    substream,
)

PROBE_LOW, PROBE_HIGH = 0.1, 1.1
DEFAULT_WEIGHTS = (0.4, 0.4, 0.3)
DEFAULT_UTILITIES = (UtilityKind.DET, UtilityKind.TRACE, UtilityKind.SQRT_PROD)
TIE_TOL = 1e-12


class GenerationMode(str, Enum):
    BUDGET_SHARE = "budget-share"
    JOINT_ASCENT = "joint-ascent"


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GenerationConfig:
    T: int
    M: int
    n: int
    utilities: tuple[UtilityKind, ...]
    weights: SimplexWeights
    budget: BudgetSpec = field(default_factory=BudgetSpec)
    mode: GenerationMode = GenerationMode.BUDGET_SHARE
    seed: int = 0
    probe_law: tuple[float, float] = (PROBE_LOW, PROBE_HIGH)

    def __post_init__(self):
        if self.T < 1 or self.M < 1 or self.n < 1:
            raise ValueError("need T, M, n >= 1")
        utilities = tuple(UtilityKind(u) for u in self.utilities)
        object.__setattr__(self, "utilities", utilities)
        object.__setattr__(self, "mode", GenerationMode(self.mode))
        if len(utilities) != self.M or len(self.weights) != self.M:
            raise ValueError(f"need {self.M} utilities and weights")
        if self.n != 2:
            raise ValueError("closed-form utilities are defined for n = 2")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_json(self) -> str:
        doc = {
            "T": self.T,
            "M": self.M,
            "n": self.n,
            "probe_law": {"kind": "uniform", "low": self.probe_law[0], "high": self.probe_law[1]},
            "utilities": [u.value for u in self.utilities],
            "weights": self.weights.mu.tolist(),
            "budget": self.budget.p_star,
            "mode": self.mode.value,
            "seed": self.seed,
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "GenerationConfig":
        doc = json.loads(text)
        law = doc.get("probe_law", {"low": PROBE_LOW, "high": PROBE_HIGH})
        return cls(
            T=int(doc["T"]),
            M=int(doc["M"]),
            n=int(doc["n"]),
            utilities=tuple(UtilityKind(u) for u in doc["utilities"]),
            weights=SimplexWeights(doc["weights"]),
            budget=BudgetSpec(float(doc["budget"])),
            mode=GenerationMode(doc["mode"]),
            seed=int(doc["seed"]),
            probe_law=(float(law["low"]), float(law["high"])),
        )


def default_config(seed: int = 0, mode=GenerationMode.BUDGET_SHARE, T: int = 10, p_star: float = 1.0) -> GenerationConfig:
    """Three agents with det/trace/sqrt-prod utilities and weights 0.4:0.4:0.3.

    The weights are normalized onto the simplex (they sum to 1.1 as given).
    """
    return GenerationConfig(
        T=T,
        M=3,
        n=2,
        utilities=DEFAULT_UTILITIES,
        weights=SimplexWeights.normalized(DEFAULT_WEIGHTS),
        budget=BudgetSpec(p_star),
        mode=mode,
        seed=seed,
    )


def sample_probes(T: int, n: int, rng: np.random.Generator, law=(PROBE_LOW, PROBE_HIGH)) -> NDArray:
    """(T, n) probes, each component i.i.d. uniform on ``law``."""
    if T < 1 or n < 1:
        raise ValueError("need T >= 1 and n >= 1")
    return rng.uniform(law[0], law[1], size=(T, n))


def solve_radar_budget(utility: Utility, alpha, budget: float) -> NDArray:
    """Maximizer of ``utility`` over ``{beta >= 0 : alpha'beta <= budget}``."""
    alpha = np.asarray(alpha, dtype=float)
    if not isinstance(utility, UtilityKind):
        raise TypeError("only closed-form generator utilities can be solved")
    if alpha.shape != (2,):
        raise ValueError("closed-form utilities are defined for n = 2")
    if np.any(alpha <= 0) or budget <= 0:
        raise ValueError("probe and budget must be positive")
    if utility is UtilityKind.DET:
        # equal spend on both components
        return budget / (2.0 * alpha)
    if utility is UtilityKind.SQRT_PROD:
        # Cobb-Douglas exponents (1/2, 1) give spend shares (1/3, 2/3)
        return budget * np.array([1.0, 2.0]) / (3.0 * alpha)
    cheapest = alpha <= alpha.min() + TIE_TOL
    beta = np.zeros(2)
    beta[cheapest] = budget / (cheapest.sum() * alpha[cheapest])
    return beta


# -- joint ascent -------------------------------------------------------------


def project_budget(y: NDArray, w: NDArray, p: float) -> NDArray:
    """Euclidean projection of ``y`` onto ``{x >= 0 : w'x <= p}`` (w > 0)."""
    x = np.maximum(y, 0.0)
    if w @ x <= p:
        return x
    # x = max(y - tau w, 0) with tau chosen so that w'x = p
    r = y / w
    order = np.argsort(-r)
    ws, ys = w[order], y[order]
    num = np.cumsum(ws * ys) - p
    den = np.cumsum(ws * ws)
    tau = num / den
    nxt = np.append(r[order][1:], -np.inf)
    k = np.flatnonzero((tau < r[order]) & (tau >= nxt))
    tau_k = tau[k[0]] if k.size else tau[-1]
    return np.maximum(y - tau_k * w, 0.0)


def _utility_grad(U: UtilityKind, b: NDArray) -> NDArray:
    if U is UtilityKind.DET:
        return b[::-1].copy()
    if U is UtilityKind.TRACE:
        return np.ones(2)
    # d/db1 is unbounded as b1 -> 0; floor b1 to keep the step finite
    return np.array([b[1] / (2.0 * np.sqrt(max(b[0], 1e-12))), np.sqrt(b[0])])


def _joint_ascent(cfg: GenerationConfig, alpha: NDArray, rng: np.random.Generator,
                  restarts: int = 20, max_iter: int = 10_000, tol: float = 1e-6,
                  stall_window: int = 50, stall_eta: float = 1e-4) -> NDArray | None:
    """Best KKT point over ``restarts`` projected-gradient runs, or None.

    Steps use backtracking on ``F(x+) >= F(x) + 1e-4 |x+ - x|^2 / eta``.
    A run whose accepted steps over the last ``stall_window`` iterations
    have a geometric mean below ``stall_eta`` is abandoned. This happens near
    the sqrt-prod singularity at b1 = 0, where the steep concave direction
    forces tiny steps and the run crawls without converging.
    """
    M, n = cfg.M, cfg.n
    mu = cfg.weights.mu
    p = cfg.budget.p_star
    w = np.tile(alpha, M)

    def value(x):
        b = x.reshape(M, n)
        return sum(mu[i] * eval_utility(cfg.utilities[i], b[i]) for i in range(M))

    def grad(x):
        b = x.reshape(M, n)
        return np.concatenate([mu[i] * _utility_grad(cfg.utilities[i], b[i]) for i in range(M)])

    def grad_map(x):
        return float(np.linalg.norm(x - project_budget(x + grad(x), w, p)))

    best, best_val = None, -np.inf
    for r in range(restarts):
        if r == 0:
            x = np.concatenate([solve_radar_budget(cfg.utilities[i], alpha, mu[i] * p) if mu[i] > 0
                                else np.zeros(n) for i in range(M)])
        else:
            x = rng.dirichlet(np.ones(M * n)) * p / w
        eta = 1.0
        log_eta = []
        for k in range(max_iter):
            if grad_map(x) <= tol:
                break
            if k >= stall_window and np.mean(log_eta[-stall_window:]) < np.log(stall_eta):
                break
            g, f = grad(x), value(x)
            eta = min(2.0 * eta, 1e6)
            while True:
                xn = project_budget(x + eta * g, w, p)
                if value(xn) >= f + 1e-4 * np.sum((xn - x) ** 2) / eta or eta < 1e-16:
                    break
                eta *= 0.5
            log_eta.append(np.log(eta))
            x = xn
        if grad_map(x) > tol:
            continue
        v = value(x)
        if v > best_val:
            best, best_val = x, v
    return best


# -- generators -----------------------------------------------------------------


def generate_coordinated(cfg: GenerationConfig) -> ProbeResponseDataset:
    """Clean coordinated dataset for ``cfg``; deterministic in ``cfg.seed``."""
    probes = sample_probes(cfg.T, cfg.n, substream(cfg.seed, 0), cfg.probe_law)
    p = cfg.budget.p_star
    mu = cfg.weights.mu
    responses = np.zeros((cfg.T, cfg.M, cfg.n))
    for t in range(cfg.T):
        alpha = probes[t]
        if cfg.mode is GenerationMode.BUDGET_SHARE:
            for i in range(cfg.M):
                if mu[i] > 0:
                    responses[t, i] = solve_radar_budget(cfg.utilities[i], alpha, mu[i] * p)
        else:
            x = _joint_ascent(cfg, alpha, substream(cfg.seed, 1, t))
            if x is None:
                raise GenerationError(f"joint ascent did not converge at t={t + 1}")
            responses[t] = x.reshape(cfg.M, cfg.n)
        spend = alpha @ responses[t].sum(axis=0)
        responses[t] *= p / spend
    return ProbeResponseDataset(probes, responses, noisy=False)


def generate_noncoordinated(T: int, M: int, n: int, rng: np.random.Generator) -> ProbeResponseDataset:
    """Probes as usual; responses i.i.d. uniform on [0, 1] per component."""
    probes = sample_probes(T, n, rng)
    responses = rng.uniform(0.0, 1.0, size=(T, M, n))
    return ProbeResponseDataset(probes, responses, noisy=False)


def draw_noise(shape, noise: NoiseModel, rng: np.random.Generator) -> NDArray:
    return rng.normal(0.0, noise.sigma, size=shape) if noise.sigma > 0 else np.zeros(shape)


def add_noise(ds: ProbeResponseDataset, noise: NoiseModel, rng: np.random.Generator) -> ProbeResponseDataset:
    """Noisy copy of a clean dataset; probes are untouched."""
    if ds.noisy:
        raise ValueError("dataset is already noisy")
    eps = draw_noise(ds.responses.shape, noise, rng)
    return ds.with_responses(ds.responses + eps, noisy=True)
