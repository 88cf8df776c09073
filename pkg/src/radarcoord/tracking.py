"""Linear-Gaussian tracking model behind the linear budget constraint.

The target evolves as ``x_{k+1} = A x_k + w_k`` with ``w_k ~ N(0, Q(alpha))``
and radar i observes ``y_k = C_i x_k + v_k`` with ``v_k ~ N(0, R(beta))``.
The probe is the spectrum of Q and the response the spectrum of the inverse
of R; both are realized as diagonal matrices

    Q(alpha) = diag(alpha),    R(beta) = diag(beta)^-1.

The module checks that the asymptotic precision of the tracker grows with
beta, which is what lets a precision cap be replaced by a linear budget.
Nothing in the detector depends on it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np
from numpy.typing import NDArray

SYM_TOL = 1e-12
ARE_TOL = 1e-12
ARE_MAX_ITER = 100_000
ARE_RESIDUAL = 1e-10
LOEWNER_TOL = 1e-10


class RiccatiError(RuntimeError):
    pass


def state_noise(alpha) -> NDArray:
    """``Q(alpha) = diag(alpha)``; alpha >= 0 (zero allows a noiseless model)."""
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    if np.any(alpha < 0):
        raise ValueError("state-noise spectrum must be nonnegative")
    return np.diag(alpha)


def measurement_noise(beta) -> NDArray:
    """``R(beta) = diag(beta)^-1``; beta > 0."""
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if np.any(beta <= 0):
        raise ValueError("measurement precision spectrum must be positive")
    return np.diag(1.0 / beta)


def _pbh_ok(A: NDArray, B: NDArray, tol: float = 1e-9) -> bool:
    """PBH test: ``rank [lambda I - A, B] = X`` for every eigenvalue with |lambda| >= 1."""
    X = A.shape[0]
    for lam in np.linalg.eigvals(A):
        if abs(lam) < 1.0 - tol:
            continue
        M = np.hstack([lam * np.eye(X) - A, B.astype(complex)])
        if np.linalg.matrix_rank(M, tol=tol) < X:
            return False
    return True


def is_detectable(A, C) -> bool:
    A, C = np.asarray(A, dtype=float), np.asarray(C, dtype=float)
    return _pbh_ok(A.T, C.T)


def is_stabilizable(A, B) -> bool:
    return _pbh_ok(np.asarray(A, dtype=float), np.asarray(B, dtype=float))


@dataclass(frozen=True, eq=False)
class TrackingModel:
    """State matrix ``A`` (X x X) and one measurement matrix per radar (Y x X)."""

    A: NDArray
    C: tuple[NDArray, ...]
    name: str = "model"

    def __post_init__(self):
        A = np.array(self.A, dtype=float, ndmin=2)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        Cs = tuple(np.array(c, dtype=float, ndmin=2) for c in self.C)
        if not Cs:
            raise ValueError("need at least one measurement matrix")
        for c in Cs:
            if c.ndim != 2 or c.shape[1] != A.shape[0]:
                raise ValueError(f"measurement matrix {c.shape} does not match X={A.shape[0]}")
        A.setflags(write=False)
        for c in Cs:
            c.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "C", Cs)

    @property
    def X(self) -> int:
        return self.A.shape[0]

    def check(self, alpha, radar: int = 0) -> None:
        """Raise unless ``[A, C_i]`` is detectable and ``[A, sqrt(Q)]`` stabilizable."""
        if not is_detectable(self.A, self.C[radar]):
            raise ValueError(f"{self.name}: [A, C_{radar + 1}] is not detectable")
        if not is_stabilizable(self.A, np.sqrt(state_noise(alpha))):
            raise ValueError(f"{self.name}: [A, sqrt(Q)] is not stabilizable")


@dataclass(frozen=True, eq=False)
class TrackerState:
    """Gaussian belief ``N(mean, cov)``."""

    mean: NDArray
    cov: NDArray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float, ndmin=2)
        if cov.shape != (mean.size, mean.size):
            raise ValueError("cov must be X x X for an X-vector mean")
        if np.max(np.abs(cov - cov.T), initial=0.0) > SYM_TOL * max(1.0, np.abs(cov).max()):
            raise ValueError("cov must be symmetric")
        if np.linalg.eigvalsh(cov).min() < -SYM_TOL * max(1.0, np.abs(cov).max()):
            raise ValueError("cov must be positive semidefinite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


def _sym(S: NDArray) -> NDArray:
    return 0.5 * (S + S.T)


def kalman_predict(model: TrackingModel, state: TrackerState, alpha) -> TrackerState:
    """Time update: ``A x``, ``A S A' + Q(alpha)``."""
    A = model.A
    return TrackerState(A @ state.mean, _sym(A @ state.cov @ A.T + state_noise(alpha)))


def kalman_update(model: TrackingModel, state: TrackerState, beta, y, radar: int = 0) -> TrackerState:
    """Measurement update of a predicted belief with observation ``y``."""
    C = model.C[radar]
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != C.shape[0]:
        raise ValueError(f"observation has {y.size} entries, radar {radar + 1} measures {C.shape[0]}")
    S = state.cov
    K = C @ S @ C.T + measurement_noise(beta)  # innovation covariance
    gain = np.linalg.solve(K, C @ S).T
    mean = state.mean + gain @ (y - C @ state.mean)
    cov = _sym(S - gain @ C @ S)
    return TrackerState(mean, cov)


def kalman_step(model: TrackingModel, state: TrackerState, alpha, beta, y, radar: int = 0) -> TrackerState:
    """Posterior at k+1 from the posterior at k: predict, then update with ``y_{k+1}``."""
    if state.mean.size != model.X:
        raise ValueError(f"state has dimension {state.mean.size}, model has X={model.X}")
    return kalman_update(model, kalman_predict(model, state, alpha), beta, y, radar)


def riccati_map(model: TrackingModel, alpha, beta, S: NDArray, radar: int = 0) -> NDArray:
    """One step of the predicted-covariance recursion."""
    A, C = model.A, model.C[radar]
    K = C @ S @ C.T + measurement_noise(beta)
    post = S - S @ C.T @ np.linalg.solve(K, C @ S)
    return _sym(A @ post @ A.T + state_noise(alpha))


def are_residual(model: TrackingModel, alpha, beta, S: NDArray, radar: int = 0) -> float:
    """Max-abs entry of ``riccati_map(S) - S``."""
    return float(np.max(np.abs(riccati_map(model, alpha, beta, S, radar) - S)))


def solve_are(model: TrackingModel, alpha, beta, tol: float = ARE_TOL, radar: int = 0,
              max_iter: int = ARE_MAX_ITER) -> NDArray:
    """Asymptotic predicted covariance by fixed-point iteration from ``Q(alpha)``.

    Raises:
        ValueError: detectability or stabilizability fails.
        RiccatiError: no convergence within ``max_iter`` or residual above 1e-10.
    """
    model.check(alpha, radar)
    S = state_noise(alpha)
    for _ in range(max_iter):
        nxt = riccati_map(model, alpha, beta, S, radar)
        if np.max(np.abs(nxt - S)) < tol:
            S = nxt
            break
        S = nxt
    else:
        raise RiccatiError(f"{model.name}: Riccati iteration did not converge in {max_iter} steps")
    res = are_residual(model, alpha, beta, S, radar)
    if res >= ARE_RESIDUAL:
        raise RiccatiError(f"{model.name}: Riccati residual {res:.3g} too large")
    return S


def precision_monotone_check(model: TrackingModel, alpha, beta_low, beta_high, radar: int = 0) -> bool:
    """True iff the asymptotic precision at ``beta_high`` dominates that at ``beta_low``."""
    lo = np.asarray(beta_low, dtype=float)
    hi = np.asarray(beta_high, dtype=float)
    if np.any(lo <= 0) or np.any(lo > hi):
        raise ValueError("need 0 < beta_low <= beta_high componentwise")
    P_lo = np.linalg.inv(solve_are(model, alpha, lo, radar=radar))
    P_hi = np.linalg.inv(solve_are(model, alpha, hi, radar=radar))
    gap = _sym(P_hi - P_lo)
    return bool(np.linalg.eigvalsh(gap).min() >= -LOEWNER_TOL)


# -- shipped models -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A shipped model with the nominal probe and response it was checked at."""

    model: TrackingModel
    alpha: NDArray
    beta: NDArray


def shipped_models() -> list[str]:
    files = resources.files("radarcoord").joinpath("models")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".json"))


def load_model(name: str) -> ModelSpec:
    text = resources.files("radarcoord").joinpath("models", f"{name}.json").read_text(encoding="utf-8")
    doc = json.loads(text)
    model = TrackingModel(doc["A"], tuple(doc["C"]), doc.get("name", name))
    alpha = np.asarray(doc["alpha"], dtype=float)
    for i in range(len(model.C)):
        model.check(alpha, i)
    return ModelSpec(model, alpha, np.asarray(doc["beta"], dtype=float))
