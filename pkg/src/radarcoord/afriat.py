"""Afriat-inequality rationalizability tests and utility reconstruction.

For agent i, with ``a[t, s] = alpha_t'(beta_s - beta_t)``, the data are
rationalizable by a concave monotone utility iff there exist ``u_t`` and
``lambda_t > 0`` with

    u_s - u_t - lambda_t * a[t, s] <= 0   for all s, t.

Both sides of the system are invariant to a joint positive scaling of
(u, lambda) and to adding a constant to u, so the strict bounds are imposed
as ``lambda >= 1`` and ``u >= 0`` and then u is shifted to ``min u = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from radarcoord import lp
from radarcoord.core import PiecewiseAffine, ProbeResponseDataset, Utility, UtilityKind


@dataclass(frozen=True, eq=False)
class AfriatCertificate:
    """Multipliers for one agent; ``agent`` is 0-based."""

    agent: int
    u: NDArray
    lam: NDArray

    def to_json(self) -> dict:
        return {"i": self.agent + 1, "u": self.u.tolist(), "lambda": self.lam.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "AfriatCertificate":
        return cls(int(doc["i"]) - 1, np.asarray(doc["u"], dtype=float), np.asarray(doc["lambda"], dtype=float))


@dataclass(frozen=True)
class RationalizabilityVerdict:
    consistent: bool
    per_agent: tuple[bool, ...]
    certificates: tuple[AfriatCertificate | None, ...]


def afriat_matrix(ds: ProbeResponseDataset, i: int) -> NDArray:
    """T x T matrix with ``a[t, s] = alpha_t'(beta_s^i - beta_t^i)``; zero diagonal."""
    beta = ds.agent(i)
    cross = ds.probes @ beta.T  # cross[t, s] = alpha_t' beta_s
    a = cross - np.diag(cross)[:, None]
    np.fill_diagonal(a, 0.0)
    return a


def afriat_constraints(a: NDArray, phi: float = 0.0):
    """``(A, b, lb)`` for ``u_s - u_t - lambda_t (a[t, s] + phi) <= 0``, s != t.

    Variables are ordered ``[u_1..u_T, lambda_1..lambda_T]``.
    """
    T = a.shape[0]
    t_idx, s_idx = np.nonzero(~np.eye(T, dtype=bool))
    rows = np.arange(t_idx.size)
    A = np.zeros((t_idx.size, 2 * T))
    A[rows, s_idx] += 1.0
    A[rows, t_idx] -= 1.0
    A[rows, T + t_idx] = -(a[t_idx, s_idx] + phi)
    lb = np.concatenate([np.zeros(T), np.ones(T)])
    return A, np.zeros(t_idx.size), lb


def certificate_slack(a: NDArray, u: NDArray, lam: NDArray, phi: float = 0.0) -> float:
    """Largest value of ``u_s - u_t - lambda_t (a[t, s] + phi)`` over s != t."""
    T = a.shape[0]
    if T < 2:
        return -np.inf
    lhs = u[None, :] - u[:, None] - lam[:, None] * (a + phi)
    np.fill_diagonal(lhs, -np.inf)
    return float(lhs.max())


def solve_afriat(a: NDArray, phi: float = 0.0) -> tuple[NDArray, NDArray] | None:
    """Feasible ``(u, lambda)`` for the (relaxed) system, or None.

    The returned u is shifted so that its minimum is 1.
    """
    T = a.shape[0]
    if T == 1:
        return np.ones(1), np.ones(1)
    A, b, lb = afriat_constraints(a, phi)
    ok, x = lp.feasible(A, b, lb)
    if not ok:
        return None
    u, lam = x[:T], x[T:]
    return u - u.min() + 1.0, lam


def test_rationalizable(ds: ProbeResponseDataset) -> RationalizabilityVerdict:
    """Per-agent LP feasibility of the Afriat inequalities."""
    flags, certs = [], []
    for i in range(ds.M):
        sol = solve_afriat(afriat_matrix(ds, i))
        flags.append(sol is not None)
        certs.append(None if sol is None else AfriatCertificate(i, *sol))
    return RationalizabilityVerdict(all(flags), tuple(flags), tuple(certs))


test_rationalizable.__test__ = False  # keep pytest from collecting it


def cyclically_consistent(b: NDArray) -> bool:
    """True iff no cycle of ``b <= 0`` edges contains a ``b < 0`` edge.

    This is the combinatorial form of Afriat's theorem: for any matrix ``b``
    the system ``u_s - u_t <= lambda_t b[t, s]`` (s != t) has a solution
    with ``lambda > 0`` exactly when ``b`` passes this test. The diagonal of
    ``b`` is ignored.
    """
    off = ~np.eye(b.shape[0], dtype=bool)
    R = (b <= 0) | ~off
    P = (b < 0) & off
    for k in range(b.shape[0]):
        R |= R[:, k, None] & R[None, k, :]
    # violation: t R* s while s P t
    return not bool(np.any(R & P.T))


def garp_oracle(ds: ProbeResponseDataset, i: int) -> bool:
    """GARP check by transitive closure; independent of the LP route.

    ``t`` is directly revealed preferred to ``s`` when
    ``alpha_t' beta_s <= alpha_t' beta_t``, strictly when ``<``. The data
    pass iff no cycle of the closure contains a strict edge.
    """
    return cyclically_consistent(afriat_matrix(ds, i))


def reconstruct_utility(cert: AfriatCertificate, ds: ProbeResponseDataset) -> PiecewiseAffine:
    """Piecewise-affine concave utility ``min_t [u_t + lambda_t alpha_t'(b - beta_t)]``."""
    if not 0 <= cert.agent < ds.M:
        raise ValueError(f"certificate agent {cert.agent + 1} not in dataset with M={ds.M}")
    if cert.u.shape != (ds.T,) or cert.lam.shape != (ds.T,):
        raise ValueError(f"certificate has {cert.u.size} entries, dataset has T={ds.T}")
    return PiecewiseAffine(cert.u, cert.lam, ds.probes, ds.agent(cert.agent))


def eval_utility(U: Utility, beta) -> NDArray | float:
    """Evaluate ``U`` at a response or a stack of responses (last axis = components)."""
    beta = np.asarray(beta, dtype=float)
    if isinstance(U, PiecewiseAffine):
        if beta.shape[-1] != U.probes.shape[1]:
            raise ValueError("response dimension does not match utility")
        spend = beta @ U.probes.T - np.einsum("tn,tn->t", U.probes, U.anchors)
        out = np.min(U.offsets + U.slopes * spend, axis=-1)
    else:
        if beta.shape[-1] != 2:
            raise ValueError(f"{UtilityKind(U).value} utility needs 2-component responses")
        b1, b2 = beta[..., 0], beta[..., 1]
        if U is UtilityKind.DET:
            out = b1 * b2
        elif U is UtilityKind.TRACE:
            out = b1 + b2
        elif U is UtilityKind.SQRT_PROD:
            if np.any(b1 < 0):
                raise ValueError("sqrt_prod utility undefined for negative first component")
            out = np.sqrt(b1) * b2
        else:
            raise ValueError(f"unknown utility {U!r}")
    return float(out) if np.ndim(out) == 0 else out
