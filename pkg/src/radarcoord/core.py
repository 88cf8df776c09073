"""Domain types, dataset validation and CSV I/O.

A dataset holds T probes (each an n-vector, shared by all agents at that
step) and a T x M grid of n-vector responses. Arrays are stored read-only
so a dataset can be shared freely once built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Union

import numpy as np
from numpy.typing import NDArray

WEIGHT_SUM_TOL = 1e-12


class DatasetFormatError(ValueError):
    """Raised when a dataset file does not match the CSV schema."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _frozen(a, dtype=float) -> NDArray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator keyed by ``(seed, *key)``.

    Streams for distinct keys are statistically independent, so work items
    can be computed in any order (or in parallel) and still agree with a
    serial run.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def derive_seed(seed: int, *key: int) -> int:
    """A 64-bit integer seed derived from ``(seed, *key)``."""
    state = np.random.SeedSequence(seed, spawn_key=tuple(key)).generate_state(1, np.uint64)
    return int(state[0])


@dataclass(frozen=True, eq=False)
class ProbeResponseDataset:
    """Probes ``alpha_t`` and responses ``beta_t^i``.

    Attributes:
        probes: (T, n) array.
        responses: (T, M, n) array; ``responses[t, i]`` is agent i's response
            to probe t.
        noisy: True when responses were observed through additive noise.
    """

    probes: NDArray
    responses: NDArray
    noisy: bool = False

    def __post_init__(self):
        probes = _frozen(self.probes)
        responses = _frozen(self.responses)
        if probes.ndim != 2 or responses.ndim != 3:
            raise ValueError("probes must be (T, n) and responses (T, M, n)")
        T, n = probes.shape
        if T < 1 or n < 1 or responses.shape[1] < 1:
            raise ValueError("need T >= 1, M >= 1, n >= 1")
        if responses.shape[0] != T or responses.shape[2] != n:
            raise ValueError(
                f"responses shape {responses.shape} inconsistent with probes {probes.shape}"
            )
        object.__setattr__(self, "probes", probes)
        object.__setattr__(self, "responses", responses)
        object.__setattr__(self, "noisy", bool(self.noisy))

    @property
    def T(self) -> int:
        return self.probes.shape[0]

    @property
    def M(self) -> int:
        return self.responses.shape[1]

    @property
    def n(self) -> int:
        return self.probes.shape[1]

    def agent(self, i: int) -> NDArray:
        """(T, n) responses of agent ``i`` (0-based)."""
        if not 0 <= i < self.M:
            raise IndexError(f"agent index {i} out of range for M={self.M}")
        return self.responses[:, i, :]

    def with_responses(self, responses, noisy: bool) -> "ProbeResponseDataset":
        return ProbeResponseDataset(self.probes, responses, noisy)


@dataclass(frozen=True)
class NoiseModel:
    """I.i.d. zero-mean Gaussian noise on every response component."""

    sigma: float
    kind: str = "gaussian-iid"

    def __post_init__(self):
        if self.kind != "gaussian-iid":
            raise ValueError(f"unsupported noise kind {self.kind!r}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True, eq=False)
class SimplexWeights:
    """Scalarization weights on the unit simplex.

    Zero weights are admitted (closed simplex) so the degenerate
    zero-weight case can be generated; ``strictly_positive`` reports
    membership of the open simplex.
    """

    mu: NDArray

    def __post_init__(self):
        mu = _frozen(self.mu)
        if mu.ndim != 1 or mu.size < 1:
            raise ValueError("weights must be a nonempty vector")
        if np.any(mu < 0):
            raise ValueError(f"weights must be nonnegative, got {mu}")
        if abs(mu.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights must sum to 1, got sum {mu.sum()!r}")
        object.__setattr__(self, "mu", mu)

    @classmethod
    def normalized(cls, raw) -> "SimplexWeights":
        raw = np.asarray(raw, dtype=float)
        return cls(raw / raw.sum())

    @property
    def strictly_positive(self) -> bool:
        return bool(np.all(self.mu > 0))

    def __len__(self) -> int:
        return self.mu.size


@dataclass(frozen=True)
class BudgetSpec:
    p_star: float = 1.0

    def __post_init__(self):
        if not self.p_star > 0:
            raise ValueError(f"budget must be > 0, got {self.p_star}")


class UtilityKind(str, Enum):
    """Closed-form generator utilities on two-component responses."""

    DET = "det"
    TRACE = "trace"
    SQRT_PROD = "sqrt_prod"


@dataclass(frozen=True, eq=False)
class PiecewiseAffine:
    """Concave utility ``U(b) = min_t [offsets_t + slopes_t * probes_t'(b - anchors_t)]``."""

    offsets: NDArray
    slopes: NDArray
    probes: NDArray
    anchors: NDArray

    def __post_init__(self):
        for name in ("offsets", "slopes", "probes", "anchors"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        T = self.offsets.shape[0]
        if self.slopes.shape != (T,) or self.probes.shape[0] != T or self.anchors.shape != self.probes.shape:
            raise ValueError("piece arrays have inconsistent shapes")
        if np.any(self.slopes <= 0) or np.any(self.probes <= 0):
            raise ValueError("pieces need positive slopes and positive probes")


Utility = Union[UtilityKind, PiecewiseAffine]


# -- validation ---------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    """A broken dataset invariant; ``t``, ``i`` and ``component`` are 1-based."""

    kind: str
    t: int
    i: int | None
    component: int
    value: float

    def __str__(self) -> str:
        where = f"t={self.t}" + (f", i={self.i}" if self.i is not None else "")
        return f"{self.kind} at ({where}, c={self.component}): {self.value!r}"


def validate_dataset(ds: ProbeResponseDataset) -> list[Violation]:
    """Every violated invariant of ``ds``; empty when the dataset is valid.

    Probes must be strictly positive. Clean responses must be strictly
    positive; noisy responses are not checked since noise may push them
    below zero.
    """
    out: list[Violation] = []
    for t, c in zip(*np.nonzero(~(ds.probes > 0))):
        out.append(Violation("probe-positivity", int(t) + 1, None, int(c) + 1, float(ds.probes[t, c])))
    if not ds.noisy:
        for t, i, c in zip(*np.nonzero(~(ds.responses > 0))):
            out.append(
                Violation("response-positivity", int(t) + 1, int(i) + 1, int(c) + 1, float(ds.responses[t, i, c]))
            )
    return out


# -- CSV ----------------------------------------------------------------------


def fmt(x: float) -> str:
    """17 significant digits; round-trips any double exactly."""
    return format(float(x), ".17g")


def write_dataset(ds: ProbeResponseDataset, path) -> None:
    lines = [f"{ds.T},{ds.M},{ds.n},{int(ds.noisy)}"]
    for t in range(ds.T):
        alpha = ",".join(fmt(v) for v in ds.probes[t])
        for i in range(ds.M):
            beta = ",".join(fmt(v) for v in ds.responses[t, i])
            lines.append(f"{t + 1},{i + 1},{alpha},{beta}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def _ints(fields: list[str], line: int) -> list[int]:
    try:
        return [int(f) for f in fields]
    except ValueError:
        raise DatasetFormatError(line, f"expected integers, got {fields}") from None


def _floats(fields: list[str], line: int) -> list[float]:
    try:
        vals = [float(f) for f in fields]
    except ValueError:
        raise DatasetFormatError(line, "non-numeric field") from None
    if not all(math.isfinite(v) for v in vals):
        raise DatasetFormatError(line, "non-finite value")
    return vals


def read_dataset(path) -> ProbeResponseDataset:
    """Parse a dataset CSV; any schema breach raises :class:`DatasetFormatError`."""
    text = Path(path).read_text(encoding="utf-8")
    rows = [ln for ln in text.split("\n")]
    if rows and rows[-1] == "":
        rows.pop()
    if not rows:
        raise DatasetFormatError(1, "empty file")
    head = rows[0].strip().split(",")
    if len(head) != 4:
        raise DatasetFormatError(1, "header must be T,M,n,noisy")
    T, M, n, noisy = _ints(head, 1)
    if T < 1 or M < 1 or n < 1 or noisy not in (0, 1):
        raise DatasetFormatError(1, f"invalid header values {head}")
    body = rows[1:]
    if len(body) != T * M:
        raise DatasetFormatError(len(rows), f"expected {T * M} data rows, found {len(body)}")

    probes = np.empty((T, n))
    responses = np.empty((T, M, n))
    for k, raw in enumerate(body):
        line = k + 2
        fields = raw.strip().split(",")
        if len(fields) != 2 + 2 * n:
            raise DatasetFormatError(line, f"expected {2 + 2 * n} fields, found {len(fields)}")
        t, i = _ints(fields[:2], line)
        if (t, i) != (k // M + 1, k % M + 1):
            raise DatasetFormatError(line, f"row (t={t}, i={i}) out of t-major order")
        vals = _floats(fields[2:], line)
        alpha, beta = vals[:n], vals[n:]
        if i == 1:
            probes[t - 1] = alpha
        elif not np.array_equal(probes[t - 1], alpha):
            raise DatasetFormatError(line, f"probe for t={t} differs between agents")
        responses[t - 1, i - 1] = beta
    return ProbeResponseDataset(probes, responses, bool(noisy))
