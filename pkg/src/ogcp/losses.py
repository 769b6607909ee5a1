"""Elementwise loss functions for generalized CP fitting.

Each loss is the negative log-likelihood f(x, m) of observing data x
under the model value m, up to constants:

    gaussian   f(x, m) = (x - m)^2            link eta = m, any real data
    poisson    f(x, m) = m - x log(m + eps)   link eta = m, count data
    bernoulli  f(x, m) = log(m + 1) - x log(m + eps),
               link eta = m / (1 - m), binary data

The epsilon shift inside every logarithm (and the matching derivative
denominators) keeps value and deriv finite at m = 0. The link functions
are documentation only; all solvers work directly in m.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DataError

KINDS = ("gaussian", "poisson", "bernoulli")


@dataclass(frozen=True)
class LossFunction:
    """One member of the GCP loss family; pure and thread-safe."""

    kind: str
    eps: float = 1e-10

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"unknown loss {self.kind!r}; choose from {KINDS}")
        if not self.eps > 0:
            raise DataError("eps must be positive")

    @property
    def lower_bound(self) -> float:
        """Lower bound for factor/weight entries: 0 unless gaussian."""
        return -np.inf if self.kind == "gaussian" else 0.0

    def _validate(self, x, m):
        x = np.asarray(x, dtype=np.float64)
        m = np.asarray(m, dtype=np.float64)
        if not (np.isfinite(x).all() and np.isfinite(m).all()):
            raise DataError(f"{self.kind} loss: non-finite input")
        if self.kind != "gaussian" and (m < 0).any():
            raise DataError(f"{self.kind} loss requires m >= 0")
        if self.kind == "poisson" and (x < 0).any():
            raise DataError("poisson loss requires x >= 0")
        if self.kind == "bernoulli" and ((x != 0) & (x != 1)).any():
            raise DataError("bernoulli loss requires x in {0, 1}")
        return x, m

    def value(self, x, m):
        """Loss value, elementwise over broadcastable x and m."""
        x, m = self._validate(x, m)
        if self.kind == "gaussian":
            out = (x - m) ** 2
        elif self.kind == "poisson":
            out = m - x * np.log(m + self.eps)
        else:
            out = np.log(m + 1.0) - x * np.log(m + self.eps)
        return out if out.ndim else float(out)

    def deriv(self, x, m):
        """Partial derivative of value with respect to m, elementwise."""
        x, m = self._validate(x, m)
        if self.kind == "gaussian":
            out = 2.0 * (m - x)
        elif self.kind == "poisson":
            out = 1.0 - x / (m + self.eps)
        else:
            out = 1.0 / (m + 1.0) - x / (m + self.eps)
        return out if out.ndim else float(out)


def make_loss(kind: str, eps: float = 1e-10) -> LossFunction:
    return LossFunction(kind=kind, eps=eps)
