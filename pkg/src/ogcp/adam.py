"""ADAM stepper with persistent moments and epoch accept/reject bookkeeping.

The variable set is either a single ndarray or a list of ndarrays (the
factor solver steps all modes jointly). All update arithmetic is
elementwise. An accepted epoch snapshots (u, v, a); a rejected epoch
restores the snapshot bitwise and decays the learning rate.
"""

from __future__ import annotations

import numpy as np

from .exceptions import DataError


def _as_list(a):
    return (True, [a]) if isinstance(a, np.ndarray) else (False, list(a))


class Adam:
    """One stepper per solver; mutated single-threaded."""

    def __init__(self, rate: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, lower_bound: float = -np.inf,
                 rate_decay: float = 0.1):
        if rate <= 0:
            raise DataError("learning rate must be positive")
        if not 0.0 < rate_decay < 1.0:
            raise DataError("rate_decay must lie in (0, 1)")
        self.rate = float(rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.lower_bound = float(lower_bound)
        self.rate_decay = float(rate_decay)
        self.u = self.v = self.u_o = self.v_o = self.a_o = None
        self._single = False

    def init(self, a):
        """Zero all moment buffers and snapshots with the shape of ``a``."""
        self._single, parts = _as_list(a)
        self.u = [np.zeros_like(x) for x in parts]
        self.v = [np.zeros_like(x) for x in parts]
        self.u_o = [np.zeros_like(x) for x in parts]
        self.v_o = [np.zeros_like(x) for x in parts]
        self.a_o = [np.zeros_like(x) for x in parts]

    def _unwrap(self, parts):
        return parts[0] if self._single else parts

    def step(self, a, g, step_count: int):
        """One bias-corrected ADAM step; ``step_count`` is 1-based.

        The count includes the current step, so the first step uses
        exponent 1 and the bias-corrected rate is well defined.
        """
        if step_count < 1:
            raise DataError("step_count is 1-based and must be >= 1")
        _, a_parts = _as_list(a)
        _, g_parts = _as_list(g)
        if len(a_parts) != len(self.u) or len(g_parts) != len(self.u):
            raise DataError("variable/gradient structure does not match init")
        rate = (self.rate * np.sqrt(1.0 - self.beta2 ** step_count)
                / (1.0 - self.beta1 ** step_count))
        out = []
        # Saturating arithmetic is fine here; the solvers detect non-finite
        # iterates and turn them into a divergence error.
        with np.errstate(over="ignore", invalid="ignore"):
            for a_k, g_k, u_k, v_k in zip(a_parts, g_parts, self.u, self.v):
                if a_k.shape != g_k.shape or a_k.shape != u_k.shape:
                    raise DataError(
                        f"shape mismatch: variable {a_k.shape}, "
                        f"gradient {g_k.shape}"
                    )
                u_k *= self.beta1
                u_k += (1.0 - self.beta1) * g_k
                v_k *= self.beta2
                v_k += (1.0 - self.beta2) * g_k * g_k
                stepped = a_k - rate * u_k / (np.sqrt(v_k) + self.eps)
                out.append(np.maximum(stepped, self.lower_bound))
        return self._unwrap(out)

    def update(self, a, passed: bool):
        """Accept (snapshot) or reject (restore and decay rate) an epoch."""
        _, a_parts = _as_list(a)
        if passed:
            self.u_o = [x.copy() for x in self.u]
            self.v_o = [x.copy() for x in self.v]
            self.a_o = [x.copy() for x in a_parts]
            return self._unwrap(a_parts)
        self.u = [x.copy() for x in self.u_o]
        self.v = [x.copy() for x in self.v_o]
        self.rate *= self.rate_decay
        return self._unwrap([x.copy() for x in self.a_o])

    def state_arrays(self) -> dict:
        """Moment buffers and snapshots for checkpointing."""
        return {
            "u": self.u, "v": self.v,
            "u_o": self.u_o, "v_o": self.v_o, "a_o": self.a_o,
        }

    def load_state_arrays(self, arrays: dict, single: bool):
        self._single = single
        self.u = [np.array(x) for x in arrays["u"]]
        self.v = [np.array(x) for x in arrays["v"]]
        self.u_o = [np.array(x) for x in arrays["u_o"]]
        self.v_o = [np.array(x) for x in arrays["v_o"]]
        self.a_o = [np.array(x) for x in arrays["a_o"]]
