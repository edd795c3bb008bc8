"""Folded concave penalty families: SCAD, MCP, hard-threshold.

Each family is a symmetric penalty t -> P(|t|), concave and nondecreasing on
[0, inf), flat beyond ``a * lam``.  The derivative is what the reweighting
algorithm consumes; the value enters objective traces.  The constants
(a1, a2, a0) quantify how large the derivative stays near zero and feed the
event diagnostics in :mod:`fcpen.lla`.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ValidationError

SCAD = "scad"
MCP = "mcp"
HARD = "hard"

FAMILIES = (SCAD, MCP, HARD)

# Conventional concavity parameters (SCAD 3.7, MCP 2.0).
DEFAULT_A = {SCAD: 3.7, MCP: 2.0, HARD: 1.0}


@dataclass(frozen=True)
class PenaltySpec:
    """A penalty family with regularization level ``lam`` and concavity ``a``.

    ``a`` defaults per family (SCAD 3.7, MCP 2.0); the hard-threshold
    penalty has no free concavity parameter and forces ``a = 1``.
    """

    family: str
    lam: float
    a: float = field(default=float("nan"))

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown penalty family {self.family!r}; "
                                  f"expected one of {FAMILIES}")
        if not np.isfinite(self.lam) or self.lam <= 0:
            raise ValidationError(f"lam must be a positive real, got {self.lam!r}")
        a = self.a
        if isinstance(a, float) and np.isnan(a):
            a = DEFAULT_A[self.family]
        if self.family == HARD:
            a = 1.0  # fixed by the family; the field is forced
        object.__setattr__(self, "a", float(a))
        if self.family == SCAD and self.a <= 2:
            raise ValidationError(f"SCAD requires a > 2, got a={self.a}")
        if self.family == MCP and self.a <= 1:
            raise ValidationError(f"MCP requires a > 1, got a={self.a}")

    @property
    def threshold(self):
        """Magnitude ``a * lam`` beyond which the penalty is flat."""
        return self.a * self.lam


def folded_concave_constants(spec):
    """Return ``(a1, a2, a0)`` for the penalty family.

    ``a1`` lower-bounds the derivative on ``(0, a2*lam]`` in units of ``lam``
    and ``a0 = min(1, a2)``.
    """
    if spec.family == SCAD:
        a1, a2 = 1.0, 1.0
    elif spec.family == MCP:
        a1, a2 = 1.0 - 1.0 / spec.a, 1.0
    else:  # hard threshold
        a1, a2 = 1.0, 0.5
    return a1, a2, min(1.0, a2)


def penalty_derivative(spec, t):
    """Derivative of the penalty at magnitude ``t >= 0``.

    ``t`` may be a scalar or an array; at 0 the right-derivative is returned.
    Nonincreasing in ``t`` and exactly zero for ``t >= a * lam``.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise DomainError("penalty_derivative expects finite t >= 0")
    lam, a = spec.lam, spec.a
    if spec.family == SCAD:
        out = np.where(t <= lam, lam, np.maximum(a * lam - t, 0.0) / (a - 1.0))
    elif spec.family == MCP:
        out = np.maximum(lam - t / a, 0.0)
    else:
        out = np.where(t < lam, 2.0 * (lam - t), 0.0)
    return out if out.ndim else float(out)


def penalty_value(spec, t):
    """Penalty value ``P(|t|)``; ``t`` may be any real scalar or array.

    Closed-form branches obtained by integrating the derivative from zero;
    the quadrature agreement is enforced in the test suite.
    """
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise DomainError("penalty_value expects finite t")
    x = np.abs(t)
    lam, a = spec.lam, spec.a
    if spec.family == SCAD:
        flat = lam * lam * (a + 1.0) / 2.0
        mid = (2.0 * a * lam * x - x * x - lam * lam) / (2.0 * (a - 1.0))
        out = np.where(x <= lam, lam * x, np.where(x <= a * lam, mid, flat))
    elif spec.family == MCP:
        out = np.where(x <= a * lam, lam * x - x * x / (2.0 * a),
                       a * lam * lam / 2.0)
    else:
        out = np.where(x < lam, lam * lam - (x - lam) ** 2, lam * lam)
    return out if out.ndim else float(out)
