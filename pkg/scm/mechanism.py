"""
Structural functions of the SCM and single-unit simulation.

Every function accepts scalars or numpy arrays; array inputs broadcast and
return int8 arrays, scalar inputs return plain ints/floats. The batch
simulator used by sample generation goes through the same functions, so a
unit simulated on its own and the same unit inside a batch agree.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from django.core.exceptions import ValidationError
from django.db import models

from .spec import ScmSpec


class Regime(models.TextChoices):
    OBSERVATIONAL = "observational", "Observational"
    DO_X0 = "do(X=0)", "Intervention do(X=0)"
    DO_X1 = "do(X=1)", "Intervention do(X=1)"


INTERVENTION_VALUES = {Regime.DO_X0: 0, Regime.DO_X1: 1}


@dataclass(frozen=True)
class ExogenousAssignment:
    """Values of U_Z (one per feature), U_X and U_Y for one unit."""

    uz: Tuple[int, ...]
    ux: int
    uy: int


@dataclass(frozen=True)
class UnitOutcome:
    z: Tuple[int, ...]
    x: int
    y: int
    regime: str


def _bits(mask):
    bits = np.asarray(mask).astype(np.int8)
    return int(bits) if bits.ndim == 0 else bits


def _linear(z, coeffs: np.ndarray, n_features: int):
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 0 or z.shape[-1] != n_features:
        raise ValidationError(
            f"Feature vector must have length {n_features}, got shape {z.shape}."
        )
    value = z @ coeffs
    return float(value) if np.ndim(value) == 0 else value


def compute_mx(z, spec: ScmSpec):
    """M_X(z): dot product of z with the treatment coefficients."""
    return _linear(z, spec.mx_coeffs, spec.n_features)


def compute_my(z, spec: ScmSpec):
    """M_Y(z): dot product of z with the outcome coefficients."""
    return _linear(z, spec.my_coeffs, spec.n_features)


def eval_fx(mx_val, u_x):
    """f_X: 1 iff M_X + U_X > 0.5."""
    return _bits(np.asarray(mx_val) + np.asarray(u_x) > 0.5)


def eval_fy(x, my_val, u_y, c_y: float, upper_branch: int = 1):
    """
    f_Y: with v = C_Y*X + M_Y + U_Y, 1 on 0 < v < 1, ``upper_branch`` on
    1 < v < 2 and 0 elsewhere. All inequalities are strict.
    """
    v = c_y * np.asarray(x) + np.asarray(my_val) + np.asarray(u_y)
    lower = (v > 0.0) & (v < 1.0)
    upper = (v > 1.0) & (v < 2.0)
    if upper_branch:
        return _bits(lower | upper)
    return _bits(lower)


def simulate_batch(
    spec: ScmSpec,
    uz: np.ndarray,
    ux: np.ndarray,
    uy: np.ndarray,
    x_assigned: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Evaluate the mechanism for a batch of exogenous draws.

    ``x_assigned`` switches to the interventional regime do(X = x_assigned).
    Returns (z, x, y) as int8 arrays.
    """
    z = np.asarray(uz).astype(np.int8)
    if x_assigned is None:
        x = np.atleast_1d(eval_fx(compute_mx(z, spec), ux))
    else:
        x = np.atleast_1d(np.asarray(x_assigned).astype(np.int8))
    y = eval_fy(x, compute_my(z, spec), uy, spec.c_y, spec.fy_upper_branch)
    return z, x, np.atleast_1d(y)


def simulate_unit(
    spec: ScmSpec, exo: ExogenousAssignment, regime: str = Regime.OBSERVATIONAL
) -> UnitOutcome:
    """Outcome of one unit with fixed exogenous values under ``regime``."""
    if len(exo.uz) != spec.n_features:
        raise ValidationError(
            f"Exogenous assignment has {len(exo.uz)} U_Z values, "
            f"spec has {spec.n_features} features."
        )
    if regime not in Regime.values:
        raise ValidationError(f"Unknown regime: {regime}")

    z = np.array(exo.uz, dtype=np.int8)
    if regime == Regime.OBSERVATIONAL:
        x = eval_fx(compute_mx(z, spec), exo.ux)
    else:
        x = INTERVENTION_VALUES[Regime(regime)]
    y = eval_fy(x, compute_my(z, spec), exo.uy, spec.c_y, spec.fy_upper_branch)
    return UnitOutcome(z=tuple(int(b) for b in z), x=int(x), y=int(y), regime=regime)
