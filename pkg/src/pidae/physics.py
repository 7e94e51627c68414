"""Discretised single-zone thermal balance used as a soft constraint.

Forward-difference residual per half-hour step ``t``::

    r_t = (T_ra[t+1] - T_ra[t]) - (a * (T_oa[t] - T_ra[t]) - b * Q_cool[t] + c * Q_hw[t])

Time step, air mass and the unknown heating correction factor are folded into
``a``, ``b`` and ``c``. Temperatures are in °C and flows in kW.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Q_COOL, Q_HW, T_OA, T_RA, Dataset


class SingularRegressors(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class PhysicsCoefficients:
    a: float = 1.0
    b: float = 1.0
    c: float = 1.0

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "PhysicsCoefficients":
        a, b, c = (float(v) for v in arr)
        return cls(a, b, c)


def _coeffs(coeffs) -> np.ndarray:
    if isinstance(coeffs, PhysicsCoefficients):
        return coeffs.as_array()
    return np.asarray(coeffs, dtype=float)


def residual(t_ra, t_oa, q_cool, q_hw, coeffs) -> np.ndarray:
    """Residual of the balance, shape ``(..., steps - 1)``."""
    a, b, c = _coeffs(coeffs)
    t_ra, t_oa = np.asarray(t_ra, float), np.asarray(t_oa, float)
    q_cool, q_hw = np.asarray(q_cool, float), np.asarray(q_hw, float)
    drive = a * (t_oa[..., :-1] - t_ra[..., :-1]) - b * q_cool[..., :-1] + c * q_hw[..., :-1]
    return (t_ra[..., 1:] - t_ra[..., :-1]) - drive


def physics_loss(t_ra, t_oa, q_cool, q_hw, coeffs) -> float:
    """Mean squared residual over every interior step (and day)."""
    r = residual(t_ra, t_oa, q_cool, q_hw, coeffs)
    return float(np.mean(r**2))


def physics_loss_grad(t_ra, t_oa, q_cool, q_hw, coeffs):
    """Loss plus gradients w.r.t. the four input series and ``(a, b, c)``.

    Returns ``(loss, grads)`` where ``grads`` maps ``"t_ra"``, ``"t_oa"``,
    ``"q_cool"``, ``"q_hw"`` to arrays shaped like the inputs and
    ``"coeffs"`` to a length-3 array.
    """
    a, b, c = _coeffs(coeffs)
    t_ra, t_oa = np.asarray(t_ra, float), np.asarray(t_oa, float)
    q_cool, q_hw = np.asarray(q_cool, float), np.asarray(q_hw, float)
    r = residual(t_ra, t_oa, q_cool, q_hw, (a, b, c))
    g = 2.0 * r / r.size

    d_tra = np.zeros_like(t_ra)
    d_tra[..., 1:] += g
    d_tra[..., :-1] += (a - 1.0) * g
    d_toa = np.zeros_like(t_oa)
    d_toa[..., :-1] = -a * g
    d_qc = np.zeros_like(q_cool)
    d_qc[..., :-1] = b * g
    d_qh = np.zeros_like(q_hw)
    d_qh[..., :-1] = -c * g
    d_coef = np.array(
        [
            -np.sum(g * (t_oa[..., :-1] - t_ra[..., :-1])),
            np.sum(g * q_cool[..., :-1]),
            -np.sum(g * q_hw[..., :-1]),
        ]
    )
    grads = {"t_ra": d_tra, "t_oa": d_toa, "q_cool": d_qc, "q_hw": d_qh, "coeffs": d_coef}
    return float(np.mean(r**2)), grads


def regressors(t_ra, t_oa, q_cool, q_hw) -> tuple[np.ndarray, np.ndarray]:
    """Design matrix ``[T_oa - T_ra, -Q_cool, Q_hw]`` and target ``dT_ra``, flattened."""
    t_ra, t_oa = np.asarray(t_ra, float), np.asarray(t_oa, float)
    q_cool, q_hw = np.asarray(q_cool, float), np.asarray(q_hw, float)
    X = np.stack(
        [
            (t_oa[..., :-1] - t_ra[..., :-1]).ravel(),
            -q_cool[..., :-1].ravel(),
            q_hw[..., :-1].ravel(),
        ],
        axis=1,
    )
    y = (t_ra[..., 1:] - t_ra[..., :-1]).ravel()
    return X, y


def fit_coefficients_ols(dataset: Dataset) -> PhysicsCoefficients:
    """Least-squares ``(a, b, c)`` minimising the summed squared residual.

    Raises :class:`SingularRegressors` when the three regressors are not
    linearly independent (e.g. no cooling at all).
    """
    t_ra, t_oa, q_cool, q_hw = (dataset.select([v])[:, 0] for v in (T_RA, T_OA, Q_COOL, Q_HW))
    X, y = regressors(t_ra, t_oa, q_cool, q_hw)
    if len(y) < 3:
        raise SingularRegressors("need at least three interior steps")
    if np.linalg.matrix_rank(X) < 3:
        raise SingularRegressors("regressor matrix is rank deficient; coefficients unidentifiable")
    sol, *_ = np.linalg.lstsq(X, y, rcond=None)
    return PhysicsCoefficients.from_array(sol)
