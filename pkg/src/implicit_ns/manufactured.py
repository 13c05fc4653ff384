"""Closed-form exact fields for the two test cases and the forcing data (f, g) they induce.

All evaluators are vectorized over points of shape (..., 2). Tensor-valued
quantities use the conventions

* ``grad_u[..., i, j] = d u_i / d x_j``
* ``hess_u[..., i, j, k] = d^2 u_i / dx_j dx_k``
* symmetric tensors as ``(T11, T12, T22)``
"""

from __future__ import annotations

import enum

import numpy as np

from .constitutive import ConstitutiveModel, frobenius_dot, frobenius_norm, nonlinear_part
from .mesh import Domain

PI = np.pi
CORNER_EPS = 1e-14


class CaseId(enum.Enum):
    CASE1 = 1
    CASE2 = 2


def _split(x):
    x = np.asarray(x, dtype=float)
    return x[..., 0], x[..., 1]


def _stress_fields(x):
    X, Y = _split(x)
    c = (np.cos(2 * PI * X) - np.cos(2 * PI * Y)) / 4
    return np.stack([c, np.zeros_like(c), -c], axis=-1)


def _stress_gradients(x):
    X, Y = _split(x)
    cx = -PI / 2 * np.sin(2 * PI * X)
    cy = PI / 2 * np.sin(2 * PI * Y)
    z = np.zeros_like(cx)
    # [..., component, direction]
    return np.stack(
        [np.stack([cx, cy], -1), np.stack([z, z], -1), np.stack([-cx, -cy], -1)], axis=-2
    )


def _pressure(x):
    X, Y = _split(x)
    return -(np.cos(2 * PI * X) + np.cos(2 * PI * Y)) / 4


def _pressure_gradient(x):
    X, Y = _split(x)
    return np.stack([PI / 2 * np.sin(2 * PI * X), PI / 2 * np.sin(2 * PI * Y)], axis=-1)


def _vortex_velocity(x):
    X, Y = _split(x)
    return np.stack([-np.cos(PI * X) * np.sin(PI * Y), np.sin(PI * X) * np.cos(PI * Y)], axis=-1)


def _vortex_gradient(x):
    X, Y = _split(x)
    sx, cx, sy, cy = np.sin(PI * X), np.cos(PI * X), np.sin(PI * Y), np.cos(PI * Y)
    row1 = np.stack([PI * sx * sy, -PI * cx * cy], -1)
    row2 = np.stack([PI * cx * cy, -PI * sx * sy], -1)
    return np.stack([row1, row2], axis=-2)


def _vortex_hessian(x):
    X, Y = _split(x)
    sx, cx, sy, cy = np.sin(PI * X), np.cos(PI * X), np.sin(PI * Y), np.cos(PI * Y)
    p2 = PI**2
    h1 = np.stack([np.stack([p2 * cx * sy, p2 * sx * cy], -1), np.stack([p2 * sx * cy, p2 * cx * sy], -1)], -2)
    h2 = np.stack([np.stack([-p2 * sx * cy, -p2 * cx * sy], -1), np.stack([-p2 * cx * sy, -p2 * sx * cy], -1)], -2)
    return np.stack([h1, h2], axis=-3)


def _corner_velocity(x):
    X, Y = _split(x)
    w = (X * X + Y * Y) ** (1.0 / 3.0)
    return np.stack([Y * w, -X * w], axis=-1)


def _corner_w_derivatives(X, Y):
    rho = X * X + Y * Y
    w = rho ** (1.0 / 3.0)
    safe = np.where(rho > 0, rho, 1.0)
    r23 = np.where(rho > 0, safe ** (-2.0 / 3.0), 0.0)
    r53 = np.where(rho > 0, safe ** (-5.0 / 3.0), 0.0)
    wx, wy = 2 * X / 3 * r23, 2 * Y / 3 * r23
    wxx = 2.0 / 3.0 * r23 - 8 * X * X / 9 * r53
    wyy = 2.0 / 3.0 * r23 - 8 * Y * Y / 9 * r53
    wxy = -8 * X * Y / 9 * r53
    return w, wx, wy, wxx, wxy, wyy


def _corner_gradient(x):
    X, Y = _split(x)
    w, wx, wy, *_ = _corner_w_derivatives(X, Y)
    row1 = np.stack([Y * wx, w + Y * wy], -1)
    row2 = np.stack([-w - X * wx, -X * wy], -1)
    return np.stack([row1, row2], axis=-2)


def _corner_hessian(x):
    X, Y = _split(x)
    w, wx, wy, wxx, wxy, wyy = _corner_w_derivatives(X, Y)
    u1xx, u1xy, u1yy = Y * wxx, wx + Y * wxy, 2 * wy + Y * wyy
    u2xx, u2xy, u2yy = -2 * wx - X * wxx, -wy - X * wxy, -X * wyy
    h1 = np.stack([np.stack([u1xx, u1xy], -1), np.stack([u1xy, u1yy], -1)], -2)
    h2 = np.stack([np.stack([u2xx, u2xy], -1), np.stack([u2xy, u2yy], -1)], -2)
    return np.stack([h1, h2], axis=-3)


def symmetric_part(grad):
    """D = (grad + grad^T)/2 as components (..., 3)."""
    return np.stack([grad[..., 0, 0], 0.5 * (grad[..., 0, 1] + grad[..., 1, 0]), grad[..., 1, 1]], axis=-1)


def tensor_divergence(T, dT):
    """Row divergence of a symmetric field from components and their gradients.

    ``dT[..., c, j]`` is ``d T_c / d x_j``.
    """
    return np.stack([dT[..., 0, 0] + dT[..., 1, 1], dT[..., 1, 0] + dT[..., 2, 1]], axis=-1)


class ManufacturedCase:
    """Exact (u, p, T^d) with data (f, g) for a constitutive model.

    Case 1 lives on the unit square with a smooth vortex velocity; Case 2
    on the L-shape with ``u = (y, -x) r^{2/3}``, whose second derivatives
    blow up like ``r^{-1/3}`` at the reentrant corner.
    """

    def __init__(self, case_id: CaseId | int, model: ConstitutiveModel):
        self.id = CaseId(case_id)
        self.model = model
        if self.id is CaseId.CASE1:
            self.domain = Domain.UNIT_SQUARE
            self._u, self._gu, self._hu = _vortex_velocity, _vortex_gradient, _vortex_hessian
        else:
            self.domain = Domain.L_SHAPE
            self._u, self._gu, self._hu = _corner_velocity, _corner_gradient, _corner_hessian

    @property
    def alpha(self):
        return self.model.alpha

    @property
    def gamma(self):
        return self.model.gamma

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        ok = np.all((x >= -1e-12) & (x <= 1 + 1e-12), axis=-1)
        if self.domain is Domain.L_SHAPE:
            ok = np.all(np.abs(x) <= 1 + 1e-12, axis=-1) & ~((x[..., 0] > 1e-12) & (x[..., 1] > 1e-12))
        if not np.all(ok):
            raise ValueError(f"point(s) outside the {self.domain.value} domain")
        return x

    def u(self, x):
        return self._u(self._check(x))

    def grad_u(self, x):
        return self._gu(self._check(x))

    def hess_u(self, x):
        return self._hu(self._check(x))

    def p(self, x):
        return _pressure(self._check(x))

    def grad_p(self, x):
        return _pressure_gradient(self._check(x))

    def Td(self, x):
        return _stress_fields(self._check(x))

    def grad_Td(self, x):
        return _stress_gradients(self._check(x))

    def D(self, x):
        return symmetric_part(self.grad_u(x))

    def eval_exact(self, x):
        return self.u(x), self.p(x), self.Td(x)

    def eval_g(self, x):
        """g = alpha T^d + gamma mu(|T^d|) T^d - D(u)."""
        T = self.Td(x)
        return self.alpha * T + self.gamma * nonlinear_part(self.model, T) - self.D(x)

    def div_D(self, x):
        H = self.hess_u(x)
        # div D(u)_i = (lap u_i + d_i div u) / 2
        lap = H[..., 0, 0] + H[..., 1, 1]
        grad_div = H[..., 0, :, 0] + H[..., 1, :, 1]
        return 0.5 * (lap + grad_div)

    def div_mu_T(self, x):
        """div(mu(|T^d|) T^d) by the chain rule (guarded where |T^d| vanishes)."""
        T = self.Td(x)
        dT = self.grad_Td(x)
        n = frobenius_norm(T)
        m = self.model.mu(n)
        safe = np.where(n > CORNER_EPS, n, 1.0)
        dn = np.where(
            (n > CORNER_EPS)[..., None],
            frobenius_dot(T[..., None, :], np.swapaxes(dT, -1, -2)) / safe[..., None],
            0.0,
        )  # (..., 2): d|T|/dx_j
        dmu = self.model.dmu(n)
        d_muT = m[..., None, None] * dT + (dmu[..., None, None] * T[..., :, None]) * dn[..., None, :]
        return tensor_divergence(m[..., None] * T, d_muT)

    def eval_f(self, x):
        """f = (u.grad)u - div D(u)/alpha + grad p + (gamma/alpha) div(mu(|T^d|) T^d)."""
        x = self._check(x)
        if self.id is CaseId.CASE2 and np.any(np.linalg.norm(x, axis=-1) < CORNER_EPS):
            raise ValueError("forcing is singular at the reentrant corner (0, 0)")
        u, G = self._u(x), self._gu(x)
        conv = np.einsum("...k,...ik->...i", u, G)
        f = conv - self.div_D(x) / self.alpha + _pressure_gradient(x)
        if self.gamma:
            f = f + self.gamma / self.alpha * self.div_mu_T(x)
        return f
