"""Constructors for the fixed-point maps: gradient steps, proximity maps,
compositions, affine maps, and the resolved primal-dual update.

Operators are immutable after construction; ``apply`` is pure and reentrant,
so instances are safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .metrics import primal_dual_metric

__all__ = [
    "Operator",
    "ProxFamily",
    "gradient_step",
    "soft_threshold",
    "block_soft_threshold",
    "l1_prox",
    "l2_prox",
    "zero_prox",
    "box_prox",
    "prox_operator",
    "identity",
    "affine",
    "compose",
    "proximal_gradient",
    "primal_dual",
]

# A prox family maps (scale, x) to prox of (scale * g) at x.
ProxFamily = Callable[[float, np.ndarray], np.ndarray]

HINT_TOL = 1e-8


@dataclass(eq=False)
class Operator:
    """A dimension-tagged self-map of real n-space.

    `fixed_point_hint`, when present, must be fixed by the map to within
    1e-8 * (1 + |hint|); this is checked at construction time.
    """

    dim: int
    fn: Callable[[np.ndarray], np.ndarray]
    fixed_point_hint: Optional[np.ndarray] = None
    label: str = "operator"

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("operator dimension must be at least 1")
        if self.fixed_point_hint is not None:
            hint = np.asarray(self.fixed_point_hint, dtype=float).reshape(-1)
            if hint.shape != (self.dim,):
                raise ValueError("fixed_point_hint dimension does not match operator")
            drift = np.linalg.norm(self(hint) - hint)
            if drift > HINT_TOL * (1.0 + np.linalg.norm(hint)):
                raise ValueError(
                    f"fixed_point_hint of '{self.label}' moves by {drift:.3e} "
                    "under the operator"
                )
            object.__setattr__(self, "fixed_point_hint", hint)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(
                f"operator '{self.label}' expects dimension {self.dim}, "
                f"got shape {x.shape}"
            )
        y = np.asarray(self.fn(x), dtype=float)
        if y.shape != (self.dim,):
            raise ValueError(
                f"operator '{self.label}' returned shape {y.shape} "
                f"instead of ({self.dim},)"
            )
        return y

    def displacement(self, x):
        """The residual map x - T(x)."""
        x = np.asarray(x, dtype=float)
        return x - self(x)


def gradient_step(grad_f, beta, dim, fixed_point_hint=None, label="gradient-step"):
    """Explicit gradient step x - beta * grad_f(x) for beta > 0."""
    if beta <= 0:
        raise ValueError("beta must be positive")

    def step(x):
        return x - beta * np.asarray(grad_f(x), dtype=float)

    return Operator(dim, step, fixed_point_hint, label)


def soft_threshold(lam, x):
    """Componentwise shrinkage by lam; the proximity map of lam * |.|_1.

    Components above lam move down by lam, components below -lam move up by
    lam, and everything in between collapses to zero.
    """
    if lam < 0:
        raise ValueError("threshold must be nonnegative")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - lam, 0.0)


def block_soft_threshold(lam, x):
    """Radial shrinkage by lam; the proximity map of lam * |.|_2."""
    if lam < 0:
        raise ValueError("threshold must be nonnegative")
    x = np.asarray(x, dtype=float)
    nrm = np.linalg.norm(x)
    if nrm <= lam:
        return np.zeros_like(x)
    return (1.0 - lam / nrm) * x


def l1_prox(lam=1.0):
    """Prox family of lam * |.|_1: (t, x) -> componentwise shrinkage by t*lam."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    return lambda t, x: soft_threshold(t * lam, x)


def l2_prox(lam=1.0):
    """Prox family of lam * |.|_2: (t, x) -> radial shrinkage by t*lam."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    return lambda t, x: block_soft_threshold(t * lam, x)


def zero_prox():
    """Prox family of the zero function: the identity at every scale."""
    return lambda t, x: np.asarray(x, dtype=float)


def box_prox(lower, upper):
    """Prox family of a box indicator: projection, insensitive to the scale."""
    if np.any(np.asarray(lower) > np.asarray(upper)):
        raise ValueError("box bounds are inverted")
    return lambda t, x: np.clip(np.asarray(x, dtype=float), lower, upper)


def prox_operator(prox, scale, dim, fixed_point_hint=None, label="prox"):
    """Wrap a prox family at a fixed scale as an Operator."""
    if scale <= 0:
        raise ValueError("prox scale must be positive")
    return Operator(dim, lambda x: prox(scale, x), fixed_point_hint, label)


def identity(dim):
    return affine(1.0, np.zeros(dim), label="identity")


def affine(alpha, z, label=None):
    """The map x -> alpha * x + z.

    For alpha != 1 the unique fixed point z / (1 - alpha) is attached as the
    hint; for alpha == 1 no hint is set.
    """
    z = np.asarray(z, dtype=float).reshape(-1)
    hint = z / (1.0 - alpha) if alpha != 1.0 else None
    if label is None:
        label = f"affine(a={alpha:g})"
    return Operator(len(z), lambda x: alpha * x + z, hint, label)


def compose(s, t):
    """The composition s(t(x)).

    The fixed-point hint survives only when both factors carry hints and the
    hints coincide to within 1e-8; a shared fixed point of both factors is a
    fixed point of the composition, but nothing weaker is.
    """
    if s.dim != t.dim:
        raise ValueError(
            f"cannot compose '{s.label}' (dim {s.dim}) with '{t.label}' (dim {t.dim})"
        )
    hint = None
    if s.fixed_point_hint is not None and t.fixed_point_hint is not None:
        if np.linalg.norm(s.fixed_point_hint - t.fixed_point_hint) <= HINT_TOL:
            hint = t.fixed_point_hint
    return Operator(
        s.dim, lambda x: s(t(x)), hint, label=f"({s.label} o {t.label})"
    )


def proximal_gradient(grad_f, prox_g, beta, dim, fixed_point_hint=None,
                      label="prox-grad"):
    """Forward-backward map: prox of beta*g after a beta gradient step on f."""
    if beta <= 0:
        raise ValueError("beta must be positive")

    def step(x):
        return prox_g(beta, x - beta * np.asarray(grad_f(x), dtype=float))

    return Operator(dim, step, fixed_point_hint, label)


def primal_dual(grad_f, prox_h, prox_g, b_mat, beta, eta, fixed_point_hint=None,
                label="primal-dual"):
    """Resolved primal-dual update on the stacked (primal, dual) vector.

    One application performs the two lines

        x' = prox of beta*h at  x - beta * (grad_f(x) + B^T y)
        y' = eta * (I - prox of g/eta) applied to  y/eta + B(2x' - x)

    where the second line computes the conjugate prox through the Moreau
    decomposition, so the prox of the conjugate function is never evaluated
    directly.  Construction fails when the coupled metric for (beta, eta, B)
    is not positive definite.

    Parameters
    ----------
    grad_f : callable
        Gradient of the smooth term, acting on the primal block.
    prox_h, prox_g : ProxFamily
        Prox families of the direct and composed nonsmooth terms.
    b_mat : array_like, shape (m, n)
        Coupling matrix applied to the primal variable.
    beta, eta : float
        Primal and dual step sizes; must make the coupled metric PD.
    """
    b = np.atleast_2d(np.asarray(b_mat, dtype=float))
    m, n = b.shape
    primal_dual_metric(beta, eta, b)  # validates positive definiteness

    def step(v):
        x, y = v[:n], v[n:]
        x_new = prox_h(beta, x - beta * (np.asarray(grad_f(x), dtype=float) + b.T @ y))
        shifted = y / eta + b @ (2.0 * x_new - x)
        y_new = eta * (shifted - prox_g(1.0 / eta, shifted))
        return np.concatenate([x_new, y_new])

    return Operator(n + m, step, fixed_point_hint, label)
