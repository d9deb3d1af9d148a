"""Coefficient families for quasilinear heat flows.

The equations have the form

    u_t = [alpha * P + beta * (I - P)] : D^2 u + q,    P = Du (x) Du / |Du|^2,

so ``alpha`` is the diffusivity along the gradient and ``beta`` across it.
Near critical points the projector is taken with the regularized norm
``s_eff = sqrt(|Du|^2 + eps^2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, HypothesisError

FAMILIES = ("heat", "graphical_mcf", "p_laplacian", "custom_tabulated")
FORMS = ("eq_1_4", "eq_1_5")

_DEFAULT_FORM = {
    "heat": "eq_1_4",
    "graphical_mcf": "eq_1_5",
    "p_laplacian": "eq_1_5",
    "custom_tabulated": "eq_1_5",
}


@dataclass(frozen=True)
class CoefficientFamily:
    """Enumerated ``(alpha, beta, q)`` triple.

    ``form`` tags which structure the experiment relies on: ``eq_1_4`` is
    the psi-form estimate, which needs ``beta`` to depend on time only and
    to be at least one; ``eq_1_5`` is the modulus-of-continuity form.
    """

    family: str = "heat"
    p: float = 2.0
    epsilon_reg: float = 1e-6
    form: str | None = None
    s_table: tuple[float, ...] = ()
    alpha_table: tuple[float, ...] = ()
    beta_table: tuple[float, ...] = ()
    q_table: tuple[float, ...] = ()
    _tables: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(
                f"unknown equation family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "p_laplacian" and not self.p > 1:
            raise ConfigurationError("p must exceed 1")
        if self.epsilon_reg < 0:
            raise ConfigurationError("epsilon_reg must be nonnegative")
        if self.form is None:
            object.__setattr__(self, "form", _DEFAULT_FORM[self.family])
        if self.form not in FORMS:
            raise ConfigurationError(f"unknown form {self.form!r}; expected one of {FORMS}")
        if self.family == "custom_tabulated":
            self._build_tables()
        if self.form == "eq_1_4":
            self.require_time_only_beta()

    def _build_tables(self):
        s = np.asarray(self.s_table, dtype=float)
        cols = [np.asarray(c, dtype=float)
                for c in (self.alpha_table, self.beta_table, self.q_table)]
        if s.ndim != 1 or len(s) < 2 or np.any(np.diff(s) <= 0):
            raise ConfigurationError("s_table needs at least two strictly increasing entries")
        for name, c in zip(("alpha_table", "beta_table", "q_table"), cols):
            if c.shape != s.shape:
                raise ConfigurationError(f"{name} must have the same length as s_table")
        if np.any(cols[0] < 0) or np.any(cols[1] <= 0):
            raise ConfigurationError("tabulated alpha must be >= 0 and beta > 0")
        object.__setattr__(self, "_tables", dict(s=s, alpha=cols[0], beta=cols[1], q=cols[2]))

    @property
    def beta_time_only(self) -> bool:
        """True when ``beta`` does not depend on the gradient."""
        if self.family in ("heat", "graphical_mcf"):
            return True
        if self.family == "p_laplacian":
            return self.p == 2
        beta = self._tables["beta"]
        return bool(np.all(beta == beta[0]))

    def require_time_only_beta(self) -> None:
        """Guard for the psi-form estimate: ``beta = beta(t) >= 1``."""
        if not self.beta_time_only:
            raise HypothesisError(
                f"β(t) ≥ 1 required: {self.family} has a gradient-dependent beta")
        _, beta, _ = evaluate_coefficients(self, 0.0, 1.0, 0.0)
        if beta < 1:
            raise HypothesisError(f"β(t) ≥ 1 required: beta = {float(beta)!r}")


def regularized_norm(fam: CoefficientFamily, grad_norm):
    grad_norm = np.asarray(grad_norm, dtype=float)
    return np.sqrt(grad_norm * grad_norm + fam.epsilon_reg ** 2)


def evaluate_coefficients(fam: CoefficientFamily, u, grad_norm, t):
    """Return ``(alpha, beta, q)`` evaluated at the regularized gradient norm.

    Broadcasts over ``u`` and ``grad_norm``.  ``t`` is accepted for the
    time-dependent signature even though the named families are autonomous.
    """
    s = regularized_norm(fam, grad_norm)
    shape = np.broadcast(np.asarray(u), s).shape
    if fam.family == "heat":
        alpha = np.ones(shape)
        beta = np.ones(shape)
        q = np.zeros(shape)
    elif fam.family == "graphical_mcf":
        alpha = np.broadcast_to(1.0 / (1.0 + s * s), shape).copy()
        beta = np.ones(shape)
        q = np.zeros(shape)
    elif fam.family == "p_laplacian":
        with np.errstate(divide="ignore"):
            beta = np.broadcast_to(s ** (fam.p - 2.0), shape).copy()
        alpha = (fam.p - 1.0) * beta
        q = np.zeros(shape)
    else:
        tab = fam._tables
        alpha = np.broadcast_to(np.interp(s, tab["s"], tab["alpha"]), shape).copy()
        beta = np.broadcast_to(np.interp(s, tab["s"], tab["beta"]), shape).copy()
        q = np.broadcast_to(np.interp(s, tab["s"], tab["q"]), shape).copy()
    if shape == ():
        return float(alpha), float(beta), float(q)
    return alpha, beta, q
