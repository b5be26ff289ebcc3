"""Stochastic action, its directional derivative, and the criticality check.

The action of a drifted ensemble is the expected left-point sum of
|v|^2/2 - p(1 - t, x) along its paths.  Shifting every path by eps * h (an
adapted perturbation vanishing at both endpoints) shifts the drift process by
eps * hdot and the positions by eps * h, which expands to the first-order
derivative

    dS[h] = E[ sum_k ( <v_k, hdot_k> - <grad p(1 - t_k, X_k), h_k> ) dt ].

A solution field makes this vanish for every admissible h; the finite
dictionary below probes deterministic directions and genuinely random
(gated) ones, and the finite-difference pushforward recomputes the same
derivative from the action alone as an independent oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import NormalDist
from typing import Callable, Optional

import numpy as np

from .engine import PathEnsemble, pu_tag, require_tag
from .fields import Array, FlowCase
from .girsanov import EstimateWithError, mean_with_error

_EPS_RANGE = (1e-4, 1e-1)


@dataclass(frozen=True)
class PerturbationField:
    """Adapted perturbation with h(0) = h(1) = 0 exactly.

    kind is one of {"deterministic_sine", "deterministic_bump",
    "adapted_gated"}.  Deterministic kinds carry a direction vector; the
    gated kind switches on at the activation time and points along a bounded
    function of the path position at that time, so it is random but adapted.
    ``energy_bound`` bounds sum |hdot|^2 dt.
    """

    kind: str
    label: str
    direction: Optional[Array] = None
    activation: Optional[float] = None
    gate: Optional[Callable[[Array], Array]] = None
    energy_bound: float = 0.0

    def realize(self, ensemble: PathEnsemble):
        """Evaluate (h, hdot) on the ensemble grid.

        Returns arrays broadcastable to (N, M+1, 3); deterministic kinds
        yield a singleton path axis.
        """
        times = ensemble.grid.times
        if self.kind == "deterministic_sine":
            base = np.sin(np.pi * times)
            base[0] = base[-1] = 0.0
            dbase = np.pi * np.cos(np.pi * times)
            c = self.direction
            return base[None, :, None] * c, dbase[None, :, None] * c
        if self.kind == "deterministic_bump":
            base = times * (1.0 - times)
            dbase = 1.0 - 2.0 * times
            c = self.direction
            return base[None, :, None] * c, dbase[None, :, None] * c
        if self.kind == "adapted_gated":
            a = self.activation
            k_a = int(np.floor(a * ensemble.grid.steps))
            gate_vals = self.gate(ensemble.positions[:, k_a, :])
            on = times >= a
            phase = np.pi * (times - a) / (1.0 - a)
            base = np.where(on, np.sin(phase), 0.0)
            base[-1] = 0.0
            dbase = np.where(on, np.pi / (1.0 - a) * np.cos(phase), 0.0)
            return (base[None, :, None] * gate_vals[:, None, :],
                    dbase[None, :, None] * gate_vals[:, None, :])
        raise ValueError(f"unknown perturbation kind {self.kind!r}")


# Energy bounds are pointwise sup bounds times 1.5, which covers the
# left-point discretized energy for every grid with M >= 2.

def sine_perturbation(direction: Array, label: str = "") -> PerturbationField:
    c = np.asarray(direction, dtype=float)
    return PerturbationField("deterministic_sine", label or f"sine{tuple(c)}",
                             direction=c,
                             energy_bound=1.5 * np.pi**2 * float(c @ c))


def bump_perturbation(direction: Array, label: str = "") -> PerturbationField:
    c = np.asarray(direction, dtype=float)
    return PerturbationField("deterministic_bump", label or f"bump{tuple(c)}",
                             direction=c, energy_bound=1.5 * float(c @ c))


def gated_tanh_perturbation(activation: float, label: str = "") -> PerturbationField:
    if not 0.0 < activation < 1.0:
        raise ValueError("activation time must lie in (0, 1)")
    return PerturbationField(
        "adapted_gated", label or f"gated_tanh(a={activation})",
        activation=activation, gate=np.tanh,
        energy_bound=4.5 * (np.pi / (1.0 - activation)) ** 2)


def default_dictionary() -> list:
    """Nine probes: sine and bump along each axis, plus three tanh gates."""
    basis = np.eye(3)
    entries = [sine_perturbation(basis[i], f"sine_e{i + 1}") for i in range(3)]
    entries += [bump_perturbation(basis[i], f"bump_e{i + 1}") for i in range(3)]
    entries += [gated_tanh_perturbation(a) for a in (0.25, 0.5, 0.75)]
    return entries


def deterministic_dictionary() -> list:
    basis = np.eye(3)
    return ([sine_perturbation(basis[i], f"sine_e{i + 1}") for i in range(3)]
            + [bump_perturbation(basis[i], f"bump_e{i + 1}") for i in range(3)])


DICTIONARIES = {"default": default_dictionary,
                "deterministic": deterministic_dictionary}


# ---------------------------------------------------------------------------

def _drift_and_gradp(case: FlowCase, ensemble: PathEnsemble):
    """Left-point drift and pressure-gradient values, shape (N, M, 3)."""
    x = ensemble.positions
    grid = ensemble.grid
    times = grid.times
    v = np.empty((x.shape[0], grid.steps, 3))
    gp = np.empty_like(v)
    for k in range(grid.steps):
        t_rev = 1.0 - times[k]
        v[:, k] = -case.velocity.eval(t_rev, x[:, k])
        gp[:, k] = case.pressure.gradient(t_rev, x[:, k])
    return v, gp


def action_per_path(case: FlowCase, ensemble: PathEnsemble) -> Array:
    """Per-path action sum_k (|v_k|^2 / 2 - p(1 - t_k, X_k)) dt."""
    require_tag(ensemble, pu_tag(case))
    x = ensemble.positions
    grid = ensemble.grid
    times = grid.times
    acc = np.zeros(x.shape[0])
    for k in range(grid.steps):
        t_rev = 1.0 - times[k]
        v_k = case.velocity.eval(t_rev, x[:, k])
        acc += 0.5 * (v_k**2).sum(axis=-1) - case.pressure.eval(t_rev, x[:, k])
    return acc * grid.dt


def stochastic_action(case: FlowCase, ensemble: PathEnsemble) -> EstimateWithError:
    return mean_with_error(action_per_path(case, ensemble))


def action_derivative_analytic(case: FlowCase, ensemble: PathEnsemble,
                               h: PerturbationField) -> EstimateWithError:
    """First-order action derivative E[sum (<v, hdot> - <grad p, h>) dt]."""
    require_tag(ensemble, pu_tag(case))
    v, gp = _drift_and_gradp(case, ensemble)
    hv, hdv = h.realize(ensemble)
    m = ensemble.grid.steps
    integrand = (v * hdv[:, :m]).sum(axis=-1) - (gp * hv[:, :m]).sum(axis=-1)
    per_path = integrand.sum(axis=1) * ensemble.grid.dt
    return mean_with_error(per_path)


def action_derivative_fd(case: FlowCase, ensemble: PathEnsemble,
                         h: PerturbationField, eps: float = 1e-2) -> EstimateWithError:
    """Central-difference derivative of the pushforward action.

    The path map omega -> omega + eps*h moves positions to X + eps*h and the
    drift process to v + eps*hdot; the difference quotient uses common random
    numbers, so only the genuinely nonlinear (pressure) part contributes
    O(eps^2) error.
    """
    if not _EPS_RANGE[0] <= eps <= _EPS_RANGE[1]:
        raise ValueError(f"eps must lie in {_EPS_RANGE}")
    require_tag(ensemble, pu_tag(case))
    x = ensemble.positions
    grid = ensemble.grid
    times = grid.times
    v, _ = _drift_and_gradp(case, ensemble)
    hv, hdv = h.realize(ensemble)
    m = grid.steps

    def shifted_action(sign):
        vs = v + sign * eps * hdv[:, :m]
        acc = np.zeros(x.shape[0])
        for k in range(m):
            t_rev = 1.0 - times[k]
            xs = x[:, k] + sign * eps * hv[:, k]
            acc += (0.5 * (vs[:, k] ** 2).sum(axis=-1)
                    - case.pressure.eval(t_rev, xs))
        return acc * grid.dt

    per_path = (shifted_action(+1.0) - shifted_action(-1.0)) / (2.0 * eps)
    return mean_with_error(per_path)


def least_action_check(case: FlowCase, ensemble: PathEnsemble,
                       dictionary: Optional[list] = None,
                       alpha: float = 0.01) -> dict:
    """Criticality verdict over a perturbation dictionary.

    Each entry contributes z = estimate / SE; the verdict is "critical" iff
    max |z| stays under the two-sided Bonferroni quantile at level alpha.
    """
    entries = dictionary if dictionary is not None else default_dictionary()
    if not entries:
        raise ValueError("dictionary must be non-empty")
    rows = []
    for h in entries:
        est = action_derivative_analytic(case, ensemble, h)
        if est.std_error > 0:
            z = est.value / est.std_error
        else:
            z = 0.0 if abs(est.value) < 1e-14 else float(np.inf)
        rows.append({"h": h.label, "estimate": est.value,
                     "std_error": est.std_error, "z": z})
    max_abs_z = max(abs(r["z"]) for r in rows)
    threshold = NormalDist().inv_cdf(1.0 - alpha / (2.0 * len(rows)))
    return {
        "entries": rows,
        "max_abs_z": max_abs_z,
        "threshold": threshold,
        "verdict": "critical" if max_abs_z <= threshold else "not critical",
    }
