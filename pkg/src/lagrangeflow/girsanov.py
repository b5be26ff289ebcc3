"""Path-space log-densities, the pressure-tilted normalizer, and entropy.

The density of the drifted law against Wiener measure is
exp(-int u(1-t, W) dW - 1/2 int |u(1-t, W)|^2 dt); its discretization uses
the left endpoint of every interval, matching the Euler-Maruyama scheme and
keeping every integrand adapted.  The pressure-tilted reference measure has
density exp(int p(1-s, W_s) ds) / Z_p against Wiener measure.

Sign convention: the trivial case u = 0, p = c pins the identity between
action and entropy to  S = H - ln Z_p  (the action picks up -c, the entropy
of a measure against itself is 0, and ln Z_p = c).  Both residual
conventions are reported so the choice stays visible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import (PathEnsemble, WIENER_TAG, pu_tag, require_same_grid,
                     require_tag)
from .fields import Array, FlowCase


@dataclass(frozen=True)
class EstimateWithError:
    """Monte Carlo point estimate with its standard error."""

    value: float
    std_error: float
    n_samples: int

    def to_dict(self):
        return {"value": self.value, "std_error": self.std_error,
                "n": self.n_samples}


def mean_with_error(samples: Array) -> EstimateWithError:
    """Sample mean with std error = sample standard deviation / sqrt(n).

    Reductions run over the fully assembled per-path array in a fixed
    pairwise order, so results never depend on the worker count used to
    build the ensemble.
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    sd = samples.std(ddof=1) if n > 1 else 0.0
    return EstimateWithError(float(samples.mean()), float(sd / np.sqrt(n)), n)


def log_density_pu(case: FlowCase, ensemble: PathEnsemble) -> Array:
    """Per-path log of dP_u/dmu evaluated as a path functional.

    Works on any ensemble: the formula only reads positions.  Returns an
    array of shape (N,).
    """
    x = ensemble.positions
    grid = ensemble.grid
    dt = grid.dt
    times = grid.times
    ito = np.zeros(x.shape[0])
    energy = np.zeros(x.shape[0])
    for k in range(grid.steps):
        u_k = case.velocity.eval(1.0 - times[k], x[:, k])
        ito += (u_k * (x[:, k + 1] - x[:, k])).sum(axis=-1)
        energy += (u_k**2).sum(axis=-1) * dt
    return -ito - 0.5 * energy


def pressure_integral(case: FlowCase, ensemble: PathEnsemble) -> Array:
    """Per-path left-point sum of p(1 - t_k, X_k) dt over k = 0..M-1."""
    x = ensemble.positions
    grid = ensemble.grid
    times = grid.times
    acc = np.zeros(x.shape[0])
    for k in range(grid.steps):
        acc += case.pressure.eval(1.0 - times[k], x[:, k])
    return acc * grid.dt


def estimate_Zp(case: FlowCase, wiener_ensemble: PathEnsemble) -> EstimateWithError:
    """Normalization Z_p = E_mu[exp(int p(1-s, W_s) ds)]."""
    require_tag(wiener_ensemble, WIENER_TAG)
    return mean_with_error(np.exp(pressure_integral(case, wiener_ensemble)))


def relative_entropy(case: FlowCase, pu_ensemble: PathEnsemble,
                     wiener_ensemble: PathEnsemble) -> EstimateWithError:
    """H(P_u | mu_p) = E_Pu[ln dP_u/dmu] - E_Pu[int p dt] + ln Z_p.

    The first two expectations come from the same drifted ensemble, so their
    covariance is accounted for by estimating them as one per-path quantity;
    the ln Z_p error enters by the delta method.
    """
    require_tag(pu_ensemble, pu_tag(case))
    require_same_grid(pu_ensemble, wiener_ensemble)
    per_path = log_density_pu(case, pu_ensemble) - pressure_integral(case, pu_ensemble)
    base = mean_with_error(per_path)
    z = estimate_Zp(case, wiener_ensemble)
    se = float(np.hypot(base.std_error, z.std_error / z.value))
    return EstimateWithError(base.value + float(np.log(z.value)), se, base.n_samples)


def action_entropy_identity(case: FlowCase, pu_ensemble: PathEnsemble,
                            wiener_ensemble: PathEnsemble) -> dict:
    """Evaluate S, H, ln Z_p and both residuals S - (H -+ ln Z_p).

    Common random numbers: the action and the entropy's drifted-measure terms
    are evaluated on the same paths, so ln Z_p cancels exactly inside
    residual_minus and the residual's standard error reflects only the
    genuinely fluctuating part.
    """
    from .action import action_per_path  # local import; action uses our types

    require_tag(pu_ensemble, pu_tag(case))
    require_same_grid(pu_ensemble, wiener_ensemble)
    grid = pu_ensemble.grid

    act = action_per_path(case, pu_ensemble)
    dens_minus_p = (log_density_pu(case, pu_ensemble)
                    - pressure_integral(case, pu_ensemble))
    z = estimate_Zp(case, wiener_ensemble)
    ln_z = float(np.log(z.value))
    se_ln_z = z.std_error / z.value

    s_est = mean_with_error(act)
    h_base = mean_with_error(dens_minus_p)
    h_est = EstimateWithError(h_base.value + ln_z,
                              float(np.hypot(h_base.std_error, se_ln_z)),
                              h_base.n_samples)
    res_minus = mean_with_error(act - dens_minus_p)     # ln Z_p cancels
    res_plus = EstimateWithError(res_minus.value - 2.0 * ln_z,
                                 float(np.hypot(res_minus.std_error, 2.0 * se_ln_z)),
                                 res_minus.n_samples)
    budget = 3.0 * res_minus.std_error + 2.0 / grid.steps
    return {
        "S": s_est,
        "H": h_est,
        "ln_Zp": EstimateWithError(ln_z, float(se_ln_z), z.n_samples),
        "residual_minus": res_minus,
        "residual_plus": res_plus,
        "identity_budget": budget,
        "identity_holds": bool(abs(res_minus.value) <= budget),
    }
