"""Adaptive driver: runs update windows, applies the stopping rules, prunes
low-weight components, and seeds a new component at the particle with the
largest likelihood ratio.

One round is: run iterations until the window rule fires (or the total
iteration budget is hit), prune at most one under-weight component, check
the global stopping rule, and otherwise add a fresh component and continue.
Pruning precedes both the stop check and the add, so a newly added component
can never be pruned within its own round, and the final returned mixture has
already been cleaned.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .engine import ZeroTotalWeightError, estimate_objective, sample_batch, update_parameters
from .linalg import SpdMatrix, cholesky_spd, log_sum_exp
from .mixture import MixtureParams, add_component, mixture_log_density, mixture_sample, remove_component
from .models.base import TargetModel
from .rng import STREAM_ENGINE, STREAM_MODEL, STREAM_PROPOSAL, StreamKey


@dataclass(frozen=True)
class FixedWindow:
    """Update the component count after every ``t_w`` iterations."""

    t_w: int


@dataclass(frozen=True)
class AdaptiveWindow:
    """Update once adjacent smoothed objective values differ by less than
    ``eps0``; the smoother averages the last ``s`` values."""

    s: int
    eps0: float


WindowRule = Union[FixedWindow, AdaptiveWindow]


@dataclass(frozen=True)
class AdaptiveConfig:
    """All tuning knobs of the adaptive driver."""

    n_particles: int
    window_rule: WindowRule
    n_add: Optional[int] = None          # defaults to n_particles
    alpha_min: float = 0.02
    alpha_add: float = 0.1
    sigma_add_scale: float = 1.0
    t_max: int = 200
    d_max: int = 8
    eps_tot: float = 0.01
    smooth_window: int = 5               # reporting smoother under the fixed rule

    def __post_init__(self):
        if self.n_particles < 2:
            raise ValueError("n_particles must be at least 2")
        if self.n_add is not None and self.n_add < 1:
            raise ValueError("n_add must be at least 1")
        if not 0.0 < self.alpha_add < 1.0:
            raise ValueError("alpha_add must lie in (0, 1)")
        if not 0.0 < self.alpha_min < 0.5:
            raise ValueError("alpha_min must lie in (0, 1/2)")
        if self.sigma_add_scale <= 0.0:
            raise ValueError("sigma_add_scale must be positive")
        if self.t_max < 1:
            raise ValueError("t_max must be at least 1")
        if self.d_max < 1:
            raise ValueError("d_max must be at least 1")
        if self.eps_tot < 0.0:
            raise ValueError("eps_tot must be nonnegative")
        if self.smooth_window < 1:
            raise ValueError("smooth_window must be at least 1")
        if isinstance(self.window_rule, FixedWindow):
            if self.window_rule.t_w < 1:
                raise ValueError("t_w must be at least 1")
        elif isinstance(self.window_rule, AdaptiveWindow):
            if self.window_rule.s < 1:
                raise ValueError("s must be at least 1")
            if self.window_rule.eps0 <= 0.0:
                raise ValueError("eps0 must be positive")
        else:
            raise ValueError("window_rule must be FixedWindow or AdaptiveWindow")

    @property
    def effective_n_add(self) -> int:
        return self.n_particles if self.n_add is None else self.n_add


@dataclass(frozen=True)
class ObjectivePoint:
    t: int                # global iteration index, 1-based
    L: float
    L_smoothed: float


@dataclass(frozen=True)
class TraceEvent:
    iteration: int
    kind: str             # window_stop | component_removed | component_added | global_stop
    payload: dict


@dataclass
class RunTrace:
    """Per-iteration objective values, structural events, and mixture
    snapshots of one adaptive run."""

    header: dict = field(default_factory=dict)
    objective: list = field(default_factory=list)
    events: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)   # (iteration, MixtureParams)
    stop_reason: Optional[str] = None

    def to_records(self):
        """Flatten to JSON-serializable records, one per trace line."""
        yield {"type": "header", **self.header}
        events = list(self.events)
        obj = [{"type": "objective", "iteration": p.t, "L": p.L,
                "L_smoothed": p.L_smoothed} for p in self.objective]
        ev = [{"type": "event", "iteration": e.iteration, "kind": e.kind,
               "payload": e.payload} for e in events]
        snaps = [{"type": "snapshot", "iteration": it, "round": k + 1,
                  "mixture": params.to_json_dict()}
                 for k, (it, params) in enumerate(self.snapshots)]
        # merge in iteration order, stable within equal iterations:
        # objective first, then events, then snapshots
        merged = sorted(obj + ev + snaps,
                        key=lambda r: (r["iteration"],
                                       {"objective": 0, "event": 1, "snapshot": 2}[r["type"]]))
        yield from merged


def smoothed_objective(values, s: int) -> float:
    """The smoothed value of the latest iteration: the mean of the last ``s``
    values once ``s`` are available, the raw latest value before that."""
    t = len(values)
    if t == 0:
        raise ValueError("no objective values yet")
    if t < s:
        return float(values[-1])
    return float(np.mean(values[t - s:]))


def window_should_stop(rule: WindowRule, t: int, objective_values) -> bool:
    """Decide whether the current window ends after its ``t``-th iteration.

    Fixed rule: stop once ``t > t_w``. Adaptive rule: stop once the last two
    smoothed objective values differ by less than ``eps0`` (needs at least
    two values).
    """
    if t < 1:
        raise ValueError("t must be at least 1")
    if isinstance(rule, FixedWindow):
        return t > rule.t_w
    values = list(objective_values)
    if len(values) < 2:
        return False
    cur = smoothed_objective(values, rule.s)
    prev = smoothed_objective(values[:-1], rule.s)
    return abs(cur - prev) < rule.eps0


def prune_components(params: MixtureParams, alpha_min: float):
    """Remove the single lowest-weight component if it falls below
    ``alpha_min`` (ties break to the lowest index); never removes the last
    component. Returns ``(params, removed_index_or_None)``."""
    if params.n_components < 2:
        return params, None
    r = int(np.argmin(params.weights))
    if params.weights[r] >= alpha_min:
        return params, None
    return remove_component(params, r), r


def propose_component(params: MixtureParams, model: TargetModel, n_add: int,
                      sigma_add_scale: float, key: StreamKey,
                      n_threads: int = 1) -> tuple[np.ndarray, SpdMatrix]:
    """Pick a mean for a new component at the draw with the largest
    likelihood ratio against the current mixture; the covariance is
    ``sigma_add_scale`` times the identity."""
    if n_add < 1:
        raise ValueError("n_add must be at least 1")
    from .engine import _chunked_log_psi  # local import to avoid a cycle

    draws, _ = mixture_sample(params, n_add, key.child(0).generator())
    log_q = mixture_log_density(params, draws)
    log_prior = np.atleast_1d(np.asarray(model.log_prior(draws), dtype=float))
    log_psi = _chunked_log_psi(model, draws, key.child(1), n_threads)
    with np.errstate(invalid="ignore"):
        log_lr = log_prior + log_psi - log_q
    log_lr = np.where(np.isneginf(log_prior) | np.isneginf(log_psi), -np.inf, log_lr)
    if not np.any(np.isfinite(log_lr)):
        raise RuntimeError("no informative proposal draws")
    best = int(np.argmax(log_lr))
    cov = cholesky_spd(sigma_add_scale * np.eye(params.dim))
    return draws[best].copy(), cov


def _config_header(config: AdaptiveConfig, defaults_used) -> dict:
    rule = config.window_rule
    rule_dict = ({"kind": "fixed", "t_w": rule.t_w} if isinstance(rule, FixedWindow)
                 else {"kind": "adaptive", "s": rule.s, "eps0": rule.eps0})
    return {
        "config": {
            "n_particles": config.n_particles,
            "n_add": config.effective_n_add,
            "window_rule": rule_dict,
            "alpha_min": config.alpha_min,
            "alpha_add": config.alpha_add,
            "sigma_add_scale": config.sigma_add_scale,
            "t_max": config.t_max,
            "d_max": config.d_max,
            "eps_tot": config.eps_tot,
            "smooth_window": config.smooth_window,
        },
        "defaults_used": sorted(defaults_used),
    }


def run_adaptive(model: TargetModel, init: MixtureParams, config: AdaptiveConfig,
                 key: Union[StreamKey, int], n_threads: int = 1,
                 defaults_used=()) -> tuple[MixtureParams, RunTrace]:
    """Full adaptive run from a single-component start.

    Stops when the iteration budget is reached, when one more component
    would exceed the cap, or (after at least two windows) when the smoothed
    objective change between windows falls below ``eps_tot``; whichever of
    those fires first, in that order, is recorded as the stop reason.
    """
    if init.n_components != 1:
        raise ValueError("the adaptive run starts from a single-component mixture")
    if isinstance(key, int):
        key = StreamKey(key)

    s_report = (config.window_rule.s if isinstance(config.window_rule, AdaptiveWindow)
                else config.smooth_window)
    trace = RunTrace(header=_config_header(config, defaults_used))
    params = init
    t_tot = 0
    l_last = 0.0
    rounds = 0

    try:
        while True:
            window_values: list[float] = []
            budget_hit = False
            while True:
                batch = sample_batch(params, model, config.n_particles,
                                     key.child(STREAM_ENGINE, t_tot), n_threads)
                value = estimate_objective(batch, params)
                params = update_parameters(batch, params)
                t_tot += 1
                window_values.append(value)
                trace.objective.append(ObjectivePoint(
                    t=t_tot, L=value,
                    L_smoothed=smoothed_objective(window_values, s_report)))
                budget_hit = t_tot >= config.t_max
                if budget_hit or window_should_stop(config.window_rule,
                                                    len(window_values), window_values):
                    break
            rounds += 1
            l_cur = smoothed_objective(window_values, s_report)
            delta_l = abs(l_cur - l_last)
            l_last = l_cur
            trace.events.append(TraceEvent(t_tot, "window_stop", {
                "round": rounds, "iterations": len(window_values),
                "L_cur": l_cur, "delta_L": delta_l, "ess": batch.ess,
            }))

            params, removed = prune_components(params, config.alpha_min)
            if removed is not None:
                trace.events.append(TraceEvent(t_tot, "component_removed",
                                               {"index": removed}))
            trace.snapshots.append((t_tot, params))

            reason = None
            if budget_hit:
                reason = "T_max"
            elif params.n_components + 1 > config.d_max:
                reason = "D_max"
            elif rounds >= 2 and delta_l < config.eps_tot:
                reason = "eps_tot"
            if reason is not None:
                trace.events.append(TraceEvent(t_tot, "global_stop", {
                    "reason": reason, "T_tot": t_tot, "D": params.n_components,
                }))
                trace.stop_reason = reason
                return params, trace

            mean, cov = propose_component(params, model, config.effective_n_add,
                                          config.sigma_add_scale,
                                          key.child(STREAM_PROPOSAL, rounds), n_threads)
            params = add_component(params, mean, cov, config.alpha_add)
            trace.events.append(TraceEvent(t_tot, "component_added", {
                "mean": mean.tolist(), "weight": config.alpha_add,
            }))
    except ZeroTotalWeightError as err:
        err.trace = trace
        raise
