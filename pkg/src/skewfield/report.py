"""Fit reports and EM convergence bookkeeping shared by both models."""

from __future__ import annotations

from dataclasses import dataclass, field

__all__ = ["EmIteration", "FitReport", "aitken_limit", "persistent_decrease"]

STATUS_CONVERGED = "converged"
STATUS_MAX_ITERATIONS = "max_iterations"
STATUS_ABORTED = "aborted"


@dataclass
class EmIteration:
    """One EM iteration: parameter snapshot plus convergence diagnostics."""

    index: int
    n_sweeps: int
    loglik: float
    loglik_stderr: float
    q_value: float
    acceptance: list[float]
    aitken: float | None
    params: dict
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "n_sweeps": self.n_sweeps,
            "loglik": self.loglik,
            "loglik_stderr": self.loglik_stderr,
            "q_value": self.q_value,
            "acceptance": list(self.acceptance),
            "aitken": self.aitken,
            "params": self.params,
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EmIteration":
        return cls(
            index=int(d["index"]),
            n_sweeps=int(d["n_sweeps"]),
            loglik=float(d["loglik"]),
            loglik_stderr=float(d["loglik_stderr"]),
            q_value=float(d["q_value"]),
            acceptance=[float(a) for a in d["acceptance"]],
            aitken=None if d.get("aitken") is None else float(d["aitken"]),
            params=dict(d["params"]),
            flags=list(d.get("flags", [])),
        )


@dataclass
class FitReport:
    """Final estimates, likelihood trace, information criteria, and seeds."""

    model: str
    status: str
    params: dict
    loglik: float
    loglik_stderr: float
    n_params: int
    n_obs: int
    bic: float
    aic: float
    seed: int
    config: dict
    trace: list[EmIteration]
    abort_reason: str | None = None

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "status": self.status,
            "params": self.params,
            "loglik": self.loglik,
            "loglik_stderr": self.loglik_stderr,
            "n_params": self.n_params,
            "n_obs": self.n_obs,
            "bic": self.bic,
            "aic": self.aic,
            "seed": self.seed,
            "config": self.config,
            "trace": [row.to_dict() for row in self.trace],
            "abort_reason": self.abort_reason,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitReport":
        return cls(
            model=d["model"],
            status=d["status"],
            params=dict(d["params"]),
            loglik=float(d["loglik"]),
            loglik_stderr=float(d["loglik_stderr"]),
            n_params=int(d["n_params"]),
            n_obs=int(d["n_obs"]),
            bic=float(d["bic"]),
            aic=float(d["aic"]),
            seed=int(d["seed"]),
            config=dict(d["config"]),
            trace=[EmIteration.from_dict(x) for x in d.get("trace", [])],
            abort_reason=d.get("abort_reason"),
        )


def aitken_limit(logliks: list[float]) -> float | None:
    """Projected log-likelihood limit from the last three iterates.

    Returns None while fewer than three values are available or when the
    acceleration ratio falls outside (0, 1), where the projection is unusable.
    """
    if len(logliks) < 3:
        return None
    d1 = logliks[-2] - logliks[-3]
    d2 = logliks[-1] - logliks[-2]
    if d1 == 0.0:
        return None
    a = d2 / d1
    if not 0.0 < a < 1.0:
        return None
    return logliks[-2] + d2 / (1.0 - a)


def persistent_decrease(
    logliks: list[float], stderrs: list[float], patience: int = 5
) -> bool:
    """True when the estimated log-likelihood decreased beyond Monte Carlo
    error for ``patience`` consecutive iterations."""
    if len(logliks) < patience + 1:
        return False
    for i in range(len(logliks) - patience, len(logliks)):
        margin = 3.0 * (stderrs[i] ** 2 + stderrs[i - 1] ** 2) ** 0.5
        if not logliks[i] < logliks[i - 1] - margin:
            return False
    return True
