"""Distributed gradient descent with gradient-coded workers.

Each of the k data pieces is one sample (x_i, y_i) with loss
l_i(theta) = (x_i^T theta - y_i)^2 / 2.  Worker j returns the sum of the
per-piece gradients selected by column j of G; the master decodes the
surviving sums into an approximation of the full gradient sum and takes

    theta <- theta - lr * (1/k) * approx_sum.

An uncoded exact-GD trajectory with the same learning rate runs alongside as
the reference for the deviation metric.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .codes import EncodingMatrix, build, descriptor_from_dict, descriptor_label, descriptor_to_dict, validate
from .decoding import StragglerScenario, closed_form_decoding, optimal_decoding
from .errors import ConfigError, InvalidParams, NumericalFailure, PolicyInfeasible
from .worstcase import worst_case

DECODERS = ("optimal", "constant")
REDUNDANCY_TOLERANCE = 0.05
SERIES_COLUMNS = ("code", "t", "loss", "deviation_from_exact_gd", "gradient_deviation")


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray  # (k, p)
    y: np.ndarray  # (k,)
    theta_star: np.ndarray

    def __post_init__(self):
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise InvalidParams("X must be (k, p) and y must have length k")
        if not (np.isfinite(self.X).all() and np.isfinite(self.y).all()):
            raise InvalidParams("dataset entries must be finite")

    @property
    def k(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def piece_gradients(self, theta: np.ndarray) -> np.ndarray:
        """(p, k) matrix whose column i is the gradient of piece i."""
        return self.X.T * (self.X @ theta - self.y)

    def loss(self, theta: np.ndarray) -> float:
        r = self.X @ theta - self.y
        return float(0.5 * (r @ r) / self.k)


def make_dataset(k: int, p: int, noise: float = 0.0, seed: int = 0) -> Dataset:
    """Synthetic linear regression y = X theta* + noise * eps."""
    if k < 1 or p < 1:
        raise InvalidParams(f"need k, p >= 1, got k={k} p={p}")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((k, p))
    theta_star = rng.standard_normal(p)
    y = X @ theta_star + noise * rng.standard_normal(k)
    return Dataset(X, y, theta_star)


def lipschitz_estimate(ds: Dataset, iters: int = 200) -> float:
    """Largest eigenvalue of X^T X / k by power iteration from a fixed start."""
    A = ds.X.T @ ds.X / ds.k
    v = np.ones(ds.p) / math.sqrt(ds.p)
    est = 0.0
    for _ in range(iters):
        w = A @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        v = w / norm
        est = float(v @ A @ v)
    return est


def default_learning_rate(ds: Dataset) -> float:
    L = lipschitz_estimate(ds)
    return 1.0 / (2.0 * L) if L > 0 else 1.0


@dataclass
class StragglerPolicy:
    """Which workers straggle at each step.

    ``adversarial``: the worst-case set for the code, found once.
    ``random``: a fresh uniform s-subset per step from the stream (seed, t).
    ``fixed``: the same scenario every step.
    """

    variant: str
    s: int = 0
    seed: int = 0
    scenario: StragglerScenario | None = None
    _cached: StragglerScenario | None = field(default=None, repr=False, compare=False)

    @classmethod
    def adversarial(cls, s: int) -> "StragglerPolicy":
        return cls("adversarial", s=s)

    @classmethod
    def random(cls, s: int, seed: int = 0) -> "StragglerPolicy":
        return cls("random", s=s, seed=seed)

    @classmethod
    def fixed(cls, scenario: StragglerScenario) -> "StragglerPolicy":
        return cls("fixed", s=scenario.s, scenario=scenario)

    def __post_init__(self):
        if self.variant not in ("adversarial", "random", "fixed"):
            raise ConfigError(f"unknown straggler policy {self.variant!r}")
        if self.variant == "fixed" and self.scenario is None:
            raise ConfigError("fixed policy needs a scenario")
        if self.s < 0:
            raise ConfigError("straggler count must be non-negative")

    def scenario_for(self, g: EncodingMatrix, t: int, descriptor=None, seed: int = 0) -> StragglerScenario:
        if self.s >= g.n:
            raise PolicyInfeasible(f"policy straggles {self.s} of {g.n} workers; at least one must survive")
        if self.variant == "fixed":
            if self.scenario.n != g.n:
                raise PolicyInfeasible(f"scenario is for {self.scenario.n} workers, code has {g.n}")
            return self.scenario
        if self.variant == "random":
            rng = np.random.default_rng([self.seed, t])
            return StragglerScenario(g.n, tuple(rng.choice(g.n, size=self.s, replace=False).tolist()))
        if self._cached is None or self._cached.n != g.n:
            res, _ = worst_case(g, self.s, method="auto", seed=seed, descriptor=descriptor)
            self._cached = res.witness
        return self._cached

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"type": self.variant, "s": self.s}
        if self.variant == "random":
            out["seed"] = self.seed
        if self.variant == "fixed":
            out["stragglers"] = list(self.scenario.stragglers)
        return out


def policy_from_dict(d: dict, n: int | None = None) -> StragglerPolicy:
    if not isinstance(d, dict) or "type" not in d:
        raise ConfigError("policy must be an object with a 'type'")
    kind = d["type"]
    if kind == "fixed":
        if "stragglers" not in d or n is None:
            raise ConfigError("fixed policy needs 'stragglers'")
        return StragglerPolicy.fixed(StragglerScenario(n, tuple(d["stragglers"])))
    if "s" not in d:
        raise ConfigError(f"{kind} policy needs 's'")
    if kind == "adversarial":
        return StragglerPolicy.adversarial(int(d["s"]))
    if kind == "random":
        return StragglerPolicy.random(int(d["s"]), int(d.get("seed", 0)))
    raise ConfigError(f"unknown straggler policy {kind!r}")


@dataclass
class GDState:
    """Coded GD state.  loss and deviation histories have t + 1 entries
    (initial point included); gradient deviations have one entry per step."""

    theta: np.ndarray
    t: int
    lr: float
    loss_history: list[float]
    deviation_history: list[float]
    grad_deviation_history: list[float]
    reference_theta: np.ndarray

    @classmethod
    def initial(cls, ds: Dataset, lr: float | None = None, theta0: np.ndarray | None = None) -> "GDState":
        theta = np.zeros(ds.p) if theta0 is None else np.asarray(theta0, dtype=np.float64).copy()
        rate = default_learning_rate(ds) if lr is None else float(lr)
        if not rate > 0:
            raise InvalidParams("learning rate must be positive")
        return cls(theta, 0, rate, [ds.loss(theta)], [0.0], [], theta.copy())


def decoding_vector(g: EncodingMatrix, scenario: StragglerScenario, decoder: str = "optimal") -> np.ndarray:
    if decoder == "optimal":
        return optimal_decoding(g, scenario)
    if decoder == "constant":
        rep = validate(g)
        if not rep.is_lambda_gc or rep.lam is None or rep.params is None or not rep.params.l > rep.lam:
            raise InvalidParams("the constant decoder needs a lambda-uniform code with l > lambda")
        return closed_form_decoding(rep.params.l, rep.lam, g.n, scenario.s)
    raise InvalidParams(f"decoder must be one of {DECODERS}, got {decoder!r}")


def decoded_gradient_sum(f: np.ndarray, g: EncodingMatrix, scenario: StragglerScenario,
                         decoder: str = "optimal") -> np.ndarray:
    """f G_U v: the master's approximation of the gradient sum f 1_k."""
    if f.shape[1] != g.k:
        raise InvalidParams(f"gradient matrix has {f.shape[1]} pieces, code has k={g.k}")
    idx = np.asarray(scenario.survivors, dtype=np.intp)
    if idx.size == 0:
        return np.zeros(f.shape[0])
    worker_sums = f @ g.bits[:, idx].astype(np.float64)
    return worker_sums @ decoding_vector(g, scenario, decoder)


def coded_gd_step(state: GDState, ds: Dataset, g: EncodingMatrix, policy: StragglerPolicy,
                  decoder: str = "optimal", descriptor=None, seed: int = 0) -> GDState:
    """One synchronous step: compute, drop stragglers, decode, update."""
    if ds.k != g.k:
        raise InvalidParams(f"dataset has {ds.k} pieces, code has k={g.k}")
    scenario = policy.scenario_for(g, state.t, descriptor, seed)
    f = ds.piece_gradients(state.theta)
    approx = decoded_gradient_sum(f, g, scenario, decoder)
    exact = f.sum(axis=1)
    theta = state.theta - state.lr * approx / ds.k
    ref = state.reference_theta
    ref = ref - state.lr * ds.piece_gradients(ref).sum(axis=1) / ds.k
    loss = ds.loss(theta)
    if not math.isfinite(loss) or not np.isfinite(theta).all():
        raise NumericalFailure(f"loss became non-finite at step {state.t + 1}")
    return replace(
        state,
        theta=theta,
        t=state.t + 1,
        loss_history=state.loss_history + [loss],
        deviation_history=state.deviation_history + [float(np.linalg.norm(theta - ref))],
        grad_deviation_history=state.grad_deviation_history + [float(np.linalg.norm(approx - exact))],
        reference_theta=ref,
    )


# ---------------------------------------------------------------------------
# Experiment driver
# ---------------------------------------------------------------------------

def fractional_redundancy(g: EncodingMatrix) -> float:
    """Average number of workers per piece divided by n."""
    return float(g.bits.sum()) / (g.k * g.n * 1.0) if g.k else 0.0


def redundancy_mismatch(values: list[float], tolerance: float = REDUNDANCY_TOLERANCE) -> bool:
    return bool(values) and max(values) - min(values) > tolerance


def run_experiment(config: dict) -> dict:
    """Run coded GD for one or more codes described by a JSON-style config.

    Keys: ``code`` or ``codes`` (descriptors), ``policy``, ``decoder``,
    ``iterations``, ``dataset`` ({p, noise, seed}), optional ``lr``,
    ``seed`` (worst-case search) and ``redundancy_tolerance``.
    """
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    if "codes" in config:
        raw_codes = config["codes"]
        if not isinstance(raw_codes, list) or not raw_codes:
            raise ConfigError("'codes' must be a non-empty list")
    elif "code" in config:
        raw_codes = [config["code"]]
    else:
        raise ConfigError("config needs 'code' or 'codes'")
    iterations = config.get("iterations", 10)
    if not isinstance(iterations, int) or iterations < 0:
        raise ConfigError("'iterations' must be a non-negative integer")
    decoder = config.get("decoder", "optimal")
    if decoder not in DECODERS:
        raise ConfigError(f"'decoder' must be one of {DECODERS}")
    data_cfg = config.get("dataset", {})
    if not isinstance(data_cfg, dict):
        raise ConfigError("'dataset' must be an object")
    seed = int(config.get("seed", 0))
    tol = float(config.get("redundancy_tolerance", REDUNDANCY_TOLERANCE))

    runs = []
    for raw in raw_codes:
        desc = descriptor_from_dict(raw)
        g = build(desc)
        policy = policy_from_dict(config.get("policy", {"type": "fixed", "stragglers": []}), g.n)
        ds = make_dataset(g.k, int(data_cfg.get("p", 5)), float(data_cfg.get("noise", 0.0)),
                          int(data_cfg.get("seed", 0)))
        state = GDState.initial(ds, config.get("lr"))
        for _ in range(iterations):
            state = coded_gd_step(state, ds, g, policy, decoder, desc, seed)
        series = [
            {
                "t": t,
                "loss": state.loss_history[t],
                "deviation_from_exact_gd": state.deviation_history[t],
                "gradient_deviation": state.grad_deviation_history[t - 1] if t > 0 else 0.0,
            }
            for t in range(state.t + 1)
        ]
        runs.append({
            "code": descriptor_label(desc),
            "descriptor": descriptor_to_dict(desc),
            "k": g.k,
            "n": g.n,
            "fractional_redundancy": fractional_redundancy(g),
            "policy": policy.to_dict(),
            "learning_rate": state.lr,
            "final_loss": state.loss_history[-1],
            "series": series,
        })
    fr = [r["fractional_redundancy"] for r in runs]
    return {
        "decoder": decoder,
        "iterations": iterations,
        "redundancy_tolerance": tol,
        "redundancy_mismatch": len(runs) > 1 and redundancy_mismatch(fr, tol),
        "runs": runs,
    }


def report_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SERIES_COLUMNS, lineterminator="\n")
    w.writeheader()
    for run in report["runs"]:
        for row in run["series"]:
            w.writerow({"code": run["code"], **{key: repr(v) if isinstance(v, float) else v for key, v in row.items()}})
    return buf.getvalue()


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
