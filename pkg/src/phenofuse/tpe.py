"""Tree-structured Parzen Estimator over mixed, conditional search spaces.

Univariate TPE: completed trials are split by loss rank into a good set
(the best ``ceil(gamma * n)``) and a bad set.  Each dimension gets a
Parzen density per set, candidates are drawn from the good densities and
the one maximising ``sum(log l(x) - log g(x))`` over its active dimensions
is proposed.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from scipy.special import ndtr, ndtri

Condition = tuple[str, Any]


@dataclass(frozen=True)
class IntParam:
    low: int
    high: int
    log: bool = False
    condition: Condition | None = None

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError(f"IntParam needs low < high, got {self.low}, {self.high}")
        if self.log and self.low < 1:
            raise ValueError("log-scaled IntParam needs low >= 1")

    def bounds(self) -> tuple[float, float]:
        lo, hi = self.low - 0.5, self.high + 0.5
        return (math.log(lo), math.log(hi)) if self.log else (lo, hi)

    def to_internal(self, v) -> float:
        return math.log(v) if self.log else float(v)

    def from_internal(self, u: float) -> int:
        v = math.exp(u) if self.log else u
        return int(min(self.high, max(self.low, round(v))))


@dataclass(frozen=True)
class FloatParam:
    low: float
    high: float
    log: bool = False
    condition: Condition | None = None

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError(f"FloatParam needs low < high, got {self.low}, {self.high}")
        if self.log and self.low <= 0:
            raise ValueError("log-scaled FloatParam needs low > 0")

    def bounds(self) -> tuple[float, float]:
        return (math.log(self.low), math.log(self.high)) if self.log else (self.low, self.high)

    def to_internal(self, v) -> float:
        return math.log(v) if self.log else float(v)

    def from_internal(self, u: float) -> float:
        v = math.exp(u) if self.log else u
        return float(min(self.high, max(self.low, v)))


@dataclass(frozen=True)
class CategoricalParam:
    choices: tuple
    condition: Condition | None = None

    def __post_init__(self):
        if len(self.choices) < 1:
            raise ValueError("CategoricalParam needs at least one choice")


Param = IntParam | FloatParam | CategoricalParam
SearchSpace = dict  # name -> Param; a conditional dimension must follow its parent


def is_active(param: Param, params: dict) -> bool:
    if param.condition is None:
        return True
    parent, value = param.condition
    return parent in params and params[parent] == value


def validate_space(space: SearchSpace) -> None:
    seen = set()
    for name, p in space.items():
        if p.condition is not None and p.condition[0] not in seen:
            raise ValueError(f"dimension {name!r} is conditioned on {p.condition[0]!r}, which must come first")
        seen.add(name)


@dataclass
class Trial:
    number: int
    params: dict
    loss: float | None
    state: str = "complete"  # or "failed"


@dataclass
class StudyState:
    seed: int = 0
    gamma: float = 0.25
    n_startup: int = 10
    n_candidates: int = 24
    trials: list[Trial] = field(default_factory=list)

    def completed(self) -> list[Trial]:
        return [t for t in self.trials if t.state == "complete"]

    def record(self, params: dict, loss: float) -> Trial:
        ok = loss is not None and math.isfinite(loss)
        t = Trial(len(self.trials), dict(params), float(loss) if ok else None, "complete" if ok else "failed")
        self.trials.append(t)
        return t

    def best(self) -> Trial | None:
        done = self.completed()
        return min(done, key=lambda t: (t.loss, t.number)) if done else None

    def to_jsonl(self) -> str:
        head = {"kind": "study", "seed": self.seed, "gamma": self.gamma,
                "n_startup": self.n_startup, "n_candidates": self.n_candidates}
        lines = [json.dumps(head, sort_keys=True)]
        for t in self.trials:
            lines.append(json.dumps({"kind": "trial", "number": t.number, "params": _jsonable(t.params),
                                     "loss": t.loss, "state": t.state}, sort_keys=True))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "StudyState":
        study = None
        for line in text.splitlines():
            if not line.strip():
                continue
            doc = json.loads(line)
            if doc["kind"] == "study":
                study = cls(seed=doc["seed"], gamma=doc["gamma"], n_startup=doc["n_startup"],
                            n_candidates=doc["n_candidates"])
            elif study is None:
                raise ValueError("study header must precede trials")
            else:
                study.trials.append(Trial(doc["number"], doc["params"], doc["loss"], doc["state"]))
        if study is None:
            raise ValueError("no study header found")
        return study


def _jsonable(params: dict) -> dict:
    out = {}
    for k, v in params.items():
        if isinstance(v, np.generic):
            v = v.item()
        out[k] = v
    return out


class _Numeric:
    """Mixture of truncated Gaussians plus a uniform prior on [lo, hi].

    The bandwidth is Scott's rule applied to the whole mixture, the prior
    counting as one extra observation: without it a tight cluster of good
    trials shrinks the kernels to the floor and the search stalls at the
    cluster centre.
    """

    def __init__(self, obs: np.ndarray, lo: float, hi: float):
        self.lo, self.hi = lo, hi
        self.mu = np.asarray(obs, dtype=np.float64)
        n = len(self.mu)
        w = 1.0 / (n + 1)
        centre, width = (lo + hi) / 2, hi - lo
        mean = w * (self.mu.sum() + centre)
        var = w * (((self.mu - mean) ** 2).sum() + width**2 / 12 + (centre - mean) ** 2)
        self.sigma = max(math.sqrt(var) * (n + 1) ** -0.2, 0.01 * width)
        self.weights = np.full(n + 1, w)  # last weight is the prior
        if n:
            self.mass = ndtr((hi - self.mu) / self.sigma) - ndtr((lo - self.mu) / self.sigma)
        else:
            self.mass = np.zeros(0)

    def sample(self, rng: np.random.Generator) -> float:
        comp = rng.choice(len(self.weights), p=self.weights)
        if comp == len(self.mu):
            return float(rng.uniform(self.lo, self.hi))
        mu = self.mu[comp]
        a = ndtr((self.lo - mu) / self.sigma)
        b = ndtr((self.hi - mu) / self.sigma)
        u = a + rng.uniform() * (b - a)
        x = mu + self.sigma * float(ndtri(min(max(u, 1e-300), 1 - 1e-16)))
        return float(min(self.hi, max(self.lo, x)))

    def log_pdf(self, x: float) -> float:
        dens = self.weights[-1] / (self.hi - self.lo)
        if len(self.mu):
            z = (x - self.mu) / self.sigma
            k = np.exp(-0.5 * z * z) / (self.sigma * math.sqrt(2 * math.pi) * self.mass)
            dens += float(np.dot(self.weights[:-1], k))
        return math.log(dens)


class _Categorical:
    def __init__(self, obs: list, choices: tuple):
        self.choices = choices
        counts = np.ones(len(choices))
        for v in obs:
            counts[choices.index(v)] += 1
        self.p = counts / counts.sum()

    def sample(self, rng: np.random.Generator):
        return self.choices[rng.choice(len(self.choices), p=self.p)]

    def log_pdf(self, v) -> float:
        return math.log(self.p[self.choices.index(v)])


def _estimator(param: Param, values: list):
    if isinstance(param, CategoricalParam):
        return _Categorical(values, tuple(param.choices))
    lo, hi = param.bounds()
    return _Numeric(np.array([param.to_internal(v) for v in values]), lo, hi)


def sample_prior(space: SearchSpace, rng: np.random.Generator) -> dict:
    """Independent uniform draw of every active dimension."""
    params: dict = {}
    for name, p in space.items():
        if not is_active(p, params):
            continue
        if isinstance(p, CategoricalParam):
            params[name] = p.choices[rng.integers(len(p.choices))]
        else:
            lo, hi = p.bounds()
            params[name] = p.from_internal(rng.uniform(lo, hi))
    return params


def _trial_rng(study: StudyState) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([study.seed, len(study.trials)]))


def tpe_suggest(study: StudyState, space: SearchSpace) -> dict:
    validate_space(space)
    rng = _trial_rng(study)
    done = study.completed()
    if len(done) < study.n_startup:
        return sample_prior(space, rng)
    ranked = sorted(done, key=lambda t: (t.loss, t.number))
    n_good = max(1, math.ceil(study.gamma * len(ranked)))
    good, bad = ranked[:n_good], ranked[n_good:]

    l_est, g_est = {}, {}
    for name, p in space.items():
        l_est[name] = _estimator(p, [t.params[name] for t in good if name in t.params])
        g_est[name] = _estimator(p, [t.params[name] for t in bad if name in t.params])

    best, best_score = None, -math.inf
    for _ in range(study.n_candidates):
        params: dict = {}
        score = 0.0
        for name, p in space.items():
            if not is_active(p, params):
                continue
            x = l_est[name].sample(rng)
            score += l_est[name].log_pdf(x) - g_est[name].log_pdf(x)
            params[name] = x if isinstance(p, CategoricalParam) else p.from_internal(x)
        if score > best_score:
            best, best_score = params, score
    return best


def tpe_optimize(
    objective: Callable[[dict], float],
    space: SearchSpace,
    n_trials: int = 50,
    seed: int = 0,
    study: StudyState | None = None,
    callback: Callable[[Trial, Any], None] | None = None,
):
    """Run ``n_trials`` suggest/evaluate/record steps.

    ``objective`` may return a loss or a ``(loss, payload)`` pair; the
    payload is handed to ``callback`` together with the recorded trial.
    Non-finite losses mark the trial as failed.  Returns
    ``(best_params, best_loss, study)``; ``best_params`` is None when every
    trial failed.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    study = StudyState(seed=seed) if study is None else study
    for _ in range(n_trials):
        params = tpe_suggest(study, space)
        out = objective(params)
        loss, payload = out if isinstance(out, tuple) else (out, None)
        trial = study.record(params, loss)
        if callback is not None:
            callback(trial, payload)
    best = study.best()
    if best is None:
        return None, math.inf, study
    return dict(best.params), best.loss, study
