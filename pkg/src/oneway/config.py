"""Experiment configuration: YAML parsing, resolution and presets.

Example::

    users:
      count: 5
      template: {a: 20, b: 1, m: 0, M: 4}
    Q: 4*N/5
    p0: 30
    gamma: mu/N
    stop: {grad_tol: null, max_iters: 100000}
    blackout_policy: record-and-continue
    seed: 0
    outputs: multi-user-5

``users`` may also be an explicit list of ``{a, b, m, M}`` mappings, or
``{count: N, random: {a: [lo, hi], b: [lo, hi], m: [lo, hi], width: [lo, hi]}}``
drawn with ``seed`` (``M = m + width``).  ``Q`` is a number or ``r*N`` /
``r*N/s``.  ``gamma`` is a number, ``mu/N``, ``k*mu/N`` or ``2mu/N-eps``;
steps above ``mu/N`` need ``step_mode: convergent-only-custom``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import yaml

from .dual import (
    CONVERGENT_ONLY,
    FEASIBLE_CUSTOM,
    FEASIBLE_OPTIMAL,
    STEP_MODES,
    ProblemInstance,
    StepSizePolicy,
    StoppingConfig,
    max_feasible_step,
)
from .errors import ConfigError, InfeasibleInstanceError
from .protocol import BLACKOUT_POLICIES, RECORD_AND_CONTINUE
from .utility import LogUtility, UserProfile

DEFAULT_N_LIST = (5, 10, 20, 30, 40, 150, 1000)
DEFAULT_UPPER_BOUND = 4.0
NEAR_TWO_EPS = 1e-6

_KEYS = {"users", "Q", "p0", "gamma", "step_mode", "stop", "blackout_policy", "seed", "outputs"}
_USER_KEYS = ("a", "b", "m", "M")
_Q_RE = re.compile(r"^\s*([-+0-9.eE]+)\s*\*\s*N\s*(?:/\s*([-+0-9.eE]+))?\s*$")
_GAMMA_RE = re.compile(r"^\s*(?:([-+0-9.eE]+)\s*\*\s*)?mu\s*/\s*N\s*$")


@dataclass
class ExperimentConfig:
    users: Union[list, dict]
    Q: Union[float, str]
    p0: float
    gamma: Union[float, str] = "mu/N"
    step_mode: Optional[str] = None
    stop: StoppingConfig = field(default_factory=StoppingConfig)
    blackout_policy: str = RECORD_AND_CONTINUE
    seed: int = 0
    outputs: Optional[str] = None
    # source line lookup for error messages; not part of the config's value
    diag: Optional["_Diag"] = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        d = {
            "users": self.users,
            "Q": self.Q,
            "p0": self.p0,
            "gamma": self.gamma,
            "stop": {"grad_tol": self.stop.grad_tol, "max_iters": self.stop.max_iters},
            "blackout_policy": self.blackout_policy,
            "seed": self.seed,
        }
        if self.step_mode is not None:
            d["step_mode"] = self.step_mode
        if self.outputs is not None:
            d["outputs"] = self.outputs
        return d


@dataclass(frozen=True)
class ResolvedExperiment:
    instance: ProblemInstance
    p0: float
    policy: StepSizePolicy
    gamma: float
    stop: StoppingConfig
    blackout_policy: str


def serialize(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)


def _line_index(node, path=(), out=None):
    # key path -> 1-based source line, for diagnostics
    if out is None:
        out = {}
    out.setdefault(path, node.start_mark.line + 1)
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            out[path + (k.value,)] = k.start_mark.line + 1
            _line_index(v, path + (k.value,), out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_index(v, path + (i,), out)
    return out


class _Diag:
    def __init__(self, lines, source):
        self.lines = lines
        self.source = source

    def error(self, path, msg):
        key = ".".join(str(p) for p in path) or "<root>"
        line = None
        for cut in range(len(path), -1, -1):
            line = self.lines.get(tuple(path[:cut]))
            if line is not None:
                break
        where = f"{self.source}:{line}" if line is not None else self.source
        return ConfigError(f"{where}: key '{key}': {msg}")


def _number(diag, path, value, positive=False, nonneg=False):
    # YAML 1.1 reads "1e-9" as a string
    if isinstance(value, str):
        try:
            value = float(value)
        except ValueError:
            pass
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise diag.error(path, f"expected a number, got {value!r}")
    value = float(value)
    if positive and not value > 0:
        raise diag.error(path, f"must be > 0, got {value}")
    if nonneg and not value >= 0:
        raise diag.error(path, f"must be >= 0, got {value}")
    return value


def _is_float(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def parse(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse YAML text into an :class:`ExperimentConfig`, validating keys and types."""
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: invalid YAML: {exc}") from None
    diag = _Diag(_line_index(node) if node is not None else {}, source)
    if not isinstance(data, dict):
        raise diag.error((), "top level must be a mapping")
    unknown = set(data) - _KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise diag.error((key,), f"unknown key; allowed keys are {sorted(_KEYS)}")
    for key in ("users", "Q", "p0"):
        if key not in data:
            raise diag.error((), f"missing required key '{key}'")

    users = data["users"]
    _check_users(diag, users)

    Q = data["Q"]
    if isinstance(Q, str):
        if not _Q_RE.match(Q):
            raise diag.error(("Q",), f"expected a number or 'r*N' expression, got {Q!r}")
    else:
        Q = _number(diag, ("Q",), Q, nonneg=True)

    p0 = _number(diag, ("p0",), data["p0"], nonneg=True)

    gamma = data.get("gamma", "mu/N")
    if isinstance(gamma, str) and (_GAMMA_RE.match(gamma) or gamma.replace(" ", "") == "2mu/N-eps"):
        pass
    elif isinstance(gamma, str) and not _is_float(gamma):
        raise diag.error(("gamma",), f"expected a number, 'mu/N', 'k*mu/N' or '2mu/N-eps', got {gamma!r}")
    else:
        gamma = _number(diag, ("gamma",), gamma, positive=True)

    step_mode = data.get("step_mode")
    if step_mode is not None and step_mode not in STEP_MODES:
        raise diag.error(("step_mode",), f"expected one of {list(STEP_MODES)}")

    stop_raw = data.get("stop") or {}
    if not isinstance(stop_raw, dict):
        raise diag.error(("stop",), "expected a mapping with grad_tol and max_iters")
    extra = set(stop_raw) - {"grad_tol", "max_iters"}
    if extra:
        raise diag.error(("stop", sorted(extra)[0]), "unknown key")
    grad_tol = stop_raw.get("grad_tol")
    if grad_tol is not None:
        grad_tol = _number(diag, ("stop", "grad_tol"), grad_tol, nonneg=True)
    max_iters = stop_raw.get("max_iters", StoppingConfig().max_iters)
    if isinstance(max_iters, bool) or not isinstance(max_iters, int) or max_iters < 0:
        raise diag.error(("stop", "max_iters"), f"expected a nonnegative integer, got {max_iters!r}")

    policy = data.get("blackout_policy", RECORD_AND_CONTINUE)
    if policy not in BLACKOUT_POLICIES:
        raise diag.error(("blackout_policy",), f"expected one of {list(BLACKOUT_POLICIES)}")

    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise diag.error(("seed",), f"expected an integer, got {seed!r}")

    outputs = data.get("outputs")
    if outputs is not None and not isinstance(outputs, str):
        raise diag.error(("outputs",), "expected a path string")

    config = ExperimentConfig(
        users=users,
        Q=Q,
        p0=p0,
        gamma=gamma,
        step_mode=step_mode,
        stop=StoppingConfig(grad_tol, max_iters),
        blackout_policy=policy,
        seed=seed,
        outputs=outputs,
        diag=diag,
    )
    return config


def _check_users(diag, users):
    if isinstance(users, list):
        if not users:
            raise diag.error(("users",), "at least one user is required")
        for i, spec in enumerate(users):
            _check_user_spec(diag, ("users", i), spec)
    elif isinstance(users, dict):
        count = users.get("count")
        if isinstance(count, bool) or not isinstance(count, int) or count < 1:
            raise diag.error(("users", "count"), f"expected a positive integer, got {count!r}")
        kinds = [k for k in ("template", "random") if k in users]
        if len(kinds) != 1 or set(users) - {"count", "template", "random"}:
            raise diag.error(("users",), "generator needs 'count' and exactly one of 'template' or 'random'")
        if kinds[0] == "template":
            _check_user_spec(diag, ("users", "template"), users["template"])
        else:
            ranges = users["random"]
            if not isinstance(ranges, dict) or set(ranges) != {"a", "b", "m", "width"}:
                raise diag.error(("users", "random"), "expected ranges for a, b, m and width")
            for k, r in ranges.items():
                if not (isinstance(r, list) and len(r) == 2):
                    raise diag.error(("users", "random", k), "expected [lo, hi]")
                lo = _number(diag, ("users", "random", k), r[0])
                hi = _number(diag, ("users", "random", k), r[1])
                if lo > hi:
                    raise diag.error(("users", "random", k), f"lo > hi in {r}")
    else:
        raise diag.error(("users",), "expected a list of users or a generator mapping")


def _check_user_spec(diag, path, spec):
    if not isinstance(spec, dict) or set(spec) != set(_USER_KEYS):
        raise diag.error(path, f"user needs exactly the keys {list(_USER_KEYS)}")
    for k in _USER_KEYS:
        _number(diag, path + (k,), spec[k])


def _user_specs(config: ExperimentConfig) -> list[dict]:
    users = config.users
    if isinstance(users, list):
        return [dict(u) for u in users]
    n = users["count"]
    if "template" in users:
        return [dict(users["template"]) for _ in range(n)]
    rng = np.random.default_rng(config.seed)
    r = users["random"]
    specs = []
    for _ in range(n):
        a, b, m, w = (float(rng.uniform(*r[k])) for k in ("a", "b", "m", "width"))
        specs.append({"a": a, "b": b, "m": m, "M": m + w})
    return specs


def _resolve_Q(Q, n):
    if not isinstance(Q, str):
        return float(Q)
    num, den = _Q_RE.match(Q).groups()
    value = float(num) * n
    return value / float(den) if den is not None else value


def resolve(config: ExperimentConfig) -> ResolvedExperiment:
    """Build the problem instance and step policy a config describes."""
    diag = config.diag or _Diag({}, "<config>")
    specs = _user_specs(config)
    try:
        profiles = tuple(
            UserProfile(i, LogUtility(s["a"], s["b"]), float(s["m"]), float(s["M"]))
            for i, s in enumerate(specs)
        )
    except ValueError as exc:
        raise diag.error(("users",), str(exc)) from None
    Q = _resolve_Q(config.Q, len(profiles))
    try:
        instance = ProblemInstance(profiles, Q)
    except InfeasibleInstanceError as exc:
        raise diag.error(("Q",), f"infeasible instance: {exc}") from None

    bound = max_feasible_step(instance)
    gamma = config.gamma
    if isinstance(gamma, str) and gamma.replace(" ", "") == "mu/N" and config.step_mode in (None, FEASIBLE_OPTIMAL):
        policy = StepSizePolicy(FEASIBLE_OPTIMAL)
    else:
        if isinstance(gamma, str):
            if gamma.replace(" ", "") == "2mu/N-eps":
                value = (2.0 - NEAR_TWO_EPS) * bound
            else:
                k = _GAMMA_RE.match(gamma).group(1)
                value = (float(k) if k else 1.0) * bound
        else:
            value = float(gamma)
        mode = config.step_mode
        if mode is None or mode == FEASIBLE_OPTIMAL:
            if value > bound:
                raise diag.error(
                    ("gamma",),
                    f"gamma={value} exceeds mu/N={bound}; set step_mode: {CONVERGENT_ONLY} to allow it",
                )
            mode = FEASIBLE_CUSTOM
        try:
            policy = StepSizePolicy(mode, value)
            policy.resolve(instance)
        except ValueError as exc:
            raise diag.error(("gamma",), str(exc)) from None

    return ResolvedExperiment(
        instance=instance,
        p0=config.p0,
        policy=policy,
        gamma=policy.resolve(instance),
        stop=config.stop,
        blackout_policy=config.blackout_policy,
    )


def _log_template(M=DEFAULT_UPPER_BOUND):
    return {"a": 20.0, "b": 1.0, "m": 0.0, "M": M}


def preset_two_user(M: float = DEFAULT_UPPER_BOUND) -> ExperimentConfig:
    """Two identical users, ``U = 20 log(1 + q)`` on ``[0, M]``, ``Q = 1.6``, ``p0 = 30``."""
    return ExperimentConfig(
        users={"count": 2, "template": _log_template(M)},
        Q=1.6,
        p0=30.0,
        gamma="mu/N",
        outputs="two-user",
    )


def preset_multi_user(n: int, M: float = DEFAULT_UPPER_BOUND) -> ExperimentConfig:
    """``n`` identical users, ``Q = 4n/5``, ``p0 = 30``, ``gamma = mu/N``."""
    if n < 1:
        raise ValueError(f"need at least one user, got {n}")
    return ExperimentConfig(
        users={"count": n, "template": _log_template(M)},
        Q="4*N/5",
        p0=30.0,
        gamma="mu/N",
        outputs=f"multi-user-{n}",
    )


def load(path: str) -> ExperimentConfig:
    with open(path) as fh:
        return parse(fh.read(), source=str(path))
