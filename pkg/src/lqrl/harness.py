"""Experiment runner: configs, seeded runs, success metrics and result files.

Experiments and their ``metrics.csv`` columns:

==================  ==========================================================
pg-cartpole         episode, return, loss, eval_mean
q-cartpole          episode, return, loss, epsilon, eval_mean
replay-q-cartpole   episode, return, loss, epsilon, eval_mean
pg-lq               iteration, mean_reward, gain_gap, K (flattened, ``;``-joined)
q-lq                iteration, lambda, gain_gap, K
sysid-lq            samples, a_error, b_error
adaptive-lq         step, gain_gap, K
mdp-demo            state, action, expected_reward, sample_mean, row_sum
==================  ==========================================================

``eval_mean`` is the mean return of a block of greedy evaluation episodes,
run every ``eval_every`` training episodes (blank otherwise). Floats are
written with 17 significant digits.
"""

import csv
import dataclasses
import io
import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import envs
from .envs import CartPoleEnv, LinearQuadraticEnv, example1_mdp, rollout
from .errors import ConfigurationError, DimensionError
from .numerics import RngStream, solve_dare
from .pg import PgLqConfig, make_softmax_agent, pg_train_lq, pg_update_discrete, sample_action_discrete
from .qlearn import (LqQlConfig, ReplayMemory, epsilon_greedy_action, make_q_agent, q_learning_lq,
                     replay, td_update_discrete)
from .sysid import adaptive_lq_control, identify_linear_ss

log = logging.getLogger(__name__)

SOLVED_MEAN = 195.0
SOLVED_WINDOW = 100


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def check_solved(episode_returns, threshold=SOLVED_MEAN, window=SOLVED_WINDOW):
    """First index ending a ``window``-long run of returns whose mean is >= ``threshold``."""
    r = np.asarray(episode_returns, dtype=float)
    if r.size < window:
        return False, None
    csum = np.concatenate([[0.0], np.cumsum(r)])
    means = (csum[window:] - csum[:-window]) / window
    hits = np.nonzero(means >= threshold - 1e-9)[0]
    if hits.size == 0:
        return False, None
    return True, int(hits[0] + window - 1)


def gain_gap(K, Kstar):
    K = np.atleast_2d(np.asarray(K, dtype=float))
    Kstar = np.atleast_2d(np.asarray(Kstar, dtype=float))
    if K.shape != Kstar.shape:
        raise DimensionError(f"gain shapes differ: {K.shape} vs {Kstar.shape}")
    return float(np.linalg.norm(K - Kstar))


def greedy_returns(env, network, n_episodes, rng):
    """Returns of ``n_episodes`` cartpole episodes run in lockstep with the greedy action."""
    states = np.stack([env.reset(rng) for _ in range(n_episodes)])
    alive = np.ones(n_episodes, dtype=bool)
    returns = np.zeros(n_episodes)
    for _ in range(env.max_steps):
        idx = np.nonzero(alive)[0]
        if idx.size == 0:
            break
        actions = np.argmax(network(states[idx]), axis=1)
        nxt, up = env.step_batch(states[idx], actions)
        states[idx] = nxt
        returns[idx] += up
        alive[idx] = up
    return returns


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

SCALAR_LQ = dict(A=[[0.9]], B=[[0.5]], W=[[0.01]], Q=[[1.0]], R=[[1.0]])
BENCHMARK_LQ = dict(A=[[0.99, 0.099], [0.0, 0.99]], B=[[0.0], [0.1]],
                    W=[[0.01, 0.0], [0.0, 0.01]], Q=[[1.0, 0.0], [0.0, 1.0]], R=[[1.0]])


@dataclass
class PgCartpoleParams:
    hidden: int = 30
    gamma: float = 0.99
    learning_rate: float = 1e-2
    eval_every: int = 10
    eval_episodes: int = 100
    stop_on_solve: bool = True


@dataclass
class QCartpoleParams:
    hidden: int = 30
    gamma: float = 0.99
    learning_rate: float = 1e-3
    epsilon: float = 0.1
    eval_every: int = 10
    eval_episodes: int = 100
    stop_on_solve: bool = True


@dataclass
class ReplayQCartpoleParams:
    hidden: int = 30
    gamma: float = 0.99
    learning_rate: float = 1e-3
    epsilon: float = 1.0
    epsilon_min: float = 0.01
    epsilon_decay: float = 0.995
    memory: int = 100000
    batch_size: int = 64
    eval_every: int = 10
    eval_episodes: int = 100
    stop_on_solve: bool = True


@dataclass
class PgLqParams:
    batch_size: int = 8
    T: int = 100
    explore_mag: float = 0.1
    step_size: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1.0e-8
    safeguard: float = 10.0
    K0: list = None


@dataclass
class QlLqParams:
    T: int = 2000
    explore_mag: float = 1.0
    K0: list = field(default_factory=lambda: [[-0.2, -0.5]])


@dataclass
class SysidParams:
    excitation_std: float = 1.0
    checkpoint_every: int = 100


@dataclass
class AdaptiveParams:
    excitation_std: float = 5.0
    replan_every: int = 100


@dataclass
class MdpDemoParams:
    pass


# experiment -> (params class, environment kind, default budget)
EXPERIMENTS = {
    "pg-cartpole": (PgCartpoleParams, "cartpole", 2000),
    "q-cartpole": (QCartpoleParams, "cartpole", 1000),
    "replay-q-cartpole": (ReplayQCartpoleParams, "cartpole", 1000),
    "pg-lq": (PgLqParams, "lq-scalar", 100),
    "q-lq": (QlLqParams, "lq-benchmark", 10),
    "sysid-lq": (SysidParams, "lq-benchmark", 2000),
    "adaptive-lq": (AdaptiveParams, "lq-benchmark", 2000),
    "mdp-demo": (MdpDemoParams, "mdp", 10000),
}

CONFIG_FIELDS = ("experiment", "seed", "budget", "env", "params", "out_dir")


@dataclass
class ExperimentConfig:
    """``budget`` counts episodes (cartpole), iterations (pg-lq, q-lq), time
    steps (sysid-lq, adaptive-lq) or Monte-Carlo samples per pair (mdp-demo)."""

    experiment: str = "mdp-demo"
    seed: int = 0
    budget: int = None
    env: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    out_dir: str = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(f"unknown experiment {self.experiment!r}; "
                                     f"choose from {sorted(EXPERIMENTS)}", "experiment")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigurationError(f"seed must be an integer, got {self.seed!r}", "seed")
        if self.budget is not None and (not isinstance(self.budget, int) or self.budget < 0):
            raise ConfigurationError(f"budget must be a nonnegative integer, got {self.budget!r}", "budget")
        for name in ("env", "params"):
            if not isinstance(getattr(self, name), dict):
                raise ConfigurationError(f"{name} must be a JSON object", name)
        self.algo_params()
        self.make_env()

    @property
    def resolved_budget(self):
        return EXPERIMENTS[self.experiment][2] if self.budget is None else self.budget

    def algo_params(self):
        cls = EXPERIMENTS[self.experiment][0]
        known = {f.name for f in dataclasses.fields(cls)}
        for key in self.params:
            if key not in known:
                raise ConfigurationError(f"unknown parameter {key!r} for {self.experiment}", f"params.{key}")
        return cls(**self.params)

    def make_env(self):
        kind = EXPERIMENTS[self.experiment][1]
        if kind == "mdp":
            if self.env:
                raise ConfigurationError("mdp-demo takes no environment parameters", "env")
            return example1_mdp()
        if kind == "cartpole":
            cls, base = CartPoleEnv, {}
        else:
            cls, base = LinearQuadraticEnv, dict(SCALAR_LQ if kind == "lq-scalar" else BENCHMARK_LQ)
        known = {f.name for f in dataclasses.fields(cls)}
        for key in self.env:
            if key not in known:
                raise ConfigurationError(f"unknown environment parameter {key!r}", f"env.{key}")
        try:
            return cls(**{**base, **self.env})
        except (ValueError, TypeError) as exc:
            raise ConfigurationError(f"invalid environment: {exc}", "env") from exc

    def to_dict(self):
        return dataclasses.asdict(self)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid JSON ({exc})") from exc
    return config_from_dict(data)


def config_from_dict(data):
    if not isinstance(data, dict):
        raise ConfigurationError("configuration must be a JSON object")
    for key in data:
        if key not in CONFIG_FIELDS:
            raise ConfigurationError(f"unknown configuration field {key!r}", key)
    return ExperimentConfig(**data)


def save_config(config, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------

@dataclass
class RunRecord:
    experiment: str
    seed: int
    columns: list
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    duration: float = 0.0


class _Recorder:
    def __init__(self, record, on_row):
        self.record = record
        self.on_row = on_row

    def __call__(self, row):
        self.record.rows.append(row)
        if self.on_row is not None:
            self.on_row(row)


def _format_gain(K):
    return ";".join(f"{v:.17g}" for v in np.ravel(K))


def run_experiment(config, on_row=None):
    """Run one configured experiment; ``on_row(row)`` sees every metric row as it is produced."""
    runner = _RUNNERS[config.experiment]
    params = config.algo_params()
    env = config.make_env()
    start = time.perf_counter()
    record = runner(config, env, params, RngStream(config.seed), on_row)
    record.duration = time.perf_counter() - start
    return record


def _cartpole_eval(env, network, params, rng, ep, summary):
    returns = greedy_returns(env, network, params.eval_episodes, rng)
    solved, _ = check_solved(returns)
    if solved and summary.get("solved_episode") is None:
        summary["solved_episode"] = ep
    return float(np.mean(returns))


def _cartpole_finish(record, returns):
    solved, idx = check_solved(returns)
    record.summary["episodes"] = len(returns)
    record.summary["train_solved_episode"] = idx if solved else None
    record.summary["solved"] = record.summary.get("solved_episode") is not None


def _run_pg_cartpole(config, env, params, rng, on_row):
    record = RunRecord(config.experiment, config.seed, ["episode", "return", "loss", "eval_mean"])
    record.summary["solved_episode"] = None
    emit = _Recorder(record, on_row)
    agent = make_softmax_agent(env.n_s, env.n_a, params.hidden, params.gamma, seed=config.seed,
                               learning_rate=params.learning_rate)
    eval_rng = rng.spawn(1)
    returns = []
    for ep in range(config.resolved_budget):
        traj = rollout(env, lambda s: sample_action_discrete(agent, s, rng), env.max_steps, rng)
        loss = pg_update_discrete(agent, traj.states, traj.actions, traj.rewards)
        returns.append(sum(traj.rewards))
        eval_mean = None
        if (ep + 1) % params.eval_every == 0:
            eval_mean = _cartpole_eval(env, agent.network, params, eval_rng, ep, record.summary)
        emit(dict(episode=ep, **{"return": returns[-1]}, loss=loss, eval_mean=eval_mean))
        if params.stop_on_solve and record.summary["solved_episode"] is not None:
            break
    _cartpole_finish(record, returns)
    record.artifacts["network"] = agent.network
    return record


def _run_q_cartpole(config, env, params, rng, on_row):
    cols = ["episode", "return", "loss", "epsilon", "eval_mean"]
    record = RunRecord(config.experiment, config.seed, cols)
    record.summary["solved_episode"] = None
    emit = _Recorder(record, on_row)
    agent = make_q_agent(env.n_s, env.n_a, params.hidden, params.gamma, params.epsilon,
                         seed=config.seed, learning_rate=params.learning_rate)
    use_replay = config.experiment == "replay-q-cartpole"
    if use_replay:
        agent.epsilon_min = params.epsilon_min
        agent.epsilon_decay = params.epsilon_decay
        memory = ReplayMemory(params.memory)
    eval_rng = rng.spawn(1)
    returns = []
    for ep in range(config.resolved_budget):
        s = env.reset(rng)
        traj = envs.Trajectory()
        losses = []
        for t in range(env.max_steps):
            a = epsilon_greedy_action(agent, s, env, rng)
            s_next, r, done = env.step(s, a, rng, t)
            traj.append(s, a, r, s_next, done)
            if use_replay:
                memory.remember(s, a, r, s_next, done)
                losses.append(replay(agent, memory, params.batch_size, rng))
            s = s_next
            if done:
                break
        if use_replay:
            loss = float(np.mean(losses))
        else:
            loss = td_update_discrete(agent, traj.states, traj.actions, traj.rewards,
                                      traj.next_states, traj.dones)
        returns.append(sum(traj.rewards))
        eval_mean = None
        if (ep + 1) % params.eval_every == 0:
            eval_mean = _cartpole_eval(env, agent.network, params, eval_rng, ep, record.summary)
        emit(dict(episode=ep, **{"return": returns[-1]}, loss=loss, epsilon=agent.epsilon,
                  eval_mean=eval_mean))
        if params.stop_on_solve and record.summary["solved_episode"] is not None:
            break
    _cartpole_finish(record, returns)
    record.artifacts["network"] = agent.network
    return record


def _lq_oracle(env):
    _, Kstar = solve_dare(env.A, env.B, env.Q, env.R)
    return Kstar


def _run_pg_lq(config, env, params, rng, on_row):
    record = RunRecord(config.experiment, config.seed, ["iteration", "mean_reward", "gain_gap", "K"])
    emit = _Recorder(record, on_row)
    Kstar = _lq_oracle(env)
    values = dataclasses.asdict(params)
    K0 = values.pop("K0")
    K0 = np.zeros((env.m, env.n)) if K0 is None else np.atleast_2d(np.asarray(K0, dtype=float))
    cfg = PgLqConfig(iterations=config.resolved_budget, **values)

    def callback(k, K, rewards):
        emit(dict(iteration=k, mean_reward=float(np.mean(rewards)), gain_gap=gain_gap(K, Kstar),
                  K=_format_gain(K)))

    K = pg_train_lq(env, K0, cfg, rng, callback)
    record.summary.update(initial_gain_gap=gain_gap(K0, Kstar), final_gain_gap=gain_gap(K, Kstar),
                          K=np.ravel(K).tolist(), Kstar=np.ravel(Kstar).tolist())
    record.artifacts["K"] = K
    return record


def _run_q_lq(config, env, params, rng, on_row):
    record = RunRecord(config.experiment, config.seed, ["iteration", "lambda", "gain_gap", "K"])
    emit = _Recorder(record, on_row)
    Kstar = _lq_oracle(env)
    K0 = np.atleast_2d(np.asarray(params.K0, dtype=float))
    cfg = LqQlConfig(iterations=config.resolved_budget, T=params.T, explore_mag=params.explore_mag)

    def callback(k, K, lam):
        emit(dict(iteration=k, **{"lambda": lam}, gain_gap=gain_gap(K, Kstar), K=_format_gain(K)))

    P, K = q_learning_lq(env, K0, cfg, rng, callback)
    record.summary.update(final_gain_gap=gain_gap(K, Kstar), K=np.ravel(K).tolist(),
                          Kstar=np.ravel(Kstar).tolist(), P=P.tolist())
    record.artifacts.update(K=K, P=P)
    return record


def _run_sysid_lq(config, env, params, rng, on_row):
    record = RunRecord(config.experiment, config.seed, ["samples", "a_error", "b_error"])
    emit = _Recorder(record, on_row)
    budget = config.resolved_budget
    if budget == 0:
        return record
    policy = lambda s: params.excitation_std * rng.standard_normal(env.m)  # noqa: E731
    traj = rollout(env, policy, budget, rng)
    A_hat = B_hat = None
    for k in range(params.checkpoint_every, budget + 1, params.checkpoint_every):
        part = envs.Trajectory(traj.states[:k], traj.actions[:k], traj.rewards[:k],
                               traj.next_states[:k], traj.dones[:k])
        A_hat, B_hat = identify_linear_ss(part)
        emit(dict(samples=k, a_error=float(np.linalg.norm(A_hat - env.A)),
                  b_error=float(np.linalg.norm(B_hat - env.B))))
    if A_hat is not None:
        record.summary.update(A_hat=A_hat.tolist(), B_hat=B_hat.tolist())
        record.artifacts.update(A_hat=A_hat, B_hat=B_hat)
    return record


def _run_adaptive_lq(config, env, params, rng, on_row):
    record = RunRecord(config.experiment, config.seed, ["step", "gain_gap", "K"])
    emit = _Recorder(record, on_row)
    horizon = config.resolved_budget
    if horizon == 0:
        return record
    Kstar = _lq_oracle(env)
    _, gains = adaptive_lq_control(env, horizon, params.excitation_std, params.replan_every, rng)
    for i, K in enumerate(gains):
        emit(dict(step=i * params.replan_every, gain_gap=gain_gap(K, Kstar), K=_format_gain(K)))
    record.summary.update(final_gain_gap=gain_gap(gains[-1], Kstar), K=np.ravel(gains[-1]).tolist(),
                          Kstar=np.ravel(Kstar).tolist())
    record.artifacts["gains"] = gains
    return record


def _run_mdp_demo(config, env, params, rng, on_row):
    cols = ["state", "action", "expected_reward", "sample_mean", "row_sum"]
    record = RunRecord(config.experiment, config.seed, cols)
    emit = _Recorder(record, on_row)
    samples = config.resolved_budget
    if samples == 0:
        return record
    for s in range(env.n_s):
        for a in range(env.n_a):
            draws = [env.step(s, a, rng)[1] for _ in range(samples)]
            emit(dict(state=s, action=a, expected_reward=env.expected_reward(s, a),
                      sample_mean=float(np.mean(draws)), row_sum=float(env.transition[a, s].sum())))
    record.summary["expected_reward_s1_a0"] = env.expected_reward(1, 0)
    return record


_RUNNERS = {
    "pg-cartpole": _run_pg_cartpole,
    "q-cartpole": _run_q_cartpole,
    "replay-q-cartpole": _run_q_cartpole,
    "pg-lq": _run_pg_lq,
    "q-lq": _run_q_lq,
    "sysid-lq": _run_sysid_lq,
    "adaptive-lq": _run_adaptive_lq,
    "mdp-demo": _run_mdp_demo,
}


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------

def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def metrics_csv(record):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(record.columns)
    for row in record.rows:
        writer.writerow([_fmt(row.get(c)) for c in record.columns])
    return buf.getvalue()


def write_results(record, directory, config=None):
    """Write ``metrics.csv`` and ``summary.json`` into ``directory``."""
    os.makedirs(directory, exist_ok=True)
    csv_path = os.path.join(directory, "metrics.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(metrics_csv(record))
    summary = {
        "experiment": record.experiment,
        "seed": record.seed,
        "rows": len(record.rows),
        "duration_seconds": record.duration,
        "final": record.summary,
        "config": config.to_dict() if config is not None else None,
    }
    json_path = os.path.join(directory, "summary.json")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, default=_json_default)
        fh.write("\n")
    if "network" in record.artifacts:
        record.artifacts["network"].save(os.path.join(directory, "network.txt"))
    return csv_path, json_path


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")
