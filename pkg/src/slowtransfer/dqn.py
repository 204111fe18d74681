"""Deep Q-learning on the navigation task, plus evaluation and rollout capture.

The trainer is standard DQN: epsilon-greedy exploration with a linear decay,
a uniform replay buffer, one Adam step on the squared TD error of the taken
action per environment step, and a target network refreshed every fixed
number of gradient steps. Generalization is measured as the fraction of the
initial tip-goal distance covered by episode end on held-out configurations.

Everything is deterministic given the top-level seed: episode configurations,
environment seeds, exploration, replay sampling and evaluation all draw from
seeds derived from it.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .env import Env, N_ACTIONS, WorkspaceConfig
from .nn import AdamState, Network, adam_step


def derive_seed(*parts) -> int:
    """Stable 63-bit child seed from a tuple of labels."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


@dataclass
class Transition:
    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray
    done: bool


class ReplayBuffer:
    """Uniform ring buffer; observations are stored as float32 to save memory."""

    def __init__(self, capacity: int = 10_000):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.insertions = 0
        self._obs = None
        self._next_obs = None
        self._actions = np.zeros(capacity, dtype=np.int64)
        self._rewards = np.zeros(capacity)
        self._dones = np.zeros(capacity, dtype=bool)

    def __len__(self):
        return min(self.insertions, self.capacity)

    def add(self, obs, action, reward, next_obs, done):
        if self._obs is None:
            shape = np.asarray(obs).shape
            self._obs = np.zeros((self.capacity, *shape), dtype=np.float32)
            self._next_obs = np.zeros((self.capacity, *shape), dtype=np.float32)
        i = self.insertions % self.capacity
        self._obs[i] = obs
        self._next_obs[i] = next_obs
        self._actions[i] = action
        self._rewards[i] = reward
        self._dones[i] = done
        self.insertions += 1

    def sample(self, batch_size: int, rng):
        idx = rng.integers(0, len(self), size=batch_size)
        return (self._obs[idx].astype(float), self._actions[idx],
                self._rewards[idx], self._next_obs[idx].astype(float),
                self._dones[idx])

    def rewards_present(self):
        return self._rewards[:len(self)]


@dataclass
class DQNConfig:
    episodes: int = 300
    gamma: float = 0.99
    batch_size: int = 32
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_fraction: float = 0.5
    target_update_every: int = 100
    learn_start: int = 500
    eval_every: int = 100
    replay_capacity: int = 10_000
    learning_rate: float = 0.001

    def validate(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        for name in ("epsilon_start", "epsilon_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        for name in ("episodes", "batch_size", "target_update_every",
                     "eval_every", "replay_capacity"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.learn_start < 0:
            raise ValueError("learn_start must be >= 0")
        return self


def epsilon_at(config: DQNConfig, episode: int) -> float:
    """Linear decay from epsilon_start to epsilon_end over the decay fraction."""
    horizon = max(1.0, config.epsilon_decay_fraction * config.episodes)
    frac = min(1.0, episode / horizon)
    return config.epsilon_start + (config.epsilon_end - config.epsilon_start) * frac


@dataclass
class EvalReport:
    episode: int
    fractions: np.ndarray
    mean: float
    success_rate: float


@dataclass
class TrainStats:
    episodes: list = field(default_factory=list)
    mean_episode_reward: list = field(default_factory=list)
    epsilon: list = field(default_factory=list)
    loss_mean: list = field(default_factory=list)
    eval_path_covered: list = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["episode", "mean_episode_reward", "epsilon",
                             "loss_mean", "eval_path_covered"])
            for i in range(len(self.episodes)):
                writer.writerow([
                    self.episodes[i],
                    repr(self.mean_episode_reward[i]),
                    repr(self.epsilon[i]),
                    "" if self.loss_mean[i] is None else repr(self.loss_mean[i]),
                    "" if self.eval_path_covered[i] is None
                    else repr(self.eval_path_covered[i]),
                ])


class QModel:
    """Owns an online network, its Adam state and a periodically synced target."""

    def __init__(self, net: Network, learning_rate: float = 0.001):
        self.net = net
        self.adam = AdamState(net, learning_rate)
        self.target = net.clone()

    def q_values(self, batch):
        return self.net.forward(batch)

    def target_q(self, batch):
        return self.target.forward(batch)

    def sync_target(self):
        self.target = self.net.clone()

    def learn(self, obs, actions, targets) -> float:
        """One Adam step on the mean squared TD error of the taken actions."""
        q, _, caches = self.net._forward_cached(obs, keep_cache=True)
        rows = np.arange(len(actions))
        err = q[rows, actions] - targets
        gq = np.zeros_like(q)
        gq[rows, actions] = 2.0 * err / len(actions)
        grads = self.net._backward_from_cache(caches, gq)
        adam_step(self.net, self.adam, grads)
        return float(np.mean(err * err))

    def param_hash(self) -> str:
        return self.net.param_hash()


def _q_of(model, batch):
    if hasattr(model, "q_values"):
        return model.q_values(batch)
    return model.forward(batch)


def select_action(model, obs, epsilon: float, rng) -> int:
    """Epsilon-greedy over 9 actions; greedy ties break to the lowest index."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be in [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(N_ACTIONS))
    q = _q_of(model, obs[None])
    return int(np.argmax(q[0]))


def td_targets(target_net, batch, gamma: float) -> np.ndarray:
    """Bootstrap targets r + gamma * max_a Q'(s', a), truncated at terminals."""
    if not batch:
        raise ValueError("batch must be nonempty")
    next_obs = np.stack([t.next_obs for t in batch])
    q_next = _q_of(target_net, next_obs).max(axis=1)
    rewards = np.array([t.reward for t in batch], dtype=float)
    dones = np.array([t.done for t in batch], dtype=bool)
    return np.where(dones, rewards, rewards + gamma * q_next)


def path_covered(d_start: float, d_end: float, success: bool) -> float:
    if success:
        return 1.0
    if d_start <= 0.0:
        return 0.0
    return float(np.clip((d_start - d_end) / d_start, 0.0, 1.0))


def evaluate(model, workspace: WorkspaceConfig, configs, greedy: bool = True,
             seed: int = 0, obs_mode: str = "image", episode: int = 0) -> EvalReport:
    """Run one episode per held-out configuration and report path coverage."""
    env = Env(workspace, obs_mode)
    rng = np.random.default_rng(derive_seed(seed, "eval-actions"))
    epsilon = 0.0 if greedy else 0.05
    fractions = np.zeros(len(configs))
    successes = 0
    for i, config in enumerate(configs):
        obs = env.reset(config, seed=derive_seed(seed, "eval-env", i))
        d_start = env.state.prev_d_goal
        done = False
        while not done:
            action = select_action(model, obs, epsilon, rng)
            result = env.step(action)
            obs = result.observation
            done = result.done
        success = env.state.prev_d_goal < workspace.success_radius
        successes += int(success)
        fractions[i] = path_covered(d_start, env.state.prev_d_goal, success)
    return EvalReport(episode, fractions, float(fractions.mean()),
                      successes / len(configs))


def train(workspace: WorkspaceConfig, configs, model, config: DQNConfig,
          seed: int, eval_configs=None, obs_mode: str = "image"):
    """Train a Q-model on episode configs sampled uniformly per episode.

    model may be a Network (wrapped into a QModel) or any object with the
    QModel surface (q_values/target_q/sync_target/learn). Returns the model,
    per-episode TrainStats and the list of held-out EvalReports.
    """
    if not configs:
        raise ValueError("configs must be nonempty")
    config.validate()
    if isinstance(model, Network):
        model = QModel(model, config.learning_rate)
    rng = np.random.default_rng(seed)
    env = Env(workspace, obs_mode)
    buffer = ReplayBuffer(config.replay_capacity)
    stats = TrainStats()
    reports = []
    grad_steps = 0
    for ep in range(config.episodes):
        epsilon = epsilon_at(config, ep)
        cfg = configs[int(rng.integers(len(configs)))]
        obs = env.reset(cfg, seed=int(rng.integers(2**63 - 1)))
        rewards = []
        losses = []
        done = False
        while not done:
            action = select_action(model, obs, epsilon, rng)
            result = env.step(action)
            buffer.add(obs, action, result.reward, result.observation, result.done)
            obs = result.observation
            done = result.done
            rewards.append(result.reward)
            if len(buffer) >= config.learn_start:
                b_obs, b_act, b_rew, b_next, b_done = buffer.sample(config.batch_size, rng)
                q_next = model.target_q(b_next).max(axis=1)
                targets = np.where(b_done, b_rew, b_rew + config.gamma * q_next)
                losses.append(model.learn(b_obs, b_act, targets))
                grad_steps += 1
                if grad_steps % config.target_update_every == 0:
                    model.sync_target()
        eval_mean = None
        if eval_configs is not None and (
                (ep + 1) % config.eval_every == 0 or ep + 1 == config.episodes):
            report = evaluate(model, workspace, eval_configs, greedy=True,
                              seed=derive_seed(seed, "checkpoint", ep + 1),
                              obs_mode=obs_mode, episode=ep + 1)
            reports.append(report)
            eval_mean = report.mean
        stats.episodes.append(ep + 1)
        stats.mean_episode_reward.append(float(np.mean(rewards)))
        stats.epsilon.append(epsilon)
        stats.loss_mean.append(float(np.mean(losses)) if losses else None)
        stats.eval_path_covered.append(eval_mean)
    return model, stats, reports


@dataclass
class TrajectoryRecord:
    """Per-episode tap activations aligned with high-level state features."""

    activations: np.ndarray  # (T, D)
    features: dict           # arrays of length T (tip/rel_* are (T, 2))
    observations: list | None = None


FEATURE_KEYS = ("tip", "d_goal", "d_obstacle", "rel_goal", "rel_obstacle",
                "path_blocked", "theta1", "theta2")


def collect_trajectories(net, workspace: WorkspaceConfig, configs,
                         n_episodes: int, seed: int, obs_mode: str = "image",
                         store_observations: bool = False):
    """Greedy rollouts of a frozen network, capturing the hidden tap per step.

    Row t of each activation matrix is forward_with_tap on the observation the
    policy saw at step t, and the feature arrays describe that same state.
    """
    env = Env(workspace, obs_mode)
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n_episodes):
        cfg = configs[int(rng.integers(len(configs)))]
        obs = env.reset(cfg, seed=int(rng.integers(2**63 - 1)))
        taps = []
        feats = {key: [] for key in FEATURE_KEYS}
        observations = [] if store_observations else None
        done = False
        while not done:
            q, hidden = net.forward_with_tap(obs[None])
            taps.append(hidden[0])
            snapshot = env.state_features()
            for key in FEATURE_KEYS:
                feats[key].append(snapshot[key])
            if store_observations:
                observations.append(obs.copy())
            result = env.step(int(np.argmax(q[0])))
            obs = result.observation
            done = result.done
        records.append(TrajectoryRecord(
            np.array(taps), {k: np.array(v) for k, v in feats.items()},
            observations))
    return records
