"""Planar navigation environment with obstacles and a rasterized top-down view.

A point "tip" (the end-effector of a 2-link arm whose base sits at the bottom
edge of the workspace) moves in 8 compass directions plus no-op inside a
rectangular workspace. Episodes are parameterized by an EnvConfiguration
(start, goal, obstacle, distractors). The observation is a 3-channel image:
red = obstacle, green = goal marker, blue = arm and tip. Moving colored
distractor squares are drawn into the red and blue channels only.

Reward is shaped on the change of the tip-goal distance, with an extra
obstacle-proximity term that activates inside a threshold band ``tau`` around
the obstacle. All randomness flows from explicit seeds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

N_ACTIONS = 9
NOOP_ACTION = 8

# Compass directions, counter-clockwise from +x, 45 degrees apart. Diagonal
# moves are unit vectors, so every move covers exactly step_size meters.
_ANGLES = np.arange(8) * (math.pi / 4.0)
ACTION_DIRECTIONS = np.stack([np.cos(_ANGLES), np.sin(_ANGLES)], axis=1)
ACTION_DIRECTIONS[np.abs(ACTION_DIRECTIONS) < 1e-15] = 0.0

TASK_TAU = {"primary": 0.21, "secondary": 0.28}

DISTRACTOR_HALF = 0.03
DISTRACTOR_SPEED = 0.02
ARM_HALF_WIDTH = 0.015
TIP_RADIUS = 0.025


class ConfigurationError(ValueError):
    """An EnvConfiguration or WorkspaceConfig violates an invariant."""


class SamplingError(RuntimeError):
    """Rejection sampling failed to produce a valid configuration."""


class OutOfReachError(ValueError):
    """Requested tip position is outside the arm's reachable annulus."""


class EpisodeFinishedError(RuntimeError):
    """step() was called on an episode that already terminated."""


@dataclass(frozen=True)
class WorkspaceConfig:
    """Geometry, dynamics and rendering parameters shared by all episodes."""

    width: float = 0.8
    height: float = 1.0
    step_size: float = 0.025
    success_radius: float = 0.05
    tau: float = 0.21
    max_steps: int = 200
    image_size: int = 32
    distractor_count: int = 2
    obstacle_reward_sign: int = -1
    link_lengths: tuple[float, float] = (0.55, 0.55)

    def validate(self):
        for name in ("width", "height", "step_size", "success_radius", "tau"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"workspace.{name} must be > 0")
        if self.max_steps < 1:
            raise ConfigurationError("workspace.max_steps must be >= 1")
        if self.image_size < 8:
            raise ConfigurationError("workspace.image_size must be >= 8")
        if self.success_radius >= self.tau:
            raise ConfigurationError("workspace.success_radius must be < tau")
        if self.obstacle_reward_sign not in (-1, 1):
            raise ConfigurationError("workspace.obstacle_reward_sign must be -1 or +1")
        if len(self.link_lengths) != 2 or min(self.link_lengths) <= 0:
            raise ConfigurationError("workspace.link_lengths must be two positive reals")
        return self

    @property
    def arm_base(self) -> np.ndarray:
        return np.array([self.width / 2.0, 0.0])


def task_workspace(task: str, **overrides) -> WorkspaceConfig:
    """Workspace preset for a task: 'primary' (tau=0.21) or 'secondary' (0.28)."""
    if task not in TASK_TAU:
        raise ConfigurationError(f"unknown task {task!r}, expected 'primary' or 'secondary'")
    ws = WorkspaceConfig(tau=TASK_TAU[task], **overrides)
    return ws.validate()


@dataclass(frozen=True)
class Rect:
    center: tuple[float, float]
    half_extents: tuple[float, float]

    def validate(self):
        if min(self.half_extents) <= 0:
            raise ConfigurationError("rect half_extents must be > 0")
        return self

    def sdf(self, points):
        """Signed distance: negative inside, zero on the boundary."""
        p = np.asarray(points, dtype=float)
        q = np.abs(p - np.asarray(self.center)) - np.asarray(self.half_extents)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside

    @property
    def area(self) -> float:
        return 4.0 * self.half_extents[0] * self.half_extents[1]


@dataclass(frozen=True)
class LShape:
    """Union of two axis-aligned rectangles whose intersection is nonempty."""

    rect1: Rect
    rect2: Rect

    def validate(self):
        self.rect1.validate()
        self.rect2.validate()
        for axis in (0, 1):
            lo = max(self.rect1.center[axis] - self.rect1.half_extents[axis],
                     self.rect2.center[axis] - self.rect2.half_extents[axis])
            hi = min(self.rect1.center[axis] + self.rect1.half_extents[axis],
                     self.rect2.center[axis] + self.rect2.half_extents[axis])
            if hi < lo:
                raise ConfigurationError("lshape rectangles must overlap or touch")
        return self

    def sdf(self, points):
        return np.minimum(self.rect1.sdf(points), self.rect2.sdf(points))


def obstacle_rects(obstacle):
    if isinstance(obstacle, Rect):
        return (obstacle,)
    return (obstacle.rect1, obstacle.rect2)


def obstacle_contains(obstacle, point) -> bool:
    """Strict interior test (boundary points count as outside)."""
    return bool(obstacle.sdf(np.asarray(point, dtype=float)) < 0.0)


def obstacle_boundary_distance(obstacle, points):
    """Unsigned distance from points to the obstacle boundary."""
    return np.abs(obstacle.sdf(points))


def obstacle_centroid(obstacle) -> np.ndarray:
    """Area centroid of the obstacle (union centroid for L-shapes)."""
    if isinstance(obstacle, Rect):
        return np.asarray(obstacle.center, dtype=float)
    r1, r2 = obstacle.rect1, obstacle.rect2
    lo = np.maximum(np.asarray(r1.center) - r1.half_extents,
                    np.asarray(r2.center) - r2.half_extents)
    hi = np.minimum(np.asarray(r1.center) + r1.half_extents,
                    np.asarray(r2.center) + r2.half_extents)
    overlap_wh = np.maximum(hi - lo, 0.0)
    a_ov = overlap_wh[0] * overlap_wh[1]
    c_ov = (lo + hi) / 2.0
    total = r1.area + r2.area - a_ov
    return (r1.area * np.asarray(r1.center) + r2.area * np.asarray(r2.center)
            - a_ov * c_ov) / total


@dataclass(frozen=True)
class EnvConfiguration:
    """One sampled episode setting: start, goal, obstacle and distractors."""

    tip_start: tuple[float, float]
    goal: tuple[float, float]
    obstacle: Rect | LShape
    distractor_starts: tuple = ()
    distractor_velocities: tuple = ()


def validate_configuration(config: EnvConfiguration, ws: WorkspaceConfig):
    if isinstance(config.obstacle, Rect):
        config.obstacle.validate()
    elif isinstance(config.obstacle, LShape):
        config.obstacle.validate()
    else:
        raise ConfigurationError("obstacle must be a Rect or LShape")
    for name in ("tip_start", "goal"):
        p = np.asarray(getattr(config, name), dtype=float)
        if not (0.0 <= p[0] <= ws.width and 0.0 <= p[1] <= ws.height):
            raise ConfigurationError(f"{name} lies outside the workspace")
        if obstacle_contains(config.obstacle, p):
            raise ConfigurationError(f"{name} lies inside the obstacle")
    d = float(np.linalg.norm(np.asarray(config.tip_start) - np.asarray(config.goal)))
    if d <= ws.success_radius:
        raise ConfigurationError("tip_start is already within success_radius of goal")
    if len(config.distractor_starts) != len(config.distractor_velocities):
        raise ConfigurationError("distractor starts and velocities differ in length")
    return config


@dataclass
class EnvState:
    tip: np.ndarray
    t: int
    distractor_positions: np.ndarray
    distractor_colors: np.ndarray  # (n, 2) uint8, (r, b) pairs
    prev_d_goal: float
    prev_d_obstacle: float


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict


def delta_t(prev_dist: float, curr_dist: float) -> float:
    """Change in distance over one step; positive when approaching."""
    return prev_dist - curr_dist


def reward_from_distances(prev_d_goal, curr_d_goal, prev_d_obstacle,
                          curr_d_obstacle, ws: WorkspaceConfig) -> float:
    """Shaped reward of one transition, from the goal/obstacle distances.

    Branches: +10 on success; 10 * delta_goal while farther than tau from the
    obstacle; otherwise the delta_goal term plus the signed obstacle-approach
    term ``sign * relu(delta_obstacle)``. With the default sign of -1 the
    agent is penalized for moving towards a nearby obstacle.
    """
    if curr_d_goal < ws.success_radius:
        return 10.0
    d_goal = delta_t(prev_d_goal, curr_d_goal)
    if curr_d_obstacle > ws.tau:
        return 10.0 * d_goal
    d_obs = delta_t(prev_d_obstacle, curr_d_obstacle)
    return 10.0 * (d_goal + ws.obstacle_reward_sign * max(d_obs, 0.0))


def forward_kinematics(theta1: float, theta2: float, ws: WorkspaceConfig) -> np.ndarray:
    l1, l2 = ws.link_lengths
    base = ws.arm_base
    elbow = base + l1 * np.array([math.cos(theta1), math.sin(theta1)])
    return elbow + l2 * np.array([math.cos(theta1 + theta2), math.sin(theta1 + theta2)])


def ik_two_link(tip, ws: WorkspaceConfig) -> tuple[float, float]:
    """Closed-form 2-link inverse kinematics, elbow branch with theta2 >= 0."""
    l1, l2 = ws.link_lengths
    v = np.asarray(tip, dtype=float) - ws.arm_base
    r2 = float(v @ v)
    c2 = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    if abs(c2) > 1.0:
        if abs(c2) > 1.0 + 1e-9:
            raise OutOfReachError(
                f"tip at distance {math.sqrt(r2):.4f} m is outside the reachable "
                f"annulus [{abs(l1 - l2):.4f}, {l1 + l2:.4f}]")
        c2 = max(-1.0, min(1.0, c2))
    theta2 = math.acos(c2)
    theta1 = math.atan2(v[1], v[0]) - math.atan2(l2 * math.sin(theta2), l1 + l2 * c2)
    return theta1, theta2


def _segment_hits_rect_interior(a, b, rect: Rect) -> bool:
    # Slab clipping with open intervals: grazing along an edge or touching a
    # corner never counts as an interior hit.
    t0, t1 = 0.0, 1.0
    for axis in (0, 1):
        lo = rect.center[axis] - rect.half_extents[axis]
        hi = rect.center[axis] + rect.half_extents[axis]
        d = b[axis] - a[axis]
        if d == 0.0:
            if not (lo < a[axis] < hi):
                return False
        else:
            ta = (lo - a[axis]) / d
            tb = (hi - a[axis]) / d
            if ta > tb:
                ta, tb = tb, ta
            t0 = max(t0, ta)
            t1 = min(t1, tb)
            if t0 >= t1:
                return False
    return t0 < t1


def path_blocked(tip, goal, obstacle) -> int:
    """1 iff the open segment tip->goal crosses the obstacle's interior."""
    a = np.asarray(tip, dtype=float)
    b = np.asarray(goal, dtype=float)
    for rect in obstacle_rects(obstacle):
        if _segment_hits_rect_interior(a, b, rect):
            return 1
    return 0


def _point_segment_distance(points, a, b):
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(points - a, axis=-1)
    t = np.clip(((points - a) @ ab) / denom, 0.0, 1.0)
    closest = a + t[..., None] * ab
    return np.linalg.norm(points - closest, axis=-1)


class Env:
    """Single-writer environment instance; all randomness comes from reset seeds.

    Parameters
    ----------
    workspace : WorkspaceConfig
    obs_mode : str
        'image' renders the 3xSxS observation tensor; 'vector' returns the
        low-dimensional [tip, goal, obstacle params] vector used by fast tests.
    """

    def __init__(self, workspace: WorkspaceConfig, obs_mode: str = "image"):
        workspace.validate()
        if obs_mode not in ("image", "vector"):
            raise ConfigurationError(f"unknown obs_mode {obs_mode!r}")
        self.ws = workspace
        self.obs_mode = obs_mode
        self.config: EnvConfiguration | None = None
        self.state: EnvState | None = None
        self._rng = None
        self._done = True
        s = workspace.image_size
        # Pixel centers in world coordinates; row 0 is the top of the workspace.
        xs = (np.arange(s) + 0.5) * (workspace.width / s)
        ys = workspace.height - (np.arange(s) + 0.5) * (workspace.height / s)
        self._pixels = np.stack(np.meshgrid(xs, ys, indexing="xy"), axis=-1)
        self._static_obstacle = None
        self._static_goal = None

    def reset(self, config: EnvConfiguration, seed: int) -> np.ndarray:
        validate_configuration(config, self.ws)
        self.config = config
        self._rng = np.random.default_rng(seed)
        tip = np.asarray(config.tip_start, dtype=float)
        n = len(config.distractor_starts)
        colors = self._draw_colors(n)
        self.state = EnvState(
            tip=tip,
            t=0,
            distractor_positions=np.asarray(config.distractor_starts, dtype=float).reshape(n, 2),
            distractor_colors=colors,
            prev_d_goal=float(np.linalg.norm(tip - np.asarray(config.goal))),
            prev_d_obstacle=float(obstacle_boundary_distance(config.obstacle, tip)),
        )
        self._distractor_velocities = np.asarray(
            config.distractor_velocities, dtype=float).reshape(n, 2)
        self._done = False
        if self.obs_mode == "image":
            self._static_obstacle = (config.obstacle.sdf(self._pixels) <= 0.0).astype(float)
            goal = np.asarray(config.goal, dtype=float)
            d = np.linalg.norm(self._pixels - goal, axis=-1)
            self._static_goal = (d <= self.ws.success_radius).astype(float)
        return self.observe()

    def _draw_colors(self, n):
        # (r, b) byte pairs; the green component is always zero.
        return self._rng.integers(0, 256, size=(n, 2), dtype=np.uint8)

    @property
    def done(self) -> bool:
        return self._done

    def step(self, action: int) -> StepResult:
        if self._done:
            raise EpisodeFinishedError("step() called on a finished episode")
        if not 0 <= action < N_ACTIONS:
            raise ValueError(f"action must be in [0, {N_ACTIONS - 1}]")
        ws = self.ws
        state = self.state
        goal = np.asarray(self.config.goal, dtype=float)
        obstacle = self.config.obstacle

        if action == NOOP_ACTION:
            attempted = state.tip.copy()
        else:
            attempted = state.tip + ws.step_size * ACTION_DIRECTIONS[action]
            attempted[0] = min(max(attempted[0], 0.0), ws.width)
            attempted[1] = min(max(attempted[1], 0.0), ws.height)

        # A move that would end inside the obstacle is rejected: the tip stays
        # put, but the reward is still charged on the attempted distances.
        rejected = obstacle_contains(obstacle, attempted)
        new_tip = state.tip if rejected else attempted

        d_goal_att = float(np.linalg.norm(attempted - goal))
        d_obs_att = float(obstacle_boundary_distance(obstacle, attempted))
        reward = reward_from_distances(state.prev_d_goal, d_goal_att,
                                       state.prev_d_obstacle, d_obs_att, ws)

        pos = state.distractor_positions + self._distractor_velocities
        vel = self._distractor_velocities
        for axis, limit in ((0, ws.width), (1, ws.height)):
            under = pos[:, axis] < 0.0
            over = pos[:, axis] > limit
            pos[under, axis] = -pos[under, axis]
            pos[over, axis] = 2.0 * limit - pos[over, axis]
            flip = under | over
            vel[flip, axis] = -vel[flip, axis]

        state.tip = new_tip
        state.t += 1
        state.distractor_positions = pos
        state.distractor_colors = self._draw_colors(len(pos))
        state.prev_d_goal = float(np.linalg.norm(new_tip - goal))
        state.prev_d_obstacle = float(obstacle_boundary_distance(obstacle, new_tip))

        success = state.prev_d_goal < ws.success_radius
        self._done = success or state.t >= ws.max_steps
        return StepResult(self.observe(), reward, self._done, self.state_features())

    def state_features(self) -> dict:
        """High-level features of the current state, aligned with the observation."""
        tip = self.state.tip
        goal = np.asarray(self.config.goal, dtype=float)
        centroid = obstacle_centroid(self.config.obstacle)
        theta1, theta2 = ik_two_link(tip, self.ws)
        return {
            "tip": tip.copy(),
            "d_goal": float(np.linalg.norm(tip - goal)),
            "d_obstacle": float(obstacle_boundary_distance(self.config.obstacle, tip)),
            "rel_goal": tip - goal,
            "rel_obstacle": tip - centroid,
            "path_blocked": path_blocked(tip, goal, self.config.obstacle),
            "theta1": theta1,
            "theta2": theta2,
        }

    def observe(self) -> np.ndarray:
        if self.obs_mode == "vector":
            return self.observe_vector()
        return self._render()

    def observe_vector(self) -> np.ndarray:
        parts = [self.state.tip, np.asarray(self.config.goal, dtype=float)]
        for rect in obstacle_rects(self.config.obstacle):
            parts.append(np.asarray(rect.center, dtype=float))
            parts.append(np.asarray(rect.half_extents, dtype=float))
        return np.concatenate(parts)

    def _render(self) -> np.ndarray:
        ws = self.ws
        s = ws.image_size
        img = np.zeros((3, s, s))
        img[0] = self._static_obstacle
        img[1] = self._static_goal

        base = ws.arm_base
        theta1, theta2 = ik_two_link(self.state.tip, ws)
        elbow = base + ws.link_lengths[0] * np.array([math.cos(theta1), math.sin(theta1)])
        arm = np.minimum(
            _point_segment_distance(self._pixels, base, elbow),
            _point_segment_distance(self._pixels, elbow, self.state.tip))
        blue = ((arm <= ARM_HALF_WIDTH)
                | (np.linalg.norm(self._pixels - self.state.tip, axis=-1) <= TIP_RADIUS))
        img[2] = blue.astype(float)

        for pos, (r, b) in zip(self.state.distractor_positions,
                               self.state.distractor_colors):
            inside = np.all(np.abs(self._pixels - pos) <= DISTRACTOR_HALF, axis=-1)
            img[0] = np.where(inside, np.maximum(img[0], r / 255.0), img[0])
            img[2] = np.where(inside, np.maximum(img[2], b / 255.0), img[2])
        return img


def vector_observation_dim(task: str) -> int:
    """Length of the 'vector' observation for a task's obstacle kind."""
    return 8 if task == "primary" else 12


def sample_configurations(n: int, task: str, seed: int,
                          workspace: WorkspaceConfig | None = None,
                          easy: bool = False) -> list[EnvConfiguration]:
    """Draw n valid episode configurations for a task by rejection sampling.

    The primary task uses rectangular obstacles, the secondary task L-shaped
    ones. With ``easy=True`` the goal is placed close to the start and the
    obstacle is shrunk and pushed away from the straight start-goal path,
    which makes the task solvable without avoidance behavior.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    ws = workspace if workspace is not None else task_workspace(task)
    rng = np.random.default_rng(seed)
    configs = []
    for _ in range(n):
        configs.append(_sample_one(task, rng, ws, easy))
    return configs


def _sample_one(task, rng, ws, easy) -> EnvConfiguration:
    margin = 0.05
    for _ in range(1000):
        if easy:
            half = (0.02, 0.02)
            cx = rng.uniform(ws.width - 0.08, ws.width - 0.04)
            cy = rng.uniform(0.04, 0.08)
            obstacle = Rect((cx, cy), half)
        elif task == "primary":
            half = tuple(rng.uniform(0.05, 0.12, size=2))
            cx = rng.uniform(0.15, ws.width - 0.15)
            cy = rng.uniform(0.2, ws.height - 0.2)
            obstacle = Rect((cx, cy), half)
        else:
            thickness = rng.uniform(0.05, 0.08)
            len1 = rng.uniform(0.12, 0.24)
            len2 = rng.uniform(0.12, 0.24)
            px = rng.uniform(0.2, ws.width - 0.2)
            py = rng.uniform(0.25, ws.height - 0.25)
            dx = 1 if rng.random() < 0.5 else -1
            dy = 1 if rng.random() < 0.5 else -1
            r1 = Rect((px + dx * len1 / 2.0, py + dy * thickness / 2.0),
                      (len1 / 2.0, thickness / 2.0))
            r2 = Rect((px + dx * thickness / 2.0, py + dy * len2 / 2.0),
                      (thickness / 2.0, len2 / 2.0))
            obstacle = LShape(r1, r2)
            inside = all(
                margin <= r.center[0] - r.half_extents[0]
                and r.center[0] + r.half_extents[0] <= ws.width - margin
                and margin <= r.center[1] - r.half_extents[1]
                and r.center[1] + r.half_extents[1] <= ws.height - margin
                for r in (r1, r2))
            if not inside:
                continue

        tip_start = _sample_point(rng, ws, margin)
        if obstacle.sdf(tip_start) <= 0.02:
            continue
        goal = None
        for _ in range(50):
            cand = _sample_point(rng, ws, max(margin, ws.success_radius))
            d = float(np.linalg.norm(cand - tip_start))
            if easy and not 0.12 <= d <= 0.25:
                continue
            if not easy and d < 0.15:
                continue
            # Keep the whole success disc clear of the obstacle.
            if obstacle.sdf(cand) <= ws.success_radius + 0.01:
                continue
            if easy and path_blocked(tip_start, cand, obstacle):
                continue
            goal = cand
            break
        if goal is None:
            continue

        starts, vels = [], []
        for _ in range(ws.distractor_count):
            starts.append(tuple(_sample_point(rng, ws, DISTRACTOR_HALF)))
            angle = rng.uniform(0.0, 2.0 * math.pi)
            vels.append((DISTRACTOR_SPEED * math.cos(angle),
                         DISTRACTOR_SPEED * math.sin(angle)))
        config = EnvConfiguration(tuple(tip_start), tuple(goal), obstacle,
                                  tuple(starts), tuple(vels))
        return validate_configuration(config, ws)
    raise SamplingError(f"could not sample a valid {task} configuration in 1000 attempts")


def _sample_point(rng, ws, margin):
    return np.array([rng.uniform(margin, ws.width - margin),
                     rng.uniform(margin, ws.height - margin)])


# -- serialization ------------------------------------------------------------

def _obstacle_to_dict(obstacle):
    if isinstance(obstacle, Rect):
        return {"kind": "rect", "center": list(obstacle.center),
                "half_extents": list(obstacle.half_extents)}
    return {"kind": "lshape",
            "rects": [_obstacle_to_dict(r) for r in (obstacle.rect1, obstacle.rect2)]}


def _obstacle_from_dict(d):
    if d["kind"] == "rect":
        return Rect(tuple(d["center"]), tuple(d["half_extents"]))
    if d["kind"] == "lshape":
        r1, r2 = (_obstacle_from_dict(r) for r in d["rects"])
        return LShape(r1, r2)
    raise ConfigurationError(f"unknown obstacle kind {d.get('kind')!r}")


def configurations_to_dict(task: str, configs) -> dict:
    return {
        "task": task,
        "configs": [
            {
                "tip_start": list(c.tip_start),
                "goal": list(c.goal),
                "obstacle": _obstacle_to_dict(c.obstacle),
                "distractor_starts": [list(p) for p in c.distractor_starts],
                "distractor_velocities": [list(v) for v in c.distractor_velocities],
            }
            for c in configs
        ],
    }


def configurations_from_dict(doc: dict):
    task = doc["task"]
    configs = [
        EnvConfiguration(
            tuple(c["tip_start"]),
            tuple(c["goal"]),
            _obstacle_from_dict(c["obstacle"]),
            tuple(tuple(p) for p in c.get("distractor_starts", [])),
            tuple(tuple(v) for v in c.get("distractor_velocities", [])),
        )
        for c in doc["configs"]
    ]
    return task, configs


def save_configurations(path, task, configs):
    with open(path, "w") as fh:
        json.dump(configurations_to_dict(task, configs), fh, indent=1)


def load_configurations(path):
    with open(path) as fh:
        return configurations_from_dict(json.load(fh))


def write_ppm(image: np.ndarray, path):
    """Export a 3xSxS observation as a binary P6 PPM for eyeballing."""
    c, h, w = image.shape
    if c != 3:
        raise ValueError("expected a 3-channel image")
    data = np.clip(np.round(image * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.transpose(1, 2, 0).tobytes())
