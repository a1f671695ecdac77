from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NewType, Optional, Sequence, Tuple

from utils.errors import ConfigValidationError
from utils.helpers import normalize_angle

logger = logging.getLogger(__name__)

# Constantes
GOAL_BITS = 5
OBSTACLE_BITS = 8
N_GOAL_CELLS = 2 ** GOAL_BITS
N_SECTORS = OBSTACLE_BITS
N_STATES = 2 ** (GOAL_BITS + OBSTACLE_BITS)  # 8192
GOAL_CELL_DEG = 360.0 / N_GOAL_CELLS  # 11.25
SECTOR_DEG = 360.0 / N_SECTORS  # 45
NO_COLLISION_REWARD = 1.0
COLLISION_REWARD = -9.0
ROTATION_OFFSET = 0.9

StateId = NewType("StateId", int)


@dataclass(frozen=True)
class Vec2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"Vec2 non fini : ({self.x}, {self.y})")

    def distance_to(self, other: Vec2) -> float:
        return math.hypot(other.x - self.x, other.y - self.y)


@dataclass(frozen=True)
class BoxPose:
    center: Vec2
    angle_deg: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "angle_deg", normalize_angle(float(self.angle_deg)))


@dataclass(frozen=True)
class BoxShape:
    length: float = 120.0
    width: float = 80.0

    def __post_init__(self):
        if not self.length > 0:
            raise ConfigValidationError("box_length", f"doit être > 0 (reçu {self.length})")
        if not self.width > 0:
            raise ConfigValidationError("box_width", f"doit être > 0 (reçu {self.width})")


@dataclass(frozen=True)
class Obstacle:
    center: Vec2
    radius: float = 10.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigValidationError("obstacle_radius", f"doit être > 0 (reçu {self.radius})")


@dataclass(frozen=True)
class Goal:
    center: Vec2 = field(default_factory=lambda: Vec2(800.0, 700.0))
    radius: float = 30.0

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigValidationError("goal_radius", f"doit être > 0 (reçu {self.radius})")


@dataclass(frozen=True)
class Region:
    """Rectangle aligné sur les axes."""
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def contains_region(self, other: Region) -> bool:
        return (self.x_min <= other.x_min and other.x_max <= self.x_max
                and self.y_min <= other.y_min and other.y_max <= self.y_max)


@dataclass(frozen=True)
class Arena:
    width: float = 1000.0
    height: float = 700.0
    obstacle_region: Region = field(default_factory=lambda: Region(100.0, 700.0, 100.0, 600.0))
    detection_range: float = 150.0
    box_start: BoxPose = field(default_factory=lambda: BoxPose(Vec2(0.0, 0.0), 0.0))
    step_length: float = 20.0
    rotation_step: float = 15.0
    inflate_detection: bool = False

    def __post_init__(self):
        if not self.width > 0:
            raise ConfigValidationError("arena_width", f"doit être > 0 (reçu {self.width})")
        if not self.height > 0:
            raise ConfigValidationError("arena_height", f"doit être > 0 (reçu {self.height})")
        region = self.obstacle_region
        if region.x_min > region.x_max or region.y_min > region.y_max:
            raise ConfigValidationError("region_x_min", "zone d'obstacles vide")
        if not Region(0.0, self.width, 0.0, self.height).contains_region(region):
            raise ConfigValidationError("region_x_max", "zone d'obstacles hors de l'arène")
        if not self.detection_range > 0:
            raise ConfigValidationError("detection_range", f"doit être > 0 (reçu {self.detection_range})")
        if not self.step_length > 0:
            raise ConfigValidationError("step_length", f"doit être > 0 (reçu {self.step_length})")
        if not 0 < self.rotation_step < 90:
            raise ConfigValidationError("rotation_step", f"doit être dans ]0, 90[ (reçu {self.rotation_step})")


class Action(IntEnum):
    TRANSLATE_FORWARD = 1
    TRANSLATE_BACKWARD = 2
    TRANSLATE_LEFT = 3
    TRANSLATE_RIGHT = 4
    ROTATE_CCW = 5
    ROTATE_CW = 6

    @property
    def ordinal(self) -> int:
        return self.value - 1

    @classmethod
    def from_ordinal(cls, ordinal: int) -> Action:
        return cls(int(ordinal) + 1)

    @property
    def is_translation(self) -> bool:
        return self.value <= 4

    @property
    def is_rotation(self) -> bool:
        return self.value >= 5


N_ACTIONS = len(Action)


@dataclass(frozen=True)
class RewardParts:
    r_distance: float
    r_rotation: float
    r_obstacle: float
    r_total: float


@dataclass(frozen=True)
class Transition:
    state_before: StateId
    action: Action
    state_after: StateId
    reward: RewardParts
    collided: bool
    pose_before: BoxPose
    pose_after: BoxPose


# Géométrie et encodage de l'état

def goal_angle(pose: BoxPose, goal: Goal) -> float:
    """Angle du vecteur centre de la boîte -> centre du but, dans [0, 360)."""
    dx = goal.center.x - pose.center.x
    dy = goal.center.y - pose.center.y
    if dx == 0.0 and dy == 0.0:
        return 0.0
    return normalize_angle(math.degrees(math.atan2(dy, dx)))


def encode_goal_bits(theta: float) -> int:
    """Quantifier l'orientation du but en 32 cellules de 11.25 degrés."""
    if not 0.0 <= theta < 360.0:
        raise ValueError(f"theta hors de [0, 360) : {theta}")
    return int(math.floor(theta / GOAL_CELL_DEG))


def _obstacle_in_range(pose: BoxPose, obstacle: Obstacle, detection_range: float, inflate: bool) -> bool:
    distance = pose.center.distance_to(obstacle.center)
    if inflate:
        distance -= obstacle.radius
    return distance <= detection_range


def encode_obstacle_bits(pose: BoxPose, obstacles: Sequence[Obstacle], detection_range: float,
                         inflate: bool = False) -> int:
    """Coder la présence d'obstacles dans les 8 secteurs autour de la boîte.

    Le secteur 0 commence à 0 degré (repère du monde) et correspond au bit de poids fort ;
    les secteurs suivants tournent dans le sens trigonométrique vers le bit de poids faible.
    """
    if not detection_range > 0:
        raise ValueError(f"detection_range doit être > 0 (reçu {detection_range})")
    bits = 0
    for obstacle in obstacles:
        if not _obstacle_in_range(pose, obstacle, detection_range, inflate):
            continue
        bearing = normalize_angle(math.degrees(math.atan2(obstacle.center.y - pose.center.y,
                                                          obstacle.center.x - pose.center.x)))
        sector = min(int(bearing // SECTOR_DEG), N_SECTORS - 1)
        bits |= 1 << (N_SECTORS - 1 - sector)
    return bits


def encode_state(pose: BoxPose, goal: Goal, obstacles: Sequence[Obstacle], detection_range: float,
                 inflate: bool = False) -> StateId:
    goal_bits = encode_goal_bits(goal_angle(pose, goal))
    obstacle_bits = encode_obstacle_bits(pose, obstacles, detection_range, inflate)
    return StateId(goal_bits * 2 ** OBSTACLE_BITS + obstacle_bits)


# Cinématique

def _slope_step(angle_deg: float, l: float) -> Tuple[float, float]:
    """Déplacement de longueur l le long de la droite de pente m = tan(angle).

    x = x0 ± l·sqrt(1/(1+m²)), y = y0 ± m·l·sqrt(1/(1+m²)), le signe étant celui de cos(angle).
    """
    rad = math.radians(angle_deg)
    cos_a = math.cos(rad)
    if abs(cos_a) < 1e-15:
        # droite verticale, pente infinie
        return 0.0, math.copysign(l, math.sin(rad))
    m = math.tan(rad)
    k = math.sqrt(1.0 / (1.0 + m * m))
    sign = 1.0 if cos_a > 0 else -1.0
    return sign * l * k, sign * m * l * k


def translate_box(pose: BoxPose, action: Action, l: float) -> BoxPose:
    action = Action(action)
    if not action.is_translation:
        raise ValueError(f"action de translation attendue, reçu {action.name}")
    if action in (Action.TRANSLATE_FORWARD, Action.TRANSLATE_BACKWARD):
        dx, dy = _slope_step(pose.angle_deg, l)
    else:
        dx, dy = _slope_step(pose.angle_deg + 90.0, l)
    if action in (Action.TRANSLATE_BACKWARD, Action.TRANSLATE_RIGHT):
        dx, dy = -dx, -dy
    return BoxPose(Vec2(pose.center.x + dx, pose.center.y + dy), pose.angle_deg)


def rotate_box(pose: BoxPose, action: Action, delta_rot: float) -> BoxPose:
    action = Action(action)
    if not action.is_rotation:
        raise ValueError(f"action de rotation attendue, reçu {action.name}")
    if not 0 < delta_rot < 90:
        raise ValueError(f"delta_rot doit être dans ]0, 90[ (reçu {delta_rot})")
    signed = delta_rot if action is Action.ROTATE_CCW else -delta_rot
    return BoxPose(pose.center, pose.angle_deg + signed)


def box_corners(pose: BoxPose, shape: BoxShape) -> list[Tuple[float, float]]:
    """Coins du rectangle orienté, dans le sens trigonométrique."""
    half_l, half_w = shape.length / 2.0, shape.width / 2.0
    rad = math.radians(pose.angle_deg)
    c, s = math.cos(rad), math.sin(rad)
    local = [(-half_l, -half_w), (half_l, -half_w), (half_l, half_w), (-half_l, half_w)]
    return [(pose.center.x + dx * c - dy * s, pose.center.y + dx * s + dy * c) for dx, dy in local]


def collides(pose: BoxPose, shape: BoxShape, obstacles: Sequence[Obstacle]) -> bool:
    """Vrai si un disque d'obstacle touche le rectangle orienté de la boîte."""
    half_l, half_w = shape.length / 2.0, shape.width / 2.0
    rad = math.radians(pose.angle_deg)
    c, s = math.cos(rad), math.sin(rad)
    for obstacle in obstacles:
        dx = obstacle.center.x - pose.center.x
        dy = obstacle.center.y - pose.center.y
        # centre de l'obstacle dans le repère de la boîte
        local_x = dx * c + dy * s
        local_y = -dx * s + dy * c
        nearest_x = min(max(local_x, -half_l), half_l)
        nearest_y = min(max(local_y, -half_w), half_w)
        if math.hypot(local_x - nearest_x, local_y - nearest_y) <= obstacle.radius:
            return True
    return False


def goal_reached(pose: BoxPose, goal: Goal) -> bool:
    return pose.center.distance_to(goal.center) <= goal.radius


# Récompense

def compute_reward(pose_before: BoxPose, pose_after: BoxPose, goal: Goal, collided: bool, params) -> RewardParts:
    """Récompense totale : distance, rotation et obstacle pondérés par w1, w2, w3."""
    d_old = pose_before.center.distance_to(goal.center)
    d_new = pose_after.center.distance_to(goal.center)
    r_distance = (d_old - d_new) * params.c_d
    r_rotation = math.cos(math.radians(pose_after.angle_deg - pose_before.angle_deg)) - ROTATION_OFFSET
    r_obstacle = COLLISION_REWARD if collided else NO_COLLISION_REWARD
    r_total = params.w1 * r_distance + params.w2 * r_rotation + params.w3 * r_obstacle
    return RewardParts(r_distance, r_rotation, r_obstacle, r_total)


@dataclass(frozen=True)
class Environment:
    """Arène, boîte, but et obstacles d'une expérience."""
    arena: Arena
    shape: BoxShape
    goal: Goal
    obstacles: Tuple[Obstacle, ...] = ()

    def encode(self, pose: BoxPose) -> StateId:
        return encode_state(pose, self.goal, self.obstacles, self.arena.detection_range,
                            self.arena.inflate_detection)

    def step(self, pose: BoxPose, action: Action, params, state_before: Optional[StateId] = None) -> Transition:
        return step(pose, self.shape, self.goal, self.obstacles, self.arena, action, params,
                    state_before=state_before)


def step(pose: BoxPose, shape: BoxShape, goal: Goal, obstacles: Sequence[Obstacle], arena: Arena,
         action: Action, params, state_before: Optional[StateId] = None) -> Transition:
    """Appliquer une action ; en cas de collision la boîte reste à sa pose précédente."""
    action = Action(action)
    if action.is_translation:
        candidate = translate_box(pose, action, arena.step_length)
    else:
        candidate = rotate_box(pose, action, arena.rotation_step)
    collided = collides(candidate, shape, obstacles)
    pose_after = pose if collided else candidate
    if collided:
        logger.debug(f"Collision : action={action.name}, pose=({pose.center.x:.2f}, {pose.center.y:.2f}, "
                     f"{pose.angle_deg:.1f})")
    if state_before is None:
        state_before = encode_state(pose, goal, obstacles, arena.detection_range, arena.inflate_detection)
    state_after = encode_state(pose_after, goal, obstacles, arena.detection_range, arena.inflate_detection)
    reward = compute_reward(pose, pose_after, goal, collided, params)
    return Transition(state_before, action, state_after, reward, collided, pose, pose_after)
