from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from services.qlearning_service import (
    Hyperparams,
    QTable,
    cooperative_blend,
    find_neighbors,
    select_action,
    td_update_independent,
    td_update_shared,
    td_update_single,
)
from services.world_service import (
    Action,
    Arena,
    BoxPose,
    BoxShape,
    Environment,
    Goal,
    Obstacle,
    Region,
    StateId,
    Transition,
    Vec2,
    collides,
    compute_reward,
    goal_reached,
)
from utils.errors import ConfigValidationError, InfeasibleLayoutError

logger = logging.getLogger(__name__)

# Constantes
MAX_DRAWS_PER_OBSTACLE = 10_000
MULTI_AGENT_COUNT = 3


class AlgorithmMode(str, Enum):
    SINGLE_AGENT = "single"
    MULTI_SEPARATE = "separate"
    MULTI_SHARED = "shared"
    COOPERATIVE = "cooperative"

    @property
    def n_agents(self) -> int:
        return 1 if self is AlgorithmMode.SINGLE_AGENT else MULTI_AGENT_COUNT

    @property
    def n_tables(self) -> int:
        if self in (AlgorithmMode.SINGLE_AGENT, AlgorithmMode.MULTI_SHARED):
            return 1
        return MULTI_AGENT_COUNT


ALL_MODES = tuple(AlgorithmMode)


@dataclass(frozen=True)
class ExperimentConfig:
    arena: Arena = field(default_factory=Arena)
    shape: BoxShape = field(default_factory=BoxShape)
    goal: Goal = field(default_factory=Goal)
    n_obstacles: int = 6
    obstacle_radius: float = 10.0
    max_iterations: int = 2000
    n_episodes: int = 80
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    mode: AlgorithmMode = AlgorithmMode.SINGLE_AGENT
    obstacle_seed: int = 0
    policy_seed: int = 0
    random_agent_order: bool = False
    blend_normalize: bool = True
    literal_empty_blend: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mode", AlgorithmMode(self.mode))
        if self.n_obstacles < 0:
            raise ConfigValidationError("n_obstacles", f"doit être >= 0 (reçu {self.n_obstacles})")
        if not self.obstacle_radius > 0:
            raise ConfigValidationError("obstacle_radius", f"doit être > 0 (reçu {self.obstacle_radius})")
        if self.max_iterations < 1:
            raise ConfigValidationError("max_iterations", f"doit être >= 1 (reçu {self.max_iterations})")
        if self.n_episodes < 1:
            raise ConfigValidationError("n_episodes", f"doit être >= 1 (reçu {self.n_episodes})")
        for name in ("obstacle_seed", "policy_seed"):
            if getattr(self, name) < 0:
                raise ConfigValidationError(name, f"doit être >= 0 (reçu {getattr(self, name)})")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    sub_step: int
    pose: BoxPose
    action: Optional[Action] = None
    agent: Optional[int] = None


@dataclass
class EpisodeLog:
    episode_index: int
    iterations_used: int
    reached_goal: bool
    pose_trace: List[TraceRecord]
    cumulative_reward: float

    @property
    def final_pose(self) -> BoxPose:
        return self.pose_trace[-1].pose


@dataclass
class RunResult:
    config: ExperimentConfig
    episodes: List[EpisodeLog]
    final_tables: List[QTable]
    obstacles: Tuple[Obstacle, ...] = ()


def generate_obstacles(seed: int, count: int, region: Region, radius: float, box_start: BoxPose, goal: Goal,
                       shape: Optional[BoxShape] = None) -> List[Obstacle]:
    """Tirer des obstacles uniformément dans la zone, sans chevauchement (rejet)."""
    if count < 0:
        raise ValueError(f"count doit être >= 0 (reçu {count})")
    if region.x_min > region.x_max or region.y_min > region.y_max:
        raise ValueError("zone d'obstacles invalide")
    shape = shape or BoxShape()
    rng = np.random.default_rng(seed)
    obstacles: List[Obstacle] = []
    for index in range(count):
        for draw in range(MAX_DRAWS_PER_OBSTACLE):
            center = Vec2(float(rng.uniform(region.x_min, region.x_max)),
                          float(rng.uniform(region.y_min, region.y_max)))
            candidate = Obstacle(center, radius)
            if any(center.distance_to(other.center) <= radius + other.radius for other in obstacles):
                continue
            if center.distance_to(goal.center) <= radius + goal.radius:
                continue
            if collides(box_start, shape, [candidate]):
                continue
            obstacles.append(candidate)
            if draw > MAX_DRAWS_PER_OBSTACLE // 2:
                logger.warning(f"Obstacle {index} placé après {draw + 1} tirages")
            break
        else:
            logger.error(f"Disposition impossible : obstacle {index} non placé après {MAX_DRAWS_PER_OBSTACLE} tirages")
            raise InfeasibleLayoutError(
                f"obstacle {index} impossible à placer en {MAX_DRAWS_PER_OBSTACLE} tirages (seed={seed})")
    logger.info(f"Obstacles générés : {len(obstacles)} (seed={seed})")
    return obstacles


def run_iteration_single(env: Environment, pose: BoxPose, table: QTable, params: Hyperparams,
                         rng: np.random.Generator) -> Transition:
    """Une itération = une action et une mise à jour de la table."""
    state = env.encode(pose)
    action = select_action(table, state, params.epsilon, rng)
    transition = env.step(pose, action, params, state_before=state)
    td_update_single(table, state, action, transition.reward.r_total, transition.state_after,
                     params.alpha, params.gamma)
    return transition


def run_iteration_multi(env: Environment, pose: BoxPose, tables: Sequence[QTable], mode: AlgorithmMode,
                        params: Hyperparams, rng: np.random.Generator,
                        order: Optional[Sequence[int]] = None) -> List[Transition]:
    """Une manche à trois agents avec une seule récompense agrégée.

    Tous les agents choisissent à partir de l'état de début de manche, les actions sont
    appliquées dans l'ordre des agents, puis chaque agent fait une mise à jour avec
    (s_début, a_i, r_manche, s_fin). Les transitions rendues portent ce tuple d'apprentissage
    et les poses de la sous-étape de l'agent.
    """
    mode = AlgorithmMode(mode)
    if mode not in (AlgorithmMode.MULTI_SEPARATE, AlgorithmMode.MULTI_SHARED):
        raise ValueError(f"mode multi-agent attendu, reçu {mode.value}")
    order = list(range(mode.n_agents)) if order is None else list(order)
    shared = mode is AlgorithmMode.MULTI_SHARED

    s_start = env.encode(pose)
    actions = {i: select_action(tables[0] if shared else tables[i], s_start, params.epsilon, rng) for i in order}

    sub_steps = []
    current = pose
    for i in order:
        sub = env.step(current, actions[i], params)
        sub_steps.append((i, sub))
        current = sub.pose_after
        if goal_reached(current, env.goal):
            break

    s_end = env.encode(current)
    any_collided = any(sub.collided for _, sub in sub_steps)
    reward = compute_reward(pose, current, env.goal, any_collided, params)

    transitions = []
    for i, sub in sub_steps:
        if shared:
            td_update_shared(tables[0], s_start, actions[i], reward.r_total, s_end, params.alpha, params.gamma)
        else:
            td_update_independent(tables[i], s_start, actions[i], reward.r_total, s_end, params.alpha, params.gamma)
        transitions.append(Transition(s_start, actions[i], s_end, reward, sub.collided,
                                      sub.pose_before, sub.pose_after))
    return transitions


def run_iteration_cooperative(env: Environment, pose: BoxPose, tables: Sequence[QTable], params: Hyperparams,
                              rng: np.random.Generator, order: Optional[Sequence[int]] = None,
                              recent_pairs: Optional[Dict[int, Tuple[StateId, Action]]] = None,
                              normalize: bool = False, literal_empty: bool = False) -> List[Transition]:
    """Une manche coopérative : chaque agent agit, apprend et fusionne sa table aussitôt.

    recent_pairs garde le dernier (état, action) de chaque agent dans l'épisode ; un voisin
    qui n'a pas encore agi y contribue avec son action gloutonne dans l'état courant.
    """
    order = list(range(len(tables))) if order is None else list(order)
    recent_pairs = {} if recent_pairs is None else recent_pairs
    transitions = []
    current = pose
    for i in order:
        state = env.encode(current)
        action = select_action(tables[i], state, params.epsilon, rng)
        transition = env.step(current, action, params, state_before=state)
        td_update_independent(tables[i], state, action, transition.reward.r_total, transition.state_after,
                              params.alpha, params.gamma)
        recent_pairs[i] = (state, action)

        # agents co-localisés avec la boîte
        positions = [transition.pose_after.center] * len(tables)
        neighbors = find_neighbors(i, positions, env.arena.detection_range)
        pairs = {i: recent_pairs[i]}
        for j in neighbors:
            pairs[j] = recent_pairs.get(j) or (transition.state_after, tables[j].greedy_action(transition.state_after))
        cooperative_blend(tables, i, pairs, neighbors, params.omega, normalize=normalize,
                          literal_empty=literal_empty)

        transitions.append(transition)
        current = transition.pose_after
        if goal_reached(current, env.goal):
            break
    return transitions


def derive_policy_seed(base_seed: int, seed_index: int, mode_index: int) -> int:
    """Graine de politique indépendante pour chaque couple (graine, mode)."""
    return int(np.random.SeedSequence([base_seed, seed_index, mode_index]).generate_state(1)[0])


class ExperimentService:
    """Service qui enchaîne épisodes et itérations pour les quatre algorithmes."""

    def build_environment(self, config: ExperimentConfig) -> Environment:
        obstacles = generate_obstacles(config.obstacle_seed, config.n_obstacles, config.arena.obstacle_region,
                                       config.obstacle_radius, config.arena.box_start, config.goal, config.shape)
        return Environment(config.arena, config.shape, config.goal, tuple(obstacles))

    def _agent_order(self, config: ExperimentConfig, rng: np.random.Generator) -> List[int]:
        n_agents = config.mode.n_agents
        if config.random_agent_order and n_agents > 1:
            return [int(i) for i in rng.permutation(n_agents)]
        return list(range(n_agents))

    def run_episode(self, config: ExperimentConfig, tables: Sequence[QTable], env: Environment,
                    rng: np.random.Generator, episode_index: int = 0) -> EpisodeLog:
        """Ramener la boîte au départ et itérer jusqu'au but ou au plafond d'itérations."""
        if len(tables) != config.mode.n_tables:
            raise ValueError(f"{config.mode.value} attend {config.mode.n_tables} table(s), reçu {len(tables)}")
        params = config.hyperparams
        pose = config.arena.box_start
        trace = [TraceRecord(0, 0, pose)]
        iterations = 0
        cumulative = 0.0
        reached = goal_reached(pose, env.goal)
        recent_pairs: Dict[int, Tuple[StateId, Action]] = {}

        while not reached and iterations < config.max_iterations:
            iterations += 1
            order = self._agent_order(config, rng)
            if config.mode is AlgorithmMode.SINGLE_AGENT:
                transitions = [run_iteration_single(env, pose, tables[0], params, rng)]
                cumulative += transitions[0].reward.r_total
            elif config.mode is AlgorithmMode.COOPERATIVE:
                transitions = run_iteration_cooperative(env, pose, tables, params, rng, order=order,
                                                        recent_pairs=recent_pairs,
                                                        normalize=config.blend_normalize,
                                                        literal_empty=config.literal_empty_blend)
                cumulative += sum(t.reward.r_total for t in transitions)
            else:
                transitions = run_iteration_multi(env, pose, tables, config.mode, params, rng, order=order)
                cumulative += transitions[0].reward.r_total
            for sub_step, (agent, transition) in enumerate(zip(order, transitions), start=1):
                trace.append(TraceRecord(iterations, sub_step, transition.pose_after, transition.action, agent))
            pose = transitions[-1].pose_after
            reached = goal_reached(pose, env.goal)

        logger.info(f"Épisode {episode_index + 1} ({config.mode.value}) : {iterations} itérations, "
                    f"but atteint={reached}, récompense cumulée={cumulative:.3f}")
        return EpisodeLog(episode_index, iterations, reached, trace, cumulative)

    def run_experiment(self, config: ExperimentConfig) -> RunResult:
        """Exécuter n_episodes épisodes avec des tables qui persistent d'un épisode à l'autre."""
        logger.info(f"Début de l'expérience : mode={config.mode.value}, obstacle_seed={config.obstacle_seed}, "
                    f"policy_seed={config.policy_seed}, épisodes={config.n_episodes}")
        env = self.build_environment(config)
        tables = [QTable() for _ in range(config.mode.n_tables)]
        rng = np.random.default_rng(config.policy_seed)
        episodes = [self.run_episode(config, tables, env, rng, k) for k in range(config.n_episodes)]
        reached = sum(e.reached_goal for e in episodes)
        logger.info(f"Expérience terminée : mode={config.mode.value}, but atteint dans {reached}/{len(episodes)} épisodes")
        return RunResult(config, episodes, tables, env.obstacles)

    def comparison_configs(self, base: ExperimentConfig, modes: Sequence[AlgorithmMode],
                           n_seeds: int) -> List[ExperimentConfig]:
        """Configurations (graine, mode) : même disposition d'obstacles pour tous les modes d'une graine."""
        if not modes:
            raise ValueError("au moins un mode est requis")
        if n_seeds < 1:
            raise ValueError(f"n_seeds doit être >= 1 (reçu {n_seeds})")
        configs = []
        for k in range(n_seeds):
            for mode in modes:
                mode = AlgorithmMode(mode)
                configs.append(replace(base, mode=mode, obstacle_seed=base.obstacle_seed + k,
                                       policy_seed=derive_policy_seed(base.policy_seed, k, ALL_MODES.index(mode))))
        return configs

    def run_comparison(self, base: ExperimentConfig, modes: Sequence[AlgorithmMode], n_seeds: int,
                       max_workers: int = 1) -> List[RunResult]:
        configs = self.comparison_configs(base, modes, n_seeds)
        logger.info(f"Comparaison : {len(configs)} exécutions ({len(modes)} modes x {n_seeds} graines), "
                    f"workers={max_workers}")
        if max_workers <= 1:
            return [self.run_experiment(config) for config in configs]
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(run_experiment, configs))


def run_experiment(config: ExperimentConfig) -> RunResult:
    return ExperimentService().run_experiment(config)
