from __future__ import annotations

import logging
import math
from dataclasses import replace
from typing import Dict, List, Mapping, Optional

from dotenv.parser import parse_stream

from services.experiment_service import AlgorithmMode, ExperimentConfig
from services.qlearning_service import Hyperparams
from services.world_service import Arena, BoxPose, BoxShape, Goal, Region, Vec2
from utils.errors import ConfigParseError, ConfigValidationError
from utils.helpers import generate_config_key

logger = logging.getLogger(__name__)

TRUE_WORDS = {"true", "yes", "on", "1"}
FALSE_WORDS = {"false", "no", "off", "0"}

# Clés reconnues, dans l'ordre de sérialisation, avec leurs valeurs par défaut
DEFAULTS: Dict[str, object] = {
    "alpha": 0.3,
    "gamma": 0.4,
    "epsilon": 0.3,
    "omega": 0.3,
    "c_d": 0.9,
    "w1": 0.7,
    "w2": 0.05,
    "w3": 0.25,
    "arena_width": 1000.0,
    "arena_height": 700.0,
    "region_x_min": 100.0,
    "region_x_max": 700.0,
    "region_y_min": 100.0,
    "region_y_max": 600.0,
    "n_obstacles": 6,
    "obstacle_radius": 10.0,
    "goal_x": 800.0,
    "goal_y": 700.0,
    "goal_radius": 30.0,
    "box_length": 120.0,
    "box_width": 80.0,
    "box_x": 0.0,
    "box_y": 0.0,
    "box_angle": 0.0,
    "step_length": 20.0,
    "rotation_step": 15.0,
    "detection_range": 150.0,
    "inflate_detection": False,
    "max_iterations": 2000,
    "n_episodes": 80,
    "mode": AlgorithmMode.SINGLE_AGENT.value,
    "obstacle_seed": 0,
    "policy_seed": 0,
    "random_agent_order": False,
    "blend_normalize": True,
    "literal_empty_blend": False,
}


def _convert(key: str, raw: str):
    default = DEFAULTS[key]
    text = raw.strip()
    try:
        if isinstance(default, bool):
            lowered = text.lower()
            if lowered in TRUE_WORDS:
                return True
            if lowered in FALSE_WORDS:
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            value = float(text)
    except ValueError:
        raise ConfigValidationError(key, f"valeur illisible {raw!r}") from None
    if isinstance(default, float):
        if not math.isfinite(value):
            raise ConfigValidationError(key, f"valeur non finie {raw!r}")
        return value
    if key == "mode":
        try:
            return AlgorithmMode(text).value
        except ValueError:
            valid = ", ".join(m.value for m in AlgorithmMode)
            raise ConfigValidationError(key, f"mode inconnu {raw!r} (modes valides : {valid})") from None
    return text


def _read_values(path: str) -> Dict[str, str]:
    """Lire les couples `clé = valeur` ; toute ligne illisible est signalée avec son numéro."""
    values: Dict[str, str] = {}
    with open(path, encoding="utf-8") as handle:
        for binding in parse_stream(handle):
            line_number = binding.original.line
            if binding.error:
                logger.error(f"Configuration illisible : {path}:{line_number}")
                raise ConfigParseError(line_number, binding.original.string, path, reason="syntaxe invalide")
            if binding.key is None:
                continue
            if binding.value is None:
                logger.error(f"Configuration illisible : {path}:{line_number}")
                raise ConfigParseError(line_number, binding.original.string, path)
            values[binding.key] = binding.value
    return values


def parse_values(values: Mapping[str, Optional[str]]) -> Dict[str, object]:
    """Fusionner des valeurs textuelles avec les valeurs par défaut."""
    settings = dict(DEFAULTS)
    for key, raw in values.items():
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigValidationError(key, "clé inconnue")
        if raw is None:
            raise ConfigValidationError(key, "valeur manquante")
        settings[key] = _convert(key, raw)
    return settings


def build_config(settings: Mapping[str, object]) -> ExperimentConfig:
    s = settings
    hyperparams = Hyperparams(alpha=s["alpha"], gamma=s["gamma"], epsilon=s["epsilon"], omega=s["omega"],
                              c_d=s["c_d"], w1=s["w1"], w2=s["w2"], w3=s["w3"])
    arena = Arena(
        width=s["arena_width"],
        height=s["arena_height"],
        obstacle_region=Region(s["region_x_min"], s["region_x_max"], s["region_y_min"], s["region_y_max"]),
        detection_range=s["detection_range"],
        box_start=BoxPose(Vec2(s["box_x"], s["box_y"]), s["box_angle"]),
        step_length=s["step_length"],
        rotation_step=s["rotation_step"],
        inflate_detection=s["inflate_detection"],
    )
    return ExperimentConfig(
        arena=arena,
        shape=BoxShape(s["box_length"], s["box_width"]),
        goal=Goal(Vec2(s["goal_x"], s["goal_y"]), s["goal_radius"]),
        n_obstacles=s["n_obstacles"],
        obstacle_radius=s["obstacle_radius"],
        max_iterations=s["max_iterations"],
        n_episodes=s["n_episodes"],
        hyperparams=hyperparams,
        mode=AlgorithmMode(s["mode"]),
        obstacle_seed=s["obstacle_seed"],
        policy_seed=s["policy_seed"],
        random_agent_order=s["random_agent_order"],
        blend_normalize=s["blend_normalize"],
        literal_empty_blend=s["literal_empty_blend"],
    )


def load_config(path: Optional[str] = None) -> ExperimentConfig:
    """Charger une configuration `clé = valeur` ; les clés absentes prennent les valeurs par défaut."""
    if path is None:
        logger.info("Aucun fichier de configuration : valeurs par défaut")
        return build_config(DEFAULTS)
    values = _read_values(path)
    try:
        config = build_config(parse_values(values))
    except ConfigValidationError as e:
        logger.error(f"Configuration invalide ({path}) : {e}")
        raise
    logger.info(f"Configuration chargée depuis {path} : {len(values)} clé(s) explicite(s)")
    return config


def config_to_settings(config: ExperimentConfig) -> Dict[str, object]:
    arena, hp = config.arena, config.hyperparams
    region = arena.obstacle_region
    return {
        "alpha": hp.alpha, "gamma": hp.gamma, "epsilon": hp.epsilon, "omega": hp.omega, "c_d": hp.c_d,
        "w1": hp.w1, "w2": hp.w2, "w3": hp.w3,
        "arena_width": arena.width, "arena_height": arena.height,
        "region_x_min": region.x_min, "region_x_max": region.x_max,
        "region_y_min": region.y_min, "region_y_max": region.y_max,
        "n_obstacles": config.n_obstacles, "obstacle_radius": config.obstacle_radius,
        "goal_x": config.goal.center.x, "goal_y": config.goal.center.y, "goal_radius": config.goal.radius,
        "box_length": config.shape.length, "box_width": config.shape.width,
        "box_x": arena.box_start.center.x, "box_y": arena.box_start.center.y,
        "box_angle": arena.box_start.angle_deg,
        "step_length": arena.step_length, "rotation_step": arena.rotation_step,
        "detection_range": arena.detection_range, "inflate_detection": arena.inflate_detection,
        "max_iterations": config.max_iterations, "n_episodes": config.n_episodes,
        "mode": config.mode.value, "obstacle_seed": config.obstacle_seed, "policy_seed": config.policy_seed,
        "random_agent_order": config.random_agent_order, "blend_normalize": config.blend_normalize,
        "literal_empty_blend": config.literal_empty_blend,
    }


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_to_lines(config: ExperimentConfig) -> List[str]:
    """Sérialiser la configuration effective en lignes `clé = valeur`, dans l'ordre des clés."""
    settings = config_to_settings(config)
    return [f"{key} = {_format_value(settings[key])}" for key in DEFAULTS]


def config_hash(config: ExperimentConfig) -> str:
    return generate_config_key(config_to_lines(config))


def override(config: ExperimentConfig, **changes) -> ExperimentConfig:
    """Copie de la configuration avec les champs de premier niveau remplacés (None ignoré)."""
    return replace(config, **{k: v for k, v in changes.items() if v is not None})
