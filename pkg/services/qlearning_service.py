from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence, Tuple

import numpy as np

from services.world_service import N_ACTIONS, N_STATES, Action, StateId, Vec2
from utils.errors import ConfigValidationError, NonFiniteQValueError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Hyperparams:
    """Paramètres d'apprentissage et poids de la récompense."""
    alpha: float = 0.3
    gamma: float = 0.4
    epsilon: float = 0.3
    omega: float = 0.3
    c_d: float = 0.9
    w1: float = 0.7
    w2: float = 0.05
    w3: float = 0.25

    def __post_init__(self):
        for name in ("alpha", "epsilon", "omega"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigValidationError(name, f"doit être dans [0, 1] (reçu {value})")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigValidationError("gamma", f"doit être dans [0, 1) (reçu {self.gamma})")
        if not self.c_d > 0.0:
            raise ConfigValidationError("c_d", f"doit être > 0 (reçu {self.c_d})")
        for name in ("w1", "w2", "w3"):
            value = getattr(self, name)
            if not value >= 0.0:
                raise ConfigValidationError(name, f"doit être >= 0 (reçu {value})")


class QTable:
    """Table dense |S| x |A| de valeurs d'action, initialisée à zéro."""

    def __init__(self, values=None):
        if values is None:
            values = np.zeros((N_STATES, N_ACTIONS), dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (N_STATES, N_ACTIONS):
            raise ValueError(f"dimensions de Q-table invalides : {values.shape}")
        if not np.isfinite(values).all():
            raise ValueError("Q-table avec des valeurs non finies")
        self.values = values

    def __getitem__(self, key):
        state, action = key
        return float(self.values[state, Action(action).ordinal])

    def __setitem__(self, key, value):
        state, action = key
        _store(self, state, Action(action).ordinal, float(value))

    def max_value(self, state: StateId) -> float:
        return float(self.values[state].max())

    def nonzero_count(self) -> int:
        return int(np.count_nonzero(self.values))

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.values).all())

    def greedy_action(self, state: StateId) -> Action:
        """Première action de valeur maximale (sans tirage)."""
        return Action.from_ordinal(int(np.argmax(self.values[state])))


def _store(table: QTable, s: StateId, j: int, value: float) -> float:
    """Écrire Q(s, a_j) ; une valeur infinie ou NaN interrompt l'apprentissage."""
    if not math.isfinite(value):
        logger.error(f"Valeur Q non finie : état={s}, action={Action.from_ordinal(j).name}, valeur={value}")
        raise NonFiniteQValueError(s, Action.from_ordinal(j).name, value)
    table.values[s, j] = value
    return value


def select_action(table: QTable, state: StateId, epsilon: float, rng: np.random.Generator) -> Action:
    """Politique epsilon-gloutonne ; égalités départagées uniformément avec rng."""
    if rng.random() < epsilon:
        return Action.from_ordinal(int(rng.integers(N_ACTIONS)))
    row = table.values[state]
    best = np.flatnonzero(row == row.max())
    if len(best) == 1:
        return Action.from_ordinal(int(best[0]))
    return Action.from_ordinal(int(best[rng.integers(len(best))]))


def td_update_single(table: QTable, s: StateId, a: Action, r: float, s_next: StateId,
                     alpha: float, gamma: float) -> float:
    """Q(s,a) <- Q(s,a) + alpha * (r + gamma * max Q(s',.) - Q(s,a))."""
    j = Action(a).ordinal
    current = table.values[s, j]
    target = r + gamma * table.values[s_next].max()
    return _store(table, s, j, float(current + alpha * (target - current)))


def td_update_independent(table: QTable, s: StateId, a: Action, r: float, s_next: StateId,
                          alpha: float, gamma: float) -> float:
    """Q_i(s,a) <- (1 - alpha) * Q_i(s,a) + alpha * (r + gamma * max Q_i(s',.))."""
    j = Action(a).ordinal
    target = r + gamma * table.values[s_next].max()
    return _store(table, s, j, float((1.0 - alpha) * table.values[s, j] + alpha * target))


def td_update_shared(shared: QTable, s: StateId, a: Action, r: float, s_next: StateId,
                     alpha: float, gamma: float) -> float:
    # même formule, une seule table pour tous les agents
    return td_update_independent(shared, s, a, r, s_next, alpha, gamma)


def find_neighbors(i: int, positions: Sequence[Vec2], detection_range: float) -> Tuple[int, ...]:
    """Agents j != i situés dans le rayon de détection de l'agent i."""
    return tuple(j for j, position in enumerate(positions)
                 if j != i and positions[i].distance_to(position) <= detection_range)


def cooperative_blend(tables: Sequence[QTable], i: int, sa_pairs: Mapping[int, Tuple[StateId, Action]],
                      neighbors: Sequence[int], omega: float, normalize: bool = False,
                      literal_empty: bool = False) -> float:
    """Q_i(s_i,a_i) <- omega * Q_i(s_i,a_i) + (1 - omega) * somme des Q_j(s_j,a_j) des voisins.

    Avec normalize=True la somme est remplacée par la moyenne des voisins. Sans voisin, la
    table est inchangée, sauf si literal_empty=True (Q_i est alors multipliée par omega).
    """
    s_i, a_i = sa_pairs[i]
    j_i = Action(a_i).ordinal
    own = tables[i].values[s_i, j_i]
    if not neighbors:
        if not literal_empty:
            return float(own)
        return _store(tables[i], s_i, j_i, float(omega * own))
    total = 0.0
    for j in neighbors:
        s_j, a_j = sa_pairs[j]
        total += tables[j].values[s_j, Action(a_j).ordinal]
    if normalize:
        total /= len(neighbors)
    return _store(tables[i], s_i, j_i, float(omega * own + (1.0 - omega) * total))
