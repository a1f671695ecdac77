from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from services.config_service import build_config, config_hash, config_to_lines, parse_values
from services.experiment_service import ExperimentConfig
from services.qlearning_service import QTable
from utils.errors import ManifestMismatchError
from utils.helpers import file_sha256

logger = logging.getLogger(__name__)

# Constantes
QTABLE_MAGIC = "# boxpush-qtable v1"
MANIFEST_MAGIC = "# boxpush-manifest v1"
MANIFEST_NAME = "manifest.txt"
ITERATIONS_NAME = "iterations.csv"
TRACE_NAME = "trace.csv"


@dataclass
class RunManifest:
    config_path: Optional[str]
    out_dir: str
    config_hash: str
    settings: List[str] = field(default_factory=list)
    files: List[Tuple[str, str]] = field(default_factory=list)

    def to_config(self) -> ExperimentConfig:
        """Reconstruire la configuration effective enregistrée dans le manifeste."""
        values = {}
        for line in self.settings:
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
        return build_config(parse_values(values))


class StorageService:
    """Écriture et relecture des répertoires d'exécution sur disque local."""

    def __init__(self, out_dir):
        self.out_dir = str(out_dir)
        os.makedirs(self.out_dir, exist_ok=True)
        logger.info(f"Répertoire de sortie : {self.out_dir}")

    def path(self, name):
        return os.path.join(self.out_dir, name)

    def child(self, name) -> StorageService:
        return StorageService(self.path(name))

    def write_text(self, name, text):
        """Écrire un fichier texte (LF) et le vider sur disque."""
        path = self.path(name)
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
            handle.flush()
            os.fsync(handle.fileno())
        logger.info(f"Fichier écrit : {path}")
        return path

    def save_qtable_snapshot(self, table: QTable, name, cfg_hash):
        path = self.path(name)
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(f"{QTABLE_MAGIC} {cfg_hash}\n")
            np.savetxt(handle, table.values, fmt="%.17g", delimiter=" ", newline="\n")
            handle.flush()
            os.fsync(handle.fileno())
        logger.info(f"Q-table enregistrée : {path} ({table.nonzero_count()} valeurs non nulles)")
        return path

    @staticmethod
    def load_qtable_snapshot(path) -> Tuple[str, QTable]:
        """Relire un instantané ; renvoie (hachage de configuration, table)."""
        with open(path, encoding="utf-8") as handle:
            header = handle.readline().strip()
            if not header.startswith(QTABLE_MAGIC):
                raise ValueError(f"en-tête de Q-table invalide dans {path} : {header!r}")
            values = np.loadtxt(handle, dtype=np.float64, ndmin=2)
        return header[len(QTABLE_MAGIC):].strip(), QTable(values)

    def write_manifest(self, config: ExperimentConfig, config_path, emitted) -> RunManifest:
        """Écrire manifest.txt avec le hachage de chaque fichier émis, puis le vérifier."""
        manifest = RunManifest(
            config_path=config_path,
            out_dir=self.out_dir,
            config_hash=config_hash(config),
            settings=config_to_lines(config),
            files=[(os.path.basename(p), file_sha256(p)) for p in emitted],
        )
        lines = [MANIFEST_MAGIC,
                 f"config_file: {config_path or '-'}",
                 f"config_hash: {manifest.config_hash}"]
        lines += [f"setting: {line}" for line in manifest.settings]
        lines += [f"file: {digest} {name}" for name, digest in manifest.files]
        self.write_text(MANIFEST_NAME, "\n".join(lines) + "\n")
        self.verify_manifest(manifest)
        return manifest

    def load_manifest(self) -> RunManifest:
        path = self.path(MANIFEST_NAME)
        with open(path, encoding="utf-8") as handle:
            lines = handle.read().splitlines()
        if not lines or lines[0] != MANIFEST_MAGIC:
            raise ValueError(f"manifeste invalide : {path}")
        manifest = RunManifest(config_path=None, out_dir=self.out_dir, config_hash="")
        for line in lines[1:]:
            tag, _, rest = line.partition(": ")
            if tag == "config_file":
                manifest.config_path = None if rest == "-" else rest
            elif tag == "config_hash":
                manifest.config_hash = rest
            elif tag == "setting":
                manifest.settings.append(rest)
            elif tag == "file":
                digest, _, name = rest.partition(" ")
                manifest.files.append((name, digest))
        return manifest

    def verify_manifest(self, manifest: RunManifest) -> None:
        for name, digest in manifest.files:
            actual = file_sha256(self.path(name))
            if actual != digest:
                logger.error(f"Hachage différent pour {name} : attendu {digest}, obtenu {actual}")
                raise ManifestMismatchError(f"{name} : hachage {actual} différent du manifeste ({digest})")
        logger.info(f"Manifeste vérifié : {len(manifest.files)} fichier(s)")
