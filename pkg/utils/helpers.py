import hashlib
import math


def normalize_angle(angle_deg):
    """Ramener un angle en degrés dans [0, 360)."""
    angle = math.fmod(angle_deg, 360.0)
    if angle < 0.0:
        angle += 360.0
    # fmod d'un très petit négatif donne 360.0 après l'addition
    if angle >= 360.0:
        angle = 0.0
    return angle


def generate_config_key(config_lines):
    """Générer une clé unique pour une configuration sérialisée."""
    return hashlib.md5("\n".join(config_lines).encode("utf-8")).hexdigest()


def file_sha256(path):
    """Calculer le SHA-256 du contenu d'un fichier."""
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()
