class BoxPushError(Exception):
    """Erreur de base du simulateur de poussée de boîte."""


class ConfigParseError(BoxPushError):
    """Ligne illisible dans un fichier de configuration."""

    def __init__(self, line_number, line, path=None, reason="ligne sans '='"):
        self.line_number = line_number
        self.line = line
        self.path = path
        where = f"{path}:{line_number}" if path else f"ligne {line_number}"
        super().__init__(f"{where} : {reason} : {line.strip()!r}")


class ConfigValidationError(BoxPushError, ValueError):
    """Valeur de configuration hors plage ou clé inconnue."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field} : {message}")


class InfeasibleLayoutError(BoxPushError):
    """Impossible de placer tous les obstacles dans la zone."""


class ManifestMismatchError(BoxPushError):
    """Le hachage d'un fichier ne correspond plus au manifeste."""


class NonFiniteQValueError(BoxPushError):
    """Une mise à jour a produit une valeur Q infinie ou NaN."""

    def __init__(self, state, action, value):
        self.state = state
        self.action = action
        self.value = value
        super().__init__(f"valeur Q non finie ({value}) pour état={state}, action={action}")
