"""Bridge error taxonomy; the CLI maps these to exit codes."""


class BridgeError(Exception):
    """Base class."""


class BridgeConfigError(BridgeError):
    """Bad job parameters: unknown model, occupied output dir, invalid batch."""


class BridgeDataError(BridgeError):
    """Malformed metadata input."""


class BridgeEnvironmentError(BridgeError):
    """A requested real model cannot be loaded here (missing packages or weights)."""
