from .settings import CONFIG

__all__ = ["CONFIG"]
