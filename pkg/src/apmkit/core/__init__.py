"""APM Kit Core Package"""

from .errors import ApmKitError

__all__ = ["ApmKitError"]
