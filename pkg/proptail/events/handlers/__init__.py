"""
Event handlers for experiment events.

Import this module to register all handlers; the @event_bus.on() decorators
register them on import.
"""
from proptail.events.handlers import progress

__all__ = ['progress']
