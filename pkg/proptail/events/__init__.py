"""
Event system for progress reporting.

The event bus lets experiments report progress without depending on how it
is displayed.
"""
from proptail.events.bus import event_bus

__all__ = ['event_bus']
