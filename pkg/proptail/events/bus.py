"""
Simple in-process event bus for decoupled progress reporting.

Long-running experiments emit events and handlers react to them (logging,
progress counters) without the experiment code knowing about them.

Example:
    # Register a handler
    @event_bus.on('replication.failed')
    def handle_failure(data: dict):
        print(f"replication {data['replication']} failed")

    # Emit an event
    event_bus.emit('replication.failed', {'replication': 3, 'error': 'no exceedances'})
"""
from typing import Any, Callable, Dict, List
import logging
import threading

logger = logging.getLogger(__name__)


class EventBus:
    """
    In-memory publish-subscribe bus.

    Handlers are plain callables run synchronously in registration order.
    Registration is guarded by a lock so workers may emit concurrently.
    """

    def __init__(self):
        self._handlers: Dict[str, List[Callable]] = {}
        self._lock = threading.Lock()

    def on(self, event_name: str):
        """
        Decorator to register an event handler.

        Args:
            event_name: Name of the event to listen for
        """
        def decorator(handler: Callable):
            self.register(event_name, handler)
            return handler
        return decorator

    def register(self, event_name: str, handler: Callable):
        """Register an event handler programmatically."""
        with self._lock:
            self._handlers.setdefault(event_name, []).append(handler)
        logger.debug(f"Registered handler {handler.__name__} for event '{event_name}'")

    def emit(self, event_name: str, data: Any = None):
        """
        Emit an event to all registered handlers.

        A handler raising is logged and does not stop the remaining handlers
        or the emitter.
        """
        with self._lock:
            handlers = list(self._handlers.get(event_name, []))
        if not handlers:
            logger.debug(f"No handlers registered for event '{event_name}'")
            return

        for handler in handlers:
            try:
                handler(data)
            except Exception as e:
                logger.error(
                    f"Error in handler {handler.__name__} for event '{event_name}': {e}",
                    exc_info=True
                )


# Global event bus instance
event_bus = EventBus()
