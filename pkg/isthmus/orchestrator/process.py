"""
Provides functions related to the engine process.
"""

import asyncio
import signal
from typing import Callable, List, Optional

_STOPPING = False


def is_stopping() -> bool:
    """
    Returns a value indicating whether the process received a SIGINT or a SIGTERM
    signal, and therefore the daemon is stopping.
    """
    return _STOPPING


def use_shutdown_handler(
    stop: asyncio.Event, loop: Optional[asyncio.AbstractEventLoop] = None
) -> Callable[[], None]:
    """
    Sets `stop` when the process receives SIGTERM or SIGINT, so that the daemon
    finishes the batches in flight and exits. Returns a function that removes
    the handlers.
    """
    loop = loop or asyncio.get_event_loop()
    installed: List[signal.Signals] = []

    def terminate() -> None:
        global _STOPPING
        _STOPPING = True
        stop.set()

    for signal_type in (signal.SIGINT, signal.SIGTERM):
        try:
            loop.add_signal_handler(signal_type, terminate)
        except (NotImplementedError, RuntimeError):
            # not supported on this platform or outside the main thread
            continue
        installed.append(signal_type)

    def remove() -> None:
        for signal_type in installed:
            loop.remove_signal_handler(signal_type)

    return remove
