import abc
import importlib.util
import threading
from typing import Any, Optional

import equinox as eqx


class _MeterState:
    """Host-side counters shared by the worker threads of a sweep."""

    def __init__(self, total: int, bar: Optional[Any] = None):
        self.total = total
        self.done = 0
        self.reported = 0.0
        self.bar = bar
        self.lock = threading.Lock()


class AbstractProgressMeter(eqx.Module):
    """Progress meters indicating how many rows of a sweep have finished. Rows finish
    on worker threads, so `step` may be called concurrently.
    """

    @abc.abstractmethod
    def init(self, total: int) -> _MeterState:
        """Initialises the meter for a sweep of `total` rows.

        **Returns:**

        The state to pass to `step` and `close`.
        """

    @abc.abstractmethod
    def step(self, state: _MeterState, label: str) -> None:
        """Records that one more row, described by `label`, has finished."""

    @abc.abstractmethod
    def close(self, state: _MeterState) -> None:
        """Called once after the last row."""


class NoProgressMeter(AbstractProgressMeter):
    """Indicates that no progress meter should be displayed during the sweep."""

    def init(self, total: int) -> _MeterState:
        return _MeterState(total)

    def step(self, state: _MeterState, label: str) -> None:
        with state.lock:
            state.done += 1

    def close(self, state: _MeterState) -> None:
        pass


NoProgressMeter.__init__.__doc__ = """**Arguments:**

Nothing.
"""


class TextProgressMeter(AbstractProgressMeter):
    """A text progress meter, printing out e.g.:
    ```
    0.00%
    25.00% (hbar=0.01, T=1)
    ...
    100.00%
    ```
    """

    minimum_increase: float = 0.02

    def init(self, total: int) -> _MeterState:
        print("0.00%")
        return _MeterState(total)

    def step(self, state: _MeterState, label: str) -> None:
        with state.lock:
            state.done += 1
            progress = state.done / max(state.total, 1)
            # Only print once progress has moved by `minimum_increase`.
            if progress - state.reported >= self.minimum_increase:
                state.reported = progress
                print(f"{100 * progress:.2f}% ({label})")

    def close(self, state: _MeterState) -> None:
        with state.lock:
            if state.reported < 1:
                print("100.00%")


TextProgressMeter.__init__.__doc__ = """**Arguments:**

- `minimum_increase`: the minimum amount the progress has to have increased in order to
    print out a new line. Defaults to `0.02`.
"""


class TqdmProgressMeter(AbstractProgressMeter):
    """Uses tqdm to display a progress bar for the sweep."""

    def __check_init__(self):
        if importlib.util.find_spec("tqdm") is None:
            raise ValueError(
                "Cannot use `egorax.TqdmProgressMeter` without `tqdm` installed. "
                "Install it via `pip install tqdm`."
            )

    def init(self, total: int) -> _MeterState:
        import tqdm  # pyright: ignore

        return _MeterState(total, tqdm.tqdm(total=total, unit="row"))

    def step(self, state: _MeterState, label: str) -> None:
        with state.lock:
            state.done += 1
            state.bar.set_postfix_str(label, refresh=False)
            state.bar.update(1)

    def close(self, state: _MeterState) -> None:
        with state.lock:
            state.bar.close()


TqdmProgressMeter.__init__.__doc__ = """**Arguments:**

Nothing.
"""
