"""PASS/FAIL bookkeeping for the acceptance criteria."""

from contextlib import contextmanager

RESULTS: dict[int, str] = {}


@contextmanager
def criterion(number: int, title: str):
    """Record and print one verdict line; failures still propagate."""
    try:
        yield
    except BaseException as exc:
        line = f"criterion {number:2d} FAIL  {title}: {type(exc).__name__}: {exc}".splitlines()[0]
        RESULTS[number] = line
        print(line)
        raise
    line = f"criterion {number:2d} PASS  {title}"
    RESULTS[number] = line
    print(line)
