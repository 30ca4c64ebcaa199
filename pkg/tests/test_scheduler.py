"""Event ordering guarantees of the tick loop."""

import pytest

from gossipseg.errors import SchedulingError
from gossipseg.scheduler import Scheduler


def test_events_fire_in_tick_then_insertion_order():
    sched = Scheduler()
    seen = []
    sched.at(5, lambda t: seen.append(("b", t)))
    sched.at(2, lambda t: seen.append(("a", t)))
    sched.at(5, lambda t: seen.append(("c", t)))
    sched.run_until(10)
    assert seen == [("a", 2), ("b", 5), ("c", 5)]
    assert sched.now == 10


def test_callbacks_can_schedule_more_events():
    sched = Scheduler()
    seen = []

    def chain(t):
        seen.append(t)
        if t < 6:
            sched.at(t + 2, chain)

    sched.at(0, chain)
    sched.run_until(100)
    assert seen == [0, 2, 4, 6]


def test_events_past_horizon_stay_queued():
    sched = Scheduler()
    seen = []
    sched.at(3, lambda t: seen.append(t))
    sched.at(8, lambda t: seen.append(t))
    sched.run_until(5)
    assert seen == [3]
    sched.run_until(8)
    assert seen == [3, 8]


def test_scheduling_into_the_past_rejected():
    sched = Scheduler()
    sched.at(4, lambda t: None)
    sched.run_until(4)
    with pytest.raises(SchedulingError):
        sched.at(3, lambda t: None)
    sched.at(4, lambda t: None)  # same tick as the clock is allowed
