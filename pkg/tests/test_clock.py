import pytest

from eostune.clock import VirtualClock, WallClock


def test_virtual_sleep_advances():
    clock = VirtualClock()
    clock.sleep(5.0)
    clock.sleep(0.5)
    assert clock.now() == 5.5


def test_virtual_advance_to_never_rewinds():
    clock = VirtualClock(start=10.0)
    clock.advance_to(3.0)
    assert clock.now() == 10.0
    clock.advance_to(12.0)
    assert clock.now() == 12.0


def test_virtual_rejects_negative_sleep():
    with pytest.raises(ValueError):
        VirtualClock().sleep(-1.0)


def test_wall_clock_monotonic():
    clock = WallClock()
    a = clock.now()
    clock.sleep(0.01)
    assert clock.now() > a
    assert not getattr(clock, "virtual", True)
