import numpy as np
import pytest

from hcmvrd.core import ClipPair, ClipRelation, Track, Tubelet


def track(start, boxes):
    boxes = np.asarray(boxes, dtype=float)
    return Track(np.arange(start, start + len(boxes)), boxes)


def static_track(start, n, box):
    return track(start, [box] * n)


def tube(tid, category="a", clip=0, start=0, n=3, box=(0, 0, 10, 10), appearance=(1.0, 0.0), source=None, boxes=None):
    tr = track(start, boxes) if boxes is not None else static_track(start, n, box)
    return Tubelet(tid, category, clip, tr, np.asarray(appearance, dtype=float), source)


def clip_relation(sub, obj, predicate="p", score=0.5):
    return ClipRelation(ClipPair(sub.clip_index, sub, obj), predicate, score)


@pytest.fixture(scope="session")
def small_scenario():
    from hcmvrd.synthetic import default_scenario, generate

    return generate(default_scenario(3, train_videos=12, test_videos=4))


@pytest.fixture(scope="session")
def small_config():
    from hcmvrd.pipeline import PipelineConfig, TrainingConfig

    return PipelineConfig(hidden=16, training=TrainingConfig(epochs=2, lr_drop_epoch=1, seed=0))


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record a PASS/FAIL line for the end-of-run summary, then return the flag."""

    def record(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        _VERDICTS.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
