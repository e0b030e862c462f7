import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def naive_rect_sum(frame, x, y, w, h):
    total = 0.0
    for row in range(y, y + h):
        for col in range(x, x + w):
            total += frame[row, col]
    return total
