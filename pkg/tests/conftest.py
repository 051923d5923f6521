import math

import pytest

from mindlink.session import joe_profile


def crc32_bitwise(data: bytes) -> int:
    """Reflected CRC-32 (poly 0xEDB88320), one bit at a time."""
    crc = 0xFFFFFFFF
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = (crc >> 1) ^ (0xEDB88320 if crc & 1 else 0)
    return crc ^ 0xFFFFFFFF


def pearson(a, b):
    n = len(a)
    ma, mb = sum(a) / n, sum(b) / n
    sab = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    saa = sum((x - ma) ** 2 for x in a)
    sbb = sum((y - mb) ** 2 for y in b)
    if math.sqrt(saa / n) < 1e-9 or math.sqrt(sbb / n) < 1e-9:
        return 0.0
    return sab / math.sqrt(saa * sbb)


def exhaustive_lag_score(trace_rows, template_rows, max_lag):
    """Mean over channels of max over every lag of overlap-only Pearson."""
    per_channel = []
    for x, y in zip(trace_rows, template_rows):
        best = None
        for lag in range(-max_lag, max_lag + 1):
            pairs = [(x[t + lag], y[t]) for t in range(len(y)) if 0 <= t + lag < len(x)]
            if len(pairs) < 2:
                continue
            r = pearson([p[0] for p in pairs], [p[1] for p in pairs])
            best = r if best is None else max(best, r)
        per_channel.append(0.0 if best is None else best)
    return sum(per_channel) / len(per_channel)


@pytest.fixture
def joe():
    return joe_profile()


@pytest.fixture
def yes(joe):
    return joe.item("YES")


@pytest.fixture
def no(joe):
    return joe.item("NO")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
