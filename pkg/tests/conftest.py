import numpy as np
import pytest

from mcastrl.topology import (
    EdgeCounters,
    LinkStateMatrices,
    NodeInfo,
    PortCounters,
    RawLinkCounters,
    Topology,
)
from mcastrl.traffic import TrafficProfile, gen_snapshots, gen_topology


def random_counters(topo: Topology, rng: np.random.Generator) -> RawLinkCounters:
    """Arbitrary but precondition-respecting counters for every edge."""
    edges = {}
    for key in topo.edges:
        bw_max = topo.links[key].bw_max
        dt = rng.uniform(0.5, 5.0)
        t0 = rng.uniform(0, 100)
        tx_p = rng.uniform(10, 1e5)
        rx_p = tx_p * rng.uniform(0.5, 1.0)
        pkts = tx_p + rx_p
        byt = rng.uniform(1e5, 1e7)
        delta = rng.uniform(0, bw_max) * dt / (8 / 1e6)
        drops = rng.uniform(0, 0.4) * pkts
        errs = rng.uniform(0, 0.4) * pkts
        fd, fe, fi, fj = rng.uniform(0, 1, size=4)
        i = PortCounters(tx_p, rng.uniform(0, 1e5), fi * byt, (1 - fi) * byt,
                         fd * drops, rng.uniform(0, 10), fe * errs, rng.uniform(0, 10), t0)
        j = PortCounters(rng.uniform(0, 1e5), rx_p, fj * (byt + delta), (1 - fj) * (byt + delta),
                         rng.uniform(0, 10), (1 - fd) * drops, rng.uniform(0, 10), (1 - fe) * errs, t0 + dt)
        rtt = rng.uniform(1e-4, 5e-3, size=2)
        one_way = rng.uniform(0, 0.02)
        both = 2 * one_way + rtt.sum()
        s = rng.uniform(0.3, 0.7)
        edges[key] = EdgeCounters(i, j, s * both, (1 - s) * both, rtt[0], rtt[1])
    return RawLinkCounters(edges)


def random_topology(n: int, rng: np.random.Generator, p: float = 0.4) -> Topology:
    nodes = [NodeInfo(k, float(rng.uniform(0, 200)), float(rng.uniform(0, 200))) for k in range(n)]
    pairs = {(int(rng.integers(k)), k) for k in range(1, n)}
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < p:
                pairs.add((u, v))
    edges = [(u, v, float(rng.uniform(5, 40))) for u, v in sorted(pairs)]
    return Topology.from_edges(nodes, edges)


def matrices_from_edges(n: int, values: dict) -> LinkStateMatrices:
    """``values`` maps (u, v) to a dict of channel values."""
    m = LinkStateMatrices.empty(n)
    for (u, v), d in values.items():
        for c, x in d.items():
            getattr(m, c)[u, v] = getattr(m, c)[v, u] = x
    return m


@pytest.fixture(scope="session")
def topo14():
    return gen_topology(14, 6)


@pytest.fixture(scope="session")
def snaps14(topo14):
    return gen_snapshots(topo14, TrafficProfile(), 12, seed=0)


# acceptance verdicts, echoed once more at the end of the session
VERDICTS: list[str] = []


def verdict(tag: str, ok: bool, detail: str) -> bool:
    line = f"{tag}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
