import math

import pytest

from dualmesh.core import AssocState, Band, Channel
from dualmesh.formation import join
from dualmesh.network import Network
from dualmesh.radio import AttenuationMatrix


def relay_matrix(relay_db=60.0, edge_db=60.0, edge_edge_db=60.0, hw_edge_db=105.0, ids=(0, 1, 2, 3)):
    m = AttenuationMatrix(list(ids))
    m.set(0, 1, relay_db)
    for e in ids[2:]:
        m.set(1, e, edge_db)
        m.set(0, e, hw_edge_db)
    for a in ids[2:]:
        for b in ids[2:]:
            if a < b:
                m.set(a, b, edge_edge_db)
    return m


def build_fig1(single_band=False, policy="shared", hw_band=Band.B58, **kw) -> Network:
    """HW AP 0, software AP 1, edges 2 and 3, joined in id order."""
    hw_ch = Channel(hw_band, 36 if hw_band is Band.B58 else 1)
    net = Network.create("mesh", 0, hw_ch, relay_matrix(**kw), single_band=single_band,
                         channel_policy=policy)
    for nid in (1, 2, 3):
        net.add_mesh_node(nid)
        join(net, nid)
    return net


@pytest.fixture
def fig1():
    return build_fig1()


@pytest.fixture
def fig1_single():
    return build_fig1(single_band=True, hw_band=Band.B24)


# acceptance criteria report one line each at the end of the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
