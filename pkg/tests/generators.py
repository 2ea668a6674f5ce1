"""Random scenario builders shared by the property and acceptance suites."""

import random

from dualmesh.scenario import from_dict


def random_mesh(seed: int, side: float = 120.0):
    """3 to 8 nodes scattered over a square, HW AP in the corner, 2+ saturating uplink flows."""
    rng = random.Random(seed)
    n = rng.randint(3, 8)
    pos = {0: [0.0, 0.0]}
    for i in range(1, n):
        pos[i] = [round(rng.uniform(0, side), 2), round(rng.uniform(0, side), 2)]
    mesh = list(range(1, n))
    srcs = rng.sample(mesh, rng.randint(2, len(mesh)))
    flows = [{"id": f"f{s}", "src": s, "dst": "internet", "rate": 20e6, "start": 5.0}
             for s in sorted(srcs)]
    return from_dict({
        "name": f"random_{seed}",
        "hardware_ap": {"id": 0, "band": "5.8", "channel": 36},
        "nodes": [{"id": i, "start": 0.2 * i} for i in mesh],
        "attenuation": {"positions": pos},
        "traffic": {"flows": flows},
        "sim": {"duration": 12.0, "seed": seed, "window": [6.0, 12.0]},
    })
