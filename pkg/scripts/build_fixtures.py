#!/usr/bin/env python3
"""Regenerate the bundled reference machines and dataset CSVs.

The two large machines are stored as upper-triangular integer matrices in
1e-4 units (diagonal = bias, off-diagonal = coupling); the small ones carry
their literal values. Output lands in src/isingbm/data/.
"""

import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

import numpy as np

from isingbm.datasets import adder2, logic_gate, save_dataset, two_phase
from isingbm.model import Basis, BoltzmannMachine, save_model

FIXTURE_DIR = ROOT / "src" / "isingbm" / "data" / "fixtures"
DATASET_DIR = ROOT / "src" / "isingbm" / "data" / "datasets"


def machine_from_triangle(rows, m_i, m_o, n_h, scale=1e-4, h_max=1.0, j_max=1.0):
    n = len(rows)
    biases = np.zeros(n)
    couplings = {}
    for k, row in enumerate(rows):
        if len(row) != n - k:
            raise ValueError(f"row {k} has {len(row)} entries, expected {n - k}")
        biases[k] = row[0] * scale
        for offset, value in enumerate(row[1:], start=1):
            if value != 0:
                couplings[(k, k + offset)] = value * scale
    return BoltzmannMachine(
        num_visible_input=m_i,
        num_visible_output=m_o,
        num_hidden=n_h,
        biases=biases,
        couplings=couplings,
        basis=Basis.ZERO_ONE,
        h_max=h_max,
        j_max=j_max,
    )


# 10 visible + 8 hidden machine trained on the single-boundary step patterns.
TWO_PHASE_TRIANGLE = [
    [7009, -9446, -4488, -392, -918, 1762, 1967, 2256, 2911, 1935, -3519, 2152, 5159, -329, 1238, -146, 2742, 4321],
    [6927, -9555, -3119, -1885, 984, 1944, 2216, 2024, 946, -4469, 1052, 7119, 2408, 1518, 369, 3999, 2524],
    [6546, -7917, -2526, -39, -1300, 823, 540, 1529, -4151, 3168, 5857, -242, 2070, 2206, 5279, 3935],
    [2176, -6351, -2532, -1320, -58, 887, -831, -2895, 3605, 7262, 516, 1932, 69, 6981, 5151],
    [4953, -8388, -4282, -2942, 295, -1597, -1135, 3144, 4633, 1975, 508, 668, 4561, 7515],
    [3723, -9747, -4126, -873, -1271, 162, 5440, 3709, 1110, -2177, -613, 3087, 6950],
    [7447, -9664, -3826, -1666, 1104, 5864, 1671, 1570, -4787, -780, 2767, 3082],
    [8708, -9827, -6112, -21, 5564, 1466, 1168, -5490, 846, 739, 2666],
    [-8, -10000, 555, 5624, -300, 2914, -5560, -1283, 778, 4185],
    [1141, -101, 3150, -3195, 1092, -4924, 112, -1851, -366],
    [7293, 2351, 1420, 785, -848, 1482, 751, 1185],
    [-6076, -7248, -1570, 1920, 1674, -3135, -5219],
    [-8765, -2469, -265, 868, -6644, -8203],
    [1248, 2644, -1203, 1251, -2923],
    [6754, 2002, 1893, 1262],
    [5498, 1390, 1628],
    [-7724, -8370],
    [-5756],
]

# 4-input / 3-output / 10-hidden machine for the 2-bit adder. The published
# parameter sets for the two training modes are identical; both names ship
# with a caveat in their metadata.
ADDER_TRIANGLE = [
    [7388, 1673, 403, 1804, -10000, -1099, 3941, -4622, -4148, -4683, -2312, 1966, -5299, 2105, -5598, 2222, 2365],
    [5546, -27, 909, -3553, 27, -622, -3041, -4952, -808, -2131, -575, -112, -2668, -757, -5554, 5716],
    [-1313, -765, -9831, -2594, -1880, 8027, 3455, 2541, -2504, 6611, -1098, -637, 2159, -3021, -940],
    [8349, -5823, -585, -3950, -5099, 6058, -1130, 2169, -7715, 4310, -6061, -156, 2999, 6243],
    [4358, 9143, 4360, 3205, -4261, -752, -595, -1433, 219, 4846, -1109, 457, 6712],
    [-5516, 1903, -3466, 996, 2507, 742, 4412, 3241, -128, -4531, -171, -898],
    [1380, -413, -4725, -5755, 2427, 4392, -4545, 5817, -4866, -2200, -7568],
    [-1569, 4807, -577, -395, -796, -2633, 3799, 4702, -1537, 3292],
    [1274, 3303, 4542, 2661, 2408, -423, 3445, 2003, -1049],
    [9421, 4099, 1761, -4561, -824, -3707, 2405, -1580],
    [-9482, -4292, 3708, -5064, 5116, -3102, -6825],
    [-10693, -4500, -5952, 4610, -1515, -4579],
    [10075, -2927, -5589, 2537, -8234],
    [-4459, -662, 3866, -4704],
    [-137, -330, -786],
    [4713, 4098],
    [6301],
]


def small_machine(biases, couplings, m_i, m_o, n_h):
    return BoltzmannMachine(
        num_visible_input=m_i,
        num_visible_output=m_o,
        num_hidden=n_h,
        biases=np.array(biases),
        couplings=couplings,
        basis=Basis.ZERO_ONE,
    )


def build():
    FIXTURE_DIR.mkdir(parents=True, exist_ok=True)
    DATASET_DIR.mkdir(parents=True, exist_ok=True)

    # XOR machine engineered so its energy minimizers are exactly the gate rows.
    xor_ground = small_machine(
        biases=[0.25, 0.25, 0.25, 1.0],
        couplings={(0, 1): 0.5, (0, 2): 0.5, (1, 2): 0.5, (0, 3): -1.0, (1, 3): -1.0, (2, 3): -1.0},
        m_i=2, m_o=1, n_h=1,
    )
    save_model(
        xor_ground,
        FIXTURE_DIR / "xor_ground_state.json",
        metadata={"description": "hand-designed XOR machine whose ground states are the gate rows"},
    )

    # XOR machine produced by gradient training (finite-temperature optimum).
    xor_trained = small_machine(
        biases=[0.2250, 0.0928, 0.2250, 0.9104],
        couplings={
            (0, 1): -0.3329, (0, 2): 0.3090, (1, 2): -0.3329,
            (0, 3): -0.8482, (1, 3): 1.0, (2, 3): -0.8482,
        },
        m_i=2, m_o=1, n_h=1,
    )
    save_model(
        xor_trained,
        FIXTURE_DIR / "xor_trained.json",
        metadata={"description": "gradient-trained XOR machine"},
    )

    # AND machine trained as a function approximator.
    and_gate = small_machine(
        biases=[0.3111, 0.3011, 0.6791, 0.2706],
        couplings={
            (0, 1): 0.5737, (0, 2): -0.6829, (1, 2): -0.6727,
            (0, 3): -0.6101, (1, 3): -0.6026, (2, 3): 0.3585,
        },
        m_i=2, m_o=1, n_h=1,
    )
    save_model(
        and_gate,
        FIXTURE_DIR / "and_gate.json",
        metadata={"description": "AND-gate function approximator, 3 visible + 1 hidden"},
    )

    two_phase_bm = machine_from_triangle(TWO_PHASE_TRIANGLE, m_i=10, m_o=0, n_h=8)
    save_model(
        two_phase_bm,
        FIXTURE_DIR / "two_phase_trained.json",
        metadata={
            "description": "10 visible + 8 hidden machine for single-boundary step patterns",
            "reported_beta": 2.0,
            "reported_beta_range": [1.5, 3.0],
        },
    )

    adder_caveat = (
        "adder_function and adder_distribution ship identical parameters: the "
        "recorded values for the two training modes were indistinguishable, so "
        "per-mode attribution is unreliable"
    )
    adder_fa = machine_from_triangle(ADDER_TRIANGLE, m_i=4, m_o=3, n_h=10, h_max=2.0, j_max=1.0)
    save_model(
        adder_fa,
        FIXTURE_DIR / "adder_function.json",
        metadata={
            "description": "2-bit adder machine labelled as conditional-likelihood trained",
            "reported_beta": 5.0,
            "caveat": adder_caveat,
        },
    )
    save_model(
        adder_fa,
        FIXTURE_DIR / "adder_distribution.json",
        metadata={
            "description": "2-bit adder machine labelled as distribution trained",
            "reported_beta": 5.0,
            "caveat": adder_caveat,
        },
    )

    save_dataset(logic_gate("AND"), DATASET_DIR / "and.csv")
    save_dataset(logic_gate("OR"), DATASET_DIR / "or.csv")
    save_dataset(logic_gate("XOR"), DATASET_DIR / "xor.csv")
    save_dataset(adder2(), DATASET_DIR / "adder2.csv")
    save_dataset(two_phase(10), DATASET_DIR / "two_phase_10.csv")
    print(f"wrote fixtures to {FIXTURE_DIR} and datasets to {DATASET_DIR}")


if __name__ == "__main__":
    build()
