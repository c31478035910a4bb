"""Ising graph model: energy evaluation, clamping, basis conversion, enumeration.

A machine is a complete or sparse graph of binary nodes partitioned into
[visible-input | visible-output | hidden], in that index order. The energy of
a configuration s is

    E(s) = sum_i bias_i * s_i + sum_{(k,l)} coupling_kl * s_k * s_l

with each unordered pair counted once. Probabilities follow the Boltzmann
distribution exp(-beta * E) / Z.

Two node alphabets are supported: {0,1} (the default working basis) and
{-1,+1} (the convention of annealer hardware). ``convert_basis`` maps the
parameters between the two so that the Boltzmann distribution is unchanged.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from enum import Enum
from functools import cached_property, lru_cache
from types import MappingProxyType
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import CapacityError

# Full enumeration is used as the exact oracle; 2^24 states is the default
# ceiling beyond which operations refuse to enumerate.
ENUMERATION_CAP = 24

# States are generated in blocks so a 2^24 sweep never materializes the full
# (2^N, N) matrix at once.
_BLOCK_BITS = 20


class Basis(str, Enum):
    """Node alphabet. ZERO_ONE uses {0,1}; PLUS_MINUS uses {-1,+1}."""

    ZERO_ONE = "01"
    PLUS_MINUS = "pm1"

    @property
    def symbols(self) -> tuple[int, int]:
        return (0, 1) if self is Basis.ZERO_ONE else (-1, 1)


@dataclass(frozen=True)
class SpinState:
    """One configuration of every node, in a declared basis."""

    values: tuple[int, ...]
    basis: Basis = Basis.ZERO_ONE

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(int(v) for v in self.values))
        allowed = set(self.basis.symbols)
        bad = [v for v in self.values if v not in allowed]
        if bad:
            raise ValueError(f"state values {bad} not in basis {self.basis.value}")

    def __len__(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)


@dataclass(frozen=True)
class BoltzmannMachine:
    """Node partition, biases and symmetric pairwise couplings.

    Couplings are stored sparsely, keyed by the (min, max) index pair; lookup
    is symmetric. ``h_max``/``j_max`` record the intended parameter bounds but
    are only *checked* on demand (``assert_within_bounds``); training clips to
    them, and bundled reference machines may sit exactly on or slightly past
    the caps.
    """

    num_visible_input: int
    num_visible_output: int
    num_hidden: int
    biases: np.ndarray
    couplings: Mapping[tuple[int, int], float]
    basis: Basis = Basis.ZERO_ONE
    h_max: float = 1.0
    j_max: float = 1.0

    def __post_init__(self):
        n = self.num_nodes
        if min(self.num_visible_input, self.num_visible_output, self.num_hidden) < 0:
            raise ValueError("partition sizes must be nonnegative")
        biases = np.array(self.biases, dtype=np.float64).reshape(-1)
        if biases.shape != (n,):
            raise ValueError(f"expected {n} biases, got {biases.shape}")
        biases.flags.writeable = False
        object.__setattr__(self, "biases", biases)

        normalized: dict[tuple[int, int], float] = {}
        for pair, value in dict(self.couplings).items():
            k, l = int(pair[0]), int(pair[1])
            if k == l:
                raise ValueError(f"self-coupling ({k},{k}) is not allowed")
            if not (0 <= k < n and 0 <= l < n):
                raise ValueError(f"coupling ({k},{l}) out of range for {n} nodes")
            key = (min(k, l), max(k, l))
            if key in normalized:
                raise ValueError(f"duplicate coupling entry for pair {key}")
            normalized[key] = float(value)
        object.__setattr__(self, "couplings", MappingProxyType(normalized))

        if self.h_max <= 0 or self.j_max <= 0:
            raise ValueError("h_max and j_max must be positive")

    # -- structure ------------------------------------------------------

    @property
    def num_visible(self) -> int:
        return self.num_visible_input + self.num_visible_output

    @property
    def num_nodes(self) -> int:
        return self.num_visible + self.num_hidden

    @property
    def visible_indices(self) -> range:
        return range(self.num_visible)

    @property
    def input_indices(self) -> range:
        return range(self.num_visible_input)

    @property
    def output_indices(self) -> range:
        return range(self.num_visible_input, self.num_visible)

    @property
    def hidden_indices(self) -> range:
        return range(self.num_visible, self.num_nodes)

    def coupling(self, k: int, l: int) -> float:
        """Symmetric lookup; absent pairs couple with strength 0."""
        return self.couplings.get((min(k, l), max(k, l)), 0.0)

    @cached_property
    def coupling_matrix(self) -> np.ndarray:
        """Upper-triangular dense matrix J with J[k,l] for k<l, zeros elsewhere."""
        J = np.zeros((self.num_nodes, self.num_nodes))
        for (k, l), v in self.couplings.items():
            J[k, l] = v
        J.flags.writeable = False
        return J

    def node_class(self, k: int) -> str:
        if k < self.num_visible_input:
            return "input"
        if k < self.num_visible:
            return "output"
        return "hidden"

    def with_parameters(
        self, biases: np.ndarray, couplings: Mapping[tuple[int, int], float]
    ) -> "BoltzmannMachine":
        """Same graph metadata, new parameter values."""
        return replace(self, biases=biases, couplings=dict(couplings))

    def assert_within_bounds(self) -> None:
        """Raise if any |bias| > h_max or |coupling| > j_max."""
        if np.any(np.abs(self.biases) > self.h_max):
            worst = float(np.max(np.abs(self.biases)))
            raise ValueError(f"bias magnitude {worst} exceeds h_max={self.h_max}")
        for pair, v in self.couplings.items():
            if abs(v) > self.j_max:
                raise ValueError(f"coupling {pair}={v} exceeds j_max={self.j_max}")


def complete_pairs(num_nodes: int) -> list[tuple[int, int]]:
    """All unordered pairs (k, l) with k < l."""
    return [(k, l) for k in range(num_nodes) for l in range(k + 1, num_nodes)]


def random_machine(
    num_visible_input: int,
    num_visible_output: int,
    num_hidden: int,
    rng: np.random.Generator,
    scale: float = 1.0,
    basis: Basis = Basis.ZERO_ONE,
    h_max: float = 1.0,
    j_max: float = 1.0,
) -> BoltzmannMachine:
    """Complete-graph machine with parameters i.i.d. uniform on [-scale, scale]."""
    n = num_visible_input + num_visible_output + num_hidden
    biases = rng.uniform(-scale, scale, size=n)
    couplings = {pair: float(rng.uniform(-scale, scale)) for pair in complete_pairs(n)}
    return BoltzmannMachine(
        num_visible_input=num_visible_input,
        num_visible_output=num_visible_output,
        num_hidden=num_hidden,
        biases=biases,
        couplings=couplings,
        basis=basis,
        h_max=h_max,
        j_max=j_max,
    )


# -- energy ---------------------------------------------------------------


def energy(bm: BoltzmannMachine, state: SpinState) -> float:
    """Energy of one configuration: bias terms plus each pair counted once."""
    if state.basis is not bm.basis:
        raise ValueError(f"state basis {state.basis.value} != machine basis {bm.basis.value}")
    if len(state) != bm.num_nodes:
        raise ValueError(f"state has {len(state)} values, machine has {bm.num_nodes} nodes")
    s = state.as_array()
    total = float(bm.biases @ s)
    for (k, l), v in bm.couplings.items():
        total += v * s[k] * s[l]
    return total


def energies(bm: BoltzmannMachine, states: np.ndarray) -> np.ndarray:
    """Vectorized energy for a (M, N) matrix of configurations."""
    S = np.asarray(states, dtype=np.float64)
    J = bm.coupling_matrix
    return S @ bm.biases + np.einsum("sk,sk->s", S @ J, S)


def check_capacity(num_nodes: int, cap: int = ENUMERATION_CAP) -> None:
    if num_nodes > cap:
        raise CapacityError(f"{num_nodes} nodes exceeds the enumeration cap of {cap}")


@lru_cache(maxsize=8)
def cached_state_table(num_nodes: int, basis: Basis) -> np.ndarray:
    """Float64 copy of the full state table; cached because sweeps and training
    loops reuse the same table thousands of times. Only sensible for problem
    sizes that fit one enumeration block."""
    table = state_matrix(num_nodes, basis).astype(np.float64)
    table.flags.writeable = False
    return table


def state_matrix(
    num_nodes: int,
    basis: Basis = Basis.ZERO_ONE,
    start: int = 0,
    stop: int | None = None,
) -> np.ndarray:
    """Rows of the lexicographic state table for indices [start, stop).

    Node 0 is the most significant bit, so row index and bit pattern agree:
    index 5 of a 3-node table is (1, 0, 1).
    """
    if stop is None:
        stop = 1 << num_nodes
    idx = np.arange(start, stop, dtype=np.int64)
    shifts = np.arange(num_nodes - 1, -1, -1, dtype=np.int64)
    bits = (idx[:, None] >> shifts) & 1
    if basis is Basis.PLUS_MINUS:
        return (2 * bits - 1).astype(np.int8)
    return bits.astype(np.int8)


def enumerate_states(
    num_nodes: int, basis: Basis = Basis.ZERO_ONE, cap: int = ENUMERATION_CAP
) -> Iterator[SpinState]:
    """Yield all 2^N states in lexicographic order (node 0 most significant)."""
    check_capacity(num_nodes, cap)
    for start in range(0, 1 << num_nodes, 1 << min(_BLOCK_BITS, num_nodes)):
        block = state_matrix(num_nodes, basis, start, min(start + (1 << _BLOCK_BITS), 1 << num_nodes))
        for row in block:
            yield SpinState(tuple(int(v) for v in row), basis)


def all_energies(bm: BoltzmannMachine, cap: int = ENUMERATION_CAP) -> np.ndarray:
    """Energy of every state, indexed lexicographically; blocked to limit memory."""
    n = bm.num_nodes
    check_capacity(n, cap)
    total = 1 << n
    if n <= _BLOCK_BITS:
        return energies(bm, cached_state_table(n, bm.basis))
    out = np.empty(total)
    for start in range(0, total, 1 << _BLOCK_BITS):
        stop = min(start + (1 << _BLOCK_BITS), total)
        out[start:stop] = energies(bm, state_matrix(n, bm.basis, start, stop))
    return out


def state_index(values: Sequence[int], basis: Basis = Basis.ZERO_ONE) -> int:
    """Lexicographic index of a configuration (inverse of ``state_matrix`` rows)."""
    idx = 0
    for v in values:
        bit = int(v) if basis is Basis.ZERO_ONE else (int(v) + 1) // 2
        idx = (idx << 1) | bit
    return idx


def ground_states(
    bm: BoltzmannMachine, cap: int = ENUMERATION_CAP
) -> tuple[list[SpinState], float]:
    """Exact energy minimizers by full enumeration; ties all included.

    Tie detection is exact float equality: every energy comes out of the same
    arithmetic, so states related by symmetry produce identical values.
    """
    E = all_energies(bm, cap)
    e_min = float(E.min())
    indices = np.flatnonzero(E == e_min)
    n = bm.num_nodes
    states = []
    for idx in indices:
        row = state_matrix(n, bm.basis, int(idx), int(idx) + 1)[0]
        states.append(SpinState(tuple(int(v) for v in row), bm.basis))
    return states, e_min


# -- clamping ---------------------------------------------------------------


def clamp_visible(
    bm: BoltzmannMachine, assignment: Mapping[int, int]
) -> tuple[BoltzmannMachine, float]:
    """Fix a subset of nodes and fold their effect into the free subgraph.

    Every free node j picks up ``sum_i coupling_ij * value_i`` on its bias;
    couplings among free nodes are untouched. The returned offset collects the
    clamped biases and clamped-pair couplings, so that for any free
    configuration h:

        energy(bm, assignment + h) == offset + energy(reduced, h)

    Energy gaps among free-node configurations are therefore unchanged.
    """
    allowed = set(bm.basis.symbols)
    clamped: dict[int, float] = {}
    for k, v in assignment.items():
        k = int(k)
        if not 0 <= k < bm.num_nodes:
            raise ValueError(f"clamped node {k} out of range")
        if int(v) not in allowed:
            raise ValueError(f"clamped value {v} not in basis {bm.basis.value}")
        clamped[k] = float(v)

    free = [k for k in range(bm.num_nodes) if k not in clamped]
    pos = {k: i for i, k in enumerate(free)}

    new_biases = np.array([bm.biases[k] for k in free])
    offset = sum(bm.biases[k] * v for k, v in clamped.items())

    new_couplings: dict[tuple[int, int], float] = {}
    for (k, l), v in bm.couplings.items():
        k_in, l_in = k in clamped, l in clamped
        if k_in and l_in:
            offset += v * clamped[k] * clamped[l]
        elif k_in:
            new_biases[pos[l]] += v * clamped[k]
        elif l_in:
            new_biases[pos[k]] += v * clamped[l]
        else:
            new_couplings[(pos[k], pos[l])] = v

    counts = {"input": 0, "output": 0, "hidden": 0}
    for k in free:
        counts[bm.node_class(k)] += 1

    reduced = BoltzmannMachine(
        num_visible_input=counts["input"],
        num_visible_output=counts["output"],
        num_hidden=counts["hidden"],
        biases=new_biases,
        couplings=new_couplings,
        basis=bm.basis,
        h_max=bm.h_max,
        j_max=bm.j_max,
    )
    return reduced, float(offset)


# -- basis conversion -------------------------------------------------------


def convert_state(state: SpinState) -> SpinState:
    """Map {0,1} values to {-1,+1} via S = 2s - 1, or back via s = (S + 1) / 2."""
    if state.basis is Basis.ZERO_ONE:
        return SpinState(tuple(2 * v - 1 for v in state.values), Basis.PLUS_MINUS)
    return SpinState(tuple((v + 1) // 2 for v in state.values), Basis.ZERO_ONE)


def convert_basis(bm: BoltzmannMachine) -> BoltzmannMachine:
    """Re-express the parameters in the other node alphabet.

    {0,1} -> {-1,+1}:  J' = J/4 and b'_k = b_k/2 + (1/4) sum_l J_kl.
    The reverse direction inverts those relations. State-by-state energies
    shift by a constant, so Boltzmann probabilities are preserved; applying
    the conversion twice returns the original parameters.
    """
    n = bm.num_nodes
    neighbor_sum = np.zeros(n)
    for (k, l), v in bm.couplings.items():
        neighbor_sum[k] += v
        neighbor_sum[l] += v

    if bm.basis is Basis.ZERO_ONE:
        new_couplings = {pair: v / 4.0 for pair, v in bm.couplings.items()}
        new_biases = bm.biases / 2.0 + neighbor_sum / 4.0
        new_basis = Basis.PLUS_MINUS
    else:
        new_couplings = {pair: 4.0 * v for pair, v in bm.couplings.items()}
        new_biases = 2.0 * bm.biases - 2.0 * neighbor_sum
        new_basis = Basis.ZERO_ONE

    return replace(bm, biases=new_biases, couplings=new_couplings, basis=new_basis)


# -- model files ------------------------------------------------------------


def model_to_dict(bm: BoltzmannMachine, metadata: dict | None = None) -> dict:
    doc = {
        "basis": bm.basis.value,
        "m_I": bm.num_visible_input,
        "m_O": bm.num_visible_output,
        "n": bm.num_hidden,
        "biases": [float(b) for b in bm.biases],
        "couplings": [[k, l, v] for (k, l), v in sorted(bm.couplings.items())],
        "h_max": bm.h_max,
        "j_max": bm.j_max,
    }
    if metadata:
        doc["metadata"] = metadata
    return doc


def model_from_dict(doc: dict) -> tuple[BoltzmannMachine, dict]:
    try:
        bm = BoltzmannMachine(
            num_visible_input=int(doc["m_I"]),
            num_visible_output=int(doc["m_O"]),
            num_hidden=int(doc["n"]),
            biases=np.asarray(doc["biases"], dtype=np.float64),
            couplings={(int(k), int(l)): float(v) for k, l, v in doc["couplings"]},
            basis=Basis(doc["basis"]),
            h_max=float(doc.get("h_max", 1.0)),
            j_max=float(doc.get("j_max", 1.0)),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed model document: {exc}") from exc
    return bm, doc.get("metadata", {})


def save_model(bm: BoltzmannMachine, path: str | os.PathLike, metadata: dict | None = None) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(model_to_dict(bm, metadata), fh, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def load_model(path: str | os.PathLike) -> BoltzmannMachine:
    return load_model_entry(path)[0]


def load_model_entry(path: str | os.PathLike) -> tuple[BoltzmannMachine, dict]:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
