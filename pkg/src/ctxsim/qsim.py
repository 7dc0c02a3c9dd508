"""Dense statevector simulator for small composite registers of qudits.

Registers are indexed by their position in ``dims``.  Bit strings spread
over consecutive qubit registers are read most-significant-bit first:
register j of an n-qubit block carries the bit of weight 2**(n-1-j).

All randomness flows through an injected ``numpy.random.Generator``;
there is no global RNG.  States are immutable, operations return new
states, and the global phase is never normalized away (comparisons go
through :func:`equal_up_to_global_phase`).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ATOL_STATE = 1e-9
ATOL_EIG = 1e-8

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0)


class StateVector:
    """Unit-norm amplitude vector over a composite register."""

    __slots__ = ("dims", "amps")

    def __init__(self, dims, amps):
        dims = tuple(int(d) for d in dims)
        if any(d < 2 for d in dims):
            raise ValueError("register dimensions must be at least 2")
        amps = np.array(amps, dtype=complex).reshape(-1)
        size = 1
        for d in dims:
            size *= d
        if amps.size != size:
            raise ValueError(f"expected {size} amplitudes for dims {dims}, got {amps.size}")
        norm = float(np.linalg.norm(amps))
        if abs(norm - 1.0) > ATOL_STATE:
            raise ValueError(f"state norm {norm} is not 1 within {ATOL_STATE}")
        amps.setflags(write=False)
        self.dims = dims
        self.amps = amps

    @classmethod
    def basis(cls, dims, digits) -> "StateVector":
        """Computational basis state |digits> (one digit per register)."""
        dims = tuple(int(d) for d in dims)
        digits = tuple(int(v) for v in digits)
        if len(digits) != len(dims):
            raise ValueError("one digit per register required")
        idx = 0
        for d, v in zip(dims, digits):
            if not 0 <= v < d:
                raise ValueError(f"digit {v} out of range for dimension {d}")
            idx = idx * d + v
        amps = np.zeros(int(np.prod(dims)), dtype=complex)
        amps[idx] = 1.0
        return cls(dims, amps)

    @property
    def num_registers(self) -> int:
        return len(self.dims)

    def tensor(self, other: "StateVector") -> "StateVector":
        return StateVector(self.dims + other.dims, np.kron(self.amps, other.amps))

    def __repr__(self) -> str:
        return f"StateVector(dims={self.dims})"


@dataclass(frozen=True)
class PauliKey:
    """Qubit-wise Pauli pad key k = (x, z) for U_k = X^x Z^z."""

    x: tuple
    z: tuple

    def __post_init__(self):
        x = tuple(int(b) for b in self.x)
        z = tuple(int(b) for b in self.z)
        if len(x) != len(z):
            raise ValueError("x and z must have equal length")
        if any(b not in (0, 1) for b in x + z):
            raise ValueError("pad keys are bit strings")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)

    def __len__(self) -> int:
        return len(self.x)

    def __xor__(self, other: "PauliKey") -> "PauliKey":
        # Group law up to global phase: X^x Z^z X^x' Z^z' ~ X^(x^x') Z^(z^z').
        if len(other) != len(self):
            raise ValueError("key length mismatch")
        return PauliKey(
            tuple(a ^ b for a, b in zip(self.x, other.x)),
            tuple(a ^ b for a, b in zip(self.z, other.z)),
        )

    @classmethod
    def identity(cls, n: int) -> "PauliKey":
        return cls((0,) * n, (0,) * n)

    @classmethod
    def uniform(cls, n: int, rng: np.random.Generator) -> "PauliKey":
        return cls(tuple(int(b) for b in rng.integers(0, 2, n)),
                   tuple(int(b) for b in rng.integers(0, 2, n)))

    def bits(self) -> tuple:
        """Flat (x..., z...) bit tuple, the canonical encryption payload."""
        return self.x + self.z

    @classmethod
    def from_bits(cls, bits) -> "PauliKey":
        bits = tuple(int(b) for b in bits)
        if len(bits) % 2:
            raise ValueError("pad bit payload must have even length")
        n = len(bits) // 2
        return cls(bits[:n], bits[n:])


class Observable:
    """Hermitian matrix with a cached eigensystem of distinct eigenvalues.

    Eigenvalues within ATOL_EIG of each other are clustered into a single
    (eigenvalue, projector) pair; projectors are built from the clustered
    eigenvector columns so they are exactly idempotent up to float error.
    """

    __slots__ = ("dim", "matrix", "eigensystem")

    def __init__(self, matrix):
        matrix = np.array(matrix, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("observable must be a square matrix")
        if np.max(np.abs(matrix - matrix.conj().T)) > 1e-9:
            raise ValueError("observable must be Hermitian within 1e-9")
        self.dim = matrix.shape[0]
        self.matrix = matrix
        self.matrix.setflags(write=False)
        vals, vecs = np.linalg.eigh(matrix)
        pairs = []
        i = 0
        while i < len(vals):
            j = i
            while j + 1 < len(vals) and vals[j + 1] - vals[i] <= ATOL_EIG:
                j += 1
            block = vecs[:, i:j + 1]
            proj = block @ block.conj().T
            pairs.append((float(np.mean(vals[i:j + 1])), proj))
            i = j + 1
        self.eigensystem = tuple(pairs)

    def __repr__(self) -> str:
        return f"Observable(dim={self.dim}, eigenvalues={[v for v, _ in self.eigensystem]})"


def _targets_to_front(amps: np.ndarray, dims, targets):
    """Reshape amps to a (target block, rest) matrix; returns inverse info."""
    n = len(dims)
    targets = list(targets)
    if len(set(targets)) != len(targets):
        raise ValueError("duplicate target registers")
    if any(not 0 <= t < n for t in targets):
        raise ValueError(f"target out of range for {n} registers")
    rest = [i for i in range(n) if i not in targets]
    perm = targets + rest
    block = int(np.prod([dims[t] for t in targets])) if targets else 1
    arr = amps.reshape(dims).transpose(perm).reshape(block, -1)
    return arr, perm, [dims[p] for p in perm]


def _from_front(arr: np.ndarray, perm, permuted_dims) -> np.ndarray:
    inv = np.argsort(perm)
    return arr.reshape(permuted_dims).transpose(inv).reshape(-1)


def _apply_block(state: StateVector, m: np.ndarray, targets) -> np.ndarray:
    """Apply an arbitrary square matrix to the targeted subspace (raw amps)."""
    arr, perm, pdims = _targets_to_front(state.amps, state.dims, targets)
    if m.shape != (arr.shape[0], arr.shape[0]):
        raise ValueError(f"matrix of dimension {m.shape[0]} does not match target dimension {arr.shape[0]}")
    return _from_front(m @ arr, perm, pdims)


def apply_unitary(state: StateVector, u, targets) -> StateVector:
    """Apply unitary u to the given registers, returning the new state."""
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError("unitary must be a square matrix")
    if np.max(np.abs(u @ u.conj().T - np.eye(u.shape[0]))) > 1e-9:
        raise ValueError("matrix is not unitary within 1e-9")
    return StateVector(state.dims, _apply_block(state, u, targets))


def branch_measure(state: StateVector, obs: Observable, targets):
    """Analytic measurement branches of obs on the targeted registers.

    Returns a list of (eigenvalue, probability, post_state) triples covering
    the full eigensystem; post_state is None for (numerically) zero branches.
    """
    branches = []
    for val, proj in obs.eigensystem:
        raw = _apply_block(state, proj, targets)
        p = float(np.vdot(raw, raw).real)
        if p < 1e-15:
            branches.append((val, 0.0, None))
        else:
            branches.append((val, p, StateVector(state.dims, raw / np.sqrt(p))))
    return branches


def measure_observable(state: StateVector, obs: Observable, targets, rng: np.random.Generator):
    """Born-rule measurement; returns (eigenvalue, post-measurement state)."""
    branches = branch_measure(state, obs, targets)
    r = rng.random()
    acc = 0.0
    for val, p, post in branches:
        acc += p
        if r < acc and post is not None:
            return val, post
    for val, p, post in reversed(branches):
        if post is not None:
            return val, post
    raise AssertionError("no measurement branch has positive probability")


def _digits_of(index: int, dims) -> tuple:
    out = []
    for d in reversed(dims):
        out.append(index % d)
        index //= d
    return tuple(reversed(out))


def register_distribution(state: StateVector, targets, basis: str = "standard"):
    """Exact outcome distribution of measuring the targeted registers.

    Returns {digit tuple: probability} with one entry per joint outcome.
    """
    work = _rotate_for_basis(state, targets, basis)
    arr, _, _ = _targets_to_front(work.amps, work.dims, targets)
    probs = np.einsum("ij,ij->i", arr, arr.conj()).real
    tdims = [state.dims[t] for t in targets]
    return {_digits_of(i, tdims): float(p) for i, p in enumerate(probs)}


def _rotate_for_basis(state: StateVector, targets, basis: str) -> StateVector:
    if basis == "standard":
        return state
    if basis != "hadamard":
        raise ValueError(f"unknown basis {basis!r}")
    for t in targets:
        if state.dims[t] != 2:
            raise ValueError("hadamard basis requires qubit registers")
    for t in targets:
        state = apply_unitary(state, H, [t])
    return state


def measure_registers(state: StateVector, targets, basis: str = "standard", rng: np.random.Generator = None):
    """Measure registers jointly; returns (digit tuple, post-measurement state).

    With basis="hadamard" each targeted qubit is rotated by H first; the
    measured registers are left in the post-rotation basis state, so they
    carry no remaining entanglement and may be dropped via remove_registers.
    """
    if rng is None:
        raise ValueError("an explicit rng is required")
    targets = list(targets)
    work = _rotate_for_basis(state, targets, basis)
    arr, perm, pdims = _targets_to_front(work.amps, work.dims, targets)
    probs = np.einsum("ij,ij->i", arr, arr.conj()).real
    total = float(probs.sum())
    r = rng.random() * total
    acc = 0.0
    idx = len(probs) - 1
    for i, p in enumerate(probs):
        acc += p
        if r < acc:
            idx = i
            break
    collapsed = np.zeros_like(arr)
    collapsed[idx] = arr[idx] / np.sqrt(probs[idx])
    tdims = [state.dims[t] for t in targets]
    return _digits_of(idx, tdims), StateVector(state.dims, _from_front(collapsed, perm, pdims))


def remove_registers(state: StateVector, targets) -> StateVector:
    """Drop registers that hold a definite computational basis value.

    Valid immediately after measuring those registers; errors if any
    amplitude weight lies outside a single joint basis value.
    """
    targets = list(targets)
    arr, _, _ = _targets_to_front(state.amps, state.dims, targets)
    weights = np.einsum("ij,ij->i", arr, arr.conj()).real
    idx = int(np.argmax(weights))
    if weights[idx] < 1.0 - ATOL_STATE:
        raise ValueError("registers to remove are still entangled or in superposition")
    rest_dims = tuple(d for i, d in enumerate(state.dims) if i not in targets)
    row = arr[idx]
    return StateVector(rest_dims, row / np.linalg.norm(row))


def apply_pauli_pad(state: StateVector, key: PauliKey, targets) -> StateVector:
    """Apply X^x Z^z qubit-wise (Z first, then X, per qubit)."""
    targets = list(targets)
    if len(key) != len(targets):
        raise ValueError(f"key length {len(key)} does not match {len(targets)} targets")
    for t in targets:
        if state.dims[t] != 2:
            raise ValueError("pauli pads act on qubit registers")
    amps = state.amps
    for t, xb, zb in zip(targets, key.x, key.z):
        m = I2
        if zb:
            m = Z @ m
        if xb:
            m = X @ m
        if m is not I2:
            amps = _apply_block(StateVector(state.dims, amps), m, [t])
    return StateVector(state.dims, amps)


def equal_up_to_global_phase(a: StateVector, b: StateVector, tol: float = 1e-9) -> bool:
    """True iff |<a|b>| >= 1 - tol."""
    if a.dims != b.dims:
        raise ValueError(f"dimension mismatch: {a.dims} vs {b.dims}")
    return bool(abs(np.vdot(a.amps, b.amps)) >= 1.0 - tol)
