"""Trapdoor claw-free function layer with two backends.

The idealized backend realizes the claw relation exactly: a seeded random
permutation PRP over n-bit strings and a secret nonzero mask delta define
f_b(x) = PRP(x xor b*delta), so f_0(x0) = f_1(x1) iff x1 = x0 xor delta.
Both branch tables are part of the public key; claw-freeness is a
cryptographic property this toolkit never asserts, only the functional
ones (injectivity per branch, perfect claw matching, hidden-bit xor).

The toy-LWE backend demonstrates the noisy shape f_b(x) = A x + b*u + e
with u = A s + e_u at classroom parameters.  It supports eval/inv/chk but
not coherent superposition sampling.

Domain parsing: X = {0,1} x V, the first (most significant) bit carrying
the hidden-bit role; helpers first_bit/trailing_bits/dot_bits implement
that convention.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .qsim import StateVector


class UnsupportedBackend(ValueError):
    pass


def first_bit(x: int, n: int) -> int:
    """Most significant of the n bits of x."""
    return (x >> (n - 1)) & 1


def trailing_bits(x: int, n: int) -> int:
    """x with its most significant bit cleared (the V part of X = {0,1} x V)."""
    return x & ((1 << (n - 1)) - 1)


def dot_bits(a: int, b: int) -> int:
    """Inner product of bit strings modulo 2."""
    return (a & b).bit_count() & 1


@dataclass(frozen=True)
class IdealPublicKey:
    n: int
    tables: tuple  # tables[b][x] = f_b(x), both branches public

    def table_array(self, b: int) -> np.ndarray:
        return np.asarray(self.tables[b], dtype=np.int64)


@dataclass(frozen=True)
class IdealSecretKey:
    n: int
    inv_prp: tuple  # PRP^-1 as a table
    delta: int


@dataclass(frozen=True)
class LwePublicKey:
    n: int
    m: int
    q: int
    a: tuple  # m x n matrix rows
    u: tuple  # A s + e_u
    bound: int  # max infinity-norm deviation accepted by chk


@dataclass(frozen=True)
class LweSecretKey:
    n: int
    s: tuple


@dataclass(frozen=True)
class TcfKeyPair:
    pk: object
    sk: object
    domain_bits: int
    hidden_bit: int | None

    def to_json(self) -> str:
        if isinstance(self.pk, IdealPublicKey):
            return json.dumps({
                "backend": "ideal",
                "domain_bits": self.domain_bits,
                "hidden_bit": self.hidden_bit,
                "tables": [list(t) for t in self.pk.tables],
                "secret": {"inv_prp": list(self.sk.inv_prp), "delta": self.sk.delta},
            })
        return json.dumps({
            "backend": "lwe",
            "domain_bits": self.domain_bits,
            "hidden_bit": self.hidden_bit,
            "m": self.pk.m, "q": self.pk.q, "bound": self.pk.bound,
            "a": [list(r) for r in self.pk.a], "u": list(self.pk.u),
            "secret": {"s": list(self.sk.s)},
        })

    @classmethod
    def from_json(cls, text: str) -> "TcfKeyPair":
        d = json.loads(text)
        n = d["domain_bits"]
        hidden = d["hidden_bit"]
        if d["backend"] == "ideal":
            pk = IdealPublicKey(n, tuple(tuple(t) for t in d["tables"]))
            sk = IdealSecretKey(n, tuple(d["secret"]["inv_prp"]), d["secret"]["delta"])
        else:
            pk = LwePublicKey(n, d["m"], d["q"], tuple(tuple(r) for r in d["a"]),
                              tuple(d["u"]), d["bound"])
            sk = LweSecretKey(n, tuple(d["secret"]["s"]))
        return cls(pk, sk, n, hidden)


def _sample_mask(bits: int, hidden, rng: np.random.Generator) -> int:
    """Nonzero n-bit mask whose first bit equals hidden when requested."""
    if hidden is None:
        return int(rng.integers(1, 1 << bits))
    if hidden:
        return (1 << (bits - 1)) | int(rng.integers(0, 1 << (bits - 1)))
    return int(rng.integers(1, 1 << (bits - 1)))


def gen(bits: int, hidden=None, backend: str = "ideal", rng: np.random.Generator = None) -> TcfKeyPair:
    """Key generation; bits is the domain size n of X = {0,1}^n."""
    if rng is None:
        raise ValueError("an explicit rng is required")
    if bits < 3:
        raise ValueError("domain must have at least 3 bits")
    if hidden is not None and hidden not in (0, 1):
        raise ValueError("hidden bit must be 0 or 1")
    if backend == "ideal":
        size = 1 << bits
        prp = rng.permutation(size)
        delta = _sample_mask(bits, hidden, rng)
        t0 = prp
        t1 = prp[np.arange(size) ^ delta]
        pk = IdealPublicKey(bits, (tuple(int(v) for v in t0), tuple(int(v) for v in t1)))
        sk = IdealSecretKey(bits, tuple(int(v) for v in np.argsort(prp)), delta)
        return TcfKeyPair(pk, sk, bits, hidden)
    if backend == "lwe":
        q, m = 97, 3 * bits
        s_vec = _sample_mask(bits, hidden, rng)
        s_bits = tuple(int(v) for v in _bits_of(s_vec, bits))
        a = rng.integers(0, q, size=(m, bits))
        e_u = rng.integers(-1, 2, size=m)
        u = (a @ np.array(s_bits) + e_u) % q
        pk = LwePublicKey(bits, m, q, tuple(tuple(int(v) for v in row) for row in a),
                          tuple(int(v) for v in u), bound=2)
        sk = LweSecretKey(bits, s_bits)
        return TcfKeyPair(pk, sk, bits, hidden)
    raise UnsupportedBackend(f"unknown backend {backend!r}")


def _check_domain(pk, x: int) -> None:
    if not 0 <= x < (1 << pk.n):
        raise ValueError(f"x={x} outside the {pk.n}-bit domain")


def _bits_of(x: int, n: int) -> np.ndarray:
    return np.array([(x >> (n - 1 - j)) & 1 for j in range(n)])


def eval(pk, b: int, x: int, rng: np.random.Generator = None):
    """f_{pk,b}(x); deterministic for the ideal backend, sampled for lwe."""
    if b not in (0, 1):
        raise ValueError("branch must be 0 or 1")
    _check_domain(pk, x)
    if isinstance(pk, IdealPublicKey):
        return int(pk.tables[b][x])
    if isinstance(pk, LwePublicKey):
        if rng is None:
            raise ValueError("the lwe backend samples noise and needs an rng")
        a = np.array(pk.a)
        e = rng.integers(-1, 2, size=pk.m)
        y = (a @ _bits_of(x, pk.n) + b * np.array(pk.u) + e) % pk.q
        return tuple(int(v) for v in y)
    raise UnsupportedBackend(f"unknown public key type {type(pk)!r}")


def _lwe_center(pk: LwePublicKey, b: int, x: int) -> np.ndarray:
    return (np.array(pk.a) @ _bits_of(x, pk.n) + b * np.array(pk.u)) % pk.q


def _lwe_dist(pk: LwePublicKey, y, center: np.ndarray) -> int:
    diff = (np.array(y) - center) % pk.q
    return int(np.max(np.minimum(diff, pk.q - diff)))


def chk(pk, b: int, x: int, y) -> int:
    """1 iff y lies in the support of f_{pk,b}(x); total over inputs."""
    if b not in (0, 1):
        return 0
    try:
        _check_domain(pk, x)
    except ValueError:
        return 0
    if isinstance(pk, IdealPublicKey):
        return int(pk.tables[b][x] == y)
    if isinstance(pk, LwePublicKey):
        return int(_lwe_dist(pk, y, _lwe_center(pk, b, x)) <= pk.bound)
    raise UnsupportedBackend(f"unknown public key type {type(pk)!r}")


def inv(sk, b: int, y):
    """The unique branch-b preimage of y; errors when y is not in the image."""
    if b not in (0, 1):
        raise ValueError("branch must be 0 or 1")
    if isinstance(sk, IdealSecretKey):
        if not isinstance(y, (int, np.integer)) or not 0 <= y < (1 << sk.n):
            raise ValueError(f"y={y!r} is not in the image")
        return int(sk.inv_prp[y]) ^ (sk.delta if b else 0)
    if isinstance(sk, LweSecretKey):
        raise ValueError("lwe inversion needs the public key; use inv_lwe")
    raise UnsupportedBackend(f"unknown secret key type {type(sk)!r}")


def inv_lwe(pk: LwePublicKey, sk: LweSecretKey, b: int, y):
    """Exhaustive nearest-center decoding for the toy-LWE backend."""
    best_x, best_d = None, None
    for x in range(1 << pk.n):
        d = _lwe_dist(pk, y, _lwe_center(pk, b, x))
        if best_d is None or d < best_d:
            best_x, best_d = x, d
    if best_d > pk.bound:
        raise ValueError("y is not within the noise bound of any center")
    return best_x


def claw(sk: IdealSecretKey, y: int):
    """(x0, x1) with f_0(x0) = f_1(x1) = y, via the trapdoor."""
    x0 = inv(sk, 0, y)
    return x0, x0 ^ sk.delta


@lru_cache(maxsize=64)
def _inverse_tables(pk: IdealPublicKey):
    return tuple(np.argsort(pk.table_array(b)) for b in (0, 1))


def public_claw(pk, y: int):
    """(x0, x1) for y, read off the published branch tables.

    The ideal backend publishes both tables, so simulators may look claws
    up without the trapdoor; provers in the protocols never rely on this.
    """
    if not isinstance(pk, IdealPublicKey):
        raise UnsupportedBackend("public claw lookup needs the ideal backend")
    y = int(y)
    if not 0 <= y < (1 << pk.n):
        raise ValueError("y outside the image")
    inv0, inv1 = _inverse_tables(pk)
    return int(inv0[y]), int(inv1[y])


def image_size(pk) -> int:
    if isinstance(pk, IdealPublicKey):
        return 1 << pk.n
    raise UnsupportedBackend("only the ideal backend has an enumerable image")


def coherent_samp(pk, state: StateVector, control: int, out, rng: np.random.Generator = None) -> StateVector:
    """Branch-controlled coherent evaluation into fresh registers.

    Maps (sum_b alpha_b |b>)|0...0>|0> on (control, out) to
    2^{-n/2} sum_{b,x} alpha_b |b>|x>|f_b(x)>, exactly.  out must list n
    qubit registers (the preimage, most significant first) followed by one
    image-sized register, all holding |0>.
    """
    if not isinstance(pk, IdealPublicKey):
        raise UnsupportedBackend("coherent sampling is only exact on the ideal backend")
    n = pk.n
    size = 1 << n
    out = list(out)
    if len(out) != n + 1:
        raise ValueError(f"need {n} preimage registers plus one image register")
    if any(state.dims[r] != 2 for r in out[:-1]) or state.dims[out[-1]] != size:
        raise ValueError("out register dimensions do not match the key")
    if state.dims[control] != 2:
        raise ValueError("control must be a qubit register")

    regs = [control] + out
    rest = [i for i in range(state.num_registers) if i not in regs]
    perm = regs + rest
    rest_dim = int(np.prod([state.dims[i] for i in rest])) if rest else 1
    arr = state.amps.reshape(state.dims).transpose(perm).reshape(2, size, size, rest_dim)
    tail = np.linalg.norm(arr[:, 1:, :, :]) ** 2 + np.linalg.norm(arr[:, 0, 1:, :]) ** 2
    if tail > 1e-12:
        raise ValueError("out registers must start in |0>")

    new = np.zeros_like(arr)
    src = arr[:, 0, 0, :] / np.sqrt(size)
    for b in (0, 1):
        new[b, np.arange(size), pk.table_array(b), :] = src[b][None, :]
    permuted_dims = [state.dims[p] for p in perm]
    inv_perm = np.argsort(perm)
    amps = new.reshape(permuted_dims).transpose(inv_perm).reshape(-1)
    return StateVector(state.dims, amps)
