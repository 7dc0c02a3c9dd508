"""Contextuality games: model, built-in instances, exact value computation.

A game is a tuple (questions, answers, contexts, context weights, predicate).
The predicate is stored as an explicit accept-set table per context so games
serialize to JSON and stay language-agnostic.  Values are computed exactly:
the non-contextual value by brute force over deterministic assignment tables
(rational arithmetic when the weights are rational), the quantum value of a
supplied strategy analytically from sequential commuting projectors.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .qsim import ATOL_EIG, I2, Observable, StateVector, X, Z, branch_measure

NC_SEARCH_BOUND = 2 ** 24


def _as_weight(w) -> Fraction:
    if isinstance(w, Fraction):
        return w
    if isinstance(w, str):
        return Fraction(w)
    if isinstance(w, int):
        return Fraction(w)
    return Fraction(float(w))


@dataclass(frozen=True)
class ContextualityGame:
    """Single-player game: referee asks one context, checks an accept table.

    accepts maps context index -> frozenset of accepted answer tuples, the
    tuples indexed in the context's question order.
    """

    questions: tuple
    answers: tuple
    contexts: tuple
    context_weights: tuple
    accepts: dict

    def __post_init__(self):
        questions = tuple(self.questions)
        answers = tuple(self.answers)
        contexts = tuple(tuple(c) for c in self.contexts)
        weights = tuple(_as_weight(w) for w in self.context_weights)
        if len(set(questions)) != len(questions):
            raise ValueError("duplicate questions")
        if len(weights) != len(contexts):
            raise ValueError("one weight per context required")
        if any(w < 0 for w in weights):
            raise ValueError("context weights must be nonnegative")
        if abs(float(sum(weights)) - 1.0) > 1e-12:
            raise ValueError("context weights must sum to 1")
        qset = set(questions)
        for c in contexts:
            if not c:
                raise ValueError("contexts must be nonempty")
            if len(set(c)) != len(c) or not set(c) <= qset:
                raise ValueError(f"context {c} is not a subset of the question set")
        accepts = {}
        aset = set(answers)
        for i, c in enumerate(contexts):
            table = frozenset(tuple(t) for t in self.accepts.get(i, ()))
            for t in table:
                if len(t) != len(c) or not set(t) <= aset:
                    raise ValueError(f"accept tuple {t} malformed for context {c}")
            accepts[i] = table
        object.__setattr__(self, "questions", questions)
        object.__setattr__(self, "answers", answers)
        object.__setattr__(self, "contexts", contexts)
        object.__setattr__(self, "context_weights", weights)
        object.__setattr__(self, "accepts", accepts)

    def predicate(self, ctx_index: int, answer_tuple) -> int:
        return int(tuple(answer_tuple) in self.accepts[ctx_index])

    def sample_context(self, rng: np.random.Generator) -> int:
        r = rng.random()
        acc = 0.0
        for i, w in enumerate(self.context_weights):
            acc += float(w)
            if r < acc:
                return i
        return len(self.contexts) - 1

    def uniform_context_size(self) -> int | None:
        sizes = {len(c) for c in self.contexts}
        return sizes.pop() if len(sizes) == 1 else None

    def to_json(self) -> str:
        return json.dumps({
            "questions": list(self.questions),
            "answers": list(self.answers),
            "contexts": [list(c) for c in self.contexts],
            "context_weights": [str(w) for w in self.context_weights],
            "predicate": {str(i): sorted(list(t) for t in self.accepts[i])
                          for i in range(len(self.contexts))},
        })

    @classmethod
    def from_json(cls, text: str) -> "ContextualityGame":
        data = json.loads(text)
        return cls(
            questions=tuple(_freeze(q) for q in data["questions"]),
            answers=tuple(_freeze(a) for a in data["answers"]),
            contexts=tuple(tuple(_freeze(q) for q in c) for c in data["contexts"]),
            context_weights=tuple(_as_weight(w) for w in data["context_weights"]),
            accepts={int(i): frozenset(tuple(_freeze(a) for a in t) for t in ts)
                     for i, ts in data["predicate"].items()},
        )


def _freeze(v):
    return tuple(_freeze(x) for x in v) if isinstance(v, list) else v


@dataclass(frozen=True)
class Assignment:
    """Deterministic truth table: one answer per question."""

    table: dict

    def __post_init__(self):
        object.__setattr__(self, "table", dict(self.table))

    def __call__(self, question):
        return self.table[question]

    def on_context(self, context) -> tuple:
        return tuple(self.table[q] for q in context)

    def key(self) -> tuple:
        return tuple(sorted(self.table.items(), key=lambda kv: repr(kv[0])))


@dataclass(frozen=True)
class QuantumStrategy:
    """Hilbert dimension, initial state, one Hermitian observable per question."""

    dim: int
    psi: StateVector
    observables: dict

    def __post_init__(self):
        object.__setattr__(self, "observables", dict(self.observables))
        size = 1
        for d in self.psi.dims:
            size *= d
        if size != self.dim:
            raise ValueError("state size does not match dim")

    def validate(self, game: ContextualityGame) -> None:
        """Raises unless spectra lie in the answer set and contexts commute."""
        for q in game.questions:
            if q not in self.observables:
                raise ValueError(f"no observable for question {q!r}")
            obs = self.observables[q]
            if obs.dim != self.dim:
                raise ValueError(f"observable for {q!r} has wrong dimension")
            for val, _ in obs.eigensystem:
                if min(abs(val - float(a)) for a in game.answers) > ATOL_EIG:
                    raise ValueError(f"eigenvalue {val} of {q!r} is not an answer label")
        for c in game.contexts:
            for qa, qb in itertools.combinations(c, 2):
                a, b = self.observables[qa].matrix, self.observables[qb].matrix
                if np.max(np.abs(a @ b - b @ a)) > ATOL_EIG:
                    raise ValueError(f"observables {qa!r}, {qb!r} do not commute")

    def answer_for(self, game: ContextualityGame, eigenvalue: float):
        return min(game.answers, key=lambda a: abs(eigenvalue - float(a)))

    def to_json(self) -> str:
        def mat(m):
            return [[[float(x.real), float(x.imag)] for x in row] for row in m]
        return json.dumps({
            "dim": self.dim,
            "state": [[float(a.real), float(a.imag)] for a in self.psi.amps],
            "observables": {str(q): mat(o.matrix) for q, o in self.observables.items()},
        })

    @classmethod
    def from_json(cls, text: str, questions=None) -> "QuantumStrategy":
        data = json.loads(text)
        dim = int(data["dim"])
        amps = np.array([complex(re, im) for re, im in data["state"]])
        by_name = {}
        for key, rows in data["observables"].items():
            m = np.array([[complex(re, im) for re, im in row] for row in rows])
            by_name[key] = Observable(m)
        if questions is not None:
            # JSON keys are strings; recover question identity via str().
            by_name = {q: by_name[str(q)] for q in questions}
        return cls(dim=dim, psi=StateVector((dim,), amps), observables=by_name)


def nc_value_with_table(game: ContextualityGame):
    """Exact non-contextual value and the first arg-max assignment.

    Assignments are enumerated in lexicographic order over the question
    tuple, answers cycling fastest on the last question.
    """
    n_tables = len(game.answers) ** len(game.questions)
    if n_tables > NC_SEARCH_BOUND:
        raise ValueError(f"{n_tables} assignments exceed the brute-force bound {NC_SEARCH_BOUND}")
    best = None
    best_table = None
    for combo in itertools.product(game.answers, repeat=len(game.questions)):
        table = dict(zip(game.questions, combo))
        value = sum(
            (w for i, w in enumerate(game.context_weights)
             if tuple(table[q] for q in game.contexts[i]) in game.accepts[i]),
            Fraction(0),
        )
        if best is None or value > best:
            best, best_table = value, table
    return best, Assignment(best_table)


def nc_value(game: ContextualityGame) -> Fraction:
    return nc_value_with_table(game)[0]


def context_answer_distribution(game: ContextualityGame, strategy: QuantumStrategy, ctx_index: int):
    """Exact Born-rule distribution over answer tuples for one context.

    Observables are measured sequentially in the context's question order;
    order is immaterial for valid strategies (they commute).
    """
    context = game.contexts[ctx_index]
    targets = list(range(strategy.psi.num_registers))
    out = {}

    def walk(state, prefix, prob):
        if len(prefix) == len(context):
            out[prefix] = out.get(prefix, 0.0) + prob
            return
        obs = strategy.observables[context[len(prefix)]]
        for val, p, post in branch_measure(state, obs, targets):
            if post is None:
                continue
            walk(post, prefix + (strategy.answer_for(game, val),), prob * p)

    walk(strategy.psi, (), 1.0)
    return out

def quantum_value_of(game: ContextualityGame, strategy: QuantumStrategy) -> float:
    """Exact winning probability of the strategy (no sampling)."""
    strategy.validate(game)
    value = 0.0
    for i, w in enumerate(game.context_weights):
        dist = context_answer_distribution(game, strategy, i)
        value += float(w) * sum(p for a, p in dist.items() if a in game.accepts[i])
    return value


def magic_square():
    """The 3x3 two-qubit square: rows and columns multiply to +1 except
    the third column, which multiplies to -1.  Returns (game, strategy)."""
    questions = tuple(f"{i}{j}" for i in (1, 2, 3) for j in (1, 2, 3))
    rows = [tuple(f"{i}{j}" for j in (1, 2, 3)) for i in (1, 2, 3)]
    cols = [tuple(f"{i}{j}" for i in (1, 2, 3)) for j in (1, 2, 3)]
    contexts = tuple(rows + cols)
    accepts = {}
    for idx in range(6):
        sign = -1 if idx == 5 else 1
        accepts[idx] = frozenset(t for t in itertools.product((1, -1), repeat=3)
                                 if t[0] * t[1] * t[2] == sign)
    game = ContextualityGame(
        questions=questions,
        answers=(1, -1),
        contexts=contexts,
        context_weights=(Fraction(1, 6),) * 6,
        accepts=accepts,
    )
    xz = X @ Z
    table = {
        "11": np.kron(I2, X), "12": np.kron(Z, I2), "13": np.kron(Z, X),
        "21": np.kron(X, I2), "22": np.kron(I2, Z), "23": np.kron(X, Z),
        "31": np.kron(X, X), "32": np.kron(Z, Z), "33": np.kron(xz, xz),
    }
    psi = StateVector((4,), [1, 0, 0, 0])
    strategy = QuantumStrategy(4, psi, {q: Observable(m) for q, m in table.items()})
    return game, strategy


def kcbs():
    """Five-cycle exclusivity game on a qutrit; returns (game, strategy)."""
    questions = tuple(range(5))
    contexts = tuple((q, (q + 1) % 5) for q in range(5))
    accepts = {i: frozenset({(0, 1), (1, 0)}) for i in range(5)}
    game = ContextualityGame(
        questions=questions,
        answers=(0, 1),
        contexts=contexts,
        context_weights=(Fraction(1, 5),) * 5,
        accepts=accepts,
    )
    c = np.cos(np.pi / 5)
    cos2_theta = c / (1 + c)
    ct = np.sqrt(cos2_theta)
    stheta = np.sqrt(1 - cos2_theta)
    observables = {}
    for q in questions:
        phi = 4 * np.pi * q / 5
        v = np.array([ct, stheta * np.sin(phi), stheta * np.cos(phi)], dtype=complex)
        observables[q] = Observable(np.outer(v, v.conj()))
    psi = StateVector((3,), [1, 0, 0])
    return game, QuantumStrategy(3, psi, observables)


def embed_nonlocal_game(alice_questions, bob_questions, answers, predicate, weights=None):
    """Two-player game as a contextuality game: questions are role-tagged,
    contexts pair one Alice question with one Bob question, and the accept
    table is the product predicate pred(x, y, a, b)."""
    alice_questions = tuple(alice_questions)
    bob_questions = tuple(bob_questions)
    questions = tuple(f"A{x}" for x in alice_questions) + tuple(f"B{y}" for y in bob_questions)
    pairs = list(itertools.product(alice_questions, bob_questions))
    contexts = tuple((f"A{x}", f"B{y}") for x, y in pairs)
    if weights is None:
        weights = (Fraction(1, len(pairs)),) * len(pairs)
    accepts = {
        i: frozenset((a, b) for a in answers for b in answers if predicate(x, y, a, b))
        for i, (x, y) in enumerate(pairs)
    }
    return ContextualityGame(
        questions=questions,
        answers=tuple(answers),
        contexts=contexts,
        context_weights=tuple(weights),
        accepts=accepts,
    )


def chsh():
    """Embedded CHSH with its tilted-projector strategy on an EPR pair."""
    game = embed_nonlocal_game(
        (0, 1), (0, 1), (0, 1),
        predicate=lambda x, y, a, b: (a ^ b) == (x & y),
    )
    angles_a = {0: 0.0, 1: np.pi / 4}
    angles_b = {0: np.pi / 8, 1: -np.pi / 8}

    def proj(alpha):
        v = np.array([np.cos(alpha), np.sin(alpha)], dtype=complex)
        return np.outer(v, v.conj())

    observables = {}
    for x, alpha in angles_a.items():
        observables[f"A{x}"] = Observable(np.kron(proj(alpha), I2))
    for y, beta in angles_b.items():
        observables[f"B{y}"] = Observable(np.kron(I2, proj(beta)))
    epr = StateVector((4,), np.array([1, 0, 0, 1]) / np.sqrt(2))
    return game, QuantumStrategy(4, epr, observables)


def pad_contexts(game: ContextualityGame) -> ContextualityGame:
    """Equalize context sizes with dummy questions the predicate ignores."""
    target = max(len(c) for c in game.contexts)
    if all(len(c) == target for c in game.contexts):
        return game
    most_missing = target - min(len(c) for c in game.contexts)
    dummies = tuple(f"_pad{i}" for i in range(most_missing))
    contexts = []
    accepts = {}
    for i, c in enumerate(game.contexts):
        extra = dummies[: target - len(c)]
        contexts.append(tuple(c) + extra)
        if extra:
            accepts[i] = frozenset(
                t + suffix
                for t in game.accepts[i]
                for suffix in itertools.product(game.answers, repeat=len(extra))
            )
        else:
            accepts[i] = game.accepts[i]
    return ContextualityGame(
        questions=game.questions + dummies,
        answers=game.answers,
        contexts=tuple(contexts),
        context_weights=game.context_weights,
        accepts=accepts,
    )


def extend_strategy(strategy: QuantumStrategy, new_questions, answer) -> QuantumStrategy:
    """Add constant observables answer*I for questions the strategy lacks."""
    observables = dict(strategy.observables)
    for q in new_questions:
        if q not in observables:
            observables[q] = Observable(float(answer) * np.eye(strategy.dim))
    return QuantumStrategy(strategy.dim, strategy.psi, observables)


def embed_in_qubits(strategy: QuantumStrategy, fill_answer) -> QuantumStrategy:
    """Re-express a dim-d strategy on ceil(log2 d) qubits.

    The extra dimensions get zero amplitude and each observable is extended
    with fill_answer on the complement, preserving spectra and commutation.
    """
    m = max(1, int(np.ceil(np.log2(strategy.dim))))
    full = 2 ** m
    if full == strategy.dim and strategy.psi.dims == (2,) * m:
        return strategy
    amps = np.zeros(full, dtype=complex)
    amps[: strategy.dim] = strategy.psi.amps
    observables = {}
    for q, obs in strategy.observables.items():
        mat = np.eye(full, dtype=complex) * float(fill_answer)
        mat[: strategy.dim, : strategy.dim] = obs.matrix
        observables[q] = Observable(mat)
    return QuantumStrategy(full, StateVector((2,) * m, amps), observables)
