"""Two-round compilations of contextuality games for a single prover.

A contextuality game asks several compatible questions at once; these
compilers split it into four messages between a classical verifier and
one prover so that no-signalling between the rounds is enforced by
cryptography instead of by spacelike separation.  Three kinds:

  "1-1"    one encrypted question in round 1, one plaintext question in
           round 2 (games with uniform context size 2 only);
  "c-1"    the whole context encrypted in round 1, one of its questions
           re-asked in plaintext;
  "cm1-1"  the context minus one skipped question in round 1, then
           either a repeat or the skipped question.

Round-1 questions travel under quantum homomorphic encryption, so an
honest prover measures its strategy state blindly and returns the
answers still encrypted.  The post-measurement state is handed back
inside an oblivious Pauli pad; the verifier alone can combine the pad
key k' with the homomorphic re-pad key k'' into k = k' ^ k'', and the
prover answers round 2 by measuring the k-conjugated observable on the
state it kept.  Classical provers can only evaluate a fixed table under
the encryption, which is what the completeness/soundness gap tests.
"""
from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import opad, qfhe
from .games import (
    Assignment,
    ContextualityGame,
    QuantumStrategy,
    embed_in_qubits,
    nc_value,
    nc_value_with_table,
)
from .qsim import I2, Observable, PauliKey, StateVector, X, Z, branch_measure, measure_observable


class CompilerKind(enum.Enum):
    """The three compilations, named by round-1/round-2 question counts."""

    ONE_ONE = "1-1"
    ALL_ONE = "c-1"
    ALL_BUT_ONE = "cm1-1"


def _index_width(n: int) -> int:
    """Bits needed to encode an index in range(n); at least one."""
    return max(1, (n - 1).bit_length())


def _bits_of(value: int, width: int) -> tuple:
    return tuple((value >> (width - 1 - j)) & 1 for j in range(width))


def _int_of(bits) -> int:
    out = 0
    for b in bits:
        out = (out << 1) | int(b)
    return out


def _answer_width(game: ContextualityGame) -> int:
    return _index_width(len(game.answers))


def _encode_answer(game: ContextualityGame, answer) -> tuple:
    return _bits_of(game.answers.index(answer), _answer_width(game))


def _decode_answers(game: ContextualityGame, bits, count: int) -> tuple:
    width = _answer_width(game)
    if len(bits) != count * width:
        raise ValueError("answer ciphertext has the wrong width")
    out = []
    for i in range(count):
        idx = _int_of(bits[i * width:(i + 1) * width])
        if idx >= len(game.answers):
            raise ValueError("answer code outside the label set")
        out.append(game.answers[idx])
    return tuple(out)


@dataclass(frozen=True)
class Message1:
    """Round 1: the encrypted question set plus the public session material."""

    question_cipher: qfhe.ClassicalCiphertext
    fhe_handle: qfhe.QfhePublicHandle
    opad_pk: object
    oracle: opad.PhaseOracle
    game: ContextualityGame
    kind: CompilerKind


@dataclass(frozen=True)
class Message2:
    """Round 2: encrypted answers, encrypted re-pad key, oblivious pad string."""

    answer_cipher: qfhe.ClassicalCiphertext
    pad_cipher: qfhe.ClassicalCiphertext
    pad_string: opad.OpadString


def round1_inputs(game: ContextualityGame, kind) -> tuple:
    """Every round-1 input the verifier can ask under this kind: a question
    for "1-1", a context index for "c-1", a (context index, skip position)
    pair for "cm1-1"."""
    kind = CompilerKind(kind)
    if kind is CompilerKind.ONE_ONE:
        return tuple(game.questions)
    if kind is CompilerKind.ALL_ONE:
        return tuple(range(len(game.contexts)))
    size = game.uniform_context_size()
    if size is None:
        raise ValueError("the cm1-1 compiler needs a uniform context size")
    return tuple((ci, sp) for ci in range(len(game.contexts)) for sp in range(size))


def encode_round1_input(game: ContextualityGame, kind, value) -> tuple:
    """Payload bits for one round-1 input, msb first."""
    kind = CompilerKind(kind)
    if kind is CompilerKind.ONE_ONE:
        return _bits_of(game.questions.index(value), _index_width(len(game.questions)))
    if kind is CompilerKind.ALL_ONE:
        return _bits_of(int(value), _index_width(len(game.contexts)))
    ctx_index, skip_pos = value
    size = game.uniform_context_size()
    return (_bits_of(int(ctx_index), _index_width(len(game.contexts)))
            + _bits_of(int(skip_pos), _index_width(size)))


def round1_message(game: ContextualityGame, kind, value, key, opad_pk,
                   oracle: opad.PhaseOracle, rng: np.random.Generator) -> Message1:
    """Message 1 for a chosen round-1 input; key may be a secret key or a
    public encryption handle."""
    kind = CompilerKind(kind)
    payload = encode_round1_input(game, kind, value)
    handle = key.handle() if isinstance(key, qfhe.QfheSecretKey) else key
    cipher = qfhe.enc_classical(key, payload, rng)
    return Message1(cipher, handle, opad_pk, oracle, game, kind)


def _decision(game: ContextualityGame, kind: CompilerKind, ctx_index: int,
              skip_pos, round1_questions, answers1, question, answer):
    """Kind-specific accept rule.

    Returns (accept, consistency_ok, predicate_ok); a None entry means that
    comparison never ran on this branch.
    """
    context = game.contexts[ctx_index]
    if kind is CompilerKind.ONE_ONE:
        q1, a1 = round1_questions[0], answers1[0]
        if question == q1:
            consistent = answer == a1
            return consistent, consistent, None
        full = tuple(a1 if qq == q1 else answer for qq in context)
        ok = bool(game.predicate(ctx_index, full))
        return ok, None, ok
    if kind is CompilerKind.ALL_ONE:
        pred_ok = bool(game.predicate(ctx_index, answers1))
        consistent = answers1[context.index(question)] == answer
        return pred_ok and consistent, consistent, pred_ok
    if question == context[skip_pos]:
        full = answers1[:skip_pos] + (answer,) + answers1[skip_pos:]
        ok = bool(game.predicate(ctx_index, full))
        return ok, None, ok
    consistent = answers1[round1_questions.index(question)] == answer
    return consistent, consistent, None


class CompiledVerifier:
    """State machine for one four-message session.

    Messages must arrive in order: construction emits message 1, message3()
    consumes the prover's round-1 reply and emits (q, k), decide() consumes
    the round-2 answer.  Out-of-order calls raise RuntimeError.
    """

    def __init__(self, game: ContextualityGame, kind, lam: int,
                 rng: np.random.Generator, fhe_backend: str = "stub"):
        kind = CompilerKind(kind)
        size = game.uniform_context_size()
        if kind is CompilerKind.ONE_ONE and size != 2:
            raise ValueError("the 1-1 compiler needs uniform context size 2")
        if kind is CompilerKind.ALL_BUT_ONE and size is None:
            raise ValueError("the cm1-1 compiler needs a uniform context size")
        self.game = game
        self.kind = kind
        self.lam = lam
        self._rng = rng
        self.fhe_sk = qfhe.gen(lam, backend=fhe_backend, rng=rng)
        self.opad_keys = opad.gen(lam, rng)
        self.oracle = opad.PhaseOracle("hash", seed=int(rng.integers(2 ** 62)))
        self.ctx_index = game.sample_context(rng)
        context = game.contexts[self.ctx_index]
        self.skip_pos = None
        if kind is CompilerKind.ONE_ONE:
            pos = int(rng.integers(len(context)))
            self.round1_questions = (context[pos],)
            payload = encode_round1_input(game, kind, context[pos])
        elif kind is CompilerKind.ALL_ONE:
            self.round1_questions = context
            payload = encode_round1_input(game, kind, self.ctx_index)
        else:
            self.skip_pos = int(rng.integers(len(context)))
            self.round1_questions = tuple(
                q for i, q in enumerate(context) if i != self.skip_pos)
            payload = encode_round1_input(game, kind, (self.ctx_index, self.skip_pos))
        cipher = qfhe.enc_classical(self.fhe_sk, payload, rng)
        self._message1 = Message1(cipher, self.fhe_sk.handle(),
                                  self.opad_keys.pk, self.oracle, game, kind)
        self._message2 = None
        self.answers1 = None
        self.question = None
        self.key = None
        self.answer2 = None
        self.accepted = None
        self.consistency_ok = None
        self.predicate_ok = None
        # Negative control for the faithfulness check: reject whenever the
        # consistency comparison succeeds.
        self._reject_consistent = False
        self._phase = "message2"

    @property
    def message1(self) -> Message1:
        return self._message1

    def message3(self, message2: Message2, rng: np.random.Generator = None):
        """Decrypt the round-1 reply; returns the plaintext (q, k)."""
        if self._phase != "message2":
            raise RuntimeError("message 2 was already processed")
        if not isinstance(message2, Message2):
            raise ValueError("round-1 reply must be a Message2")
        rng = self._rng if rng is None else rng
        bits = qfhe.dec_classical(self.fhe_sk, message2.answer_cipher)
        self.answers1 = _decode_answers(self.game, bits, len(self.round1_questions))
        k_prime = opad.dec(self.opad_keys.sk, message2.pad_string, self.oracle)
        if not isinstance(k_prime, PauliKey):
            raise ValueError("pad string must carry a pauli key")
        pad_bits = qfhe.dec_classical(self.fhe_sk, message2.pad_cipher)
        if len(pad_bits) != 2 * len(k_prime):
            raise ValueError("pad key widths disagree")
        k_dbl = PauliKey.from_bits(pad_bits)
        # U_k = U_{k''} U_{k'} up to global phase, i.e. componentwise xor.
        self.key = k_prime ^ k_dbl
        context = self.game.contexts[self.ctx_index]
        self.question = context[int(rng.integers(len(context)))]
        self._message2 = message2
        self._phase = "decide"
        return self.question, self.key

    def decide(self, answer) -> bool:
        if self._phase != "decide":
            raise RuntimeError("decide needs the round-1 reply first")
        if answer not in self.game.answers:
            raise ValueError("answer outside the label set")
        accept, consistent, pred_ok = _decision(
            self.game, self.kind, self.ctx_index, self.skip_pos,
            self.round1_questions, self.answers1, self.question, answer)
        if self._reject_consistent and consistent:
            accept = False
        self.answer2 = answer
        self.accepted = accept
        self.consistency_ok = consistent
        self.predicate_ok = pred_ok
        self._phase = "done"
        return accept

    def transcript(self, seed: int = None) -> "CompiledTranscript":
        if self._phase != "done":
            raise RuntimeError("transcript is available after the decision")
        return CompiledTranscript(
            kind=self.kind.value, ctx_index=self.ctx_index, skip_pos=self.skip_pos,
            message1=self._message1, message2=self._message2,
            question=self.question, key=self.key, answer=self.answer2,
            accept=self.accepted, seed=seed)


@dataclass(frozen=True)
class CompiledTranscript:
    """One session: eight role-tagged message slots plus the decision."""

    kind: str
    ctx_index: int
    skip_pos: int | None
    message1: Message1
    message2: Message2
    question: object
    key: PauliKey
    answer: object
    accept: bool
    seed: int | None = None

    def slots(self) -> dict:
        return {
            "t1_question_cipher": self.message1.question_cipher,
            "t2_opad_pk": self.message1.opad_pk,
            "t3_answer_cipher": self.message2.answer_cipher,
            "t4_pad_cipher": self.message2.pad_cipher,
            "t5_pad_string": self.message2.pad_string,
            "t6_question": self.question,
            "t7_key": self.key,
            "t8_answer": self.answer,
        }

    def to_json(self) -> str:
        pk = self.message1.opad_pk
        digest = hashlib.sha256(json.dumps(pk.tables).encode()).hexdigest()[:16]
        return json.dumps({
            "kind": self.kind,
            "ctx_index": self.ctx_index,
            "skip_pos": self.skip_pos,
            "t1_question_cipher": json.loads(self.message1.question_cipher.to_json()),
            "t2_opad_pk": {"domain_bits": pk.n, "table_digest": digest},
            "t3_answer_cipher": json.loads(self.message2.answer_cipher.to_json()),
            "t4_pad_cipher": json.loads(self.message2.pad_cipher.to_json()),
            "t5_pad_string": json.loads(self.message2.pad_string.to_json()),
            "t6_question": self.question,
            "t7_key": {"x": list(self.key.x), "z": list(self.key.z)},
            "t8_answer": self.answer,
            "accept": self.accept,
            "seed": self.seed,
        })


def recompute_decision(game: ContextualityGame, transcript: CompiledTranscript,
                       fhe_sk, opad_keys, oracle) -> bool:
    """Re-derive the accept bit from a transcript and the secret keys."""
    kind = CompilerKind(transcript.kind)
    payload = qfhe.dec_classical(fhe_sk, transcript.message1.question_cipher)
    context = game.contexts[transcript.ctx_index]
    if kind is CompilerKind.ONE_ONE:
        q1 = game.questions[_int_of(payload)]
        if q1 not in context:
            raise ValueError("transcript context disagrees with the t1 payload")
        round1 = (q1,)
    elif kind is CompilerKind.ALL_ONE:
        if _int_of(payload) != transcript.ctx_index:
            raise ValueError("transcript context disagrees with the t1 payload")
        round1 = context
    else:
        swidth = _index_width(game.uniform_context_size())
        if _int_of(payload[:-swidth]) != transcript.ctx_index:
            raise ValueError("transcript context disagrees with the t1 payload")
        if _int_of(payload[-swidth:]) != transcript.skip_pos:
            raise ValueError("transcript skip position disagrees with the t1 payload")
        round1 = tuple(q for i, q in enumerate(context) if i != transcript.skip_pos)
    bits = qfhe.dec_classical(fhe_sk, transcript.message2.answer_cipher)
    answers1 = _decode_answers(game, bits, len(round1))
    k_prime = opad.dec(opad_keys.sk, transcript.message2.pad_string, oracle)
    k_dbl = PauliKey.from_bits(qfhe.dec_classical(fhe_sk, transcript.message2.pad_cipher))
    if (k_prime ^ k_dbl) != transcript.key:
        raise ValueError("transcript key disagrees with the pad ciphertexts")
    accept, _, _ = _decision(game, kind, transcript.ctx_index, transcript.skip_pos,
                             round1, answers1, transcript.question, transcript.answer)
    return accept


def verifier_new(game: ContextualityGame, kind, lam: int, rng: np.random.Generator,
                 fhe_backend: str = "stub"):
    state = CompiledVerifier(game, kind, lam, rng, fhe_backend)
    return state, state.message1


def verifier_message3(state: CompiledVerifier, message2: Message2,
                      rng: np.random.Generator = None):
    return state.message3(message2, rng)


def verifier_decide(state: CompiledVerifier, answer) -> bool:
    return state.decide(answer)


_PAULI = {(0, 0): I2, (1, 0): X, (0, 1): Z, (1, 1): X @ Z}


def _pad_matrix(key: PauliKey) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for x, z in zip(key.x, key.z):
        out = np.kron(out, _PAULI[(x, z)])
    return out


class HonestQuantumProver:
    """Measures the encrypted round-1 questions on its own strategy state.

    Round 1 encrypts the strategy state under the verifier's key, runs the
    selected observables homomorphically, wraps the re-padded
    post-measurement state in an oblivious pad, and forwards the answer and
    re-pad ciphertexts.  The padded state is held un-decrypted; round 2
    measures the k-conjugated observable on it, never removing the pad.
    """

    replayable = False

    def __init__(self, strategy: QuantumStrategy, opad_path: str = "collapsed"):
        self.strategy = strategy
        self.opad_path = opad_path
        self.held_state = None
        self._game = None
        self._embedded = None
        self._branches = {}

    def _embed_for(self, game: ContextualityGame) -> QuantumStrategy:
        if self._game is not game:
            self._game = game
            self._embedded = embed_in_qubits(self.strategy, game.answers[0])
            self._branches = {}
        return self._embedded

    def _branches_for(self, game: ContextualityGame, kind: CompilerKind) -> dict:
        if kind in self._branches:
            return self._branches[kind]
        emb = self._embed_for(game)
        targets = tuple(range(emb.psi.num_registers))
        outcomes = [(float(a), _encode_answer(game, a)) for a in game.answers]

        def step(q):
            return (emb.observables[q], targets, outcomes)

        if kind is CompilerKind.ONE_ONE:
            branches = {i: [step(q)] for i, q in enumerate(game.questions)}
        elif kind is CompilerKind.ALL_ONE:
            branches = {i: [step(q) for q in ctx]
                        for i, ctx in enumerate(game.contexts)}
        else:
            swidth = _index_width(game.uniform_context_size())
            branches = {}
            for i, ctx in enumerate(game.contexts):
                for sp in range(len(ctx)):
                    branches[(i << swidth) | sp] = [
                        step(q) for pos, q in enumerate(ctx) if pos != sp]
        self._branches[kind] = branches
        return branches

    def round1(self, message1: Message1, rng: np.random.Generator) -> Message2:
        game = message1.game
        emb = self._embed_for(game)
        targets = list(range(emb.psi.num_registers))
        cipher = qfhe.enc_quantum(message1.fhe_handle, emb.psi, rng)
        branches = self._branches_for(game, message1.kind)
        answer_cipher, out = qfhe.eval(
            [("select_measure", message1.question_cipher, branches)], cipher, rng)
        padded, s = opad.enc(message1.opad_pk, out.padded_state, targets,
                             message1.oracle, rng, path=self.opad_path)
        self.held_state = padded
        return Message2(answer_cipher, out.pad_hat, s)

    def round2(self, question, key: PauliKey, rng: np.random.Generator):
        if self.held_state is None:
            raise RuntimeError("round 2 needs a prior round 1")
        emb = self._embedded
        u = _pad_matrix(key)
        conjugated = Observable(u @ emb.observables[question].matrix @ u.conj().T)
        targets = list(range(self.held_state.num_registers))
        value, post = measure_observable(self.held_state, conjugated, targets, rng)
        self.held_state = post
        return emb.answer_for(self._game, value)


def _selection_circuit(n_inputs: int, rows: dict, out_width: int) -> qfhe.ClassicalCircuit:
    """Multiplexer: output bits are xors of mutually exclusive row indicators."""
    gates = []

    def emit(gate):
        gates.append(gate)
        return n_inputs + len(gates) - 1

    negated = {}

    def literal(j, want_one):
        if want_one:
            return j
        if j not in negated:
            negated[j] = emit(("not", j))
        return negated[j]

    indicators = {}
    for idx in sorted(rows):
        bits = _bits_of(idx, n_inputs)
        acc = literal(0, bits[0])
        for j in range(1, n_inputs):
            acc = emit(("and", acc, literal(j, bits[j])))
        indicators[idx] = acc
    outputs = []
    for pos in range(out_width):
        live = [indicators[idx] for idx in sorted(rows) if rows[idx][pos]]
        if not live:
            outputs.append(emit(("const", 0)))
        else:
            acc = live[0]
            for w in live[1:]:
                acc = emit(("xor", acc, w))
            outputs.append(acc)
    return qfhe.ClassicalCircuit(n_inputs, tuple(gates), tuple(outputs))


def _table_rows(game: ContextualityGame, kind: CompilerKind, answers_for_context):
    """Row table for the round-1 multiplexer; answers_for_context(i) gives
    the tuple submitted when context i is selected."""
    if kind is CompilerKind.ONE_ONE:
        n_inputs = _index_width(len(game.questions))
        rows = {}
        for i, q in enumerate(game.questions):
            ctx = next(ci for ci, c in enumerate(game.contexts) if q in c)
            rows[i] = _encode_answer(
                game, answers_for_context(ctx)[game.contexts[ctx].index(q)])
        return n_inputs, rows, _answer_width(game)
    size = game.uniform_context_size()
    if size is None:
        raise ValueError("blind table evaluation needs a uniform context size; "
                         "pad the game's contexts first")
    width = _answer_width(game)
    if kind is CompilerKind.ALL_ONE:
        n_inputs = _index_width(len(game.contexts))
        rows = {}
        for i in range(len(game.contexts)):
            bits = ()
            for a in answers_for_context(i):
                bits += _encode_answer(game, a)
            rows[i] = bits
        return n_inputs, rows, size * width
    swidth = _index_width(size)
    n_inputs = _index_width(len(game.contexts)) + swidth
    rows = {}
    for i in range(len(game.contexts)):
        full = answers_for_context(i)
        for sp in range(size):
            bits = ()
            for pos, a in enumerate(full):
                if pos != sp:
                    bits += _encode_answer(game, a)
            rows[(i << swidth) | sp] = bits
    return n_inputs, rows, (size - 1) * width


class TruthTableProver:
    """Classical prover that answers both rounds from one fixed assignment.

    Round 1 evaluates a multiplexer over the encrypted question payload
    under ceval, encrypts a freshly random pad key, and draws the pad
    string from the range sampler; round 2 answers from the table,
    ignoring k entirely.
    """

    replayable = True

    def __init__(self, table: Assignment):
        self.table = table
        self._circuits = {}
        self._game = None

    def _answers_for_context(self, game: ContextualityGame):
        def submit(i):
            return self.table.on_context(game.contexts[i])
        return submit

    def _circuit_for(self, game: ContextualityGame, kind: CompilerKind):
        if self._game is not game:
            self._game = game
            self._circuits = {}
        if kind not in self._circuits:
            n_inputs, rows, out_width = _table_rows(
                game, kind, self._answers_for_context(game))
            self._circuits[kind] = _selection_circuit(n_inputs, rows, out_width)
        return self._circuits[kind]

    def round1(self, message1: Message1, rng: np.random.Generator) -> Message2:
        circuit = self._circuit_for(message1.game, message1.kind)
        answer_cipher = qfhe.ceval(circuit, message1.question_cipher, rng)
        fresh = PauliKey.uniform(1, rng)
        pad_cipher = qfhe.enc_classical(message1.fhe_handle, fresh.bits(), rng)
        pad_string = opad.samp(message1.opad_pk, 1, rng)
        return Message2(answer_cipher, pad_cipher, pad_string)

    def round2(self, question, key: PauliKey, rng: np.random.Generator = None):
        return self.table(question)


class FeasibleInconsistentProver(TruthTableProver):
    """Submits a predicate-satisfying tuple per context, answers round 2
    from a fixed optimal table; only the re-asked coordinate can catch the
    mismatch.  Targets the c-1 compiler."""

    def __init__(self, game: ContextualityGame):
        _, table = nc_value_with_table(game)
        super().__init__(table)
        self._base_game = game
        self._submissions = {}
        mismatch = Fraction(0)
        for i, ctx in enumerate(game.contexts):
            told = table.on_context(ctx)
            if game.predicate(i, told):
                sub = told
            else:
                accepted = sorted(game.accepts[i])
                if not accepted:
                    raise ValueError("context has no satisfying answer tuple")
                sub = min(accepted,
                          key=lambda t: (sum(x != y for x, y in zip(t, told)), t))
            self._submissions[i] = sub
            hamming = sum(x != y for x, y in zip(sub, told))
            mismatch += game.context_weights[i] * Fraction(hamming, len(ctx))
        self.predicted_mismatch = mismatch
        self.analytic_rate = 1 - mismatch

    def _answers_for_context(self, game: ContextualityGame):
        if game is not self._base_game:
            raise ValueError("prover was built for a different game")
        return self._submissions.__getitem__

    def round1(self, message1: Message1, rng: np.random.Generator) -> Message2:
        if message1.kind is not CompilerKind.ALL_ONE:
            raise ValueError("the feasible-inconsistent prover targets the c-1 compiler")
        return super().round1(message1, rng)


def honest_quantum_prover(qstrat: QuantumStrategy, opad_path: str = "collapsed"):
    return HonestQuantumProver(qstrat, opad_path)


def truthtable_prover(table: Assignment):
    return TruthTableProver(table)


def feasible_inconsistent_prover(game: ContextualityGame):
    return FeasibleInconsistentProver(game)


def run_session(game: ContextualityGame, kind, prover, rng: np.random.Generator,
                lam: int = 8, fhe_backend: str = "stub"):
    """One full four-message session; returns (accept, verifier state)."""
    state, message1 = verifier_new(game, kind, lam, rng, fhe_backend)
    message2 = prover.round1(message1, rng)
    question, key = state.message3(message2)
    answer = prover.round2(question, key, rng)
    return state.decide(answer), state


def estimate_win_rate(game: ContextualityGame, kind, prover, trials: int,
                      rng: np.random.Generator, lam: int = 8,
                      fhe_backend: str = "stub", transcript_log: list = None):
    """Monte Carlo win rate over fresh-key sessions; returns (rate, stderr)."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    wins = 0
    for _ in range(trials):
        accept, state = run_session(game, kind, prover, rng, lam, fhe_backend)
        wins += int(accept)
        if transcript_log is not None:
            transcript_log.append(state.transcript())
    rate = wins / trials
    return rate, math.sqrt(rate * (1 - rate) / trials)


def decision_faithfulness_check(game: ContextualityGame, kind, table: Assignment,
                                trials: int, rng: np.random.Generator,
                                lam: int = 8, fhe_backend: str = "stub",
                                sabotage: bool = False) -> bool:
    """Against a table prover the verifier must accept exactly when either
    the decoded questions fail to cover a full context or the table
    satisfies the sampled context's predicate.  Checked on every trial;
    sabotage flips the consistency branch as a negative control."""
    kind = CompilerKind(kind)
    prover = truthtable_prover(table)
    for _ in range(trials):
        state, message1 = verifier_new(game, kind, lam, rng, fhe_backend)
        state._reject_consistent = sabotage
        message2 = prover.round1(message1, rng)
        question, key = state.message3(message2)
        accept = state.decide(prover.round2(question, key, rng))
        context = game.contexts[state.ctx_index]
        if kind is CompilerKind.ONE_ONE:
            covered = question != state.round1_questions[0]
        elif kind is CompilerKind.ALL_ONE:
            covered = True
        else:
            covered = question == context[state.skip_pos]
        if covered:
            expected = bool(game.predicate(state.ctx_index, table.on_context(context)))
        else:
            expected = True
        if accept != expected:
            return False
    return True


_COMPLETENESS_TEXT = {
    CompilerKind.ONE_ONE: "(1 + quantum_value) / 2",
    CompilerKind.ALL_ONE: "quantum_value",
    CompilerKind.ALL_BUT_ONE: "1 - 1/size + quantum_value/size",
}
_SOUNDNESS_TEXT = {
    CompilerKind.ONE_ONE: "(1 + nc_value) / 2",
    CompilerKind.ALL_ONE: "1 - min_contexts weight/size",
    CompilerKind.ALL_BUT_ONE: "1 - 1/size + nc_value/size",
}


def completeness_formula(game: ContextualityGame, kind, quantum_value: float) -> float:
    """Honest win rate predicted for a strategy of the given game value."""
    kind = CompilerKind(kind)
    if kind is CompilerKind.ONE_ONE:
        return (1 + quantum_value) / 2
    if kind is CompilerKind.ALL_ONE:
        return float(quantum_value)
    size = game.uniform_context_size()
    return 1 - 1 / size + quantum_value / size


def soundness_formula(game: ContextualityGame, kind) -> Fraction:
    """Best classical win rate; exact from the game's weights and nc value."""
    kind = CompilerKind(kind)
    if kind is CompilerKind.ONE_ONE:
        return (1 + nc_value(game)) / 2
    if kind is CompilerKind.ALL_ONE:
        return 1 - min(w / len(c) for w, c in
                       zip(game.context_weights, game.contexts))
    size = game.uniform_context_size()
    return 1 - Fraction(1, size) + nc_value(game) / size


def theorem_bounds(game: ContextualityGame, kind, quantum_value: float = None) -> dict:
    """Bound values plus their defining formulas, for report embedding."""
    kind = CompilerKind(kind)
    out = {
        "kind": kind.value,
        "soundness_formula": _SOUNDNESS_TEXT[kind],
        "soundness_bound": float(soundness_formula(game, kind)),
        "completeness_formula": _COMPLETENESS_TEXT[kind],
    }
    if quantum_value is not None:
        out["completeness_bound"] = completeness_formula(game, kind, quantum_value)
    return out
