"""Benchmarks behind the CLI: exact byte counts over swept workloads.

Each function returns a list of row dicts (sorted by the swept x value) and
never touches the filesystem; the CLI writes the CSV.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

import numpy as np

from .apps.currency import KeyPair, currency_app, make_transfer
from .apps.dummy import dummy_app, dummy_payload
from .apps.registrar import register_payload, registrar_app, topup_payload
from .apps.state import replay
from .apps.sync import BlockStore, sync_app
from .block import HEADER_SIZE, PROBABILISTIC, SIMPLISTIC, make_block
from .coding import sample_response_size
from .nmt import DEFAULT_MAX_LEAF_SIZE, Message, ns_bytes
from .sampler import (
    SamplingParams,
    detection_probability,
    draw_samples,
    euler_coverage,
    required_samples_for_stake,
    square_lambda,
)

CURRENCY_NS = 10
REGISTRAR_NS = 20
OTHER_REGISTRAR_NS = 21
DUMMY_NS = 30

DEFAULT_VALIDITY_SWEEP = [32 * 1024 * 2 ** i for i in range(8)]          # 32 KB .. 4 MB
DEFAULT_DUMMY_SWEEP = [0] + [1024 * 2 ** i for i in range(11)]           # 0 .. 1 MB
DEFAULT_COUNT_SWEEP = [0, 10, 20, 40, 60, 80, 100, 120, 160, 200]


class BenchError(ValueError):
    pass


@dataclass(frozen=True)
class BenchmarkSpec:
    which: str
    sweep: tuple
    seed: int = 0
    share_size: int = 225
    samples: int = 15
    max_leaf_size: int = DEFAULT_MAX_LEAF_SIZE
    mode: str = SIMPLISTIC

    def __post_init__(self) -> None:
        if not self.sweep:
            raise BenchError("sweep must not be empty")
        if any(b <= a for a, b in zip(self.sweep, self.sweep[1:])):
            raise BenchError("sweep must be strictly increasing")


def _dummy_messages(total: int, size: int, rng: random.Random, tag: str = "d") -> list[Message]:
    out = []
    i = 0
    while total > 0:
        n = min(size, total)
        key = f"{tag}{i}".encode()
        value = rng.randbytes(max(0, n - 2 - len(key)))
        out.append(Message(DUMMY_NS, dummy_payload(key, value)))
        total -= n
        i += 1
    return out


def _accounts(seed: int, n: int = 4) -> list[KeyPair]:
    return [KeyPair.from_seed(f"bench:{seed}:{i}") for i in range(n)]


def _transfers(keys: list[KeyPair], count: int, rng: random.Random, nonces: dict) -> list[Message]:
    out = []
    for _ in range(count):
        a, b = rng.sample(keys, 2)
        n = nonces.get(a.public, 0)
        nonces[a.public] = n + 1
        out.append(Message(CURRENCY_NS, make_transfer(a, b.public, 1, n).encode()))
    return out


# -- validity rules -------------------------------------------------------------

def probabilistic_validity_bytes(block, samples: int, seed: int) -> int:
    """Wide header plus the sample responses a light node downloads."""
    k = block.header.k
    n = 4 * k * k
    s = min(samples, n)
    total = block.wide_header().encoded_size()
    for i in draw_samples(n, s, seed):
        total += len(block.square.sample(*divmod(i, 2 * k)).encode())
    return total


def simplistic_validity_bytes(block) -> int:
    return HEADER_SIZE + block.data_size()


def bench_validity(spec: BenchmarkSpec, message_size: int = 1024) -> list[dict]:
    rows = []
    for size in spec.sweep:
        rng = random.Random(spec.seed)
        msgs = _dummy_messages(size, message_size, rng)
        simple = make_block(None, msgs, SIMPLISTIC, spec.max_leaf_size, spec.share_size)
        prob = make_block(None, msgs, PROBABILISTIC, spec.max_leaf_size, spec.share_size)
        measured = probabilistic_validity_bytes(prob, spec.samples, spec.seed)
        k = prob.header.k
        analytic = (HEADER_SIZE + 48 * 4 * k
                    + min(spec.samples, 4 * k * k) * sample_response_size(k, spec.share_size))
        if measured != analytic:
            raise BenchError(f"sample bytes {measured} differ from layout {analytic}")
        rows.append({
            "blockSize": size,
            "k": k,
            "simplisticBytes": simplistic_validity_bytes(simple),
            "probabilisticBytes": measured,
        })
    return rows


# -- application proof size -----------------------------------------------------------

def _fixed_currency(seed: int, count: int = 10) -> list[Message]:
    rng = random.Random(seed + 1)
    return _transfers(_accounts(seed), count, rng, {})


def app_proof_bytes(block, nid: int = CURRENCY_NS) -> int:
    """Bytes a client downloads for one namespace: leaves plus proof."""
    store = BlockStore()
    store.add(block)
    rows = ()
    if block.header.mode == PROBABILISTIC:
        from .apps.sync import candidate_rows
        rows = candidate_rows(block.wide_header(), nid)
    return store.namespace_query(block.hash, nid, rows).encoded_size()


def bench_proofsize(spec: BenchmarkSpec, dummy_size: int = 64) -> list[dict]:
    cur = _fixed_currency(spec.seed)
    rows = []
    for x in spec.sweep:
        msgs = cur + _dummy_messages(x, dummy_size, random.Random(spec.seed))
        simple = make_block(None, msgs, SIMPLISTIC, spec.max_leaf_size, spec.share_size)
        prob = make_block(None, msgs, PROBABILISTIC, spec.max_leaf_size, spec.share_size)
        rows.append({
            "irrelevantBytes": x,
            "leaves": len(msgs),
            "k": prob.header.k,
            "appProofBytesSimplistic": app_proof_bytes(simple),
            "appProofBytesProbabilistic": app_proof_bytes(prob),
        })
    return rows


# -- state size -----------------------------------------------------------------

def bench_statesize(spec: BenchmarkSpec, dummy_size: int = 256) -> list[dict]:
    keys = _accounts(spec.seed)
    funded = {k.public: 1000 for k in keys}
    apps = {CURRENCY_NS: currency_app(CURRENCY_NS, funded), DUMMY_NS: dummy_app(DUMMY_NS)}
    rows = []
    for x in spec.sweep:
        msgs = _fixed_currency(spec.seed) + _dummy_messages(x, dummy_size, random.Random(spec.seed))
        block = make_block(None, msgs, spec.mode, spec.max_leaf_size, spec.share_size)
        store = BlockStore()
        store.add(block)
        states, stats = sync_app(apps, CURRENCY_NS, [block.wide_header()], [store], spec.max_leaf_size)
        dummy_state = replay(apps, DUMMY_NS, [block])[DUMMY_NS]
        rows.append({
            "irrelevantBytes": x,
            "currencyEntries": states[CURRENCY_NS].entries(),
            "totalEntries": states[CURRENCY_NS].entries() + dummy_state.entries(),
            "currencySyncBytes": stats.total_bytes,
        })
    return rows


# -- registrar ----------------------------------------------------------------------

def _registrar_apps(seed: int):
    keys = _accounts(seed, 6)
    funded = {k.public: 10_000 for k in keys}
    reg_key = KeyPair.from_seed(f"bench:{seed}:registrar")
    other_key = KeyPair.from_seed(f"bench:{seed}:registrar2")
    apps = {
        CURRENCY_NS: currency_app(CURRENCY_NS, funded),
        REGISTRAR_NS: registrar_app(REGISTRAR_NS, CURRENCY_NS, reg_key.public),
        OTHER_REGISTRAR_NS: registrar_app(OTHER_REGISTRAR_NS, CURRENCY_NS, other_key.public),
        DUMMY_NS: dummy_app(DUMMY_NS),
    }
    return apps, keys, reg_key


def bench_registrar(spec: BenchmarkSpec, kind: str) -> list[dict]:
    """Bytes a registrar client downloads for one block.

    topUp    : x = unrelated currency transfers in the block (the registrar
               depends on currency, so it must fetch them all)
    register : x = registrations in another registrar instance (not a
               dependency, so only proof paths grow)
    """
    if kind not in ("topUp", "register"):
        raise BenchError("kind must be topUp or register")
    apps, keys, reg_key = _registrar_apps(spec.seed)
    rows = []
    for x in spec.sweep:
        rng = random.Random(spec.seed)
        nonces: dict = {}
        payer = keys[0]
        n0 = nonces.get(payer.public, 0)
        nonces[payer.public] = n0 + 1
        top = make_transfer(payer, reg_key.public, 50, n0, ns_bytes(REGISTRAR_NS))
        msgs = [Message(CURRENCY_NS, top.encode()), Message(REGISTRAR_NS, topup_payload(top.hash)),
                Message(REGISTRAR_NS, register_payload(payer, REGISTRAR_NS, b"bench-name"))]
        if kind == "topUp":
            msgs += _transfers(keys[1:], x, rng, nonces)
        else:
            msgs += _transfers(keys[1:], 10, rng, nonces)
            for i in range(x):
                who = keys[1 + i % 5]
                msgs.append(Message(OTHER_REGISTRAR_NS, register_payload(who, OTHER_REGISTRAR_NS, f"n{i}".encode())))
        block = make_block(None, msgs, spec.mode, spec.max_leaf_size, spec.share_size)
        store = BlockStore()
        store.add(block)
        states, stats = sync_app(apps, REGISTRAR_NS, [block.wide_header()], [store], spec.max_leaf_size)
        oracle = replay(apps, REGISTRAR_NS, [block])
        if states[REGISTRAR_NS].commitment() != oracle[REGISTRAR_NS].commitment():
            raise BenchError("registrar sync diverged from replay")
        rows.append({
            "x": x,
            "kind": kind,
            "downloadBytes": stats.total_bytes,
            "currencyBytes": stats.leaf_bytes.get(CURRENCY_NS, 0),
            "registrarBytes": stats.leaf_bytes.get(REGISTRAR_NS, 0),
            "proofBytes": stats.proof_bytes,
        })
    return rows


# -- sampling table ----------------------------------------------------------------------

def sampling_table(ks=(2, 4, 8), h: float = 0.5, p: float = 0.99, ms=(0.5, 0.25, 0.125)) -> list[dict]:
    """Per-node sample counts from the stake rule, plus the single-client detection row.

    lambda_rule "square": lambda = (k+1)^2 - 1 for a 2k x 2k square.
    """
    rows = []
    for k in ks:
        n = 4 * k * k
        lam = square_lambda(k)
        for m in ms:
            params = SamplingParams(n, lam, h, m, p)
            s = required_samples_for_stake(params)
            rows.append({
                "kind": "coverage", "n": n, "k": k, "lambda_rule": "square", "lambda": lam,
                "h": h, "m": m, "c": params.c, "s": s,
                "coverage": euler_coverage(n, lam, s, params.c),
            })
    k = 32
    n = 4 * k * k
    rows.append({
        "kind": "detection", "n": n, "k": k, "lambda_rule": "square", "lambda": square_lambda(k),
        "h": "", "m": "", "c": 1, "s": 15,
        "coverage": detection_probability(n, (k + 1) ** 2, 15),
    })
    return rows


# -- fits used by the trend checks -----------------------------------------------------------

def fit_line(x, y, through_origin: bool = False) -> dict:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if through_origin:
        b = float((x @ y) / (x @ x))
        pred = b * x
        a = 0.0
        ss_tot = float(y @ y)  # uncentred, as for any no-intercept fit
    else:
        b, a = np.polyfit(x, y, 1)
        pred = a + b * x
        ss_tot = float(((y - y.mean()) ** 2).sum())
    rss = float(((y - pred) ** 2).sum())
    return {"a": float(a), "b": float(b), "rss": rss, "r2": 1 - rss / ss_tot if ss_tot else 1.0}


def aic(rss: float, n: int, params: int = 2) -> float:
    rss = max(rss, 1e-12)
    return n * math.log(rss / n) + 2 * params


def log_vs_linear(x, y) -> dict:
    """Compare y = a + b x against y = a + b ln x (x > 0 only)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = x > 0
    x, y = x[keep], y[keep]
    lin = fit_line(x, y)
    lg = fit_line(np.log(x), y)
    return {"linear": lin, "log": lg, "aic_linear": aic(lin["rss"], len(x)), "aic_log": aic(lg["rss"], len(x))}


def linear_term_t(x, y) -> float:
    """t statistic of c in y = a + b ln x + c x (x > 0 only).

    Near zero when a linear term adds nothing beyond the log model.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = x > 0
    x, y = x[keep], y[keep]
    design = np.column_stack([np.ones_like(x), np.log(x), x])
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ beta
    dof = len(x) - 3
    if dof < 1:
        raise BenchError("need at least four positive x values")
    s2 = float(resid @ resid) / dof
    var = s2 * np.linalg.inv(design.T @ design)[2, 2]
    if var == 0:
        return 0.0 if beta[2] == 0 else math.inf
    return float(beta[2] / math.sqrt(var))


def make_chain(blocks: int, mode: str = SIMPLISTIC, transfers: int = 10, dummy_bytes: int = 4096,
               seed: int = 0, share_size: int = 225, max_leaf_size: int = DEFAULT_MAX_LEAF_SIZE) -> list:
    """A linear chain of currency transfers plus dummy filler, valid under replay."""
    if blocks < 1:
        raise BenchError("need at least one block")
    keys = _accounts(seed)
    rng = random.Random(seed)
    nonces: dict = {}
    out = []
    prev = None
    for h in range(blocks):
        msgs = _transfers(keys, transfers, rng, nonces) + _dummy_messages(dummy_bytes, 256, rng, f"b{h}.")
        block = make_block(prev, msgs, mode, max_leaf_size, share_size)
        out.append(block)
        prev = block.header
    return out


def chain_apps(seed: int = 0) -> dict:
    funded = {k.public: 1000 for k in _accounts(seed)}
    return {CURRENCY_NS: currency_app(CURRENCY_NS, funded), DUMMY_NS: dummy_app(DUMMY_NS)}
