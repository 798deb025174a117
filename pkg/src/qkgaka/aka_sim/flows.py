"""QKG-AKA and the EPS-AKA / SE-AKA baselines as message-level flows.

All three schemes share one message pattern::

    UE  -> MME  attach_request        identity (+ Pre-K generation for QKG)
    MME -> HSS  auth_info_request     HSS fetch
    HSS -> MME  auth_info_answer      nonce, xres, autn, sealed K_ASME
    MME -> UE   auth_request          nonce, autn (+ sqn for the baselines)
    UE  -> MME  auth_response         res
    MME -> UE   security_mode_command MAC under K_NASint
    MME -> HSS  update_location_request
    HSS -> MME  update_location_answer  (HSS commits the next Pre-K here)
    MME -> ENB  initial_context_setup K_eNB, NH

so the UE-MME serving flow is four messages plus the two-message HSS fetch.
The schemes differ only in what the HSS fetch costs and how K is obtained:

* QKG-AKA: HSS and UE each derive a fresh K from their grid replica and the
  current Pre-K (``grid_lookup_cost_ms``). The UE starts this as soon as it
  sends the attach request. Freshness is the Pre-K generation counter.
* EPS-AKA: permanent K, HSS generates one vector per fetch
  (``av_fetch_cost_ms``); freshness is a sequence number.
* SE-AKA: like EPS-AKA but one fetch returns ``se_group_size`` vectors that
  the MME caches, and UE and MME each spend public-key operations
  (``pk_op_cost_ms``) per run.

K_ASME travels from HSS to MME sealed under the MME-HSS link key, so no
message ever carries K, Pre-K or K_ASME in the clear.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError, KeyEstablishmentError, StateError
from ..key_hierarchy import (
    KeyChain,
    derive_ck_ik,
    derive_k_asme,
    derive_k_enb,
    derive_master_key,
    derive_nas_keys,
    derive_nh,
    kdf,
)
from ..qk_grid import run_grid_generation
from .engine import Interceptor, Network
from .model import AuthTranscript, Entity, Outcome, Role, SimMessage, SubscriberState
from .scenario import AttackerConfig, Scenario, seed_stream

LABEL_RES = b"AKA/RES"
LABEL_AUTN = b"AKA/AUTN"
LABEL_SEAL = b"AKA/S6a"
LABEL_SMC = b"AKA/SMC"
LABEL_EPS_CK = b"EPS/CK"
LABEL_EPS_IK = b"EPS/IK"

_U64 = struct.Struct(">Q")
_VECTOR = struct.Struct(">16sQ16s16s32s")  # nonce, sqn, xres, autn, sealed K_ASME


def _xor(a: bytes, b: bytes) -> bytes:
    return bytes(x ^ y for x, y in zip(a, b))


def _seal(link_key: bytes, nonce: bytes, k_asme: bytes) -> bytes:
    # Sealing is an involution: the same call unseals.
    return _xor(k_asme, kdf(LABEL_SEAL, link_key, nonce))


def _challenge(k: bytes, nonce: bytes, freshness: int) -> tuple[bytes, bytes]:
    """``(xres, autn)`` for one challenge; ``freshness`` is the generation or SQN."""
    f = _U64.pack(freshness)
    return kdf(LABEL_RES, k, nonce, f, length=16), kdf(LABEL_AUTN, k, nonce, f, length=16)


def _eps_ck_ik(k: bytes, nonce: bytes) -> tuple[bytes, bytes]:
    return kdf(LABEL_EPS_CK, k, nonce, length=16), kdf(LABEL_EPS_IK, k, nonce, length=16)


class _Run:
    """One authentication of one UE, as a discrete-event simulation."""

    scheme = ""

    def __init__(self, scenario: Scenario, interceptor: Interceptor | None = None, provision: bool = False):
        s = scenario
        self.s = s
        self.costs = s.costs
        self.net = Network(s.costs, interceptor)
        self.ue = Entity(Role.UE, s.ue_id)
        self.enb = Entity(Role.ENB, "enb-1")
        self.mme = Entity(Role.MME, "mme-1")
        self.hss = Entity(Role.HSS, "hss-1")
        self.qks = Entity(Role.QKS, "qks-1")
        self.entities = (self.ue, self.enb, self.mme, self.hss, self.qks)
        self.mme.hold("s6a", s.s6a_key)
        self.hss.hold("s6a", s.s6a_key)
        self.hss_rng = seed_stream(s.seed, "hss")
        self.provision = provision
        self.detected = False

        st = s.state
        self.ue_pre_k, self.hss_pre_k = st.ue_pre_k, st.hss_pre_k
        self.ue_sqn, self.hss_sqn = st.ue_sqn, st.hss_sqn
        self.se_cache = list(st.se_cache)
        self.ue_grid, self.hss_grid = s.ue_grid, s.grid

        self.ue_next_pre_k = self.hss_next_pre_k = None
        self.mme_vector = None
        self.ncc = 0

    # -- driver ------------------------------------------------------------

    def execute(self, inject: tuple[SimMessage, ...] = ()) -> AuthTranscript:
        self.setup()
        if inject:
            # replayed messages arrive from an impersonator, not the real UE
            fake = Entity(Role.UE, self.s.ue_id)
            for m in inject:
                self.net.send(fake, self._by_id(m.receiver), m.kind, dict(m.payload), at=0.0)
        elif self.provision:
            self._qks_provision()
        else:
            self._ue_attach()
        self.net.run(self._dispatch)
        return self._transcript()

    def setup(self) -> None:
        pass

    def _by_id(self, ident: str) -> Entity:
        for e in self.entities:
            if e.id == ident:
                return e
        raise ConfigurationError(f"no entity with id {ident!r}")

    def _dispatch(self, receiver: Entity, msg: SimMessage) -> None:
        handler = getattr(self, f"_{receiver.role.value.lower()}_{msg.kind}", None)
        if handler is not None:
            handler(msg)

    def _transcript(self) -> AuthTranscript:
        msgs = tuple(self.net.delivered)
        ue_chain = net_chain = None
        if self.ue.state == "registered":
            ue_chain = KeyChain(**{f: self.ue.keys[f] for f in
                                   ("k", "ck", "ik", "k_asme", "k_nas_enc", "k_nas_int", "k_enb", "nh")},
                                nh_chain_counter=1)
        if self.enb.state == "ready" and self.mme.state == "registered":
            h, m, e = self.hss.keys, self.mme.keys, self.enb.keys
            net_chain = KeyChain(h["k"], h["ck"], h["ik"], m["k_asme"], m["k_nas_enc"], m["k_nas_int"],
                                 e["k_enb"], e["nh"], self.ncc)
        if self.detected:
            outcome = Outcome.DETECTION_ABORT
        elif ue_chain is not None and ue_chain == net_chain:
            outcome = Outcome.SUCCESS
        else:
            outcome = Outcome.AUTH_FAILURE
        return AuthTranscript(
            scheme=self.scheme,
            messages=msgs,
            elapsed_ms=self.net.elapsed(self.entities),
            outcome=outcome,
            hss_load=sum(m.receiver == self.hss.id for m in msgs),
            mme_load=sum(m.receiver == self.mme.id for m in msgs),
            state=SubscriberState(self.ue_pre_k, self.hss_pre_k, self.ue_sqn, self.hss_sqn, tuple(self.se_cache)),
            ue_keys=ue_chain,
            network_keys=net_chain,
        )

    # -- UE ----------------------------------------------------------------

    def _ue_attach(self) -> None:
        self.ue.state = "wait_challenge"
        t = self._ue_before_attach()
        self.net.send(self.ue, self.mme, "attach_request", self._attach_payload(), at=t)
        self._ue_precompute()

    def _ue_before_attach(self) -> float:
        return self.net.now

    def _ue_precompute(self) -> None:
        pass

    def _attach_payload(self) -> dict:
        return {"ue_id": self.ue.id}

    def _ue_auth_request(self, msg: SimMessage) -> None:
        if self.ue.state != "wait_challenge":
            return
        t = self._ue_challenge_work()
        nonce = msg.payload["nonce"]
        res, cause = self._ue_check_challenge(msg)
        if cause:
            self.ue.state = "auth_failed"
            self.net.send(self.ue, self.mme, "auth_failure", {"cause": cause}, at=t)
            return
        ck, ik = self._ue_ck_ik(nonce)
        self.ue.hold("ck", ck)
        self.ue.hold("ik", ik)
        t = self.net.work(self.ue, self.costs.kdf_cost_ms)
        self.ue.hold("k_asme", derive_k_asme(ck, ik, self.s.ctx))
        self.ue.state = "wait_smc"
        self.ue_nonce = nonce
        self.net.send(self.ue, self.mme, "auth_response", {"res": res}, at=t)

    def _ue_challenge_work(self) -> float:
        return self.net.work(self.ue, self.costs.kdf_cost_ms)

    def _ue_security_mode_command(self, msg: SimMessage) -> None:
        if self.ue.state != "wait_smc":
            return
        ctx = self.s.ctx
        k_asme = self.ue.keys["k_asme"]
        self.net.work(self.ue, self.costs.kdf_cost_ms)
        enc, integ = derive_nas_keys(k_asme, ctx)
        self.net.work(self.ue, self.costs.kdf_cost_ms)
        k_enb = derive_k_enb(k_asme, ctx)
        if msg.payload["mac"] != kdf(LABEL_SMC, integ, self.ue_nonce, length=16):
            self.ue.state = "smc_failed"
            return
        self.ue.hold("k_nas_enc", enc)
        self.ue.hold("k_nas_int", integ)
        self.ue.hold("k_enb", k_enb)
        self.ue.hold("nh", derive_nh(k_asme, k_enb))
        self.ue.state = "registered"
        self._ue_commit()

    def _ue_commit(self) -> None:
        pass

    def _ue_attach_reject(self, msg: SimMessage) -> None:
        self.ue.state = "rejected"

    # -- MME ---------------------------------------------------------------

    def _mme_attach_request(self, msg: SimMessage) -> None:
        if self.mme.state != "idle":
            return
        self.mme.state = "wait_vector"
        t = self.net.work(self.mme, 0.0)
        self._mme_fetch(msg, t)

    def _mme_fetch(self, msg: SimMessage, t: float) -> None:
        self.net.send(self.mme, self.hss, "auth_info_request", dict(msg.payload), at=t)

    def _mme_auth_info_answer(self, msg: SimMessage) -> None:
        if self.mme.state != "wait_vector":
            return
        t = self.net.work(self.mme, 0.0)
        if "cause" in msg.payload:
            self.mme.state = "rejected"
            self.net.send(self.mme, self.ue, "attach_reject", {"cause": msg.payload["cause"]}, at=t)
            return
        self._mme_challenge(self._vector_from(msg), t)

    def _vector_from(self, msg: SimMessage) -> tuple:
        p = msg.payload
        return p["nonce"], p.get("sqn", 0), p["xres"], p["autn"], p["sealed_k_asme"]

    def _mme_challenge(self, vector: tuple, t: float) -> None:
        nonce, sqn, xres, autn, sealed = vector
        self.mme.hold("k_asme", _seal(self.mme.keys["s6a"], nonce, sealed))
        self.mme_vector = (nonce, xres)
        self.mme.state = "wait_response"
        self.net.send(self.mme, self.ue, "auth_request", self._challenge_payload(nonce, sqn, autn), at=t)

    def _challenge_payload(self, nonce: bytes, sqn: int, autn: bytes) -> dict:
        return {"nonce": nonce, "sqn": sqn, "autn": autn}

    def _mme_auth_response(self, msg: SimMessage) -> None:
        if self.mme.state != "wait_response":
            return
        nonce, xres = self.mme_vector
        if msg.payload["res"] != xres:
            self.mme.state = "rejected"
            t = self.net.work(self.mme, 0.0)
            self.net.send(self.mme, self.ue, "attach_reject", {"cause": "res_mismatch"}, at=t)
            return
        self._mme_response_work()
        ctx = self.s.ctx
        k_asme = self.mme.keys["k_asme"]
        self.net.work(self.mme, self.costs.kdf_cost_ms)
        enc, integ = derive_nas_keys(k_asme, ctx)
        t = self.net.work(self.mme, self.costs.kdf_cost_ms)
        k_enb = derive_k_enb(k_asme, ctx)
        nh = derive_nh(k_asme, k_enb)
        for name, v in (("k_nas_enc", enc), ("k_nas_int", integ), ("k_enb", k_enb), ("nh", nh)):
            self.mme.hold(name, v)
        self.mme.state = "wait_location"
        self.net.send(self.mme, self.ue, "security_mode_command",
                      {"mac": kdf(LABEL_SMC, integ, nonce, length=16), "algorithm_id": self.s.algorithm_id}, at=t)
        self.net.send(self.mme, self.hss, "update_location_request", {"ue_id": self.ue.id}, at=t)
        self.net.send(self.mme, self.enb, "initial_context_setup", {"k_enb": k_enb, "nh": nh, "ncc": 1}, at=t)

    def _mme_response_work(self) -> None:
        pass

    def _mme_auth_failure(self, msg: SimMessage) -> None:
        self.mme.state = "rejected"

    def _mme_update_location_answer(self, msg: SimMessage) -> None:
        if self.mme.state == "wait_location":
            self.mme.state = "registered"

    # -- HSS ---------------------------------------------------------------

    def _hss_update_location_request(self, msg: SimMessage) -> None:
        t = self.net.work(self.hss, 0.0)
        self._hss_commit()
        self.hss.state = "committed"
        self.net.send(self.hss, self.mme, "update_location_answer", {"ue_id": msg.payload["ue_id"]}, at=t)

    def _hss_commit(self) -> None:
        pass

    def _hss_reject(self, cause: str) -> None:
        t = self.net.work(self.hss, 0.0)
        self.hss.state = "rejected"
        self.net.send(self.hss, self.mme, "auth_info_answer", {"cause": cause}, at=t)

    # -- eNB ---------------------------------------------------------------

    def _enb_initial_context_setup(self, msg: SimMessage) -> None:
        self.enb.hold("k_enb", msg.payload["k_enb"])
        self.enb.hold("nh", msg.payload["nh"])
        self.ncc = msg.payload["ncc"]
        self.enb.state = "ready"

    # -- QK-S grid provisioning ----------------------------------------------

    def _qks_provision(self) -> None:
        t = self.net.work(self.qks, self.costs.qkd_exchange_cost_ms)
        try:
            grid = run_grid_generation(self.s.provisioning_channel(), self.s.grid_n,
                                       retries=self.s.attacker.retries)
        except KeyEstablishmentError:
            self.detected = True
            self.qks.state = "aborted"
            for dst in (self.hss, self.ue):
                self.net.send(self.qks, dst, "qkd_abort", {"cause": "eavesdropper_detected"}, at=t)
            return
        self.new_grid = grid
        self.qks.state = "provisioned"
        for dst in (self.hss, self.ue):
            self.net.send(self.qks, dst, "grid_ready", {"digest": grid.source_digest}, at=t)

    def _hss_grid_ready(self, msg: SimMessage) -> None:
        self.hss_grid = self.new_grid

    def _ue_grid_ready(self, msg: SimMessage) -> None:
        self.ue_grid = self.new_grid
        self._ue_attach()

    def _hss_qkd_abort(self, msg: SimMessage) -> None:
        self.hss.state = "aborted"

    def _ue_qkd_abort(self, msg: SimMessage) -> None:
        self.ue.state = "aborted"


class _QkgRun(_Run):
    scheme = "qkg"

    def setup(self) -> None:
        for g in (self.hss_grid, self.ue_grid):
            if g is None or not g.cells:
                raise StateError("scenario has no populated QK-GRID")

    def _attach_payload(self) -> dict:
        return {"ue_id": self.ue.id, "generation": self.ue_pre_k.generation}

    def _ue_precompute(self) -> None:
        # local K derivation overlaps with the network round trip
        self.net.work(self.ue, self.costs.grid_lookup_cost_ms)
        k, self.ue_next_pre_k = derive_master_key(self.ue_grid, self.ue_pre_k)
        self.ue.hold("k", k)

    def _hss_auth_info_request(self, msg: SimMessage) -> None:
        if msg.payload.get("generation") != self.hss_pre_k.generation:
            self._hss_reject("stale_generation")
            return
        self.net.work(self.hss, self.costs.grid_lookup_cost_ms)
        k, self.hss_next_pre_k = derive_master_key(self.hss_grid, self.hss_pre_k)
        self.hss.hold("k", k)
        nonce = self.hss_rng.bytes(16)
        self.net.work(self.hss, self.costs.kdf_cost_ms)
        xres, autn = _challenge(k, nonce, self.hss_pre_k.generation)
        ck, ik = derive_ck_ik(k)
        self.hss.hold("ck", ck)
        self.hss.hold("ik", ik)
        t = self.net.work(self.hss, self.costs.kdf_cost_ms)
        k_asme = derive_k_asme(ck, ik, self.s.ctx)
        self.hss.hold("k_asme", k_asme)
        self.net.send(self.hss, self.mme, "auth_info_answer", {
            "nonce": nonce, "xres": xres, "autn": autn,
            "sealed_k_asme": _seal(self.hss.keys["s6a"], nonce, k_asme),
        }, at=t)

    def _challenge_payload(self, nonce: bytes, sqn: int, autn: bytes) -> dict:
        return {"nonce": nonce, "autn": autn}

    def _ue_check_challenge(self, msg: SimMessage) -> tuple[bytes, str | None]:
        xres, autn = _challenge(self.ue.keys["k"], msg.payload["nonce"], self.ue_pre_k.generation)
        if autn != msg.payload["autn"]:
            return b"", "mac_failure"
        return xres, None

    def _ue_ck_ik(self, nonce: bytes) -> tuple[bytes, bytes]:
        return derive_ck_ik(self.ue.keys["k"])

    def _ue_commit(self) -> None:
        self.ue_pre_k = self.ue_next_pre_k

    def _hss_commit(self) -> None:
        if self.hss_next_pre_k is not None:
            self.hss_pre_k = self.hss_next_pre_k


class _EpsRun(_Run):
    scheme = "eps"

    def setup(self) -> None:
        self.ue.hold("k", self.s.permanent_k)
        self.hss.hold("k", self.s.permanent_k)

    def _make_vector(self, sqn: int) -> tuple:
        k = self.hss.keys["k"]
        nonce = self.hss_rng.bytes(16)
        self.net.work(self.hss, self.costs.kdf_cost_ms)
        xres, autn = _challenge(k, nonce, sqn)
        ck, ik = _eps_ck_ik(k, nonce)
        self.net.work(self.hss, self.costs.kdf_cost_ms)
        k_asme = derive_k_asme(ck, ik, self.s.ctx)
        self.hss.hold("ck", ck)
        self.hss.hold("ik", ik)
        self.hss.hold("k_asme", k_asme)
        return nonce, sqn, xres, autn, _seal(self.hss.keys["s6a"], nonce, k_asme)

    def _hss_auth_info_request(self, msg: SimMessage) -> None:
        self.net.work(self.hss, self.costs.av_fetch_cost_ms)
        self.hss_sqn += 1
        nonce, sqn, xres, autn, sealed = self._make_vector(self.hss_sqn)
        self.net.send(self.hss, self.mme, "auth_info_answer", {
            "nonce": nonce, "sqn": sqn, "xres": xres, "autn": autn, "sealed_k_asme": sealed,
        }, at=self.hss.busy_until)

    def _ue_check_challenge(self, msg: SimMessage) -> tuple[bytes, str | None]:
        sqn = msg.payload["sqn"]
        xres, autn = _challenge(self.ue.keys["k"], msg.payload["nonce"], sqn)
        if autn != msg.payload["autn"]:
            return b"", "mac_failure"
        if sqn <= self.ue_sqn:
            return b"", "sync_failure"
        self.ue_sqn = sqn
        return xres, None

    def _ue_ck_ik(self, nonce: bytes) -> tuple[bytes, bytes]:
        return _eps_ck_ik(self.ue.keys["k"], nonce)


class _SeRun(_EpsRun):
    """SE-AKA: batched vector fetch plus per-run public-key work.

    The HSS-held CK/IK/K_ASME after a group fetch belong to the last vector
    generated, so the network-side chain is read from the vector actually
    used (kept by the MME) rather than from the HSS.
    """

    scheme = "se"

    def _ue_before_attach(self) -> float:
        return self.net.work(self.ue, self.costs.pk_op_cost_ms)

    def _ue_challenge_work(self) -> float:
        self.net.work(self.ue, self.costs.pk_op_cost_ms)
        return super()._ue_challenge_work()

    def _mme_response_work(self) -> None:
        self.net.work(self.mme, self.costs.pk_op_cost_ms)

    def _mme_fetch(self, msg: SimMessage, t: float) -> None:
        if self.se_cache:
            self._mme_challenge(self.se_cache.pop(0), t)
        else:
            self.net.send(self.mme, self.hss, "auth_info_request",
                          {**msg.payload, "count": self.costs.se_group_size}, at=t)

    def _hss_auth_info_request(self, msg: SimMessage) -> None:
        self.net.work(self.hss, self.costs.av_fetch_cost_ms)
        vectors = []
        for _ in range(msg.payload["count"]):
            self.hss_sqn += 1
            vectors.append(_VECTOR.pack(*self._make_vector(self.hss_sqn)))
        self.net.send(self.hss, self.mme, "auth_info_answer", {"vectors": b"".join(vectors)},
                      at=self.hss.busy_until)

    def _vector_from(self, msg: SimMessage) -> tuple:
        blob = msg.payload["vectors"]
        vecs = [_VECTOR.unpack_from(blob, i) for i in range(0, len(blob), _VECTOR.size)]
        self.se_cache.extend(vecs[1:])
        return vecs[0]

    def _mme_challenge(self, vector: tuple, t: float) -> None:
        self.se_vector_nonce = vector[0]
        super()._mme_challenge(vector, t)

    def _transcript(self) -> AuthTranscript:
        # rebuild the HSS row for the vector in use; it never leaves the network side
        if "k" in self.hss.keys and getattr(self, "se_vector_nonce", None) is not None:
            ck, ik = _eps_ck_ik(self.hss.keys["k"], self.se_vector_nonce)
            self.hss.hold("ck", ck)
            self.hss.hold("ik", ik)
        return super()._transcript()


def run_qkg_aka(scenario: Scenario) -> AuthTranscript:
    return _QkgRun(scenario).execute()


def run_eps_aka(scenario: Scenario) -> AuthTranscript:
    return _EpsRun(scenario).execute()


def run_se_aka(scenario: Scenario) -> AuthTranscript:
    return _SeRun(scenario).execute()


SCHEMES = {"qkg": run_qkg_aka, "eps": run_eps_aka, "se": run_se_aka}


def _auth_seed(seed: int, i: int) -> int:
    return int(np.random.SeedSequence([seed, i]).generate_state(1, np.uint64)[0])


LOAD_CURVE_COLUMNS = ("auth_index", "scheme", "elapsed_ms_cumulative", "hss_msgs", "mme_msgs")


@dataclass(frozen=True, eq=False)
class LoadCurve:
    scheme: str
    rows: tuple[dict, ...]
    transcripts: tuple[AuthTranscript, ...]
    final_state: SubscriberState

    @property
    def cumulative_elapsed(self) -> list[float]:
        return [r["elapsed_ms_cumulative"] for r in self.rows]


def run_batch(scheme: str, n_auth: int, scenario: Scenario) -> LoadCurve:
    """Run ``n_auth`` authentications back to back, threading protocol state.

    Authentication ``i`` (0-based) uses seed ``(scenario.seed, i)``. For
    QKG-AKA every successful run advances the Pre-K generation by one.
    """
    if scheme not in SCHEMES:
        raise ConfigurationError(f"unknown scheme {scheme!r}; expected one of {sorted(SCHEMES)}")
    if n_auth < 1:
        raise ConfigurationError("n_auth must be at least 1")
    run = SCHEMES[scheme]
    state = scenario.state
    total = 0.0
    hss = mme = 0
    rows, transcripts = [], []
    for i in range(n_auth):
        t = run(replace(scenario, seed=_auth_seed(scenario.seed, i), state=state))
        state = t.state
        total += t.elapsed_ms
        hss += t.hss_load
        mme += t.mme_load
        transcripts.append(t)
        rows.append({"auth_index": i + 1, "scheme": scheme, "elapsed_ms_cumulative": total,
                     "hss_msgs": hss, "mme_msgs": mme})
    return LoadCurve(scheme, tuple(rows), tuple(transcripts), state)


def load_curve_csv(curves) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, LOAD_CURVE_COLUMNS, lineterminator="\n")
    w.writeheader()
    for c in curves:
        for r in c.rows:
            w.writerow({**r, "elapsed_ms_cumulative": repr(float(r["elapsed_ms_cumulative"]))})
    return buf.getvalue()


def write_load_curve_csv(curves, path) -> None:
    Path(path).write_text(load_curve_csv(curves))


def _tamper_interceptor(rng: np.random.Generator) -> Interceptor:
    done = False

    def flip(msg: SimMessage) -> SimMessage:
        nonlocal done
        if done or msg.kind != "auth_request":
            return msg
        done = True
        field_name = ("nonce", "autn")[int(rng.integers(2))]
        value = bytearray(msg.payload[field_name])
        bit = int(rng.integers(8 * len(value)))
        value[bit // 8] ^= 0x80 >> (bit % 8)
        return replace(msg, payload={**msg.payload, field_name: bytes(value)})

    return flip


def run_attack(scenario: Scenario, attacker: str | AttackerConfig | None = None) -> AuthTranscript:
    """Run QKG-AKA against an attacker; attacks show up as outcomes.

    * ``tamper``: one bit of the challenge (nonce or AUTN) is flipped in flight.
    * ``replay``: an honest run completes, then its attach request is replayed
      against the advanced state and the replay's transcript is returned.
    * ``intercept_resend``: the grid is re-provisioned over a QKD link with an
      intercept-resend eavesdropper before the attach.
    """
    if attacker is None:
        cfg = scenario.attacker
    elif isinstance(attacker, str):
        cfg = replace(scenario.attacker, kind=attacker)
    else:
        cfg = attacker
    scenario = replace(scenario, attacker=cfg)
    if cfg.kind == "none":
        return run_qkg_aka(scenario)
    if cfg.kind == "tamper":
        return _QkgRun(scenario, _tamper_interceptor(seed_stream(scenario.seed, "attacker"))).execute()
    if cfg.kind == "replay":
        first = run_qkg_aka(scenario)
        recorded = tuple(m for m in first.messages if m.kind == "attach_request")
        return _QkgRun(scenario.with_state(first.state)).execute(inject=recorded)
    return _QkgRun(scenario, provision=True).execute()
