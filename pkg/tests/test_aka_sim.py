import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qkgaka.aka_sim import (
    ROLE_KEYS,
    AttackerConfig,
    CostModel,
    Entity,
    Outcome,
    Role,
    Scenario,
    load_curve_csv,
    load_scenario,
    run_attack,
    run_batch,
    run_eps_aka,
    run_qkg_aka,
    run_se_aka,
    scenario_from_config,
)
from qkgaka.aka_sim.model import SubscriberState
from qkgaka.errors import ConfigurationError, FormatError, KeyConfinementError, StateError
from qkgaka.key_hierarchy import PreK, derive_master_key
from qkgaka.qk_grid import QkGrid, construct_layout

RUNNERS = {"qkg": run_qkg_aka, "eps": run_eps_aka, "se": run_se_aka}


@pytest.fixture(scope="module")
def scenario():
    return Scenario.build(7)


def _secrets(t, scenario):
    """Every K, Pre-K and K_ASME either side held during a run."""
    out = {scenario.state.ue_pre_k.value, scenario.state.hss_pre_k.value, scenario.permanent_k}
    for chain in (t.ue_keys, t.network_keys):
        if chain is not None:
            out |= {chain.k, chain.k_asme}
    return out


@pytest.mark.parametrize("name", ["qkg", "eps", "se"])
def test_clean_run_agrees(scenario, name):
    t = RUNNERS[name](scenario)
    assert t.outcome is Outcome.SUCCESS
    assert t.ue_keys == t.network_keys
    for field in ("k", "ck", "ik", "k_asme", "k_nas_enc", "k_nas_int", "k_enb", "nh"):
        assert getattr(t.ue_keys, field) == getattr(t.network_keys, field)


def test_eps_message_pattern(scenario):
    t = run_eps_aka(scenario)
    ue_mme = [m.kind for m in t.messages if {m.sender, m.receiver} == {"ue-0001", "mme-1"}]
    assert ue_mme == ["attach_request", "auth_request", "auth_response", "security_mode_command"]
    hss_fetch = [m.kind for m in t.messages if m.kind.startswith("auth_info")]
    assert hss_fetch == ["auth_info_request", "auth_info_answer"]


@pytest.mark.parametrize("name", ["qkg", "eps", "se"])
def test_no_key_in_clear(scenario, name):
    t = RUNNERS[name](scenario)
    secrets = _secrets(t, scenario)
    for m in t.messages:
        blob = m.payload_bytes()
        for s in secrets:
            assert s not in blob
            assert s[:16] not in blob


@pytest.mark.parametrize("name", ["qkg", "eps", "se"])
def test_load_accounting(scenario, name):
    t = RUNNERS[name](scenario)
    assert t.hss_load == sum(m.receiver == "hss-1" for m in t.messages)
    assert t.mme_load == sum(m.receiver == "mme-1" for m in t.messages)


@pytest.mark.parametrize("name", ["qkg", "eps", "se"])
def test_timestamps_monotone_per_link(scenario, name):
    t = RUNNERS[name](scenario)
    last = {}
    for m in t.messages:
        link = (m.sender, m.receiver)
        assert m.timestamp >= last.get(link, 0.0)
        assert m.delivered_at >= m.timestamp
        last[link] = m.timestamp


def test_critical_path_by_hand(scenario):
    c = CostModel()
    k, g, a = c.kdf_cost_ms, c.grid_lookup_cost_ms, c.av_fetch_cost_ms
    # attach, fetch, hss work, answer, challenge, ue work, response, mme work, smc, ue work
    path = 10 + 5 + (g + 2 * k) + 5 + 10 + 2 * k + 10 + 2 * k + 10 + 2 * k
    assert run_qkg_aka(scenario).elapsed_ms == pytest.approx(path)
    assert run_eps_aka(scenario).elapsed_ms == pytest.approx(path - g + a)


def test_zero_cost_model_gives_zero_elapsed():
    s = Scenario.build(3, costs=CostModel.zero())
    for run in RUNNERS.values():
        t = run(s)
        assert t.outcome is Outcome.SUCCESS
        assert t.elapsed_ms == 0.0


def test_determinism(scenario):
    for run in RUNNERS.values():
        assert run(scenario).to_json() == run(scenario).to_json()
    assert Scenario.build(7).grid == scenario.grid


def test_transcript_json_has_no_keys(scenario):
    t = run_qkg_aka(scenario)
    text = t.to_json()
    assert t.ue_keys.k.hex() not in text
    assert t.ue_keys.k_asme.hex() not in text


def test_unpopulated_grid_is_setup_error(scenario):
    from dataclasses import replace

    empty = QkGrid(construct_layout(5, 0), {}, "")
    with pytest.raises(StateError):
        run_qkg_aka(replace(scenario, grid=empty, ue_grid=empty))
    with pytest.raises(StateError):
        run_qkg_aka(replace(scenario, grid=None, ue_grid=None))


def test_mismatched_grid_replica_is_auth_failure(scenario):
    from dataclasses import replace

    other = Scenario.build(8).grid
    t = run_qkg_aka(replace(scenario, ue_grid=other))
    assert t.outcome is Outcome.AUTH_FAILURE
    assert [m.kind for m in t.messages][-1] == "auth_failure"


def test_desynchronized_prek_is_rejected(scenario):
    from dataclasses import replace

    st_ = scenario.state
    _, ahead = derive_master_key(scenario.grid, st_.ue_pre_k)
    t = run_qkg_aka(replace(scenario, state=SubscriberState(ahead, st_.hss_pre_k)))
    assert t.outcome is Outcome.AUTH_FAILURE


def test_batch_threads_prek(scenario):
    curve = run_batch("qkg", 100, scenario)
    assert curve.final_state.ue_pre_k.generation == 100
    assert curve.final_state.hss_pre_k.generation == 100
    gens = [t.state.ue_pre_k.generation for t in curve.transcripts]
    assert gens == list(range(1, 101))
    ks = {t.ue_keys.k for t in curve.transcripts}
    assert len(ks) == 100


def test_batch_of_one_equals_single_run(scenario):
    curve = run_batch("eps", 1, scenario)
    assert curve.rows[0]["elapsed_ms_cumulative"] == run_eps_aka(scenario).elapsed_ms


@pytest.mark.parametrize("name", ["qkg", "eps", "se"])
def test_batch_monotone(scenario, name):
    curve = run_batch(name, 12, scenario)
    cum = curve.cumulative_elapsed
    assert all(b >= a for a, b in zip(cum, cum[1:]))
    assert all(t.outcome is Outcome.SUCCESS for t in curve.transcripts)


def test_se_fetch_is_amortized(scenario):
    curve = run_batch("se", 10, scenario)
    fetches = [sum(m.kind == "auth_info_request" for m in t.messages) for t in curve.transcripts]
    assert fetches == [1, 0, 0, 0, 0] * 2


def test_batch_validation(scenario):
    with pytest.raises(ConfigurationError):
        run_batch("qkg", 0, scenario)
    with pytest.raises(ConfigurationError):
        run_batch("nope", 1, scenario)


def test_load_curve_csv(scenario):
    text = load_curve_csv([run_batch("qkg", 3, scenario), run_batch("eps", 3, scenario)])
    lines = text.splitlines()
    assert lines[0] == "auth_index,scheme,elapsed_ms_cumulative,hss_msgs,mme_msgs"
    assert len(lines) == 7
    assert lines[1].startswith("1,qkg,")


@settings(max_examples=25, deadline=None)
@given(
    st.floats(0, 20), st.floats(0, 20), st.floats(0, 20),
    st.floats(0, 1), st.floats(0, 5), st.floats(0, 10),
)
def test_ordering_whenever_fetch_costs_more(ue_mme, mme_hss, mme_enb, kdf, g, extra):
    costs = CostModel({"UE-MME": ue_mme, "MME-HSS": mme_hss, "MME-ENB": mme_enb, "QKS-HSS": 1, "QKS-UE": 1},
                      kdf_cost_ms=kdf, grid_lookup_cost_ms=g, av_fetch_cost_ms=g + extra + 1e-6)
    s = Scenario.build(5, costs=costs)
    q = run_batch("qkg", 5, s).cumulative_elapsed
    e = run_batch("eps", 5, s).cumulative_elapsed
    assert all(a <= b + 1e-9 for a, b in zip(q, e))


def test_attacks(scenario):
    assert run_attack(scenario, "none").outcome is Outcome.SUCCESS
    assert run_attack(scenario, "tamper").outcome is Outcome.AUTH_FAILURE
    replay = run_attack(scenario, "replay")
    assert replay.outcome is Outcome.AUTH_FAILURE
    assert any(m.payload.get("cause") == "stale_generation" for m in replay.messages)
    assert run_attack(scenario, "intercept_resend").outcome is Outcome.DETECTION_ABORT


def test_intercept_with_clean_link_provisions_and_succeeds(scenario):
    t = run_attack(scenario, AttackerConfig("intercept_resend", fraction=0.0))
    assert t.outcome is Outcome.SUCCESS
    assert [m.kind for m in t.messages][:2] == ["grid_ready", "grid_ready"]


def test_tamper_flips_exactly_one_bit():
    s = Scenario.build(11)
    honest = run_qkg_aka(s)
    bad = run_attack(s, "tamper")
    h = next(m for m in honest.messages if m.kind == "auth_request")
    b = next(m for m in bad.messages if m.kind == "auth_request")
    diff = sum(bin(x ^ y).count("1") for f in ("nonce", "autn") for x, y in zip(h.payload[f], b.payload[f]))
    assert diff == 1


def test_role_confinement():
    enb = Entity(Role.ENB, "e")
    enb.hold("k_enb", bytes(32))
    with pytest.raises(KeyConfinementError):
        enb.hold("k_asme", bytes(32))
    with pytest.raises(KeyConfinementError):
        Entity(Role.MME, "m").hold("k", bytes(32))
    with pytest.raises(KeyConfinementError):
        Entity(Role.QKS, "q").hold("nh", bytes(32))
    assert "k" not in ROLE_KEYS[Role.ENB] and "k_asme" not in ROLE_KEYS[Role.ENB]


def test_cost_model_validation():
    with pytest.raises(ConfigurationError):
        CostModel(kdf_cost_ms=-1)
    with pytest.raises(ConfigurationError):
        CostModel({"UEMME": 1})
    with pytest.raises(ConfigurationError):
        CostModel({"UE-MME": 1}).latency(Role.MME, Role.HSS)
    with pytest.raises(ConfigurationError):
        CostModel(se_group_size=0)
    assert CostModel({"mme-ue": 3}).latency(Role.UE, Role.MME) == 3


def test_config_loading(tmp_path):
    p = tmp_path / "s.yaml"
    p.write_text("seed: 4\ngrid: {n: 3}\ncosts:\n  av_fetch_ms: 9\n  latency_ms: {UE-MME: 1}\nattacker: {kind: tamper}\n")
    s = load_scenario(p)
    assert s.seed == 4 and s.grid.n == 3
    assert s.costs.av_fetch_cost_ms == 9
    assert s.costs.latency(Role.UE, Role.MME) == 1
    assert s.costs.latency(Role.MME, Role.HSS) == 5
    assert run_attack(s).outcome is Outcome.AUTH_FAILURE
    with pytest.raises(FormatError):
        scenario_from_config({"bogus": 1})
    with pytest.raises(FormatError):
        scenario_from_config({"costs": {"kdf": 1}})
    p.write_text("seed: [unclosed\n")
    with pytest.raises(FormatError):
        load_scenario(p)


def test_prek_repr_in_state_hides_value(scenario):
    assert scenario.state.ue_pre_k.value.hex() not in repr(scenario.state)


def test_replay_after_batch_is_rejected(scenario):
    curve = run_batch("qkg", 3, scenario)
    old = next(m for m in curve.transcripts[0].messages if m.kind == "attach_request")
    assert old.payload["generation"] == 0
    assert curve.final_state.hss_pre_k.generation == 3
    assert isinstance(curve.final_state.hss_pre_k, PreK)
    np.testing.assert_equal(run_attack(scenario.with_state(curve.final_state), "replay").outcome,
                            Outcome.AUTH_FAILURE)
