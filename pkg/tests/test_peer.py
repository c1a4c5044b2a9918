"""Peer FSM: the full transition matrix, watchdog liveness, correlation."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diamlab import dictionary as dct
from diamlab.codec import decode_message, encode_message, first_avp
from diamlab.peer import (
    DEFAULT_CONFIG,
    TRANSITION_MATRIX,
    ActionKind,
    EventKind,
    PeerEvent,
    PeerState,
    PendingRequest,
    Phase,
    build_cea,
    build_cer,
    build_dpa,
    build_dpr,
    build_dwa,
    build_dwr,
    correlate_answer,
    handle_event,
    register_request,
)
from diamlab.codec import build_message

WD = DEFAULT_CONFIG.watchdog_interval_us


def message_for(kind: EventKind):
    """A plausible inbound message for each Rcv* event kind."""
    if kind is EventKind.RCV_CER:
        return build_cer("peer.example", [0])
    if kind is EventKind.RCV_CEA:
        return build_cea(build_cer("peer.example", [0]), "other.example")
    if kind is EventKind.RCV_DWR:
        return build_dwr("peer.example")
    if kind is EventKind.RCV_DWA:
        return build_dwa(build_dwr("peer.example"), "other.example")
    if kind is EventKind.RCV_DPR:
        return build_dpr("peer.example")
    if kind is EventKind.RCV_DPA:
        return build_dpa(build_dpr("peer.example"), "other.example")
    if kind is EventKind.RCV_REQUEST:
        return build_message(dct.CMD_ECHO, request=True, hop_by_hop_id=9)
    if kind is EventKind.RCV_ANSWER:
        return build_message(dct.CMD_ECHO, hop_by_hop_id=12345)  # unknown id
    return None


def state_in(phase: Phase) -> PeerState:
    # Open states get a future watchdog deadline, as a live link would have.
    if phase is Phase.OPEN:
        return PeerState(phase=phase, watchdog_deadline=WD)
    return PeerState(phase=phase)


class TestTransitionMatrix:
    def test_matrix_is_exhaustive(self):
        pairs = {(phase, kind) for phase in Phase for kind in EventKind}
        assert set(TRANSITION_MATRIX) == pairs
        assert len(TRANSITION_MATRIX) == 60

    @pytest.mark.parametrize("phase", list(Phase))
    @pytest.mark.parametrize("kind", list(EventKind))
    def test_every_cell_behaves_as_published(self, phase, kind):
        state = state_in(phase)
        event = PeerEvent(kind, message_for(kind))
        new_state, actions = handle_event(state, event, now=0)
        expected_phase, expected_actions = TRANSITION_MATRIX[(phase, kind)]
        want = state.phase.value if expected_phase == "=" else expected_phase
        assert new_state.phase.value == want
        assert tuple(a.kind.value for a in actions) == expected_actions

    @pytest.mark.parametrize("phase", list(Phase))
    @pytest.mark.parametrize("kind", list(EventKind))
    def test_inputs_are_never_mutated(self, phase, kind):
        state = state_in(phase)
        before = (state.phase, dict(state.pending), state.watchdog_deadline)
        handle_event(state, PeerEvent(kind, message_for(kind)), now=0)
        assert (state.phase, dict(state.pending), state.watchdog_deadline) == before


class TestLifecycleScenarios:
    def test_initiator_happy_path(self):
        s = PeerState()
        s, actions = handle_event(s, PeerEvent(EventKind.START), 0)
        assert s.phase is Phase.WAIT_CONN_ACK and actions == []
        s, actions = handle_event(s, PeerEvent(EventKind.CONN_ACK), 0)
        assert s.phase is Phase.WAIT_CEA
        assert [a.kind for a in actions] == [ActionKind.SEND_CER]
        cer = actions[0].message
        assert cer.header.command_code == dct.CMD_CAPABILITIES_EXCHANGE
        assert cer.header.request
        s, actions = handle_event(s, PeerEvent(EventKind.RCV_CEA, build_cea(cer, "b")), 10)
        assert s.phase is Phase.OPEN and actions == []
        assert s.watchdog_deadline == 10 + WD

    def test_responder_happy_path(self):
        cer = build_cer("a.lab", [0], hop_by_hop_id=3, end_to_end_id=3)
        s, actions = handle_event(PeerState(), PeerEvent(EventKind.RCV_CER, cer), 5)
        assert s.phase is Phase.OPEN
        assert [a.kind for a in actions] == [ActionKind.SEND_CEA]
        cea = actions[0].message
        assert cea.header.hop_by_hop_id == 3  # answer echoes the request id
        assert not cea.header.request

    def test_request_in_wait_cea_is_dropped(self):
        s = PeerState(phase=Phase.WAIT_CEA)
        msg = build_message(dct.CMD_ECHO, request=True)
        s2, actions = handle_event(s, PeerEvent(EventKind.RCV_REQUEST, msg), 0)
        assert s2.phase is Phase.WAIT_CEA
        assert [a.kind for a in actions] == [ActionKind.DROP_MESSAGE]

    def test_dwr_echo_in_open(self):
        s = state_in(Phase.OPEN)
        dwr = build_dwr("peer.example", hop_by_hop_id=44)
        s2, actions = handle_event(s, PeerEvent(EventKind.RCV_DWR, dwr), 0)
        assert s2.phase is Phase.OPEN
        assert [a.kind for a in actions] == [ActionKind.SEND_DWA]
        assert actions[0].message.header.hop_by_hop_id == 44

    def test_dpr_in_open_answers_and_closes(self):
        s = state_in(Phase.OPEN)
        dpr = build_dpr("peer.example")
        s2, actions = handle_event(s, PeerEvent(EventKind.RCV_DPR, dpr), 0)
        assert s2.phase is Phase.CLOSING
        assert [a.kind for a in actions] == [ActionKind.SEND_DPA]

    def test_stop_in_open_sends_dpr_then_dpa_closes(self):
        s = state_in(Phase.OPEN)
        s, actions = handle_event(s, PeerEvent(EventKind.STOP), 0)
        assert s.phase is Phase.CLOSING
        dpr = actions[0].message
        assert dpr.header.command_code == dct.CMD_DISCONNECT_PEER
        dpa = build_dpa(dpr, "peer.example")
        s, actions = handle_event(s, PeerEvent(EventKind.RCV_DPA, dpa), 0)
        assert s.phase is Phase.CLOSED
        assert [a.kind for a in actions] == [ActionKind.CLOSE_LINK]

    def test_leaving_open_clears_pending(self):
        s = state_in(Phase.OPEN)
        s = register_request(s, PendingRequest(5, dct.CMD_ECHO, 0))
        s2, _ = handle_event(s, PeerEvent(EventKind.STOP), 0)
        assert s2.pending == {}


class TestWatchdog:
    def test_timer_before_deadline_is_stale(self):
        s = state_in(Phase.OPEN)
        s2, actions = handle_event(s, PeerEvent(EventKind.WATCHDOG_TIMER), WD - 1)
        assert actions == [] and s2 == s

    def test_fire_sends_dwr_and_renews(self):
        s = state_in(Phase.OPEN)
        s2, actions = handle_event(s, PeerEvent(EventKind.WATCHDOG_TIMER), WD)
        assert [a.kind for a in actions] == [ActionKind.SEND_DWR]
        assert s2.dwr_outstanding
        assert s2.watchdog_deadline == WD + WD

    def test_dwa_clears_outstanding(self):
        s = state_in(Phase.OPEN)
        s, _ = handle_event(s, PeerEvent(EventKind.WATCHDOG_TIMER), WD)
        dwa = build_dwa(build_dwr("x"), "peer.example")
        s, actions = handle_event(s, PeerEvent(EventKind.RCV_DWA, dwa), WD + 5)
        assert actions == []
        assert not s.dwr_outstanding and s.missed_dwas == 0
        assert s.watchdog_deadline == WD + 5 + WD

    def test_two_missed_dwas_close_the_link(self):
        s = state_in(Phase.OPEN)
        s, a1 = handle_event(s, PeerEvent(EventKind.WATCHDOG_TIMER), WD)
        s, a2 = handle_event(s, PeerEvent(EventKind.WATCHDOG_TIMER), 2 * WD)
        assert [a.kind for a in a2] == [ActionKind.SEND_DWR]
        assert s.missed_dwas == 1
        s, a3 = handle_event(s, PeerEvent(EventKind.WATCHDOG_TIMER), 3 * WD)
        assert s.phase is Phase.CLOSED
        assert [a.kind for a in a3] == [ActionKind.CLOSE_LINK]
        assert s.pending == {}

    def test_quiet_link_alternates_dwr_and_renewal(self):
        # traffic-free Open link: timer -> DWR, DWA -> renewal, repeatedly
        s = state_in(Phase.OPEN)
        now = 0
        for _ in range(4):
            now = s.watchdog_deadline
            s, actions = handle_event(s, PeerEvent(EventKind.WATCHDOG_TIMER), now)
            assert [a.kind for a in actions] == [ActionKind.SEND_DWR]
            dwa = build_dwa(actions[0].message, "peer.example")
            s, actions = handle_event(s, PeerEvent(EventKind.RCV_DWA, dwa), now + 100)
            assert actions == []
            assert s.phase is Phase.OPEN and s.missed_dwas == 0


class TestCorrelation:
    def _answer(self, hbh: int):
        return build_message(dct.CMD_ECHO, hop_by_hop_id=hbh)

    def test_matching_answer_pops_entry(self):
        s = state_in(Phase.OPEN)
        entry = PendingRequest(7, dct.CMD_ECHO, 100, context="ctx")
        s = register_request(s, entry)
        s2, got = correlate_answer(s, self._answer(7))
        assert got == entry
        assert s2.pending == {}

    def test_unknown_id_is_no_match(self):
        s = state_in(Phase.OPEN)
        s = register_request(s, PendingRequest(7, dct.CMD_ECHO, 100))
        s2, got = correlate_answer(s, self._answer(8))
        assert got is None
        assert s2 == s

    def test_second_answer_with_same_id_is_no_match(self):
        s = state_in(Phase.OPEN)
        s = register_request(s, PendingRequest(7, dct.CMD_ECHO, 100))
        s, first = correlate_answer(s, self._answer(7))
        s, second = correlate_answer(s, self._answer(7))
        assert first is not None and second is None

    def test_correlate_rejects_requests(self):
        with pytest.raises(ValueError):
            correlate_answer(state_in(Phase.OPEN), build_message(700, request=True))

    def test_register_outside_open_rejected(self):
        with pytest.raises(ValueError):
            register_request(PeerState(), PendingRequest(1, 700, 0))

    def test_duplicate_registration_rejected(self):
        s = register_request(state_in(Phase.OPEN), PendingRequest(1, 700, 0))
        with pytest.raises(ValueError):
            register_request(s, PendingRequest(1, 700, 0))

    def test_answer_event_delivers_with_pending(self):
        s = state_in(Phase.OPEN)
        entry = PendingRequest(21, dct.CMD_ECHO, 5, context=("flood", 0))
        s = register_request(s, entry)
        answer = self._answer(21)
        s2, actions = handle_event(s, PeerEvent(EventKind.RCV_ANSWER, answer), 10)
        assert [a.kind for a in actions] == [ActionKind.DELIVER_TO_APP]
        assert actions[0].pending == entry
        assert s2.pending == {}


class TestBuilders:
    def test_cer_carries_identity_and_applications(self):
        cer = build_cer("attacker.lab", [0, 5])
        decoded = decode_message(encode_message(cer))
        assert decoded.header.command_code == dct.CMD_CAPABILITIES_EXCHANGE
        assert decoded.header.request
        origin = first_avp(decoded, dct.AVP_ORIGIN_HOST)
        assert origin.data == b"attacker.lab"
        apps = [a for a in decoded.avps if a.code == dct.AVP_AUTH_APPLICATION_ID]
        assert [int.from_bytes(a.data, "big") for a in apps] == [0, 5]

    def test_cea_echoes_hop_by_hop(self):
        cer = build_cer("a.lab", [0], hop_by_hop_id=99, end_to_end_id=98)
        cea = build_cea(cer, "b.lab")
        assert cea.header.hop_by_hop_id == 99
        assert cea.header.end_to_end_id == 98
        assert first_avp(cea, dct.AVP_RESULT_CODE).data == (2001).to_bytes(4, "big")

    def test_empty_identity_rejected(self):
        for builder in (build_cer, build_dwr, build_dpr):
            with pytest.raises(ValueError):
                builder("", [0]) if builder is build_cer else builder("")

    def test_event_message_presence_invariant(self):
        with pytest.raises(ValueError):
            PeerEvent(EventKind.START, message=build_message(700))
        with pytest.raises(ValueError):
            PeerEvent(EventKind.RCV_CER)


@st.composite
def event_sequences(draw):
    kinds = draw(st.lists(st.sampled_from(list(EventKind)), min_size=1, max_size=30))
    return [PeerEvent(k, message_for(k)) for k in kinds]


class TestSequenceProperties:
    @given(event_sequences())
    @settings(max_examples=200, deadline=None)
    def test_app_delivery_only_in_open(self, events):
        s = PeerState()
        now = 0
        for event in events:
            now += 1000
            pre_phase = s.phase
            s, actions = handle_event(s, event, now)
            for action in actions:
                if action.kind is ActionKind.DELIVER_TO_APP:
                    assert pre_phase is Phase.OPEN

    @given(event_sequences())
    @settings(max_examples=200, deadline=None)
    def test_pending_empty_outside_open(self, events):
        s = PeerState()
        now = 0
        for event in events:
            now += 1000
            s, _ = handle_event(s, event, now)
            if s.phase is not Phase.OPEN:
                assert s.pending == {}
