import pytest

from mqka.channel import Channel, ClassicalMessage, MsgKind, Photon, PhotonSequence, QuantumRegistry, Role
from mqka.cluster import SKEWED, make_cluster_state
from mqka.qcore import SX, Basis, RandomSource, StateVector, fidelity_up_to_phase


@pytest.fixture
def ring():
    return Channel(4, QuantumRegistry())


def fresh_sequence(registry, labels="01+-", origin=0):
    return PhotonSequence([registry.photon(lab) for lab in labels], origin)


class TestQuantumDelivery:
    def test_no_hook_delivers_unchanged(self, ring):
        seq = fresh_sequence(ring.registry)
        before = [ring.registry.ground_truth(p.register) for p in seq.photons]
        out = ring.send_quantum(0, 1, seq)
        assert out is seq
        for p, state in zip(out.photons, before):
            assert fidelity_up_to_phase(ring.registry.ground_truth(p.register), state) == pytest.approx(1.0)

    def test_transcript_one_event_per_send(self, ring):
        seq = fresh_sequence(ring.registry)
        for k in range(3):
            ring.send_quantum(k, k + 1, seq)
            assert len(ring.transcript) == k + 1
        assert ring.transcript[-1]["from"] == 2 and ring.transcript[-1]["to"] == 3

    def test_transcript_carries_no_amplitudes(self, ring):
        ring.send_quantum(0, 1, fresh_sequence(ring.registry), round=1)
        event = ring.transcript[0]
        assert set(event) == {"type", "from", "to", "origin", "label", "length", "round"}
        assert all(isinstance(v, (int, str)) for v in event.values())

    def test_hook_sees_every_send(self):
        calls = []

        def hook(channel, sender, receiver, seq):
            calls.append((sender, receiver))
            return seq.replace(seq.photons[::-1])

        ch = Channel(3, QuantumRegistry(), hook=hook)
        seq = fresh_sequence(ch.registry)
        out = ch.send_quantum(1, 2, seq)
        assert calls == [(1, 2)]
        assert out.photons == seq.photons[::-1]

    def test_rejects_bad_parties(self, ring):
        seq = fresh_sequence(ring.registry)
        with pytest.raises(ValueError, match="to self"):
            ring.send_quantum(1, 1, seq)
        with pytest.raises(ValueError, match="outside ring"):
            ring.send_quantum(0, 4, seq)


class TestClassical:
    def test_broadcast_reaches_everyone(self, ring):
        ring.send_classical(ClassicalMessage(2, None, MsgKind.DECOY_BASES, (("Z", "X"),)))
        for party in range(4):
            (msg,) = ring.received(party, MsgKind.DECOY_BASES)
            assert msg.payload == (("Z", "X"),)

    def test_point_to_point(self, ring):
        ring.send_classical(ClassicalMessage(1, 0, MsgKind.ACK, (0,)))
        assert len(ring.received(0, MsgKind.ACK)) == 1
        assert ring.received(2) == []

    def test_order_preserved(self, ring):
        for k in range(5):
            ring.send_classical(ClassicalMessage(0, 1, MsgKind.H_POSITIONS, (k,)))
        assert [m.payload for m in ring.received(1)] == [(k,) for k in range(5)]

    def test_transcript_payload_is_plain(self, ring):
        ring.send_classical(ClassicalMessage(0, None, MsgKind.DECOY_BASES, ((Basis.Z, Basis.X),)))
        assert ring.transcript[-1]["payload"] == [["Z", "X"]]
        assert ring.transcript[-1]["kind"] == "DecoyBases"


class TestRegistry:
    def test_photons_of_one_register_share_state(self):
        reg = QuantumRegistry()
        handle = reg.allocate(make_cluster_state(SKEWED, 1))
        reg.apply(Photon(handle, 1), SX)
        reg.apply(Photon(handle, 3), SX)
        # sx on qubits 2 and 4 is nibble 1111, which carries state 1 to state 16
        assert fidelity_up_to_phase(reg.ground_truth(handle), make_cluster_state(SKEWED, 16)) == pytest.approx(1.0)

    def test_measure_collapses(self):
        reg = QuantumRegistry()
        p = reg.photon("+", Role.DECOY)
        assert p.role is Role.DECOY
        out = reg.measure(p, Basis.Z, RandomSource(4))
        assert reg.ground_truth(p.register).allclose(StateVector.from_label(str(out)))

    def test_prepare_checks_size(self):
        reg = QuantumRegistry()
        h = reg.allocate(StateVector.from_label("0"))
        with pytest.raises(ValueError, match="qubit count"):
            reg.prepare(h, StateVector.from_label("00"))
