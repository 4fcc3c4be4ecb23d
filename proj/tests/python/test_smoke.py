"""Smoke tests for the hpac extension module."""

import random

import pytest

import hpac

MOTIF = bytes([0xDE, 0xAD, 0xBE, 0xEF, 0xCA, 0xFE, 0xBA, 0xBE])


def make_packet(label, rng):
    n = rng.randint(40, 90)
    data = bytearray(rng.randint(0, 127) for _ in range(n))
    if label:
        off = rng.randint(0, n - 8)
        data[off : off + 8] = MOTIF
    p = hpac.RawPacket()
    p.data = bytes(data)
    p.label = label
    p.source_id = "toy"
    return p


@pytest.fixture(scope="module")
def corpus():
    rng = random.Random(11)
    packets = [make_packet(i % 2, rng) for i in range(240)]
    segs = [hpac.segment_packet(p, 8) for p in packets]
    return segs[:160], segs[160:]


@pytest.fixture(scope="module")
def trained_model(corpus):
    train_data, val_data = corpus
    model = hpac.init_model(hpac.ModelConfig(k=8, d=16, heads=2, m_max=16, seed=3))
    config = hpac.TrainConfig(epochs=3, steps_per_epoch=25, batch_size=20, seed=3)
    history = hpac.train(model, train_data, val_data, config)
    assert len(history) == 3
    return model


def test_hex_round_trip():
    packet = hpac.parse_hex_stream("deadbeef")
    assert packet.data == b"\xde\xad\xbe\xef"
    assert hpac.to_hex(packet) == "deadbeef"
    with pytest.raises(hpac.HpacError):
        hpac.parse_hex_stream("abc")


def test_segmentation_round_trip():
    packet = hpac.parse_hex_stream("00112233445566778899")
    seg = hpac.segment_packet(packet, 8)
    assert seg.m == 2
    assert seg.k == 8
    assert seg.tokens[1][2] == hpac.PAD_TOKEN
    assert hpac.desegment(seg) == packet.data
    with pytest.raises(hpac.HpacError):
        hpac.segment_packet(packet, 4)


def test_pcap_round_trip(tmp_path):
    rng = random.Random(5)
    packets = [make_packet(i % 2, rng) for i in range(10)]
    path = str(tmp_path / "smoke.pcap")
    hpac.write_pcap(path, packets)
    loaded = hpac.read_pcap(path)
    assert [p.data for p in loaded] == [p.data for p in packets]
    assert loaded[0].label is None  # labels are not stored in pcap


def test_split_dataset_partitions():
    rng = random.Random(6)
    packets = [make_packet(i % 2, rng) for i in range(50)]
    train, val, test = hpac.split_dataset(packets, 0.6, 0.2, 0.2, seed=1)
    assert len(train) == 30
    assert len(val) == 10
    assert len(test) == 10


def test_forward_probabilities_normalize(corpus):
    train_data, _ = corpus
    model = hpac.init_model(hpac.ModelConfig(k=8, d=16, heads=2, m_max=16, seed=1))
    probs = hpac.forward_probs(model, train_data[:8])
    assert len(probs) == 8
    for p0, p1 in probs:
        assert abs(p0 + p1 - 1.0) < 1e-9
        assert 0.0 < p1 < 1.0


def test_training_learns_the_toy_task(trained_model, corpus):
    _, val_data = corpus
    report = hpac.evaluate(trained_model, val_data)
    assert report["acc"] >= 0.9
    assert report["fpr_paper"] is not None


def test_checkpoint_round_trip(trained_model, corpus, tmp_path):
    _, val_data = corpus
    path = str(tmp_path / "model.hpac")
    hpac.save_checkpoint(trained_model, path)
    loaded = hpac.load_checkpoint(path)
    assert loaded.config.k == trained_model.config.k
    original = hpac.forward_probs(trained_model, val_data[:8])
    reloaded = hpac.forward_probs(loaded, val_data[:8])
    assert original == reloaded


def test_attack_zero_budget_is_inert(trained_model, corpus):
    _, val_data = corpus
    report = hpac.run_attack(
        trained_model, val_data[:32], hpac.AttackConfig(method="fgsm", eps=0.0)
    )
    assert report["severity"] == 0.0
    assert report["cosine_mean"] == 1.0
    assert report["adversarial_accuracy"] == report["clean_accuracy"]


def test_attack_respects_cosine_range(trained_model, corpus):
    _, val_data = corpus
    config = hpac.AttackConfig(method="pgd", eps=0.3, alpha=0.4, iterations=5)
    report = hpac.run_attack(trained_model, val_data[:32], config)
    assert report["method"] == "pgd"
    for value in report["cosine_similarities"]:
        assert value is None or -1.0 <= value <= 1.0


def test_metrics_helpers():
    counts = hpac.confusion([1, 0, 1, 0], [1, 0, 0, 1])
    assert counts == {"tp": 1, "tn": 1, "fp": 1, "fn": 1}
    report = hpac.compute_metrics(1, 1, 1, 1)
    assert report["acc"] == 0.5
    assert report["fpr_paper"] == 0.5
    undefined = hpac.compute_metrics(0, 3, 0, 2)
    assert undefined["precision"] is None
