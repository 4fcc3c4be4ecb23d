"""Python interface to the HPAC-IDS core.

Everything lives in the compiled extension; this package just re-exports it.
"""

from hpac._hpac import (  # noqa: F401
    MIN_SEGMENT_SIZE,
    PAD_TOKEN,
    VOCAB_SIZE,
    AttackConfig,
    HpacError,
    Model,
    ModelConfig,
    RawPacket,
    SegmentedPacket,
    TrainConfig,
    __version__,
    compute_metrics,
    confusion,
    desegment,
    evaluate,
    forward_probs,
    init_model,
    load_checkpoint,
    load_labels,
    parse_hex_stream,
    read_pcap,
    read_segments_jsonl,
    run_attack,
    save_checkpoint,
    segment_packet,
    split_dataset,
    to_hex,
    train,
    write_pcap,
    write_segments_jsonl,
)
