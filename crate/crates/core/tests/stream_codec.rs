use photonstat_core::stream::{channel_times_ps, merge_channels, NSYNC_OFFSET_BITS};
use photonstat_core::{
    decode_stream, encode_stream, simulate_stream, DetectorParams, EmitterParams, PhotonRecord, PhotonStream,
    SimConfig, StreamError, StreamHeader,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sorted records with mostly short gaps and occasional jumps past the
/// nsync offset field, so overflow words appear.
fn random_records(n: usize, header: &StreamHeader, seed: u64) -> Vec<PhotonRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slots = header.microtime_slots() as u32;
    let mut nsync = 0u64;
    let mut out: Vec<PhotonRecord> = (0..n)
        .map(|_| {
            nsync += match rng.random_range(0..1000) {
                0 => rng.random_range(1u64..5 << NSYNC_OFFSET_BITS),
                1..=300 => 0,
                _ => rng.random_range(1..50),
            };
            PhotonRecord::new(rng.random_range(0..header.channel_count), nsync, rng.random_range(0..slots))
        })
        .collect();
    out.sort_unstable_by_key(|r| (r.nsync, r.microtime));
    out
}

#[test]
fn million_random_records_round_trip() {
    let header = StreamHeader::new(400_000, 16, 4).with_metadata(&serde_json::json!({"source": "random"}));
    let records = random_records(1_000_000, &header, 2024);
    assert!(records.last().unwrap().nsync > 1 << NSYNC_OFFSET_BITS);
    let bytes = encode_stream(&header, &records).unwrap();
    let back = decode_stream(&bytes).unwrap();
    assert_eq!(back.records, records);
    assert_eq!(back.header.record_count, 1_000_000);
    assert_eq!(back.header.metadata, header.metadata);
    // overflow words add to the record words
    assert!(bytes.len() > 31 + header.metadata.len() + 8 * records.len());
    assert_eq!(back.encode().unwrap(), bytes);
}

#[test]
fn simulated_stream_survives_a_file_round_trip() {
    let s = simulate_stream(
        &EmitterParams::default(),
        &DetectorParams::default(),
        &SimConfig {
            duration_s: 0.2,
            seed: 8,
            ..SimConfig::default()
        },
    )
    .unwrap();
    let path = std::env::temp_dir().join(format!("photonstat-codec-{}.phst", std::process::id()));
    s.write_to(&path).unwrap();
    let back = PhotonStream::read_from(&path);
    std::fs::remove_file(&path).unwrap();
    let back = back.unwrap();
    assert_eq!(back, s);
    assert_eq!(merge_channels(&back), merge_channels(&s));
    let total: usize = (0..2).map(|c| channel_times_ps(&back, c).len()).sum();
    assert_eq!(total, s.len());
}

#[test]
fn missing_file_is_an_io_error() {
    let path = std::env::temp_dir().join("photonstat-codec-does-not-exist.phst");
    assert!(matches!(PhotonStream::read_from(path), Err(StreamError::Io(_))));
}

#[test]
fn corrupt_record_section_is_rejected() {
    let header = StreamHeader::new(400_000, 16, 2);
    let records = random_records(1000, &header, 1);
    let mut bytes = encode_stream(&header, &records).unwrap();
    bytes.pop();
    assert!(matches!(decode_stream(&bytes), Err(StreamError::TruncatedStream(_))));

    // swap two distinct records so the order breaks
    let mut bytes = encode_stream(&header, &records).unwrap();
    let start = bytes.len() - 8 * 2;
    let (a, b) = bytes[start..].split_at_mut(8);
    if a != b {
        a.swap_with_slice(b);
        assert!(matches!(decode_stream(&bytes), Err(StreamError::UnsortedRecords { .. })));
    }
}
