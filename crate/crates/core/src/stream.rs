//! Time-tagged photon streams and the `.phst` binary container.
//!
//! A `.phst` file is a fixed little-endian header followed by 64-bit raw
//! records:
//!
//! ```text
//! offset  size  field
//!      0     4  magic "PHST"
//!      4     2  version (u16)
//!      6     8  sync_period_ps (u64)
//!     14     4  resolution_ps (u32)
//!     18     1  channel_count (u8)
//!     19     8  record_count (u64, photon records only)
//!     27     4  meta_len (u32)
//!     31  meta  UTF-8 JSON metadata
//! ```
//!
//! Each raw record is a `u64`. Bit 63 set marks an overflow record whose low
//! 63 bits advance the nsync base by `increment << 30`. Otherwise bits 62..58
//! hold the channel, bits 57..28 the nsync offset from the current base and
//! bits 27..0 the microtime.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::Value;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"PHST";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_FIXED_LEN: usize = 31;

pub const CHANNEL_BITS: u32 = 5;
pub const NSYNC_OFFSET_BITS: u32 = 30;
pub const MICROTIME_BITS: u32 = 28;

const SPECIAL_FLAG: u64 = 1 << 63;
const NSYNC_SHIFT: u32 = MICROTIME_BITS;
const CHANNEL_SHIFT: u32 = MICROTIME_BITS + NSYNC_OFFSET_BITS;
const MICROTIME_MASK: u64 = (1 << MICROTIME_BITS) - 1;
const NSYNC_OFFSET_MASK: u64 = (1 << NSYNC_OFFSET_BITS) - 1;
const CHANNEL_MASK: u64 = (1 << CHANNEL_BITS) - 1;
const OVERFLOW_MASK: u64 = !SPECIAL_FLAG;

/// 2.5 MHz repetition rate.
pub const DEFAULT_SYNC_PERIOD_PS: u64 = 400_000;
pub const DEFAULT_RESOLUTION_PS: u32 = 16;

pub const MAX_CHANNELS: u8 = 1 << CHANNEL_BITS;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("records are not sorted by (nsync, microtime) at index {index}")]
    UnsortedRecords { index: usize },
    #[error("microtime {microtime} at index {index} does not fit in {MICROTIME_BITS} bits")]
    MicrotimeOverflow { index: usize, microtime: u32 },
    #[error("microtime {microtime} at index {index} lies beyond the sync period")]
    MicrotimeBeyondPeriod { index: usize, microtime: u32 },
    #[error("channel {channel} at index {index} is out of range for {channel_count} channels")]
    ChannelOutOfRange {
        index: usize,
        channel: u8,
        channel_count: u8,
    },
    #[error("bad magic {found:?}, expected \"PHST\"")]
    BadMagic { found: Vec<u8> },
    #[error("truncated stream: {0}")]
    TruncatedStream(String),
    #[error("unsupported format version {0}")]
    VersionUnsupported(u16),
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("header metadata is not valid UTF-8")]
    MetadataNotUtf8,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Acquisition parameters shared by every record of a stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamHeader {
    pub version: u16,
    pub sync_period_ps: u64,
    pub resolution_ps: u32,
    pub channel_count: u8,
    /// Number of photon records. Overwritten by the encoder.
    pub record_count: u64,
    /// Free-form JSON; analysis never depends on it.
    pub metadata: String,
}

impl Default for StreamHeader {
    fn default() -> Self {
        Self {
            version: FORMAT_VERSION,
            sync_period_ps: DEFAULT_SYNC_PERIOD_PS,
            resolution_ps: DEFAULT_RESOLUTION_PS,
            channel_count: 2,
            record_count: 0,
            metadata: String::new(),
        }
    }
}

impl StreamHeader {
    pub fn new(sync_period_ps: u64, resolution_ps: u32, channel_count: u8) -> Self {
        Self {
            sync_period_ps,
            resolution_ps,
            channel_count,
            ..Self::default()
        }
    }

    pub fn with_metadata(mut self, metadata: &Value) -> Self {
        self.metadata = metadata.to_string();
        self
    }

    pub fn validate(&self) -> Result<(), StreamError> {
        if self.sync_period_ps == 0 || self.resolution_ps == 0 {
            return Err(StreamError::InvalidHeader(
                "sync_period_ps and resolution_ps must be positive".into(),
            ));
        }
        if self.sync_period_ps < u64::from(self.resolution_ps) {
            return Err(StreamError::InvalidHeader(format!(
                "sync_period_ps {} is shorter than resolution_ps {}",
                self.sync_period_ps, self.resolution_ps
            )));
        }
        if self.channel_count == 0 || self.channel_count > MAX_CHANNELS {
            return Err(StreamError::InvalidHeader(format!(
                "channel_count {} outside 1..={MAX_CHANNELS}",
                self.channel_count
            )));
        }
        Ok(())
    }

    /// Parsed metadata, `None` when absent or not valid JSON.
    pub fn metadata_json(&self) -> Option<Value> {
        if self.metadata.is_empty() {
            return None;
        }
        serde_json::from_str(&self.metadata).ok()
    }

    pub fn rep_rate_hz(&self) -> f64 {
        1e12 / self.sync_period_ps as f64
    }

    /// Number of microtime units in one sync period (rounded up).
    pub fn microtime_slots(&self) -> u64 {
        self.sync_period_ps.div_ceil(u64::from(self.resolution_ps))
    }
}

/// One detected photon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct PhotonRecord {
    pub nsync: u64,
    pub microtime: u32,
    pub channel: u8,
}

impl PhotonRecord {
    pub fn new(channel: u8, nsync: u64, microtime: u32) -> Self {
        Self {
            nsync,
            microtime,
            channel,
        }
    }

    #[inline]
    fn sort_key(&self) -> (u64, u32) {
        (self.nsync, self.microtime)
    }
}

/// A raw 64-bit on-disk word.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawRecord {
    Photon {
        channel: u8,
        nsync_offset: u32,
        microtime: u32,
    },
    Overflow {
        increment: u64,
    },
}

impl RawRecord {
    #[inline]
    pub fn to_word(self) -> u64 {
        match self {
            RawRecord::Photon {
                channel,
                nsync_offset,
                microtime,
            } => {
                ((u64::from(channel) & CHANNEL_MASK) << CHANNEL_SHIFT)
                    | ((u64::from(nsync_offset) & NSYNC_OFFSET_MASK) << NSYNC_SHIFT)
                    | (u64::from(microtime) & MICROTIME_MASK)
            }
            RawRecord::Overflow { increment } => SPECIAL_FLAG | (increment & OVERFLOW_MASK),
        }
    }

    #[inline]
    pub fn from_word(word: u64) -> Self {
        if word & SPECIAL_FLAG != 0 {
            RawRecord::Overflow {
                increment: word & OVERFLOW_MASK,
            }
        } else {
            RawRecord::Photon {
                channel: ((word >> CHANNEL_SHIFT) & CHANNEL_MASK) as u8,
                nsync_offset: ((word >> NSYNC_SHIFT) & NSYNC_OFFSET_MASK) as u32,
                microtime: (word & MICROTIME_MASK) as u32,
            }
        }
    }
}

/// Header plus sorted photon records. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhotonStream {
    pub header: StreamHeader,
    pub records: Vec<PhotonRecord>,
}

impl PhotonStream {
    /// Builds a stream after checking every record invariant.
    pub fn new(mut header: StreamHeader, records: Vec<PhotonRecord>) -> Result<Self, StreamError> {
        header.validate()?;
        check_records(&header, &records)?;
        header.record_count = records.len() as u64;
        Ok(Self { header, records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn sync_period_ps(&self) -> u64 {
        self.header.sync_period_ps
    }

    #[inline]
    pub fn absolute_time_ps(&self, record: &PhotonRecord) -> u64 {
        record.nsync * self.header.sync_period_ps
            + u64::from(record.microtime) * u64::from(self.header.resolution_ps)
    }

    /// Acquisition duration recorded under the `duration_s` metadata key.
    pub fn metadata_duration_ps(&self) -> Option<u64> {
        self.header
            .metadata_json()
            .and_then(|m| m.get("duration_s").and_then(Value::as_f64))
            .filter(|d| d.is_finite() && *d > 0.0)
            .map(|d| (d * 1e12).round() as u64)
    }

    /// Acquisition length in sync periods: the metadata duration when
    /// present, never shorter than the record span.
    pub fn span_pulses(&self) -> u64 {
        let from_records = self.records.last().map_or(0, |r| r.nsync + 1);
        let from_meta = self
            .metadata_duration_ps()
            .map_or(0, |d| d / self.header.sync_period_ps);
        from_records.max(from_meta)
    }

    /// Acquisition length in picoseconds, same rules as [`Self::span_pulses`].
    pub fn span_ps(&self) -> u64 {
        let from_records = self
            .records
            .last()
            .map_or(0, |r| self.absolute_time_ps(r) + 1);
        from_records.max(self.metadata_duration_ps().unwrap_or(0))
    }

    pub fn span_s(&self) -> f64 {
        self.span_ps() as f64 * 1e-12
    }

    pub fn channel_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; usize::from(self.header.channel_count)];
        for r in &self.records {
            counts[usize::from(r.channel)] += 1;
        }
        counts
    }

    pub fn encode(&self) -> Result<Vec<u8>, StreamError> {
        encode_stream(&self.header, &self.records)
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<(), StreamError> {
        let bytes = self.encode()?;
        let mut f = fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_from(path: impl AsRef<Path>) -> Result<Self, StreamError> {
        decode_stream(&fs::read(path)?)
    }
}

fn check_records(header: &StreamHeader, records: &[PhotonRecord]) -> Result<(), StreamError> {
    let period = header.sync_period_ps;
    let res = u64::from(header.resolution_ps);
    let mut prev = (0u64, 0u32);
    for (index, r) in records.iter().enumerate() {
        if u64::from(r.microtime) > MICROTIME_MASK {
            return Err(StreamError::MicrotimeOverflow {
                index,
                microtime: r.microtime,
            });
        }
        if u64::from(r.microtime) * res >= period {
            return Err(StreamError::MicrotimeBeyondPeriod {
                index,
                microtime: r.microtime,
            });
        }
        if r.channel >= header.channel_count {
            return Err(StreamError::ChannelOutOfRange {
                index,
                channel: r.channel,
                channel_count: header.channel_count,
            });
        }
        if index > 0 && r.sort_key() < prev {
            return Err(StreamError::UnsortedRecords { index });
        }
        prev = r.sort_key();
    }
    Ok(())
}

fn encode_header(header: &StreamHeader, record_count: u64, out: &mut Vec<u8>) {
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&header.version.to_le_bytes());
    out.extend_from_slice(&header.sync_period_ps.to_le_bytes());
    out.extend_from_slice(&header.resolution_ps.to_le_bytes());
    out.push(header.channel_count);
    out.extend_from_slice(&record_count.to_le_bytes());
    out.extend_from_slice(&(header.metadata.len() as u32).to_le_bytes());
    out.extend_from_slice(header.metadata.as_bytes());
}

/// Serializes a header and sorted records into `.phst` bytes.
///
/// An overflow record is emitted only when the next photon's nsync is 2^30
/// or more past the current base, and it advances the base by exactly the
/// whole number of epochs needed.
pub fn encode_stream(header: &StreamHeader, records: &[PhotonRecord]) -> Result<Vec<u8>, StreamError> {
    header.validate()?;
    check_records(header, records)?;
    let mut out = Vec::with_capacity(HEADER_FIXED_LEN + header.metadata.len() + records.len() * 8);
    encode_header(header, records.len() as u64, &mut out);

    let mut base = 0u64;
    for r in records {
        let offset = r.nsync - base;
        if offset > NSYNC_OFFSET_MASK {
            let increment = offset >> NSYNC_OFFSET_BITS;
            out.extend_from_slice(&RawRecord::Overflow { increment }.to_word().to_le_bytes());
            base += increment << NSYNC_OFFSET_BITS;
        }
        let word = RawRecord::Photon {
            channel: r.channel,
            nsync_offset: (r.nsync - base) as u32,
            microtime: r.microtime,
        }
        .to_word();
        out.extend_from_slice(&word.to_le_bytes());
    }
    Ok(out)
}

fn read_array<const N: usize>(bytes: &[u8], at: usize) -> [u8; N] {
    let mut buf = [0u8; N];
    buf.copy_from_slice(&bytes[at..at + N]);
    buf
}

/// Parses `.phst` bytes back into a stream.
pub fn decode_stream(bytes: &[u8]) -> Result<PhotonStream, StreamError> {
    if bytes.len() < MAGIC.len() || bytes[..4] != MAGIC {
        return Err(StreamError::BadMagic {
            found: bytes[..bytes.len().min(4)].to_vec(),
        });
    }
    if bytes.len() < HEADER_FIXED_LEN {
        return Err(StreamError::TruncatedStream(format!(
            "{} bytes is shorter than the {HEADER_FIXED_LEN}-byte fixed header",
            bytes.len()
        )));
    }
    let version = u16::from_le_bytes(read_array(bytes, 4));
    if version != FORMAT_VERSION {
        return Err(StreamError::VersionUnsupported(version));
    }
    let sync_period_ps = u64::from_le_bytes(read_array(bytes, 6));
    let resolution_ps = u32::from_le_bytes(read_array(bytes, 14));
    let channel_count = bytes[18];
    let record_count = u64::from_le_bytes(read_array(bytes, 19));
    let meta_len = u32::from_le_bytes(read_array(bytes, 27)) as usize;
    let body_start = HEADER_FIXED_LEN + meta_len;
    if bytes.len() < body_start {
        return Err(StreamError::TruncatedStream(format!(
            "metadata of {meta_len} bytes runs past end of input"
        )));
    }
    let metadata = std::str::from_utf8(&bytes[HEADER_FIXED_LEN..body_start])
        .map_err(|_| StreamError::MetadataNotUtf8)?
        .to_owned();
    let header = StreamHeader {
        version,
        sync_period_ps,
        resolution_ps,
        channel_count,
        record_count,
        metadata,
    };
    header.validate()?;

    let body = &bytes[body_start..];
    if !body.len().is_multiple_of(8) {
        return Err(StreamError::TruncatedStream(format!(
            "record section of {} bytes is not a whole number of 8-byte words",
            body.len()
        )));
    }
    let words = body.len() / 8;
    if (words as u64) < record_count {
        return Err(StreamError::TruncatedStream(format!(
            "header promises {record_count} records but only {words} words follow"
        )));
    }

    let records = decode_records(body, &header)?;
    if records.len() as u64 != record_count {
        return Err(StreamError::TruncatedStream(format!(
            "header promises {record_count} records, found {}",
            records.len()
        )));
    }
    Ok(PhotonStream { header, records })
}

fn decode_records(body: &[u8], header: &StreamHeader) -> Result<Vec<PhotonRecord>, StreamError> {
    let period = header.sync_period_ps;
    let res = u64::from(header.resolution_ps);
    let channel_count = header.channel_count;
    let mut records = Vec::with_capacity(header.record_count as usize);
    let mut base = 0u64;
    let mut prev = (0u64, 0u32);
    for chunk in body.chunks_exact(8) {
        let word = u64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
        if word & SPECIAL_FLAG != 0 {
            base += (word & OVERFLOW_MASK) << NSYNC_OFFSET_BITS;
            continue;
        }
        let channel = ((word >> CHANNEL_SHIFT) & CHANNEL_MASK) as u8;
        let nsync = base + ((word >> NSYNC_SHIFT) & NSYNC_OFFSET_MASK);
        let microtime = (word & MICROTIME_MASK) as u32;
        let index = records.len();
        if channel >= channel_count {
            return Err(StreamError::ChannelOutOfRange {
                index,
                channel,
                channel_count,
            });
        }
        if u64::from(microtime) * res >= period {
            return Err(StreamError::MicrotimeBeyondPeriod { index, microtime });
        }
        if (nsync, microtime) < prev {
            return Err(StreamError::UnsortedRecords { index });
        }
        prev = (nsync, microtime);
        records.push(PhotonRecord {
            nsync,
            microtime,
            channel,
        });
    }
    Ok(records)
}

/// Flattens a stream to `(absolute_time_ps, channel)` pairs in time order.
pub fn merge_channels(stream: &PhotonStream) -> Vec<(u64, u8)> {
    stream
        .records
        .iter()
        .map(|r| (stream.absolute_time_ps(r), r.channel))
        .collect()
}

/// Absolute times (ps) of one channel, in order.
pub fn channel_times_ps(stream: &PhotonStream, channel: u8) -> Vec<u64> {
    stream
        .records
        .iter()
        .filter(|r| r.channel == channel)
        .map(|r| stream.absolute_time_ps(r))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header() -> StreamHeader {
        StreamHeader::new(DEFAULT_SYNC_PERIOD_PS, DEFAULT_RESOLUTION_PS, 2)
    }

    #[test]
    fn empty_stream_is_header_only() {
        let bytes = encode_stream(&header(), &[]).unwrap();
        assert_eq!(bytes.len(), HEADER_FIXED_LEN);
        assert_eq!(&bytes[..4], b"PHST");
        assert_eq!(u64::from_le_bytes(bytes[19..27].try_into().unwrap()), 0);
        let s = decode_stream(&bytes).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.header, header());
    }

    #[test]
    fn photon_word_layout() {
        let bytes = encode_stream(&header(), &[PhotonRecord::new(1, 5, 100)]).unwrap();
        let word = u64::from_le_bytes(bytes[HEADER_FIXED_LEN..].try_into().unwrap());
        assert_eq!(word >> 63, 0);
        assert_eq!((word >> 58) & 0b11111, 0b00001);
        assert_eq!((word >> 28) & ((1 << 30) - 1), 5);
        assert_eq!(word & ((1 << 28) - 1), 100);
        assert_eq!(word, (1u64 << 58) | (5u64 << 28) | 100);
    }

    #[test]
    fn header_fields_are_little_endian() {
        let mut h = header();
        h.metadata = "{\"seed\":7}".into();
        let bytes = encode_stream(&h, &[]).unwrap();
        assert_eq!(&bytes[4..6], &1u16.to_le_bytes());
        assert_eq!(&bytes[6..14], &400_000u64.to_le_bytes());
        assert_eq!(&bytes[14..18], &16u32.to_le_bytes());
        assert_eq!(bytes[18], 2);
        assert_eq!(&bytes[27..31], &10u32.to_le_bytes());
        assert_eq!(&bytes[31..], b"{\"seed\":7}");
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode_stream(&header(), &[]).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_stream(&bytes), Err(StreamError::BadMagic { .. })));
        assert!(matches!(decode_stream(b""), Err(StreamError::BadMagic { .. })));
    }

    #[test]
    fn unsupported_version() {
        let mut bytes = encode_stream(&header(), &[]).unwrap();
        bytes[4] = 9;
        assert!(matches!(decode_stream(&bytes), Err(StreamError::VersionUnsupported(9))));
    }

    #[test]
    fn truncation_detected() {
        let recs = [PhotonRecord::new(0, 1, 1), PhotonRecord::new(1, 2, 2)];
        let bytes = encode_stream(&header(), &recs).unwrap();
        assert!(matches!(
            decode_stream(&bytes[..bytes.len() - 8]),
            Err(StreamError::TruncatedStream(_))
        ));
        assert!(matches!(
            decode_stream(&bytes[..bytes.len() - 3]),
            Err(StreamError::TruncatedStream(_))
        ));
        assert!(matches!(decode_stream(&bytes[..20]), Err(StreamError::TruncatedStream(_))));
    }

    #[test]
    fn encoder_errors() {
        let h = header();
        let unsorted = [PhotonRecord::new(0, 5, 0), PhotonRecord::new(0, 4, 0)];
        assert!(matches!(
            encode_stream(&h, &unsorted),
            Err(StreamError::UnsortedRecords { index: 1 })
        ));
        let mut wide = StreamHeader::new(u64::MAX / 2, 1, 2);
        wide.metadata.clear();
        assert!(matches!(
            encode_stream(&wide, &[PhotonRecord::new(0, 0, 1 << 28)]),
            Err(StreamError::MicrotimeOverflow { .. })
        ));
        assert!(matches!(
            encode_stream(&h, &[PhotonRecord::new(2, 0, 0)]),
            Err(StreamError::ChannelOutOfRange { channel: 2, .. })
        ));
        assert!(matches!(
            encode_stream(&h, &[PhotonRecord::new(0, 0, 25_000)]),
            Err(StreamError::MicrotimeBeyondPeriod { .. })
        ));
    }

    #[test]
    fn consecutive_overflow_records_accumulate() {
        let h = header();
        let mut bytes = encode_stream(&h, &[]).unwrap();
        bytes[19..27].copy_from_slice(&1u64.to_le_bytes());
        bytes.extend_from_slice(&((1u64 << 63) | 3).to_le_bytes());
        bytes.extend_from_slice(&((1u64 << 63) | 4).to_le_bytes());
        let photon = (1u64 << 58) | (7u64 << 28) | 11;
        bytes.extend_from_slice(&photon.to_le_bytes());
        let s = decode_stream(&bytes).unwrap();
        assert_eq!(s.records, vec![PhotonRecord::new(1, 7 * (1 << 30) + 7, 11)]);
    }

    #[test]
    fn overflow_inserted_only_when_required() {
        let h = header();
        let edge = (1u64 << 30) - 1;
        let recs = [PhotonRecord::new(0, 0, 0), PhotonRecord::new(0, edge, 0)];
        let bytes = encode_stream(&h, &recs).unwrap();
        assert_eq!(bytes.len(), HEADER_FIXED_LEN + 16);

        let recs = [PhotonRecord::new(0, edge + 1, 0), PhotonRecord::new(1, 5 << 30, 3)];
        let bytes = encode_stream(&h, &recs).unwrap();
        let words: Vec<RawRecord> = bytes[HEADER_FIXED_LEN..]
            .chunks_exact(8)
            .map(|c| RawRecord::from_word(u64::from_le_bytes(c.try_into().unwrap())))
            .collect();
        assert_eq!(
            words,
            vec![
                RawRecord::Overflow { increment: 1 },
                RawRecord::Photon { channel: 0, nsync_offset: 0, microtime: 0 },
                RawRecord::Overflow { increment: 4 },
                RawRecord::Photon { channel: 1, nsync_offset: 0, microtime: 3 },
            ]
        );
        assert_eq!(decode_stream(&bytes).unwrap().records, recs);
    }

    #[test]
    fn merge_channels_arithmetic() {
        let s = PhotonStream::new(header(), vec![PhotonRecord::new(0, 2, 50)]).unwrap();
        assert_eq!(merge_channels(&s), vec![(800_800, 0)]);
        let empty = PhotonStream::new(header(), vec![]).unwrap();
        assert!(merge_channels(&empty).is_empty());
    }

    fn sorted_records() -> impl Strategy<Value = Vec<PhotonRecord>> {
        prop::collection::vec((0u8..2, 0u64..(1 << 33), 0u32..25_000), 0..400).prop_map(|mut v| {
            v.sort_by_key(|&(_, n, m)| (n, m));
            v.into_iter().map(|(c, n, m)| PhotonRecord::new(c, n, m)).collect()
        })
    }

    proptest! {
        #[test]
        fn codec_round_trip(records in sorted_records(), meta in "[a-z]{0,12}") {
            let mut h = header();
            h.metadata = meta;
            let bytes = encode_stream(&h, &records).unwrap();
            let s = decode_stream(&bytes).unwrap();
            prop_assert_eq!(&s.records, &records);
            prop_assert_eq!(s.header.record_count, records.len() as u64);
            prop_assert_eq!(s.encode().unwrap(), bytes);
        }

        #[test]
        fn merged_times_monotone(records in sorted_records()) {
            let s = PhotonStream::new(header(), records).unwrap();
            let merged = merge_channels(&s);
            prop_assert_eq!(merged.len(), s.len());
            prop_assert!(merged.windows(2).all(|w| w[0].0 <= w[1].0));
            for (m, r) in merged.iter().zip(&s.records) {
                prop_assert_eq!(m.1, r.channel);
            }
        }

        #[test]
        fn overflow_count_is_minimal(records in sorted_records()) {
            let bytes = encode_stream(&header(), &records).unwrap();
            let specials = bytes[HEADER_FIXED_LEN..]
                .chunks_exact(8)
                .filter(|c| u64::from_le_bytes((*c).try_into().unwrap()) >> 63 == 1)
                .count();
            // one overflow word per distinct epoch change
            let mut epochs = 0;
            let mut base = 0u64;
            for r in &records {
                if r.nsync - base >= 1 << 30 {
                    epochs += 1;
                    base = (r.nsync >> 30) << 30;
                }
            }
            prop_assert_eq!(specials, epochs);
        }
    }
}
