//! Durable append-only per-partition log with contiguous offsets, segment
//! files, retention, and crash recovery.
//!
//! On-disk entry layout, all integers big-endian:
//!
//! ```text
//! [body_len: u32]
//! [offset: u64] [event_time: i64]
//! [key_len: u16] [key bytes]        key_len 0xFFFF means no key
//! [payload bytes]                   canonical serialized record payload
//! [crc32: u32]                      CRC-32 (IEEE) of body bytes before it
//! ```
//!
//! `body_len` covers everything after the length prefix, crc32 included.
//! Segment files are named `<base_offset, 20 digits>.log`; every segment
//! except the last is sealed. Recovery truncates a torn tail in the active
//! segment and refuses to open when a sealed segment fails its checksums.

use crate::codec::{record_payload_from_bytes, record_payload_to_bytes, CodecError};
use crate::model::{FieldMap, TimestampMs};
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

const DEFAULT_ROLL_BYTES: u64 = 16 * 1024 * 1024;
const NO_KEY: u16 = 0xFFFF;
const INDEX_STRIDE: u64 = 64;

/// Record data as stored in a partition log, before offset assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryData {
    pub event_time: TimestampMs,
    pub key: Option<String>,
    pub value: FieldMap,
    pub headers: Vec<(String, String)>,
}

/// A stored record read back from the log.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredRecord {
    pub offset: u64,
    pub entry: EntryData,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RetentionPolicy {
    Unlimited,
    /// Keep at most this many sealed segments; the active segment is
    /// never counted or deleted.
    MaxSegments(usize),
    /// Delete sealed segments whose newest event time is older than this
    /// many milliseconds before `now`.
    MaxAgeMs(i64),
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("append batch must not be empty")]
    EmptyBatch,
    #[error("offset {requested} is below the retention floor; earliest available is {earliest}")]
    OutOfRange { requested: u64, earliest: u64 },
    #[error("unrecoverable corruption in sealed segment {segment}: {detail}")]
    UnrecoverableCorruption { segment: PathBuf, detail: String },
    #[error("record key exceeds {max} bytes", max = NO_KEY - 1)]
    KeyTooLong,
    #[error("payload codec error: {0}")]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone)]
pub struct SegmentInfo {
    pub base_offset: u64,
    pub path: PathBuf,
    pub size_bytes: u64,
    pub sealed: bool,
}

#[derive(Debug)]
struct Segment {
    base_offset: u64,
    path: PathBuf,
    size_bytes: u64,
    entry_count: u64,
    max_event_time: TimestampMs,
    /// Sparse offset index: (offset, file position) every INDEX_STRIDE entries.
    index: Vec<(u64, u64)>,
}

impl Segment {
    fn end_offset(&self) -> u64 {
        self.base_offset + self.entry_count
    }
}

#[derive(Debug)]
enum Store {
    Memory(Vec<StoredRecord>),
    Durable {
        dir: PathBuf,
        roll_bytes: u64,
        segments: Vec<Segment>,
        writer: Option<File>,
    },
}

/// An append-only log for one partition. Single writer, many readers;
/// the owning broker serializes appends.
#[derive(Debug)]
pub struct PartitionLog {
    store: Store,
    earliest: u64,
    end: u64,
}

fn segment_path(dir: &Path, base_offset: u64) -> PathBuf {
    dir.join(format!("{base_offset:020}.log"))
}

fn encode_entry(offset: u64, entry: &EntryData) -> Result<Vec<u8>, LogError> {
    let payload = record_payload_to_bytes(&entry.value, &entry.headers);
    let key_bytes = entry.key.as_deref().map(str::as_bytes);
    if let Some(k) = key_bytes {
        if k.len() >= NO_KEY as usize {
            return Err(LogError::KeyTooLong);
        }
    }
    let body_len = 8 + 8 + 2 + key_bytes.map_or(0, <[u8]>::len) + payload.len() + 4;
    let mut buf = Vec::with_capacity(4 + body_len);
    buf.extend_from_slice(&(body_len as u32).to_be_bytes());
    buf.extend_from_slice(&offset.to_be_bytes());
    buf.extend_from_slice(&entry.event_time.to_be_bytes());
    match key_bytes {
        Some(k) => {
            buf.extend_from_slice(&(k.len() as u16).to_be_bytes());
            buf.extend_from_slice(k);
        }
        None => buf.extend_from_slice(&NO_KEY.to_be_bytes()),
    }
    buf.extend_from_slice(&payload);
    let crc = crc32fast::hash(&buf[4..]);
    buf.extend_from_slice(&crc.to_be_bytes());
    Ok(buf)
}

/// Outcome of decoding one entry from a byte slice.
enum Decoded {
    Entry { record: StoredRecord, consumed: usize },
    /// Clean end of data (no bytes left).
    End,
    /// Structurally incomplete or checksum-invalid data at this position.
    Invalid(String),
}

fn decode_entry(buf: &[u8]) -> Decoded {
    if buf.is_empty() {
        return Decoded::End;
    }
    if buf.len() < 4 {
        return Decoded::Invalid("truncated length prefix".into());
    }
    let body_len = u32::from_be_bytes(buf[0..4].try_into().unwrap()) as usize;
    if body_len < 8 + 8 + 2 + 4 {
        return Decoded::Invalid(format!("body length {body_len} too small"));
    }
    if buf.len() < 4 + body_len {
        return Decoded::Invalid("truncated entry body".into());
    }
    let body = &buf[4..4 + body_len];
    let (data, crc_bytes) = body.split_at(body_len - 4);
    let stored_crc = u32::from_be_bytes(crc_bytes.try_into().unwrap());
    if crc32fast::hash(data) != stored_crc {
        return Decoded::Invalid("checksum mismatch".into());
    }
    let offset = u64::from_be_bytes(data[0..8].try_into().unwrap());
    let event_time = i64::from_be_bytes(data[8..16].try_into().unwrap());
    let key_len = u16::from_be_bytes(data[16..18].try_into().unwrap());
    let (key, payload_start) = if key_len == NO_KEY {
        (None, 18)
    } else {
        let end = 18 + key_len as usize;
        if end > data.len() {
            return Decoded::Invalid("key length exceeds body".into());
        }
        match std::str::from_utf8(&data[18..end]) {
            Ok(s) => (Some(s.to_string()), end),
            Err(_) => return Decoded::Invalid("key is not valid UTF-8".into()),
        }
    };
    let (value, headers) = match record_payload_from_bytes(&data[payload_start..]) {
        Ok(v) => v,
        Err(e) => return Decoded::Invalid(format!("payload: {e}")),
    };
    Decoded::Entry {
        record: StoredRecord {
            offset,
            entry: EntryData { event_time, key, value, headers },
        },
        consumed: 4 + body_len,
    }
}

/// Result of scanning one segment file.
struct ScanResult {
    entry_count: u64,
    valid_bytes: u64,
    max_event_time: TimestampMs,
    index: Vec<(u64, u64)>,
    /// Set when the scan stopped before end-of-file.
    failure: Option<String>,
}

fn scan_segment(path: &Path, base_offset: u64) -> Result<ScanResult, LogError> {
    let bytes = fs::read(path)?;
    let mut pos = 0usize;
    let mut expected = base_offset;
    let mut max_event_time = TimestampMs::MIN;
    let mut index = Vec::new();
    loop {
        match decode_entry(&bytes[pos..]) {
            Decoded::End => {
                return Ok(ScanResult {
                    entry_count: expected - base_offset,
                    valid_bytes: pos as u64,
                    max_event_time,
                    index,
                    failure: None,
                })
            }
            Decoded::Invalid(detail) => {
                return Ok(ScanResult {
                    entry_count: expected - base_offset,
                    valid_bytes: pos as u64,
                    max_event_time,
                    index,
                    failure: Some(detail),
                })
            }
            Decoded::Entry { record, consumed } => {
                if record.offset != expected {
                    return Ok(ScanResult {
                        entry_count: expected - base_offset,
                        valid_bytes: pos as u64,
                        max_event_time,
                        index,
                        failure: Some(format!(
                            "offset discontinuity: expected {expected}, found {}",
                            record.offset
                        )),
                    });
                }
                if (expected - base_offset) % INDEX_STRIDE == 0 {
                    index.push((expected, pos as u64));
                }
                max_event_time = max_event_time.max(record.entry.event_time);
                expected += 1;
                pos += consumed;
            }
        }
    }
}

impl PartitionLog {
    /// A volatile log for tests, benchmarks, and `--in-memory` brokers.
    pub fn in_memory() -> PartitionLog {
        PartitionLog { store: Store::Memory(Vec::new()), earliest: 0, end: 0 }
    }

    /// Opens (and recovers) a durable log in `dir`, creating it if absent.
    pub fn open_durable(dir: &Path) -> Result<PartitionLog, LogError> {
        Self::open_durable_with_roll(dir, DEFAULT_ROLL_BYTES)
    }

    /// As `open_durable` with a custom segment-roll threshold, which tests
    /// use to exercise multi-segment paths cheaply.
    pub fn open_durable_with_roll(dir: &Path, roll_bytes: u64) -> Result<PartitionLog, LogError> {
        fs::create_dir_all(dir)?;
        let mut bases: Vec<u64> = Vec::new();
        for dirent in fs::read_dir(dir)? {
            let dirent = dirent?;
            let name = dirent.file_name();
            let name = name.to_string_lossy();
            if let Some(stem) = name.strip_suffix(".log") {
                if let Ok(base) = stem.parse::<u64>() {
                    bases.push(base);
                }
            }
        }
        bases.sort_unstable();

        let mut segments = Vec::with_capacity(bases.len());
        for (i, base) in bases.iter().enumerate() {
            let path = segment_path(dir, *base);
            let sealed = i + 1 < bases.len();
            let scan = scan_segment(&path, *base)?;
            if let Some(detail) = scan.failure {
                if sealed {
                    return Err(LogError::UnrecoverableCorruption { segment: path, detail });
                }
                // Torn tail in the active segment: drop it and truncate the
                // file to the last valid entry boundary.
                let f = OpenOptions::new().write(true).open(&path)?;
                f.set_len(scan.valid_bytes)?;
                f.sync_data()?;
            }
            if sealed && *base + scan.entry_count != bases[i + 1] {
                return Err(LogError::UnrecoverableCorruption {
                    segment: path,
                    detail: format!(
                        "segment ends at offset {} but next segment starts at {}",
                        *base + scan.entry_count,
                        bases[i + 1]
                    ),
                });
            }
            segments.push(Segment {
                base_offset: *base,
                path,
                size_bytes: scan.valid_bytes,
                entry_count: scan.entry_count,
                max_event_time: scan.max_event_time,
                index: scan.index,
            });
        }

        let earliest = segments.first().map_or(0, |s| s.base_offset);
        let end = segments.last().map_or(0, Segment::end_offset);
        Ok(PartitionLog {
            store: Store::Durable { dir: dir.to_path_buf(), roll_bytes, segments, writer: None },
            earliest,
            end,
        })
    }

    /// Next offset to be assigned; one past the last stored record.
    pub fn end_offset(&self) -> u64 {
        self.end
    }

    /// Retention floor: the earliest offset still readable.
    pub fn earliest_offset(&self) -> u64 {
        self.earliest
    }

    /// Appends a batch durably and returns the offset of its first record.
    /// The batch is atomic: on failure nothing becomes visible.
    pub fn append(&mut self, batch: &[EntryData]) -> Result<u64, LogError> {
        if batch.is_empty() {
            return Err(LogError::EmptyBatch);
        }
        let base = self.end;
        match &mut self.store {
            Store::Memory(entries) => {
                for (i, entry) in batch.iter().enumerate() {
                    entries.push(StoredRecord { offset: base + i as u64, entry: entry.clone() });
                }
            }
            Store::Durable { dir, roll_bytes, segments, writer } => {
                let mut buf = Vec::new();
                let mut offsets_in_buf = Vec::with_capacity(batch.len());
                let mut max_event_time = TimestampMs::MIN;
                for (i, entry) in batch.iter().enumerate() {
                    offsets_in_buf.push(buf.len() as u64);
                    buf.extend_from_slice(&encode_entry(base + i as u64, entry)?);
                    max_event_time = max_event_time.max(entry.event_time);
                }

                let needs_roll = match segments.last() {
                    None => true,
                    Some(seg) => {
                        seg.entry_count > 0 && seg.size_bytes + buf.len() as u64 > *roll_bytes
                    }
                };
                if needs_roll {
                    let path = segment_path(dir, base);
                    File::create(&path)?.sync_data()?;
                    segments.push(Segment {
                        base_offset: base,
                        path,
                        size_bytes: 0,
                        entry_count: 0,
                        max_event_time: TimestampMs::MIN,
                        index: Vec::new(),
                    });
                    *writer = None;
                }

                let seg = segments.last_mut().expect("active segment exists");
                if writer.is_none() {
                    *writer = Some(OpenOptions::new().append(true).open(&seg.path)?);
                }
                let file = writer.as_mut().unwrap();
                let pre_size = seg.size_bytes;
                if let Err(e) = file.write_all(&buf).and_then(|()| file.sync_data()) {
                    // Roll back any partial write so no torn bytes linger.
                    let _ = file.set_len(pre_size);
                    let _ = file.sync_data();
                    return Err(LogError::Io(e));
                }
                for (i, pos) in offsets_in_buf.iter().enumerate() {
                    let offset = base + i as u64;
                    if (offset - seg.base_offset) % INDEX_STRIDE == 0 {
                        seg.index.push((offset, pre_size + pos));
                    }
                }
                seg.size_bytes += buf.len() as u64;
                seg.entry_count += batch.len() as u64;
                seg.max_event_time = seg.max_event_time.max(max_event_time);
            }
        }
        self.end = base + batch.len() as u64;
        Ok(base)
    }

    /// Reads up to `max` records starting at `from`. Empty when `from` is
    /// at or past the end; an error when `from` fell below retention.
    pub fn read(&self, from: u64, max: usize) -> Result<Vec<StoredRecord>, LogError> {
        if from < self.earliest {
            return Err(LogError::OutOfRange { requested: from, earliest: self.earliest });
        }
        if from >= self.end || max == 0 {
            return Ok(Vec::new());
        }
        let want = max.min((self.end - from) as usize);
        match &self.store {
            Store::Memory(entries) => {
                let start = (from - self.earliest) as usize;
                Ok(entries[start..start + want].to_vec())
            }
            Store::Durable { segments, .. } => {
                let mut out = Vec::with_capacity(want);
                let mut seg_idx = match segments.binary_search_by(|s| s.base_offset.cmp(&from)) {
                    Ok(i) => i,
                    Err(i) => i.saturating_sub(1),
                };
                while out.len() < want && seg_idx < segments.len() {
                    let seg = &segments[seg_idx];
                    self.read_from_segment(seg, from + out.len() as u64, want, &mut out)?;
                    seg_idx += 1;
                }
                Ok(out)
            }
        }
    }

    /// Appends records `[from, seg end)` to `out` until it holds `target`.
    fn read_from_segment(
        &self,
        seg: &Segment,
        from: u64,
        target: usize,
        out: &mut Vec<StoredRecord>,
    ) -> Result<(), LogError> {
        if from >= seg.end_offset() || seg.entry_count == 0 {
            return Ok(());
        }
        let from = from.max(seg.base_offset);
        let start_pos = seg
            .index
            .iter()
            .rev()
            .find(|(off, _)| *off <= from)
            .map_or(0, |(_, pos)| *pos);
        let mut file = File::open(&seg.path)?;
        file.seek(SeekFrom::Start(start_pos))?;
        let mut bytes = Vec::with_capacity((seg.size_bytes - start_pos) as usize);
        file.take(seg.size_bytes - start_pos).read_to_end(&mut bytes)?;
        let mut pos = 0usize;
        while out.len() < target {
            match decode_entry(&bytes[pos..]) {
                Decoded::End => break,
                Decoded::Invalid(detail) => {
                    return Err(LogError::UnrecoverableCorruption {
                        segment: seg.path.clone(),
                        detail,
                    })
                }
                Decoded::Entry { record, consumed } => {
                    pos += consumed;
                    if record.offset >= from {
                        out.push(record);
                    }
                }
            }
        }
        Ok(())
    }

    /// Seals the active segment so the next append starts a fresh one.
    pub fn seal_active(&mut self) -> Result<(), LogError> {
        if let Store::Durable { dir, segments, writer, .. } = &mut self.store {
            let end = self.end;
            if segments.last().is_some_and(|s| s.entry_count > 0) {
                let path = segment_path(dir, end);
                File::create(&path)?.sync_data()?;
                segments.push(Segment {
                    base_offset: end,
                    path,
                    size_bytes: 0,
                    entry_count: 0,
                    max_event_time: TimestampMs::MIN,
                    index: Vec::new(),
                });
                *writer = None;
            }
        }
        Ok(())
    }

    /// Deletes whole sealed segments per the policy, oldest first, and
    /// returns how many were removed. The active segment always survives.
    pub fn enforce_retention(
        &mut self,
        policy: &RetentionPolicy,
        now_ms: TimestampMs,
    ) -> Result<usize, LogError> {
        let Store::Durable { segments, .. } = &mut self.store else {
            return Ok(0);
        };
        if segments.len() <= 1 {
            return Ok(0);
        }
        let sealed = segments.len() - 1;
        let delete_count = match policy {
            RetentionPolicy::Unlimited => 0,
            RetentionPolicy::MaxSegments(keep) => sealed.saturating_sub(*keep),
            RetentionPolicy::MaxAgeMs(age) => segments[..sealed]
                .iter()
                .take_while(|s| s.max_event_time < now_ms.saturating_sub(*age))
                .count(),
        };
        for seg in segments.drain(..delete_count) {
            fs::remove_file(&seg.path)?;
        }
        if delete_count > 0 {
            self.earliest = segments.first().map_or(self.end, |s| s.base_offset);
        }
        Ok(delete_count)
    }

    pub fn segments(&self) -> Vec<SegmentInfo> {
        match &self.store {
            Store::Memory(_) => Vec::new(),
            Store::Durable { segments, .. } => {
                let last = segments.len().saturating_sub(1);
                segments
                    .iter()
                    .enumerate()
                    .map(|(i, s)| SegmentInfo {
                        base_offset: s.base_offset,
                        path: s.path.clone(),
                        size_bytes: s.size_bytes,
                        sealed: i < last,
                    })
                    .collect()
            }
        }
    }
}
