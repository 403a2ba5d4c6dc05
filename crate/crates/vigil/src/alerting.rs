//! Compact anomaly alert codec and delivery sinks.
//!
//! Alerts are the only thing this system ever transmits — no pixels, no
//! descriptors, no trajectories — so the wire format is a tiny
//! CRC-protected frame that fits the most restrictive long-range-radio
//! payload budgets (hard ceiling: 51 bytes; actual maximum: 42).
//!
//! Frame layout, all multi-byte fields big-endian:
//!
//! ```text
//! magic 0xA7 | version 0x01 | node_id u16 | timestamp u32
//!   | code:4 bits ‖ track_count:4 bits | score_q u8
//!   | track_id u16 × track_count | crc16 (CCITT-FALSE, all prior bytes)
//! ```
//!
//! Total size: 12 + 2·track_count bytes, track_count ≤ 15.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::net::UdpSocket;
use std::path::Path;

use thiserror::Error;

pub const ALERT_MAGIC: u8 = 0xA7;
pub const ALERT_VERSION: u8 = 0x01;
pub const MAX_ALERT_TRACKS: usize = 15;
/// Constrained-radio payload ceiling the codec must stay under.
pub const MAX_FRAME_BYTES: usize = 51;
const HEADER_BYTES: usize = 10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlertError {
    #[error("alert carries {0} track ids, the frame fits at most {MAX_ALERT_TRACKS}")]
    TooManyTracks(usize),
    #[error("anomaly code {0} out of range (0..=5)")]
    BadCode(u8),
    #[error("frame of {0} bytes is shorter than the 12-byte minimum")]
    Truncated(usize),
    #[error("bad magic byte {0:#04x}")]
    BadMagic(u8),
    #[error("unsupported frame version {0}")]
    UnsupportedVersion(u8),
    #[error("frame length {got} does not match the declared track count (expected {expected})")]
    LengthMismatch { expected: usize, got: usize },
    #[error("crc mismatch: computed {computed:#06x}, frame carries {carried:#06x}")]
    CrcMismatch { computed: u16, carried: u16 },
}

/// CRC-16/CCITT-FALSE: polynomial 0x1021, init 0xFFFF, no reflection,
/// no final xor. Check value over b"123456789" is 0x29B1.
pub fn crc16(bytes: &[u8]) -> u16 {
    let mut crc: u16 = 0xFFFF;
    for &b in bytes {
        crc ^= (b as u16) << 8;
        for _ in 0..8 {
            crc = if crc & 0x8000 != 0 {
                (crc << 1) ^ 0x1021
            } else {
                crc << 1
            };
        }
    }
    crc
}

/// One anomaly alert, the unit of transmission.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnomalyAlert {
    pub node_id: u16,
    /// Seconds since epoch; 1 s resolution is plenty for a human response.
    pub timestamp: u32,
    /// Anomaly class, 0..=5.
    pub code: u8,
    /// Score quantized to 8 bits: round(score · 255).
    pub score_q: u8,
    /// Involved tracks, at most 15.
    pub track_ids: Vec<u16>,
}

/// Quantizes a unit-interval score for the wire.
pub fn quantize_score(score: f64) -> u8 {
    (score.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_alert(a: &AnomalyAlert) -> Result<Vec<u8>, AlertError> {
    if a.track_ids.len() > MAX_ALERT_TRACKS {
        return Err(AlertError::TooManyTracks(a.track_ids.len()));
    }
    if a.code > 5 {
        return Err(AlertError::BadCode(a.code));
    }
    let mut frame = Vec::with_capacity(HEADER_BYTES + 2 * a.track_ids.len() + 2);
    frame.push(ALERT_MAGIC);
    frame.push(ALERT_VERSION);
    frame.extend_from_slice(&a.node_id.to_be_bytes());
    frame.extend_from_slice(&a.timestamp.to_be_bytes());
    frame.push((a.code << 4) | a.track_ids.len() as u8);
    frame.push(a.score_q);
    for id in &a.track_ids {
        frame.extend_from_slice(&id.to_be_bytes());
    }
    let crc = crc16(&frame);
    frame.extend_from_slice(&crc.to_be_bytes());
    debug_assert!(frame.len() <= MAX_FRAME_BYTES);
    Ok(frame)
}

pub fn decode_alert(bytes: &[u8]) -> Result<AnomalyAlert, AlertError> {
    if bytes.len() < HEADER_BYTES + 2 {
        return Err(AlertError::Truncated(bytes.len()));
    }
    if bytes[0] != ALERT_MAGIC {
        return Err(AlertError::BadMagic(bytes[0]));
    }
    if bytes[1] != ALERT_VERSION {
        return Err(AlertError::UnsupportedVersion(bytes[1]));
    }
    let track_count = (bytes[8] & 0x0F) as usize;
    let expected = HEADER_BYTES + 2 * track_count + 2;
    if bytes.len() != expected {
        return Err(AlertError::LengthMismatch {
            expected,
            got: bytes.len(),
        });
    }
    let computed = crc16(&bytes[..bytes.len() - 2]);
    let carried = u16::from_be_bytes([bytes[bytes.len() - 2], bytes[bytes.len() - 1]]);
    if computed != carried {
        return Err(AlertError::CrcMismatch { computed, carried });
    }
    let code = bytes[8] >> 4;
    if code > 5 {
        return Err(AlertError::BadCode(code));
    }
    let track_ids = (0..track_count)
        .map(|i| u16::from_be_bytes([bytes[HEADER_BYTES + 2 * i], bytes[HEADER_BYTES + 2 * i + 1]]))
        .collect();
    Ok(AnomalyAlert {
        node_id: u16::from_be_bytes([bytes[2], bytes[3]]),
        timestamp: u32::from_be_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]),
        code,
        score_q: bytes[9],
        track_ids,
    })
}

/// A delivery channel for encoded alert frames. Sinks report failure as a
/// message; they never panic the pipeline.
pub trait AlertSink {
    fn name(&self) -> &str;
    fn deliver(&mut self, frame: &[u8]) -> Result<(), String>;
}

/// Appends one lowercase-hex-encoded frame per line.
pub struct FileSink {
    name: String,
    file: File,
}

impl FileSink {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            name: format!("file:{}", path.display()),
            file,
        })
    }
}

pub fn to_hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

impl AlertSink for FileSink {
    fn name(&self) -> &str {
        &self.name
    }

    fn deliver(&mut self, frame: &[u8]) -> Result<(), String> {
        writeln!(self.file, "{}", to_hex(frame)).map_err(|e| e.to_string())
    }
}

/// Sends each frame as one datagram. The target is resolved per delivery
/// so configuration errors surface in the report, not as a panic.
pub struct DatagramSink {
    name: String,
    target: String,
    socket: UdpSocket,
}

impl DatagramSink {
    pub fn create(target: &str) -> std::io::Result<Self> {
        Ok(Self {
            name: format!("udp:{target}"),
            target: target.to_string(),
            socket: UdpSocket::bind("127.0.0.1:0")?,
        })
    }
}

impl AlertSink for DatagramSink {
    fn name(&self) -> &str {
        &self.name
    }

    fn deliver(&mut self, frame: &[u8]) -> Result<(), String> {
        match self.socket.send_to(frame, &self.target) {
            Ok(sent) if sent == frame.len() => Ok(()),
            Ok(sent) => Err(format!("short write: {sent} of {} bytes", frame.len())),
            Err(e) => Err(e.to_string()),
        }
    }
}

/// In-memory sink for tests and batch post-processing.
#[derive(Default)]
pub struct MemorySink {
    pub frames: Vec<Vec<u8>>,
}

impl AlertSink for MemorySink {
    fn name(&self) -> &str {
        "memory"
    }

    fn deliver(&mut self, frame: &[u8]) -> Result<(), String> {
        self.frames.push(frame.to_vec());
        Ok(())
    }
}

/// Per-sink delivery outcomes for one alert.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveryReport {
    pub outcomes: Vec<(String, Result<(), String>)>,
}

impl DeliveryReport {
    pub fn all_ok(&self) -> bool {
        self.outcomes.iter().all(|(_, r)| r.is_ok())
    }
}

/// Encodes once and attempts every sink; per-sink failures are recorded,
/// never raised, so a dead radio cannot stall the tracker.
pub fn dispatch(
    alert: &AnomalyAlert,
    sinks: &mut [Box<dyn AlertSink>],
) -> Result<DeliveryReport, AlertError> {
    let frame = encode_alert(alert)?;
    let outcomes = sinks
        .iter_mut()
        .map(|s| (s.name().to_string(), s.deliver(&frame)))
        .collect();
    Ok(DeliveryReport { outcomes })
}
