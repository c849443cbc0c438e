//! Wire format: every frame is a little-endian `u32` byte length followed by
//! that many bytes of UTF-8 JSON. A JSON object with a `bytes` field is
//! immediately followed by that many raw attachment bytes (image pixels).

use serde::{Deserialize, Serialize};
use std::io::{self, Read, Write};

use tracebench::eval::Outcome;
use tracebench::sim::ObjectPreset;

/// Upper bound on a single JSON header or attachment.
pub const MAX_FRAME: usize = 16 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactPayload {
    /// Sub-pixel contact in the tactile image.
    pub u: f64,
    pub v: f64,
    /// Contact mapped to the world frame.
    pub world: [f64; 2],
}

/// Everything a client needs to draw one frame of the session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePayload {
    pub tick: u64,
    pub status: String,
    pub preset: ObjectPreset,
    pub seed: u64,
    /// Gripper x, y, θ.
    pub pose: [f64; 3],
    pub aperture: f64,
    pub grasping: bool,
    /// Curve polyline from the pinned end, at most 64 points.
    pub rope: Vec<[f64; 2]>,
    pub pinned: [f64; 2],
    pub contact: Option<ContactPayload>,
    /// Distance of the estimated contact from the pinned end over the curve length.
    pub completion: f64,
    pub manipulability: f64,
    pub w_max: f64,
    pub alert: bool,
    pub recording: bool,
    /// Translation limit per second (m/s) applied to move commands.
    pub velocity_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StreamMessage {
    State {
        seq: u64,
        time: f64,
        #[serde(flatten)]
        state: StatePayload,
    },
    Tactile {
        seq: u64,
        time: f64,
        width: usize,
        height: usize,
        bytes: usize,
    },
    Visual {
        seq: u64,
        time: f64,
        width: usize,
        height: usize,
        bytes: usize,
    },
    Alert {
        seq: u64,
        time: f64,
        active: bool,
        manipulability: f64,
        w_max: f64,
    },
    Recording {
        seq: u64,
        time: f64,
        on: bool,
        /// Index of the episode appended to the session dataset (on stop).
        episode_id: Option<usize>,
        steps: usize,
        outcome: Option<Outcome>,
    },
    Ack {
        seq: u64,
        time: f64,
        client_seq: u64,
        tick: u64,
        controller: bool,
        token: Option<String>,
    },
    Error {
        seq: u64,
        time: f64,
        client_seq: Option<u64>,
        message: String,
    },
}

impl StreamMessage {
    pub fn seq(&self) -> u64 {
        match self {
            StreamMessage::State { seq, .. }
            | StreamMessage::Tactile { seq, .. }
            | StreamMessage::Visual { seq, .. }
            | StreamMessage::Alert { seq, .. }
            | StreamMessage::Recording { seq, .. }
            | StreamMessage::Ack { seq, .. }
            | StreamMessage::Error { seq, .. } => *seq,
        }
    }

    pub fn set_seq(&mut self, value: u64) {
        match self {
            StreamMessage::State { seq, .. }
            | StreamMessage::Tactile { seq, .. }
            | StreamMessage::Visual { seq, .. }
            | StreamMessage::Alert { seq, .. }
            | StreamMessage::Recording { seq, .. }
            | StreamMessage::Ack { seq, .. }
            | StreamMessage::Error { seq, .. } => *seq = value,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            StreamMessage::State { .. } => "state",
            StreamMessage::Tactile { .. } => "tactile",
            StreamMessage::Visual { .. } => "visual",
            StreamMessage::Alert { .. } => "alert",
            StreamMessage::Recording { .. } => "recording",
            StreamMessage::Ack { .. } => "ack",
            StreamMessage::Error { .. } => "error",
        }
    }

    /// Declared attachment length, if any.
    pub fn attachment_len(&self) -> Option<usize> {
        match self {
            StreamMessage::Tactile { bytes, .. } | StreamMessage::Visual { bytes, .. } => Some(*bytes),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordAction {
    Start,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CommandMessage {
    /// World-frame pose increment for the next tick.
    Move {
        client_seq: u64,
        dx: f64,
        dy: f64,
        dtheta: f64,
    },
    Grip {
        client_seq: u64,
        aperture: f64,
    },
    Record {
        client_seq: u64,
        action: RecordAction,
    },
    Reset {
        client_seq: u64,
        seed: u64,
        preset: Option<ObjectPreset>,
    },
    /// Request a full state, tactile and visual frame.
    Snapshot {
        client_seq: u64,
    },
}

impl CommandMessage {
    pub fn client_seq(&self) -> u64 {
        match self {
            CommandMessage::Move { client_seq, .. }
            | CommandMessage::Grip { client_seq, .. }
            | CommandMessage::Record { client_seq, .. }
            | CommandMessage::Reset { client_seq, .. }
            | CommandMessage::Snapshot { client_seq } => *client_seq,
        }
    }

    /// Whether the command needs the controller role.
    pub fn is_control(&self) -> bool {
        !matches!(self, CommandMessage::Snapshot { .. })
    }
}

/// Encodes one frame, appending the attachment after the JSON.
pub fn encode<T: Serialize>(msg: &T, attachment: Option<&[u8]>) -> io::Result<Vec<u8>> {
    let json = serde_json::to_vec(msg).map_err(io::Error::other)?;
    let mut out = Vec::with_capacity(4 + json.len() + attachment.map_or(0, <[u8]>::len));
    out.extend((json.len() as u32).to_le_bytes());
    out.extend(json);
    if let Some(a) = attachment {
        out.extend(a);
    }
    Ok(out)
}

pub fn write_frame<W: Write, T: Serialize>(w: &mut W, msg: &T, attachment: Option<&[u8]>) -> io::Result<()> {
    w.write_all(&encode(msg, attachment)?)?;
    w.flush()
}

/// A decoded frame: the raw JSON text plus any attachment it declared.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub json: serde_json::Value,
    pub attachment: Option<Vec<u8>>,
}

fn read_exact_vec<R: Read>(r: &mut R, n: usize) -> io::Result<Vec<u8>> {
    let mut buf = vec![0; n];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

/// Reads one frame. Invalid JSON is reported as `InvalidData` after the frame
/// has been consumed, so the stream stays aligned.
pub fn read_frame<R: Read>(r: &mut R) -> io::Result<Frame> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_le_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, format!("frame of {len} bytes exceeds limit")));
    }
    let body = read_exact_vec(r, len)?;
    let json: serde_json::Value =
        serde_json::from_slice(&body).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    let attachment = match json.get("bytes").and_then(|b| b.as_u64()) {
        Some(n) if n as usize > MAX_FRAME => {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "attachment exceeds limit"));
        }
        Some(n) => Some(read_exact_vec(r, n as usize)?),
        None => None,
    };
    Ok(Frame { json, attachment })
}
