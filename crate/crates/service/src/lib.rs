//! Teleoperation bridge: serves one simulated tracing session over TCP.
//!
//! Clients receive state, tactile and visual frames at half the simulation
//! rate and send move, grip, record, reset and snapshot commands. The first
//! client to connect holds the controller token; others observe. See
//! `docs/wire-protocol.md` for the message schema.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{read_frame, write_frame, CommandMessage, Frame, RecordAction, StatePayload, StreamMessage};
pub use server::{serve, ServerHandle};
pub use session::{Move, SavedEpisode, ServiceConfig, Session, TickReport};
