//! Application-layer datagrams as seen by the link layers.

use std::fmt;

use crate::sim::VirtualTime;

/// TCP/IP header bytes carried by every transport packet.
pub const TCP_IP_HEADER: u32 = 40;
/// ICMP echo with the default 56-byte ping payload: 20 + 8 + 56.
pub const ECHO_PACKET_SIZE: u32 = 84;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PacketId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowId(pub u32);

/// Which way a packet travels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Server/gateway side to the user terminal.
    Forward,
    /// User terminal back to the server.
    Return,
}

impl Direction {
    pub fn index(self) -> usize {
        match self {
            Direction::Forward => 0,
            Direction::Return => 1,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "fwd",
            Direction::Return => "ret",
        })
    }
}

/// Transport meaning of a packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    EchoRequest { probe: u32 },
    EchoReply { probe: u32 },
    Syn,
    SynAck,
    /// Handshake ACK carrying the application request.
    Request { bytes: u32 },
    /// Response payload `[offset, offset + len)`; `len == 0` is a header-only response.
    Data { offset: u64, len: u32 },
    /// Cumulative acknowledgement of response bytes.
    Ack { cumulative: u64 },
}

impl Segment {
    pub fn label(&self) -> &'static str {
        match self {
            Segment::EchoRequest { .. } => "echo-req",
            Segment::EchoReply { .. } => "echo-rep",
            Segment::Syn => "syn",
            Segment::SynAck => "synack",
            Segment::Request { .. } => "request",
            Segment::Data { .. } => "data",
            Segment::Ack { .. } => "ack",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub id: PacketId,
    pub flow: FlowId,
    /// IP datagram size in bytes.
    pub size: u32,
    pub created: VirtualTime,
    pub segment: Segment,
}

impl Packet {
    pub fn describe(&self) -> String {
        format!("{}:{}:{}:{}", self.flow.0, self.id.0, self.segment.label(), self.size)
    }
}

/// Length in bytes of something a link layer can carry.
pub trait WireLen {
    fn wire_len(&self) -> u32;
}

impl WireLen for Packet {
    fn wire_len(&self) -> u32 {
        self.size
    }
}

impl WireLen for Vec<u8> {
    fn wire_len(&self) -> u32 {
        self.len() as u32
    }
}
