//! Discrete-event comparison of a 5G-NTN and a DVB-S2/RCS2 access stack
//! over a transparent GEO link.

pub mod channel;
pub mod dvb;
pub mod framing;
pub mod link;
pub mod ntn;
pub mod packet;
pub mod sim;
pub mod config;
pub mod net;
pub mod transport;
pub mod workloads;
pub mod report;
pub mod params;
pub mod selftest;
pub mod cli;
