//! Byte-granular packing of packets into fixed-capacity carrier frames.
//!
//! Both stacks fill frames the same way: whole packets while they fit, then
//! at most one trailing fragment; the next frame starts with the matching
//! continuation. They differ only in the header costs, captured by
//! [`FramingRules`].

use std::collections::VecDeque;

use crate::packet::WireLen;
use crate::sim::VirtualTime;

/// Per-packet and per-piece header costs, in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FramingRules {
    /// Added once to every packet before segmentation (tunnel headers).
    pub sdu_overhead: u32,
    /// Header of an unfragmented piece.
    pub complete_header: u32,
    /// Header of the first fragment of a split packet.
    pub first_header: u32,
    /// Header of every later fragment.
    pub continuation_header: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PieceKind {
    Complete,
    First,
    Middle,
    Last,
}

impl PieceKind {
    pub fn is_start(self) -> bool {
        matches!(self, PieceKind::Complete | PieceKind::First)
    }

    pub fn is_end(self) -> bool {
        matches!(self, PieceKind::Complete | PieceKind::Last)
    }
}

/// One piece of one packet placed in a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PieceInfo {
    /// Queue-assigned sequence number of the parent item.
    pub item_seq: u64,
    /// Fragment index within the parent, contiguous from 0.
    pub index: u32,
    pub kind: PieceKind,
    /// Offset into the parent's SDU (packet plus `sdu_overhead`).
    pub offset: u32,
    pub len: u32,
    pub header: u32,
}

impl PieceInfo {
    pub fn wire_bytes(&self) -> u32 {
        self.len + self.header
    }
}

#[derive(Debug)]
struct Queued<T> {
    seq: u64,
    arrived: VirtualTime,
    sdu_len: u32,
    item: T,
}

/// FIFO of packets awaiting transmission, with a cursor into the head.
#[derive(Debug)]
pub struct SegmentingQueue<T> {
    rules: FramingRules,
    items: VecDeque<Queued<T>>,
    head_sent: u32,
    head_pieces: u32,
    next_seq: u64,
    backlog: u64,
}

/// Result of filling one frame.
#[derive(Debug)]
pub struct Fill<T> {
    pub pieces: Vec<PieceInfo>,
    /// Items whose last byte went into this frame, in queue order.
    pub completed: Vec<T>,
    pub used_bytes: u32,
}

impl<T> Default for Fill<T> {
    fn default() -> Self {
        Fill {
            pieces: Vec::new(),
            completed: Vec::new(),
            used_bytes: 0,
        }
    }
}

impl<T: WireLen> SegmentingQueue<T> {
    pub fn new(rules: FramingRules) -> Self {
        SegmentingQueue {
            rules,
            items: VecDeque::new(),
            head_sent: 0,
            head_pieces: 0,
            next_seq: 0,
            backlog: 0,
        }
    }

    pub fn rules(&self) -> FramingRules {
        self.rules
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    /// Returns the sequence number assigned to `item`.
    pub fn push(&mut self, now: VirtualTime, item: T) -> u64 {
        let sdu_len = item.wire_len() + self.rules.sdu_overhead;
        let seq = self.next_seq;
        self.next_seq += 1;
        self.backlog += (sdu_len + self.rules.complete_header) as u64;
        self.items.push_back(Queued {
            seq,
            arrived: now,
            sdu_len,
            item,
        });
        seq
    }

    pub fn oldest_arrival(&self) -> Option<VirtualTime> {
        self.items.front().map(|q| q.arrived)
    }

    /// Bytes (payload plus headers) needed to flush the queue, to within one
    /// header on the partially sent head.
    pub fn backlog_bytes(&self) -> u64 {
        self.backlog
    }

    /// Packs pieces into a frame of `capacity` bytes. `on_piece` sees every
    /// piece while its parent is still borrowed from the queue.
    pub fn fill_with<F>(&mut self, capacity: u32, mut on_piece: F) -> Fill<T>
    where
        F: FnMut(&T, &PieceInfo),
    {
        let r = self.rules;
        let mut out = Fill::default();
        let mut room = capacity;
        while let Some(head) = self.items.front() {
            let remaining = head.sdu_len - self.head_sent;
            let fresh = self.head_sent == 0;
            let whole_header = if fresh { r.complete_header } else { r.continuation_header };
            if remaining + whole_header <= room {
                let piece = PieceInfo {
                    item_seq: head.seq,
                    index: self.head_pieces,
                    kind: if fresh { PieceKind::Complete } else { PieceKind::Last },
                    offset: self.head_sent,
                    len: remaining,
                    header: whole_header,
                };
                on_piece(&head.item, &piece);
                room -= piece.wire_bytes();
                out.used_bytes += piece.wire_bytes();
                out.pieces.push(piece);
                let q = self.items.pop_front().expect("head");
                self.backlog -= (q.sdu_len + r.complete_header) as u64 - self.head_sent as u64;
                self.head_sent = 0;
                self.head_pieces = 0;
                out.completed.push(q.item);
                continue;
            }
            let split_header = if fresh { r.first_header } else { r.continuation_header };
            if split_header >= room {
                break;
            }
            let len = room - split_header;
            let piece = PieceInfo {
                item_seq: head.seq,
                index: self.head_pieces,
                kind: if fresh { PieceKind::First } else { PieceKind::Middle },
                offset: self.head_sent,
                len,
                header: split_header,
            };
            on_piece(&head.item, &piece);
            out.used_bytes += piece.wire_bytes();
            out.pieces.push(piece);
            self.head_sent += len;
            self.head_pieces += 1;
            self.backlog -= len as u64;
            break;
        }
        out
    }

    pub fn fill(&mut self, capacity: u32) -> Fill<T> {
        self.fill_with(capacity, |_, _| {})
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    NrSlot,
    BbFrame,
    ReturnBurst,
    /// Framing disabled: one packet, no capacity limit.
    Ideal,
}

/// One PHY transmission unit.
#[derive(Debug, Clone, PartialEq)]
pub struct CarrierFrame {
    pub kind: FrameKind,
    pub start: VirtualTime,
    pub airtime_us: u64,
    pub capacity_bits: u64,
    pub used_bits: u64,
    pub pieces: usize,
}

impl CarrierFrame {
    pub fn end(&self) -> VirtualTime {
        self.start.after(self.airtime_us)
    }

    pub fn occupancy(&self) -> f64 {
        if self.capacity_bits == 0 {
            0.0
        } else {
            self.used_bits as f64 / self.capacity_bits as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain() -> FramingRules {
        FramingRules {
            sdu_overhead: 0,
            complete_header: 0,
            first_header: 0,
            continuation_header: 0,
        }
    }

    #[test]
    fn first_fragment_fills_the_frame() {
        let mut q = SegmentingQueue::new(plain());
        q.push(VirtualTime::ZERO, vec![0u8; 100]);
        let f = q.fill(685 / 8);
        assert_eq!(f.pieces.len(), 1);
        assert_eq!(f.pieces[0].len, 85);
        assert_eq!(f.pieces[0].kind, PieceKind::First);
        assert!(f.completed.is_empty());
        let g = q.fill(85);
        assert_eq!(g.pieces[0].len, 15);
        assert_eq!(g.pieces[0].kind, PieceKind::Last);
        assert_eq!(g.completed.len(), 1);
        assert!(q.is_empty());
    }

    #[test]
    fn empty_queue_yields_nothing() {
        let mut q: SegmentingQueue<Vec<u8>> = SegmentingQueue::new(plain());
        let f = q.fill(85);
        assert!(f.pieces.is_empty() && f.used_bytes == 0);
    }

    #[test]
    fn per_packet_overhead_counts_against_capacity() {
        let rules = FramingRules {
            sdu_overhead: 5,
            ..plain()
        };
        let mut q = SegmentingQueue::new(rules);
        q.push(VirtualTime::ZERO, vec![0u8; 20]);
        q.push(VirtualTime::ZERO, vec![0u8; 20]);
        let f = q.fill(85);
        assert_eq!(f.completed.len(), 2);
        assert_eq!(f.used_bytes, 50);
    }

    #[test]
    fn backlog_tracks_remaining_bytes() {
        let rules = FramingRules {
            sdu_overhead: 2,
            complete_header: 10,
            first_header: 10,
            continuation_header: 3,
        };
        let mut q = SegmentingQueue::new(rules);
        q.push(VirtualTime::ZERO, vec![0u8; 500]);
        q.push(VirtualTime::ZERO, vec![0u8; 30]);
        assert_eq!(q.backlog_bytes(), 512 + 42);
        q.fill(200);
        // 190 payload bytes of the head went out.
        assert_eq!(q.backlog_bytes(), 512 + 42 - 190);
        while !q.is_empty() {
            q.fill(200);
        }
        assert_eq!(q.backlog_bytes(), 0);
    }

    #[test]
    fn fragment_indices_are_contiguous() {
        let rules = FramingRules {
            sdu_overhead: 0,
            complete_header: 10,
            first_header: 10,
            continuation_header: 3,
        };
        let mut q = SegmentingQueue::new(rules);
        q.push(VirtualTime::ZERO, vec![0u8; 1000]);
        let mut idx = Vec::new();
        while !q.is_empty() {
            for p in q.fill(103).pieces {
                idx.push(p.index);
            }
        }
        assert_eq!(idx, (0..idx.len() as u32).collect::<Vec<_>>());
    }
}
