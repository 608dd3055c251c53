//! FIFO of packet arrival frames, stored as a bitset over frame indices.
//!
//! A device receives at most one packet per frame, so its backlog is a
//! strictly increasing set of frame numbers. One bit per frame keeps long
//! saturated runs cheap: memory is bounded by the age of the head packet,
//! not by the number of queued packets.

use std::collections::VecDeque;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ArrivalQueue {
    /// Frame index represented by bit 0 of `words[0]`; always a multiple of 64.
    base: u64,
    words: VecDeque<u64>,
    len: usize,
    head: Option<u64>,
    last: Option<u64>,
}

impl ArrivalQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Arrival frame of the head-of-line packet.
    pub fn head(&self) -> Option<u64> {
        self.head
    }

    /// Enqueues a packet that arrived in `frame`.
    ///
    /// # Panics
    /// If `frame` is not later than the previous arrival.
    pub fn push(&mut self, frame: u64) {
        if let Some(last) = self.last {
            assert!(frame > last, "arrivals must be strictly increasing ({frame} after {last})");
        }
        if self.len == 0 {
            self.words.clear();
            self.base = frame & !63;
            self.head = Some(frame);
        }
        let offset = frame - self.base;
        let word = (offset / 64) as usize;
        while self.words.len() <= word {
            self.words.push_back(0);
        }
        self.words[word] |= 1u64 << (offset % 64);
        self.len += 1;
        self.last = Some(frame);
    }

    /// Removes and returns the head-of-line arrival frame.
    pub fn pop(&mut self) -> Option<u64> {
        let head = self.head?;
        let offset = head - self.base;
        let word = (offset / 64) as usize;
        self.words[word] &= !(1u64 << (offset % 64));
        self.len -= 1;
        self.head = None;
        if self.len == 0 {
            self.words.clear();
            return Some(head);
        }
        while self.words.front() == Some(&0) {
            self.words.pop_front();
            self.base += 64;
        }
        let first = *self.words.front().expect("non-empty queue keeps a set bit");
        self.head = Some(self.base + first.trailing_zeros() as u64);
        Some(head)
    }
}
