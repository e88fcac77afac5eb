use rand::Rng;

use crate::codec::{BatchState, Decoder, Packet};
use crate::error::Result;
use crate::gf::PayloadMatrix;
use crate::sched::{build_matrix, build_queue, ReceptionProfile, TransmitQueue};

/// What a user had when it first decoded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodeRecord {
    /// Phase-2 slot after which decoding succeeded; 0 means right after phase 1.
    pub slot: u64,
    pub received: u64,
    pub innovative: u64,
    pub redundant: u64,
    pub inactivated: usize,
    pub attempts: u32,
    /// Rank of every batch at that moment.
    pub ranks: Vec<usize>,
}

/// One receiver: its batch buffers, schedule and counters.
#[derive(Clone, Debug)]
pub struct UserState {
    pub id: usize,
    pub batches: Vec<BatchState>,
    profile: Option<ReceptionProfile>,
    queue: Option<TransmitQueue>,
    sent: usize,
    /// All packets delivered to this user.
    pub received: u64,
    pub innovative: u64,
    pub redundant: u64,
    next_attempt: u64,
    attempts: u32,
    pub decoded: Option<DecodeRecord>,
}

impl UserState {
    /// A user with no batch buffers yet, which attempts its first decode once
    /// it holds `file_packets` innovative packets.
    pub fn new(id: usize, file_packets: usize) -> Self {
        Self {
            id,
            batches: Vec::new(),
            profile: None,
            queue: None,
            sent: 0,
            received: 0,
            innovative: 0,
            redundant: 0,
            next_attempt: file_packets as u64,
            attempts: 0,
            decoded: None,
        }
    }

    pub fn is_decoded(&self) -> bool {
        self.decoded.is_some()
    }

    pub fn profile(&self) -> Option<&ReceptionProfile> {
        self.profile.as_ref()
    }

    pub fn queue(&self) -> Option<&TransmitQueue> {
        self.queue.as_ref()
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.batches.iter().map(BatchState::rank).collect()
    }

    /// Adds a batch buffer (single-phase runs grow the code as they go).
    pub fn push_batch(&mut self, state: BatchState) {
        self.batches.push(state);
    }

    /// Stores a delivered packet; returns whether it was innovative.
    pub fn receive(&mut self, p: &Packet) -> Result<bool> {
        let idx = p.batch_id as usize - 1;
        let innovative = self.batches[idx].absorb(p)?;
        self.received += 1;
        if innovative {
            self.innovative += 1;
        } else {
            self.redundant += 1;
        }
        Ok(innovative)
    }

    /// Freezes the phase-1 counts and derives the transmit queue.
    pub fn finish_phase1(&mut self, p1: f64, p2: f64) -> Result<()> {
        let m = self.batches.first().map_or(0, BatchState::batch_size);
        let profile = ReceptionProfile::new(self.ranks(), m)?;
        self.queue = Some(build_queue(&build_matrix(&profile, p1, p2)));
        self.profile = Some(profile);
        Ok(())
    }

    /// Recodes the next batch in the queue. Entries whose buffer is still
    /// empty are skipped; `None` if every buffer is empty.
    pub fn next_transmission<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<Packet>> {
        let queue = self.queue.as_ref().expect("phase 1 finished before phase 2");
        let n = self.batches.len();
        if self.batches.iter().all(|b| b.rank() == 0) {
            return Ok(None);
        }
        // a full pass over the queue plus one over the cycle always finds a batch
        for _ in 0..queue.len() + n {
            let id = queue.batch_at(self.sent).expect("non-empty queue");
            self.sent += 1;
            let state = &self.batches[id as usize - 1];
            if state.rank() > 0 {
                return state.recode(rng).map(Some);
            }
        }
        unreachable!("a non-empty buffer is always reached");
    }

    /// Not decoded yet and enough innovative packets for a decode attempt.
    pub fn decode_due(&self) -> bool {
        self.decoded.is_none() && self.innovative >= self.next_attempt
    }

    /// Tries to decode if enough innovative packets arrived since the last
    /// failure. The global rank rises by at most one per innovative packet,
    /// so a failure that left `d` packets unresolved rules out success for
    /// the next `d - 1` of them.
    pub fn maybe_decode(&mut self, decoder: &Decoder<'_>, slot: u64, file: &PayloadMatrix) -> bool {
        if !self.decode_due() {
            return false;
        }
        self.attempts += 1;
        match decoder.decode(&self.batches) {
            Ok(d) => {
                assert!(
                    d.packets == *file,
                    "user {} decoded a file that differs from the source",
                    self.id
                );
                self.decoded = Some(DecodeRecord {
                    slot,
                    received: self.received,
                    innovative: self.innovative,
                    redundant: self.redundant,
                    inactivated: d.inactivated,
                    attempts: self.attempts,
                    ranks: self.ranks(),
                });
                true
            }
            Err(e) => {
                self.next_attempt = self.innovative + e.unresolved as u64;
                false
            }
        }
    }
}
