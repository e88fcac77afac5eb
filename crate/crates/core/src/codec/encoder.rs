use rand::seq::SliceRandom;
use rand::Rng;

use super::{DegreeDistribution, Packet};
use crate::error::{invalid, Result};
use crate::gf::{mul_add_assign, CoeffMatrix, PayloadMatrix};
use crate::seed::{rng_for, TAG_BATCH, TAG_PERMUTATION};

/// What a receiver needs to know about batch `batch_id` to decode it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchDescriptor {
    /// 1-based batch index.
    pub batch_id: u32,
    /// 0-based indices of the `degree` distinct input packets.
    pub contributors: Vec<u32>,
    /// `degree x M` generator; column `j` mixes the contributors into coded packet `j`.
    pub generator: CoeffMatrix,
}

impl BatchDescriptor {
    pub fn degree(&self) -> usize {
        self.contributors.len()
    }

    pub fn batch_size(&self) -> usize {
        self.generator.cols()
    }
}

/// Hands out contributor sets by walking a stream of seeded permutations of
/// the input packets, so every packet is picked once per pass before any is
/// picked again.
#[derive(Clone, Debug)]
struct ContributorStream {
    session: u64,
    file_packets: usize,
    round: u64,
    perm: Vec<u32>,
    pos: usize,
}

impl ContributorStream {
    fn new(session: u64, file_packets: usize) -> Self {
        let mut s = Self {
            session,
            file_packets,
            round: 0,
            perm: Vec::new(),
            pos: 0,
        };
        s.refill();
        s
    }

    fn refill(&mut self) {
        let mut rng = rng_for(self.session, TAG_PERMUTATION, self.round);
        self.perm = (0..self.file_packets as u32).collect();
        self.perm.shuffle(&mut rng);
        self.pos = 0;
        self.round += 1;
    }

    fn take(&mut self, degree: usize) -> Vec<u32> {
        let degree = degree.min(self.file_packets);
        let head = degree.min(self.perm.len() - self.pos);
        let mut out: Vec<u32> = self.perm[self.pos..self.pos + head].to_vec();
        self.pos += head;
        if head == degree {
            if self.pos == self.perm.len() {
                self.refill();
            }
            return out;
        }
        self.refill();
        let need = degree - head;
        // Entries already taken from the previous pass are swapped out of the
        // prefix for later, unused ones, keeping the new pass a permutation.
        let taken: std::collections::HashSet<u32> = out.iter().copied().collect();
        let mut spare = need;
        for q in 0..need {
            if taken.contains(&self.perm[q]) {
                while taken.contains(&self.perm[spare]) {
                    spare += 1;
                }
                self.perm.swap(q, spare);
                spare += 1;
            }
        }
        out.extend_from_slice(&self.perm[..need]);
        self.pos = need;
        out
    }
}

/// The outer code of one session: deterministic batch descriptors derived
/// from a session seed, so a packet header only needs its batch ID.
///
/// Degree and generator of batch `i` come from a substream keyed by
/// `(seed, i)`. Contributor sets are carved from a seeded permutation stream,
/// so descriptors are produced in batch order and cached.
#[derive(Clone, Debug)]
pub struct BatchCode {
    seed: u64,
    file_packets: usize,
    batch_size: usize,
    distribution: DegreeDistribution,
    stream: ContributorStream,
    descriptors: Vec<BatchDescriptor>,
}

impl BatchCode {
    pub fn new(
        seed: u64,
        file_packets: usize,
        batch_size: usize,
        distribution: DegreeDistribution,
    ) -> Result<Self> {
        if file_packets == 0 {
            return Err(invalid("file_packets", "must be >= 1"));
        }
        if batch_size == 0 {
            return Err(invalid("batch_size", "must be >= 1"));
        }
        if file_packets < distribution.max_degree() {
            return Err(invalid(
                "file_packets",
                format!(
                    "{file_packets} input packets cannot support degree up to {}",
                    distribution.max_degree()
                ),
            ));
        }
        Ok(Self {
            seed,
            file_packets,
            batch_size,
            distribution,
            stream: ContributorStream::new(seed, file_packets),
            descriptors: Vec::new(),
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn file_packets(&self) -> usize {
        self.file_packets
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn distribution(&self) -> &DegreeDistribution {
        &self.distribution
    }

    /// Generates descriptors up to and including `batch_count`.
    pub fn ensure(&mut self, batch_count: usize) {
        while self.descriptors.len() < batch_count {
            let id = self.descriptors.len() as u32 + 1;
            let mut rng = rng_for(self.seed, TAG_BATCH, id as u64);
            let degree = self.distribution.sample(&mut rng);
            let generator = CoeffMatrix::from_vec(
                degree,
                self.batch_size,
                (0..degree * self.batch_size).map(|_| rng.gen()).collect(),
            );
            let contributors = self.stream.take(degree);
            self.descriptors.push(BatchDescriptor {
                batch_id: id,
                contributors,
                generator,
            });
        }
    }

    /// Descriptor of a 1-based batch ID, generating it if needed.
    pub fn descriptor(&mut self, batch_id: u32) -> &BatchDescriptor {
        assert!(batch_id >= 1, "batch IDs start at 1");
        self.ensure(batch_id as usize);
        &self.descriptors[batch_id as usize - 1]
    }

    /// Every descriptor generated so far, in batch order.
    pub fn descriptors(&self) -> &[BatchDescriptor] {
        &self.descriptors
    }
}

/// Produces the `M` coded packets of a batch from the input file
/// (`F x L`, one input packet per row). Coefficient vectors are unit vectors.
pub fn encode_with(file: &PayloadMatrix, descriptor: &BatchDescriptor) -> Vec<Packet> {
    let m = descriptor.batch_size();
    let g = &descriptor.generator;
    let mut payloads = vec![vec![0u8; file.cols()]; m];
    for (t, &src) in descriptor.contributors.iter().enumerate() {
        let x = file.row(src as usize);
        for (j, payload) in payloads.iter_mut().enumerate() {
            mul_add_assign(payload, x, g.get(t, j));
        }
    }
    payloads
        .into_iter()
        .enumerate()
        .map(|(j, payload)| {
            let mut coeff = vec![0u8; m];
            coeff[j] = 1;
            Packet {
                batch_id: descriptor.batch_id,
                coeff,
                payload,
            }
        })
        .collect()
}

/// Source-side encoder: a [`BatchCode`] bound to a file.
#[derive(Clone, Debug)]
pub struct BatchEncoder {
    code: BatchCode,
    file: PayloadMatrix,
}

impl BatchEncoder {
    pub fn new(code: BatchCode, file: PayloadMatrix) -> Result<Self> {
        if file.rows() != code.file_packets() {
            return Err(invalid(
                "file",
                format!(
                    "file has {} packets, code expects {}",
                    file.rows(),
                    code.file_packets()
                ),
            ));
        }
        Ok(Self { code, file })
    }

    pub fn code(&self) -> &BatchCode {
        &self.code
    }

    pub fn file(&self) -> &PayloadMatrix {
        &self.file
    }

    /// Descriptor and `M` coded packets of batch `batch_id`.
    pub fn encode_batch(&mut self, batch_id: u32) -> (BatchDescriptor, Vec<Packet>) {
        let desc = self.code.descriptor(batch_id).clone();
        let packets = encode_with(&self.file, &desc);
        (desc, packets)
    }
}
