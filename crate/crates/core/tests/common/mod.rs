//! Oracles shared by the integration tests. Nothing here touches the
//! library's field tables or elimination code.

#![allow(dead_code)]

use batscast::codec::{BatchCode, BatchDescriptor, BatchEncoder, BatchState, Decoder, DegreeDistribution};
use batscast::gf::PayloadMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Shift-and-add product modulo x^8 + x^4 + x^3 + x^2 + 1.
pub fn slow_mul(mut a: u8, mut b: u8) -> u8 {
    let mut acc = 0u8;
    while b != 0 {
        if b & 1 == 1 {
            acc ^= a;
        }
        let carry = a & 0x80 != 0;
        a <<= 1;
        if carry {
            a ^= 0x1d;
        }
        b >>= 1;
    }
    acc
}

/// `a^254`, the inverse of a nonzero element.
pub fn slow_inv(a: u8) -> u8 {
    assert_ne!(a, 0);
    let mut out = 1u8;
    for _ in 0..254 {
        out = slow_mul(out, a);
    }
    out
}

/// Rank by textbook Gaussian elimination on owned rows.
pub fn slow_rank(mut rows: Vec<Vec<u8>>) -> usize {
    let cols = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..rows.len()).find(|&r| rows[r][c] != 0) else {
            continue;
        };
        rows.swap(rank, p);
        let iv = slow_inv(rows[rank][c]);
        let pivot: Vec<u8> = rows[rank].iter().map(|&x| slow_mul(x, iv)).collect();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && row[c] != 0 {
                let f = row[c];
                for (x, &y) in row.iter_mut().zip(&pivot) {
                    *x ^= slow_mul(f, y);
                }
            }
        }
        rows[rank] = pivot;
        rank += 1;
    }
    rank
}

/// Every stored packet of every batch as one equation over all `F` input
/// packets: coefficient of contributor `t` is `(G h)_t`.
pub fn global_system(descriptors: &[BatchDescriptor], batches: &[BatchState], file_packets: usize) -> Vec<Vec<u8>> {
    let mut rows = Vec::new();
    for (d, b) in descriptors.iter().zip(batches) {
        for h in b.coeff_rows() {
            let mut row = vec![0u8; file_packets];
            for (pos, &t) in d.contributors.iter().enumerate() {
                let mut v = 0u8;
                for (j, &hj) in h.iter().enumerate() {
                    v ^= slow_mul(d.generator.get(pos, j), hj);
                }
                row[t as usize] ^= v;
            }
            rows.push(row);
        }
    }
    rows
}

pub fn global_rank(descriptors: &[BatchDescriptor], batches: &[BatchState], file_packets: usize) -> usize {
    let rows = global_system(descriptors, batches, file_packets);
    if rows.is_empty() {
        0
    } else {
        slow_rank(rows)
    }
}

/// `C(n, k) p^k (1-p)^(n-k)` by repeated multiplication; fine for `n` up
/// to a few dozen.
pub fn slow_binomial(n: usize, k: usize, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

/// Whole `B(n, p)` pmf by the ratio recurrence from `(1-p)^n`; `p < 1` and
/// `n p` moderate.
pub fn binomial_by_recurrence(n: usize, p: f64) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    out[0] = (1.0 - p).powi(n as i32);
    for l in 0..n {
        out[l + 1] = out[l] * (n - l) as f64 / (l + 1) as f64 * p / (1.0 - p);
    }
    out
}

pub struct Instance {
    pub encoder: BatchEncoder,
    pub batches: Vec<BatchState>,
}

/// Random code with `f <= 64`, up to 16 batches, mixed erasures and some
/// recoded packets on top of the source ones.
pub fn instance(rng: &mut ChaCha8Rng, seed: u64) -> Instance {
    let f = rng.gen_range(1..=64usize);
    let m = [1usize, 2, 4, 8][rng.gen_range(0..4)];
    let n = rng.gen_range(1..=16usize);
    let max_d = rng.gen_range(1..=f.min(3 * m));
    let degrees: Vec<usize> = (1..=max_d).collect();
    let dist = DegreeDistribution::uniform(&degrees).unwrap();
    let payload_len = rng.gen_range(1..6);
    let file = PayloadMatrix::from_vec(f, payload_len, (0..f * payload_len).map(|_| rng.gen()).collect());
    let code = BatchCode::new(seed, f, m, dist).unwrap();
    let mut encoder = BatchEncoder::new(code, file).unwrap();
    let loss: f64 = rng.gen_range(0.0..0.9);
    let mut batches = Vec::new();
    for id in 1..=n as u32 {
        let (_, packets) = encoder.encode_batch(id);
        let mut full = BatchState::new(id, m, payload_len);
        let mut state = BatchState::new(id, m, payload_len);
        for p in &packets {
            full.absorb(p).unwrap();
            if rng.gen::<f64>() >= loss {
                state.absorb(p).unwrap();
            }
        }
        // a relay that saw every source packet fills in some of the gaps
        for _ in 0..rng.gen_range(0..=m) {
            if rng.gen::<f64>() >= loss {
                state.absorb(&full.recode(rng).unwrap()).unwrap();
            }
        }
        batches.push(state);
    }
    Instance { encoder, batches }
}

pub enum Agreement {
    Decoded,
    Failed,
}

/// Decodes `inst` and checks the outcome against the rank of the stacked
/// system; `Err` describes the first disagreement.
pub fn check_decoder(inst: &Instance) -> Result<Agreement, String> {
    let code = inst.encoder.code();
    let f = code.file_packets();
    let rank = global_rank(code.descriptors(), &inst.batches, f);
    match Decoder::new(code.descriptors(), f).decode(&inst.batches) {
        Ok(d) => {
            if rank != f {
                return Err(format!("decoded a rank-{rank} system of {f} packets"));
            }
            if d.packets != *inst.encoder.file() {
                return Err("decoded payloads differ from the source".into());
            }
            if d.inactivated > f {
                return Err(format!("{} inactivations for {f} packets", d.inactivated));
            }
            Ok(Agreement::Decoded)
        }
        Err(e) if e.unresolved == f - rank => Ok(Agreement::Failed),
        Err(e) => Err(format!("{} unresolved, oracle says {}", e.unresolved, f - rank)),
    }
}
