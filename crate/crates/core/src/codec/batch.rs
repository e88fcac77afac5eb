use rand::Rng;

use super::Packet;
use crate::error::{Error, Result};
use crate::gf::{mul_add_assign, CoeffMatrix, EchelonBasis, PayloadMatrix};

/// Receiver-side buffer of one batch.
///
/// Only innovative packets are kept, so the number of stored rows is the rank
/// of the received coefficient matrix and never exceeds `M`.
#[derive(Clone, Debug)]
pub struct BatchState {
    batch_id: u32,
    payload_len: usize,
    coeffs: Vec<Vec<u8>>,
    payloads: Vec<Vec<u8>>,
    basis: EchelonBasis,
}

impl BatchState {
    pub fn new(batch_id: u32, batch_size: usize, payload_len: usize) -> Self {
        Self {
            batch_id,
            payload_len,
            coeffs: Vec::new(),
            payloads: Vec::new(),
            basis: EchelonBasis::new(batch_size),
        }
    }

    pub fn batch_id(&self) -> u32 {
        self.batch_id
    }

    pub fn batch_size(&self) -> usize {
        self.basis.width()
    }

    pub fn payload_len(&self) -> usize {
        self.payload_len
    }

    pub fn rank(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeff_rows(&self) -> &[Vec<u8>] {
        &self.coeffs
    }

    pub fn payload_rows(&self) -> &[Vec<u8>] {
        &self.payloads
    }

    pub fn received_coeffs(&self) -> CoeffMatrix {
        CoeffMatrix::from_rows(&self.coeffs, self.batch_size())
    }

    pub fn received_payloads(&self) -> PayloadMatrix {
        PayloadMatrix::from_rows(&self.payloads, self.payload_len)
    }

    /// Would `coeff` raise the rank? Does not store anything.
    pub fn is_innovative(&self, coeff: &[u8]) -> bool {
        !self.basis.contains(coeff)
    }

    /// Stores `p` if it is innovative; returns whether it was.
    pub fn absorb(&mut self, p: &Packet) -> Result<bool> {
        if p.batch_id != self.batch_id {
            return Err(Error::BatchMismatch {
                expected: self.batch_id,
                got: p.batch_id,
            });
        }
        if p.coeff.len() != self.batch_size() {
            return Err(Error::CoeffLength {
                expected: self.batch_size(),
                got: p.coeff.len(),
            });
        }
        if p.payload.len() != self.payload_len {
            return Err(Error::Wire(format!(
                "payload has {} bytes, expected {}",
                p.payload.len(),
                self.payload_len
            )));
        }
        if !self.basis.insert(&p.coeff) {
            return Ok(false);
        }
        self.coeffs.push(p.coeff.clone());
        self.payloads.push(p.payload.clone());
        Ok(true)
    }

    /// A random nonzero combination of every buffered row.
    pub fn recode<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Packet> {
        if self.coeffs.is_empty() {
            return Err(Error::EmptyBuffer(self.batch_id));
        }
        let weights: Vec<u8> = loop {
            let w: Vec<u8> = (0..self.coeffs.len()).map(|_| rng.gen()).collect();
            if w.iter().any(|&c| c != 0) {
                break w;
            }
        };
        let mut coeff = vec![0u8; self.batch_size()];
        let mut payload = vec![0u8; self.payload_len];
        for ((c, row), pay) in weights.iter().zip(&self.coeffs).zip(&self.payloads) {
            mul_add_assign(&mut coeff, row, *c);
            mul_add_assign(&mut payload, pay, *c);
        }
        Ok(Packet {
            batch_id: self.batch_id,
            coeff,
            payload,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn packet(rng: &mut impl Rng, m: usize, l: usize) -> Packet {
        Packet {
            batch_id: 1,
            coeff: (0..m).map(|_| rng.gen()).collect(),
            payload: (0..l).map(|_| rng.gen()).collect(),
        }
    }

    #[test]
    fn first_nonzero_is_innovative_duplicate_is_not() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = BatchState::new(1, 4, 3);
        let p = packet(&mut rng, 4, 3);
        assert!(s.absorb(&p).unwrap());
        assert!(!s.absorb(&p).unwrap());
        assert_eq!(s.rank(), 1);
        let zero = Packet {
            batch_id: 1,
            coeff: vec![0; 4],
            payload: vec![0; 3],
        };
        assert!(!s.absorb(&zero).unwrap());
    }

    #[test]
    fn rank_caps_at_batch_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = BatchState::new(1, 4, 2);
        let innovative = (0..5)
            .filter(|_| s.absorb(&packet(&mut rng, 4, 2)).unwrap())
            .count();
        assert_eq!(innovative, 4);
        assert_eq!(s.rank(), 4);
        for _ in 0..20 {
            assert!(!s.absorb(&packet(&mut rng, 4, 2)).unwrap());
        }
    }

    #[test]
    fn absorb_errors() {
        let mut s = BatchState::new(3, 4, 2);
        let bad_len = Packet {
            batch_id: 3,
            coeff: vec![1; 5],
            payload: vec![0; 2],
        };
        assert_eq!(
            s.absorb(&bad_len),
            Err(Error::CoeffLength {
                expected: 4,
                got: 5
            })
        );
        let wrong = Packet {
            batch_id: 2,
            coeff: vec![1; 4],
            payload: vec![0; 2],
        };
        assert!(matches!(s.absorb(&wrong), Err(Error::BatchMismatch { .. })));
    }

    #[test]
    fn recode_from_single_row_is_scalar_multiple() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = BatchState::new(1, 4, 6);
        let p = packet(&mut rng, 4, 6);
        s.absorb(&p).unwrap();
        for _ in 0..50 {
            let q = s.recode(&mut rng).unwrap();
            let j = p.coeff.iter().position(|&c| c != 0).unwrap();
            let scale = crate::gf::div(q.coeff[j], p.coeff[j]);
            assert_ne!(scale, 0);
            let scaled: Vec<u8> = p.coeff.iter().map(|&c| crate::gf::mul(c, scale)).collect();
            assert_eq!(q.coeff, scaled);
            let scaled: Vec<u8> = p.payload.iter().map(|&c| crate::gf::mul(c, scale)).collect();
            assert_eq!(q.payload, scaled);
        }
    }

    #[test]
    fn recode_empty_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(
            BatchState::new(7, 4, 1).recode(&mut rng).unwrap_err(),
            Error::EmptyBuffer(7)
        );
    }

    #[test]
    fn recoding_never_exceeds_source_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut src = BatchState::new(1, 8, 4);
        while src.rank() < 3 {
            src.absorb(&packet(&mut rng, 8, 4)).unwrap();
        }
        let mut dst = BatchState::new(1, 8, 4);
        for _ in 0..1000 {
            let q = src.recode(&mut rng).unwrap();
            let before = src.rank();
            let mut probe = src.clone();
            assert!(!probe.absorb(&q).unwrap());
            assert_eq!(probe.rank(), before);
            dst.absorb(&q).unwrap();
            assert!(dst.rank() <= 3);
        }
        assert_eq!(dst.rank(), 3);
    }
}
