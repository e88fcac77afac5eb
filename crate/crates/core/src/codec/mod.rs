//! BATS outer and inner code: degree-sampled batch encoding, in-batch
//! recoding, and joint BP/inactivation decoding.

mod batch;
mod decoder;
mod degree;
mod encoder;

pub use batch::BatchState;
pub use decoder::{DecodeFailure, Decoded, Decoder};
pub use degree::{DegreeDistribution, MASS_TOLERANCE};
pub use encoder::{encode_with, BatchCode, BatchDescriptor, BatchEncoder};

use crate::error::{Error, Result};

/// Bytes of batch ID in the simulated wire header.
pub const BATCH_ID_BYTES: usize = 2;

/// A coded packet: batch ID, `M` coding coefficients and an `L`-byte payload.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Packet {
    /// 1-based batch index.
    pub batch_id: u32,
    pub coeff: Vec<u8>,
    pub payload: Vec<u8>,
}

impl Packet {
    /// Serialized size: batch ID, `M` coefficient bytes, `L` payload bytes.
    pub fn wire_len(batch_size: usize, payload_len: usize) -> usize {
        BATCH_ID_BYTES + batch_size + payload_len
    }

    /// Header overhead relative to the payload.
    pub fn header_overhead(batch_size: usize, payload_len: usize) -> f64 {
        (BATCH_ID_BYTES + batch_size) as f64 / payload_len as f64
    }

    /// Big-endian batch ID, then coefficients, then payload.
    pub fn to_wire(&self) -> Result<Vec<u8>> {
        let id = u16::try_from(self.batch_id)
            .map_err(|_| Error::Wire(format!("batch id {} does not fit 2 bytes", self.batch_id)))?;
        let mut out = Vec::with_capacity(Self::wire_len(self.coeff.len(), self.payload.len()));
        out.extend_from_slice(&id.to_be_bytes());
        out.extend_from_slice(&self.coeff);
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    pub fn from_wire(bytes: &[u8], batch_size: usize) -> Result<Self> {
        if bytes.len() < BATCH_ID_BYTES + batch_size {
            return Err(Error::Wire(format!(
                "{} bytes is shorter than the {}-byte header",
                bytes.len(),
                BATCH_ID_BYTES + batch_size
            )));
        }
        let batch_id = u16::from_be_bytes([bytes[0], bytes[1]]) as u32;
        let (coeff, payload) = bytes[BATCH_ID_BYTES..].split_at(batch_size);
        Ok(Self {
            batch_id,
            coeff: coeff.to_vec(),
            payload: payload.to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_layout() {
        let p = Packet {
            batch_id: 0x0102,
            coeff: vec![9, 8, 7],
            payload: vec![1, 2],
        };
        let w = p.to_wire().unwrap();
        assert_eq!(w, vec![1, 2, 9, 8, 7, 1, 2]);
        assert_eq!(w.len(), Packet::wire_len(3, 2));
        assert_eq!(Packet::from_wire(&w, 3).unwrap(), p);
        assert!(Packet::from_wire(&w[..4], 3).is_err());
        let big = Packet {
            batch_id: 70_000,
            ..p
        };
        assert!(big.to_wire().is_err());
    }
}
