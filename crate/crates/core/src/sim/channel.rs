use rand::Rng;

use crate::error::{invalid, Result};

/// Erasure model: source packets are lost for the whole group with
/// probability `p0` and then per user with probability `p1`; peer packets are
/// lost per receiver with probability `p2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelModel {
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
}

impl ChannelModel {
    pub fn new(p0: f64, p1: f64, p2: f64) -> Result<Self> {
        for (field, p) in [("p0", p0), ("p1", p1), ("p2", p2)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(field, format!("{p} is outside [0, 1]")));
            }
        }
        Ok(Self { p0, p1, p2 })
    }

    /// One shared loss draw, then one independent draw per user.
    pub fn broadcast_source<R: Rng + ?Sized>(&self, users: usize, rng: &mut R, out: &mut Vec<bool>) {
        out.clear();
        let lost_for_all = rng.gen::<f64>() < self.p0;
        out.extend((0..users).map(|_| {
            let lost = rng.gen::<f64>() < self.p1;
            !lost_for_all && !lost
        }));
    }

    /// Whether one peer transmission reaches one receiver.
    pub fn peer_delivers<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        rng.gen::<f64>() >= self.p2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn edge_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut out = Vec::new();
        let dead = ChannelModel::new(1.0, 0.2, 0.1).unwrap();
        let perfect = ChannelModel::new(0.0, 0.0, 0.0).unwrap();
        for _ in 0..1000 {
            dead.broadcast_source(4, &mut rng, &mut out);
            assert!(out.iter().all(|&d| !d));
            perfect.broadcast_source(4, &mut rng, &mut out);
            assert!(out.iter().all(|&d| d));
            assert!(perfect.peer_delivers(&mut rng));
        }
    }

    #[test]
    fn delivery_rates() {
        let ch = ChannelModel::new(0.05, 0.5, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut out = Vec::new();
        let trials = 100_000;
        let (mut per_user, mut any) = (0usize, 0usize);
        for _ in 0..trials {
            ch.broadcast_source(3, &mut rng, &mut out);
            per_user += out[0] as usize;
            any += out.iter().any(|&d| d) as usize;
        }
        let per_user = per_user as f64 / trials as f64;
        let any = any as f64 / trials as f64;
        assert!((per_user - 0.475).abs() < 0.01, "{per_user}");
        assert!((any - 0.83125).abs() < 0.01, "{any}");
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(ChannelModel::new(-0.1, 0.5, 0.1).is_err());
        assert!(ChannelModel::new(0.1, 1.5, 0.1).is_err());
    }
}
