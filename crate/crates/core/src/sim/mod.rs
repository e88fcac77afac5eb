//! Monte-Carlo engine for the two-phase protocol.
//!
//! Phase 1: the source broadcasts `n` batches over the erasure channel.
//! Phase 2: users take turns broadcasting recoded packets in the order of
//! their transmit queues until every user has decoded the file. Each run is
//! fully determined by its seed.

mod channel;
mod user;

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use channel::ChannelModel;
pub use user::{DecodeRecord, UserState};

use crate::analytics::{max_batches, optimize_batches, NetworkParams};
use crate::codec::{BatchCode, BatchEncoder, BatchState, Decoder, DegreeDistribution, Packet};
use crate::error::{invalid, Error, Result};
use crate::gf::PayloadMatrix;
use crate::seed::{rng_for, TAG_ACCESS, TAG_CHANNEL, TAG_FILE, TAG_RECODE};

/// Who gets the next phase-2 slot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AccessPolicy {
    /// Users in turn, `0, 1, ..., k-1, 0, ...`.
    #[default]
    RoundRobin,
    /// A uniformly random user each slot.
    Random,
}

/// Everything one run needs.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub params: NetworkParams,
    /// Batches sent in phase 1.
    pub batches: usize,
    pub seed: u64,
    /// Payload bytes per packet.
    pub payload_len: usize,
    /// Degree distribution; the built-in heuristic for `M` when `None`.
    pub distribution: Option<DegreeDistribution>,
    pub access: AccessPolicy,
    /// Abort after this many slots; `10 n M` when `None`.
    pub slot_cap: Option<u64>,
    /// Keep a per-transmission trace.
    pub trace: bool,
}

impl SimConfig {
    pub fn new(params: NetworkParams, batches: usize, seed: u64) -> Self {
        Self {
            params,
            batches,
            seed,
            payload_len: 16,
            distribution: None,
            access: AccessPolicy::RoundRobin,
            slot_cap: None,
            trace: false,
        }
    }

    fn distribution(&self) -> DegreeDistribution {
        self.distribution
            .clone()
            .unwrap_or_else(|| DegreeDistribution::heuristic(self.params.batch_size))
    }

    fn channel(&self) -> Result<ChannelModel> {
        ChannelModel::new(self.params.p0, self.params.p1, self.params.p2)
    }
}

/// One transmission, for plotting innovative counts against time.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceRow {
    /// 1-based over both phases.
    pub slot: u64,
    pub phase: u8,
    /// `None` for the source.
    pub sender: Option<usize>,
    pub batch_id: u32,
    pub delivered: Vec<bool>,
    /// Cumulative innovative packets per user after this transmission.
    pub innovative: Vec<u64>,
}

/// Per-user outcome.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserReport {
    pub id: usize,
    pub phase1_received: u64,
    pub decode: DecodeRecord,
}

/// Outcome of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct SimReport {
    pub seed: u64,
    pub users_count: usize,
    pub batch_size: usize,
    pub file_packets: usize,
    /// Batches the source sent.
    pub batches: usize,
    pub phase1_tx: u64,
    pub phase2_tx: u64,
    pub total_tx: u64,
    pub users: Vec<UserReport>,
    /// Batch ranks over all users, each taken when that user decoded.
    pub rank_at_decode: Vec<u64>,
    /// Batch ranks over all users when the last one decoded.
    pub rank_at_completion: Vec<u64>,
    /// Distinct source packets of each batch that reached at least one user.
    pub group_ranks: Vec<usize>,
    pub trace: Option<Vec<TraceRow>>,
}

impl SimReport {
    /// Mean over users of innovative packets used to decode.
    pub fn mean_innovative_at_decode(&self) -> f64 {
        self.mean_of(|u| u.decode.innovative as f64)
    }

    /// Mean over users of redundant receptions before decoding.
    pub fn mean_redundant(&self) -> f64 {
        self.mean_of(|u| u.decode.redundant as f64)
    }

    /// Mean over users of `innovative / F - 1` at decode.
    pub fn mean_overhead(&self) -> f64 {
        self.mean_innovative_at_decode() / self.file_packets as f64 - 1.0
    }

    fn mean_of(&self, f: impl Fn(&UserReport) -> f64) -> f64 {
        if self.users.is_empty() {
            return 0.0;
        }
        self.users.iter().map(f).sum::<f64>() / self.users.len() as f64
    }

    /// Trace as CSV, or `None` if it was not recorded.
    pub fn trace_csv(&self) -> Option<String> {
        let rows = self.trace.as_ref()?;
        let k = self.users_count;
        let mut out = String::from("slot,phase,sender,batch_id");
        for j in 0..k {
            let _ = write!(out, ",delivered_{j}");
        }
        for j in 0..k {
            let _ = write!(out, ",innovative_{j}");
        }
        out.push('\n');
        for r in rows {
            let sender = r.sender.map_or_else(|| "source".to_string(), |s| s.to_string());
            let _ = write!(out, "{},{},{},{}", r.slot, r.phase, sender, r.batch_id);
            for d in &r.delivered {
                let _ = write!(out, ",{}", *d as u8);
            }
            for c in &r.innovative {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        Some(out)
    }
}

/// State of one run between and after the two phases.
pub struct Session {
    cfg: SimConfig,
    channel: ChannelModel,
    encoder: BatchEncoder,
    channel_rng: ChaCha8Rng,
    access_rng: ChaCha8Rng,
    recode_rngs: Vec<ChaCha8Rng>,
    users: Vec<UserState>,
    /// Per batch, which of the `M` source packets reached anyone.
    group_seen: Vec<Vec<bool>>,
    group_ranks: Vec<usize>,
    phase1_tx: u64,
    phase2_tx: u64,
    phase1_received: Vec<u64>,
    trace: Option<Vec<TraceRow>>,
    completion_ranks: Option<Vec<u64>>,
}

impl Session {
    pub fn new(cfg: SimConfig) -> Result<Self> {
        let p = &cfg.params;
        if p.k == 0 {
            return Err(invalid("k", "must be >= 1"));
        }
        if p.batch_size == 0 || p.file_packets == 0 {
            return Err(invalid("file_packets", "batch size and file size must be >= 1"));
        }
        let channel = cfg.channel()?;
        let mut file_rng = rng_for(cfg.seed, TAG_FILE, 0);
        let file = PayloadMatrix::from_vec(
            p.file_packets,
            cfg.payload_len,
            (0..p.file_packets * cfg.payload_len).map(|_| file_rng.gen()).collect(),
        );
        let code = BatchCode::new(cfg.seed, p.file_packets, p.batch_size, cfg.distribution())?;
        let encoder = BatchEncoder::new(code, file)?;
        let users = (0..p.k).map(|j| UserState::new(j, p.file_packets)).collect();
        Ok(Self {
            channel,
            encoder,
            channel_rng: rng_for(cfg.seed, TAG_CHANNEL, 0),
            access_rng: rng_for(cfg.seed, TAG_ACCESS, 0),
            recode_rngs: (0..p.k).map(|j| rng_for(cfg.seed, TAG_RECODE, j as u64)).collect(),
            users,
            group_seen: Vec::new(),
            group_ranks: Vec::new(),
            phase1_tx: 0,
            phase2_tx: 0,
            phase1_received: vec![0; p.k],
            trace: cfg.trace.then(Vec::new),
            completion_ranks: None,
            cfg,
        })
    }

    pub fn users(&self) -> &[UserState] {
        &self.users
    }

    pub fn group_ranks(&self) -> &[usize] {
        &self.group_ranks
    }

    fn all_decoded(&self) -> bool {
        self.users.iter().all(UserState::is_decoded)
    }

    /// Source sends the next batch; with `decode_each`, users try to decode
    /// after every innovative packet.
    fn send_batch(&mut self, decode_each: bool) -> Result<()> {
        let m = self.cfg.params.batch_size;
        let id = self.group_ranks.len() as u32 + 1;
        let (_, packets) = self.encoder.encode_batch(id);
        for u in &mut self.users {
            u.push_batch(BatchState::new(id, m, self.cfg.payload_len));
        }
        self.group_seen.push(vec![false; m]);
        self.group_ranks.push(0);
        let mut delivered = Vec::with_capacity(self.users.len());
        for (j, p) in packets.iter().enumerate() {
            self.channel
                .broadcast_source(self.users.len(), &mut self.channel_rng, &mut delivered);
            self.phase1_tx += 1;
            if delivered.iter().any(|&d| d) {
                let b = id as usize - 1;
                if !self.group_seen[b][j] {
                    self.group_seen[b][j] = true;
                    self.group_ranks[b] += 1;
                }
            }
            for (u, &d) in self.users.iter_mut().zip(&delivered) {
                if d {
                    u.receive(p)?;
                }
            }
            self.record(1, None, id, &delivered);
            if decode_each {
                self.try_decode_all(self.phase1_tx);
            }
        }
        Ok(())
    }

    fn record(&mut self, phase: u8, sender: Option<usize>, batch_id: u32, delivered: &[bool]) {
        if let Some(trace) = &mut self.trace {
            trace.push(TraceRow {
                slot: self.phase1_tx + self.phase2_tx,
                phase,
                sender,
                batch_id,
                delivered: delivered.to_vec(),
                innovative: self.users.iter().map(|u| u.innovative).collect(),
            });
        }
    }

    fn try_decode_all(&mut self, slot: u64) {
        if !self.users.iter().any(UserState::decode_due) {
            return;
        }
        let decoder = Decoder::new(self.encoder.code().descriptors(), self.cfg.params.file_packets);
        let file = self.encoder.file();
        for u in &mut self.users {
            u.maybe_decode(&decoder, slot, file);
        }
        self.note_completion();
    }

    fn note_completion(&mut self) {
        if self.completion_ranks.is_none() && self.all_decoded() {
            self.completion_ranks = Some(self.rank_histogram(self.users.iter().map(UserState::ranks)));
        }
    }

    fn rank_histogram(&self, ranks: impl Iterator<Item = Vec<usize>>) -> Vec<u64> {
        let mut h = vec![0u64; self.cfg.params.batch_size + 1];
        for user in ranks {
            for r in user {
                h[r] += 1;
            }
        }
        h
    }

    /// Broadcasts the configured number of batches, then fixes each user's
    /// transmit queue and checks whether anyone can already decode.
    pub fn run_phase1(&mut self) -> Result<()> {
        for _ in 0..self.cfg.batches {
            self.send_batch(false)?;
        }
        let (p1, p2) = (self.cfg.params.p1, self.cfg.params.p2);
        for (j, u) in self.users.iter_mut().enumerate() {
            u.finish_phase1(p1, p2)?;
            self.phase1_received[j] = u.received;
        }
        self.try_decode_all(0);
        Ok(())
    }

    /// Peer slots until every user has decoded; returns the number of
    /// phase-2 transmissions.
    pub fn run_phase2(&mut self) -> Result<u64> {
        let k = self.users.len();
        let n = self.group_ranks.len();
        let cap = self
            .cfg
            .slot_cap
            .unwrap_or(10 * (n * self.cfg.params.batch_size) as u64);
        let decoder_descs = self.encoder.code().descriptors().to_vec();
        let decoder = Decoder::new(&decoder_descs, self.cfg.params.file_packets);
        let mut slots = 0u64;
        let mut delivered = vec![false; k];
        while !self.all_decoded() {
            if slots >= cap {
                return Err(Error::Livelock {
                    slots,
                    decoded: self.users.iter().filter(|u| u.is_decoded()).count(),
                    users: k,
                });
            }
            let sender = match self.cfg.access {
                AccessPolicy::RoundRobin => (slots % k as u64) as usize,
                AccessPolicy::Random => self.access_rng.gen_range(0..k),
            };
            slots += 1;
            let Some(packet) = self.users[sender].next_transmission(&mut self.recode_rngs[sender])? else {
                continue;
            };
            self.phase2_tx += 1;
            self.deliver_peer(sender, &packet, &mut delivered)?;
            self.record(2, Some(sender), packet.batch_id, &delivered);
            let file = self.encoder.file();
            for (j, u) in self.users.iter_mut().enumerate() {
                if delivered[j] {
                    u.maybe_decode(&decoder, self.phase2_tx, file);
                }
            }
            self.note_completion();
        }
        Ok(self.phase2_tx)
    }

    fn deliver_peer(&mut self, sender: usize, packet: &Packet, delivered: &mut [bool]) -> Result<()> {
        let b = packet.batch_id as usize - 1;
        for (j, u) in self.users.iter_mut().enumerate() {
            delivered[j] = j != sender && self.channel.peer_delivers(&mut self.channel_rng);
            if delivered[j] && u.receive(packet)? {
                let rank = u.batches[b].rank();
                assert!(
                    rank <= self.group_ranks[b],
                    "user {j} reached rank {rank} in batch {} but the group only holds {}",
                    b + 1,
                    self.group_ranks[b]
                );
            }
        }
        Ok(())
    }

    /// Summary of the run so far. Users that never decoded are left out.
    pub fn report(&self) -> SimReport {
        let users: Vec<UserReport> = self
            .users
            .iter()
            .filter_map(|u| {
                u.decoded.as_ref().map(|d| UserReport {
                    id: u.id,
                    phase1_received: self.phase1_received[u.id],
                    decode: d.clone(),
                })
            })
            .collect();
        let p = &self.cfg.params;
        SimReport {
            seed: self.cfg.seed,
            users_count: self.users.len(),
            batch_size: p.batch_size,
            file_packets: p.file_packets,
            batches: self.group_ranks.len(),
            phase1_tx: self.phase1_tx,
            phase2_tx: self.phase2_tx,
            total_tx: self.phase1_tx + self.phase2_tx,
            rank_at_decode: self.rank_histogram(users.iter().map(|u| u.decode.ranks.clone())),
            rank_at_completion: self
                .completion_ranks
                .clone()
                .unwrap_or_else(|| vec![0; p.batch_size + 1]),
            users,
            group_ranks: self.group_ranks.clone(),
            trace: self.trace.clone(),
        }
    }
}

/// Both phases with `cfg.batches` source batches.
pub fn simulate(cfg: &SimConfig) -> Result<SimReport> {
    if cfg.batches == 0 {
        return Err(invalid("n", "must be >= 1"));
    }
    let mut s = Session::new(cfg.clone())?;
    s.run_phase1()?;
    s.run_phase2()?;
    Ok(s.report())
}

/// Baseline without cooperation: the source keeps sending batches until every
/// user decodes. `cfg.batches` is ignored; the slot cap defaults to ten times
/// the expected single-phase cost.
pub fn run_single_phase(cfg: &SimConfig) -> Result<SimReport> {
    let mut s = Session::new(cfg.clone())?;
    let m = cfg.params.batch_size;
    let cap = cfg
        .slot_cap
        .unwrap_or(10 * (max_batches(&cfg.params) * m) as u64);
    while !s.all_decoded() {
        if s.phase1_tx >= cap {
            return Err(Error::Livelock {
                slots: s.phase1_tx,
                decoded: s.users.iter().filter(|u| u.is_decoded()).count(),
                users: s.users.len(),
            });
        }
        s.send_batch(true)?;
    }
    Ok(s.report())
}

/// A run planned for `design_k` users but played out with `params.k`.
#[derive(Clone, Debug, PartialEq)]
pub struct RobustnessReport {
    pub design_k: usize,
    pub actual_k: usize,
    /// Batch count chosen by the planner for `design_k`.
    pub batches: usize,
    pub report: SimReport,
}

/// Plans the batch count for `design_k` users and simulates `actual_k`.
/// The degree distribution and transmit queues do not depend on `k`, so the
/// batch count is the only thing the mismatch changes.
pub fn run_robustness(design_k: usize, actual_k: usize, cfg: &SimConfig) -> Result<RobustnessReport> {
    if actual_k < design_k {
        return Err(invalid("actual_k", format!("{actual_k} is below design_k = {design_k}")));
    }
    let design = NetworkParams {
        k: design_k,
        ..cfg.params
    };
    let batches = optimize_batches(&design)?.n_opt;
    let run = SimConfig {
        params: NetworkParams {
            k: actual_k,
            ..cfg.params
        },
        batches,
        ..cfg.clone()
    };
    Ok(RobustnessReport {
        design_k,
        actual_k,
        batches,
        report: simulate(&run)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{binomial_vec, effective_erasure, RankDistribution};

    fn small(k: usize, f: usize) -> NetworkParams {
        NetworkParams {
            k,
            file_packets: f,
            ..NetworkParams::default()
        }
    }

    #[test]
    fn seeded_runs_are_identical() {
        let mut cfg = SimConfig::new(small(3, 200), 20, 7);
        cfg.trace = true;
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        assert_eq!(a, b);
        cfg.seed = 8;
        assert_ne!(a, simulate(&cfg).unwrap());
    }

    #[test]
    fn report_accounting() {
        let r = simulate(&SimConfig::new(small(4, 300), 30, 3)).unwrap();
        assert_eq!(r.total_tx, r.phase1_tx + r.phase2_tx);
        assert_eq!(r.phase1_tx, 30 * 16);
        assert_eq!(r.users.len(), 4);
        let at_decode: u64 = r.rank_at_decode.iter().sum();
        assert_eq!(at_decode, 4 * 30);
        assert!((RankDistribution::from_counts(&r.rank_at_decode).total() - 1.0).abs() < 1e-12);
        for u in &r.users {
            let d = &u.decode;
            assert!(d.innovative >= 300);
            assert_eq!(d.innovative + d.redundant, d.received);
            assert_eq!(d.ranks.iter().sum::<usize>() as u64, d.innovative);
            for (b, &rank) in d.ranks.iter().enumerate() {
                assert!(rank <= r.group_ranks[b]);
            }
        }
    }

    #[test]
    fn zero_batches() {
        assert!(simulate(&SimConfig::new(small(3, 100), 0, 1)).is_err());
        let mut s = Session::new(SimConfig::new(small(3, 100), 0, 1)).unwrap();
        s.run_phase1().unwrap();
        for u in s.users() {
            assert_eq!(u.received, 0);
            assert_eq!(u.profile().unwrap().batches(), 0);
            assert!(!u.is_decoded());
        }
    }

    #[test]
    fn phase1_mean_receptions() {
        let p = small(3, 400);
        let (n, runs) = (40usize, 30u64);
        let q = (1.0 - p.p0) * (1.0 - p.p1);
        let trials = (n * 16) as f64;
        let mut total = 0.0;
        for seed in 0..runs {
            let mut s = Session::new(SimConfig::new(p, n, seed)).unwrap();
            s.run_phase1().unwrap();
            total += s.users().iter().map(|u| u.received as f64).sum::<f64>();
        }
        let samples = (runs * 3) as f64;
        let mean = total / samples;
        // per-user counts are Binomial(nM, q); users share the p0 draws, so
        // widen by sqrt(k) to stay conservative
        let sigma = (trials * q * (1.0 - q) / samples).sqrt() * 3f64.sqrt();
        assert!((mean - trials * q).abs() < 3.0 * sigma, "{mean} vs {}", trials * q);
    }

    #[test]
    fn no_phase2_when_phase1_suffices() {
        let p = NetworkParams {
            p0: 0.0,
            p1: 0.0,
            ..small(3, 160)
        };
        let r = simulate(&SimConfig::new(p, 20, 5)).unwrap();
        assert_eq!(r.phase2_tx, 0);
        assert!(r.users.iter().all(|u| u.decode.slot == 0));
    }

    #[test]
    fn group_ranks_follow_binomial() {
        // distinct source packets reaching anyone: Binomial(M, 1 - p_bar)
        let p = NetworkParams {
            batch_size: 8,
            ..small(3, 64)
        };
        let mut cfg = SimConfig::new(p, 6000, 11);
        cfg.payload_len = 1;
        let mut s = Session::new(cfg).unwrap();
        s.run_phase1().unwrap();
        let mut counts = vec![0u64; 9];
        for &z in s.group_ranks() {
            counts[z] += 1;
        }
        let emp = RankDistribution::from_counts(&counts);
        let want = RankDistribution::new(binomial_vec(8, 1.0 - effective_erasure(&p)));
        assert!(emp.total_variation(&want) < 0.02, "{:?}", emp.pr());
    }

    #[test]
    fn single_phase_single_user() {
        let p = small(1, 400);
        let q = (1.0 - p.p0) * (1.0 - p.p1);
        let runs = 20;
        let totals: Vec<f64> = (0..runs)
            .map(|seed| run_single_phase(&SimConfig::new(p, 0, seed)).unwrap().total_tx as f64)
            .collect();
        let mean = totals.iter().sum::<f64>() / runs as f64;
        let want = p.target_packets() / q;
        // trials until F' successes: sd sqrt(F'(1-q))/q; plus up to a batch of slack
        let sigma = (p.target_packets() * (1.0 - q)).sqrt() / q / (runs as f64).sqrt();
        assert!((mean - want).abs() < 3.0 * sigma + 16.0, "{mean} vs {want}");
        assert!(totals.iter().all(|t| *t as u64 % 16 == 0));
    }

    #[test]
    fn trace_has_one_row_per_transmission() {
        let mut cfg = SimConfig::new(small(3, 160), 16, 2);
        cfg.trace = true;
        let r = simulate(&cfg).unwrap();
        let csv = r.trace_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "slot,phase,sender,batch_id,delivered_0,delivered_1,delivered_2,innovative_0,innovative_1,innovative_2"
        );
        assert_eq!(lines.count() as u64, r.total_tx);
        let last = r.trace.as_ref().unwrap().last().unwrap();
        for u in &r.users {
            assert!(last.innovative[u.id] >= u.decode.innovative);
        }
        assert!(simulate(&SimConfig::new(small(3, 160), 16, 2)).unwrap().trace_csv().is_none());
    }

    #[test]
    fn livelock_is_reported() {
        let p = NetworkParams {
            p2: 1.0,
            p1: 0.6,
            ..small(3, 400)
        };
        let mut cfg = SimConfig::new(p, 26, 1);
        cfg.slot_cap = Some(500);
        match simulate(&cfg) {
            Err(Error::Livelock { slots, .. }) => assert_eq!(slots, 500),
            other => panic!("expected livelock, got {other:?}"),
        }
    }

    #[test]
    fn robustness_with_matching_k_is_plain_run() {
        let p = small(3, 400);
        let cfg = SimConfig::new(p, 0, 4);
        let r = run_robustness(3, 3, &cfg).unwrap();
        let plain = simulate(&SimConfig {
            batches: r.batches,
            ..cfg.clone()
        })
        .unwrap();
        assert_eq!(r.report, plain);
        assert!(run_robustness(4, 3, &cfg).is_err());
    }

    #[test]
    fn random_access_also_completes() {
        let mut cfg = SimConfig::new(small(3, 300), 28, 9);
        cfg.access = AccessPolicy::Random;
        let r = simulate(&cfg).unwrap();
        assert_eq!(r.users.len(), 3);
    }
}
