//! Joint belief-propagation and inactivation decoding of a BATS code.
//!
//! Each received packet of batch `i` with coefficient vector `h` is one linear
//! equation `(G_i h) . x[C_i] = y` over the batch's contributors. BP solves a
//! batch as soon as its equations, restricted to the contributors that are
//! still unknown, have full column rank, then substitutes the solved packets
//! into every other batch. When no batch is solvable one unknown packet is
//! inactivated: it becomes a symbol carried through the remaining BP steps,
//! and all symbols are solved together by dense elimination at the end.
//!
//! Every step is an invertible transformation of the stacked system, so the
//! decoder succeeds exactly when the whole system has rank `F`.

use std::collections::VecDeque;

use thiserror::Error;

use super::{BatchDescriptor, BatchState};
use crate::gf::{dot, inv, mul_add_assign, scale_assign, PayloadMatrix};

/// Result of a successful decode.
#[derive(Clone, Debug)]
pub struct Decoded {
    /// `F x L`, input packet `t` in row `t`.
    pub packets: PayloadMatrix,
    /// Packets that had to be inactivated along the way.
    pub inactivated: usize,
}

/// Decoding failed because the received system has rank below `F`.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("decoding failed: {unresolved} input packets short of full rank ({inactivated} inactivated)")]
pub struct DecodeFailure {
    /// `F` minus the rank of the received system.
    pub unresolved: usize,
    pub inactivated: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Var {
    Unknown,
    Solved,
    Inactive,
}

/// Right-hand side of an equation, and the value of a solved packet: a payload
/// plus a linear combination of inactive symbols. `symbols` may be shorter
/// than the current symbol count; missing entries are zero.
#[derive(Clone, Debug, Default)]
struct Value {
    symbols: Vec<u8>,
    payload: Vec<u8>,
}

impl Value {
    fn add_scaled(&mut self, other: &Value, c: u8) {
        if c == 0 {
            return;
        }
        if self.symbols.len() < other.symbols.len() {
            self.symbols.resize(other.symbols.len(), 0);
        }
        mul_add_assign(&mut self.symbols, &other.symbols, c);
        mul_add_assign(&mut self.payload, &other.payload, c);
    }

    fn add_symbol(&mut self, symbol: usize, c: u8) {
        if self.symbols.len() <= symbol {
            self.symbols.resize(symbol + 1, 0);
        }
        self.symbols[symbol] ^= c;
    }

    fn scale(&mut self, c: u8) {
        scale_assign(&mut self.symbols, c);
        scale_assign(&mut self.payload, c);
    }

    fn is_trivial(&self) -> bool {
        self.symbols.iter().all(|&b| b == 0) && self.payload.iter().all(|&b| b == 0)
    }
}

#[derive(Clone, Debug)]
struct Equation {
    /// Over the batch's contributor positions; zero wherever the packet is
    /// no longer unknown.
    coef: Vec<u8>,
    rhs: Value,
}

impl Equation {
    fn add_scaled(&mut self, other: &Equation, c: u8) {
        mul_add_assign(&mut self.coef, &other.coef, c);
        self.rhs.add_scaled(&other.rhs, c);
    }
}

#[derive(Clone, Debug)]
struct BatchWork {
    equations: Vec<Equation>,
    unknown: usize,
    done: bool,
    queued: bool,
}

/// BATS decoder for one session's descriptors.
///
/// The contributor adjacency is built once; [`Decoder::decode`] can then be
/// called on any receiver's batch states.
#[derive(Clone, Debug)]
pub struct Decoder<'a> {
    descriptors: &'a [BatchDescriptor],
    file_packets: usize,
    /// For each input packet, the (batch index, contributor position) pairs.
    adjacency: Vec<Vec<(u32, u32)>>,
}

impl<'a> Decoder<'a> {
    pub fn new(descriptors: &'a [BatchDescriptor], file_packets: usize) -> Self {
        let mut adjacency = vec![Vec::new(); file_packets];
        for (b, d) in descriptors.iter().enumerate() {
            for (pos, &t) in d.contributors.iter().enumerate() {
                adjacency[t as usize].push((b as u32, pos as u32));
            }
        }
        Self {
            descriptors,
            file_packets,
            adjacency,
        }
    }

    pub fn file_packets(&self) -> usize {
        self.file_packets
    }

    /// Decodes from `batches[i]`, the buffer of the batch described by
    /// `descriptors[i]`. Batches past the end of `batches` count as empty.
    pub fn decode(&self, batches: &[BatchState]) -> Result<Decoded, DecodeFailure> {
        assert!(
            batches.len() <= self.descriptors.len(),
            "more batch states than descriptors"
        );
        let payload_len = batches.first().map_or(0, |b| b.payload_len());
        let mut run = Run::new(self, batches, payload_len);
        run.propagate();
        run.finish()
    }
}

struct Run<'d, 'a> {
    dec: &'d Decoder<'a>,
    payload_len: usize,
    work: Vec<BatchWork>,
    vars: Vec<Var>,
    values: Vec<Value>,
    symbol_of: Vec<u32>,
    symbols: usize,
    unknown: usize,
    queue: VecDeque<usize>,
    constraints: Vec<Value>,
}

impl<'d, 'a> Run<'d, 'a> {
    fn new(dec: &'d Decoder<'a>, batches: &[BatchState], payload_len: usize) -> Self {
        let mut work: Vec<BatchWork> = dec
            .descriptors
            .iter()
            .map(|d| BatchWork {
                equations: Vec::new(),
                unknown: d.degree(),
                done: false,
                queued: false,
            })
            .collect();
        for (b, state) in batches.iter().enumerate() {
            let desc = &dec.descriptors[b];
            assert_eq!(state.batch_id(), desc.batch_id, "batch order mismatch");
            let g = &desc.generator;
            work[b].equations = state
                .coeff_rows()
                .iter()
                .zip(state.payload_rows())
                .map(|(h, y)| Equation {
                    coef: (0..g.rows()).map(|t| dot(g.row(t), h)).collect(),
                    rhs: Value {
                        symbols: Vec::new(),
                        payload: y.clone(),
                    },
                })
                .collect();
        }
        let mut run = Self {
            dec,
            payload_len,
            work,
            vars: vec![Var::Unknown; dec.file_packets],
            values: vec![Value::default(); dec.file_packets],
            symbol_of: vec![u32::MAX; dec.file_packets],
            symbols: 0,
            unknown: dec.file_packets,
            queue: VecDeque::new(),
            constraints: Vec::new(),
        };
        for b in 0..run.work.len() {
            run.enqueue_if_ready(b);
        }
        run
    }

    fn enqueue_if_ready(&mut self, b: usize) {
        let w = &mut self.work[b];
        if !w.done && !w.queued && !w.equations.is_empty() && w.unknown <= w.equations.len() {
            w.queued = true;
            self.queue.push_back(b);
        }
    }

    fn propagate(&mut self) {
        while self.unknown > 0 {
            while let Some(b) = self.queue.pop_front() {
                self.work[b].queued = false;
                self.try_solve(b);
                if self.unknown == 0 {
                    break;
                }
            }
            if self.unknown > 0 && !self.inactivate_one() {
                break;
            }
        }
    }

    /// Attempts to solve batch `b` for its remaining unknowns.
    fn try_solve(&mut self, b: usize) {
        if self.work[b].done {
            return;
        }
        let contributors = &self.dec.descriptors[b].contributors;
        let cols: Vec<usize> = contributors
            .iter()
            .enumerate()
            .filter(|(_, &t)| self.vars[t as usize] == Var::Unknown)
            .map(|(p, _)| p)
            .collect();
        let eqs = &mut self.work[b].equations;
        let mut rank = 0;
        for &p in &cols {
            let Some(r) = (rank..eqs.len()).find(|&r| eqs[r].coef[p] != 0) else {
                continue;
            };
            eqs.swap(rank, r);
            let s = inv(eqs[rank].coef[p]);
            scale_assign(&mut eqs[rank].coef, s);
            eqs[rank].rhs.scale(s);
            let (head, tail) = eqs.split_at_mut(rank);
            let (pivot, tail) = tail.split_first_mut().expect("pivot row exists");
            for e in head.iter_mut().chain(tail.iter_mut()) {
                let c = e.coef[p];
                if c != 0 {
                    e.add_scaled(pivot, c);
                }
            }
            rank += 1;
        }
        if rank < cols.len() {
            return;
        }
        let w = &mut self.work[b];
        w.done = true;
        let mut equations = std::mem::take(&mut w.equations);
        for e in equations.drain(cols.len()..) {
            if !e.rhs.is_trivial() {
                self.constraints.push(e.rhs);
            }
        }
        for (e, &p) in equations.into_iter().zip(&cols) {
            let t = self.dec.descriptors[b].contributors[p] as usize;
            self.vars[t] = Var::Solved;
            self.values[t] = e.rhs;
            self.unknown -= 1;
        }
        for &p in &cols {
            let t = self.dec.descriptors[b].contributors[p] as usize;
            self.substitute(t);
        }
    }

    /// Folds the now-known value of packet `t` into every open batch.
    fn substitute(&mut self, t: usize) {
        let value = std::mem::take(&mut self.values[t]);
        let symbol = (self.vars[t] == Var::Inactive).then(|| self.symbol_of[t] as usize);
        for &(b, pos) in &self.dec.adjacency[t] {
            let (b, pos) = (b as usize, pos as usize);
            let w = &mut self.work[b];
            if w.done {
                continue;
            }
            for e in w.equations.iter_mut() {
                let c = e.coef[pos];
                if c == 0 {
                    continue;
                }
                match symbol {
                    Some(a) => e.rhs.add_symbol(a, c),
                    None => e.rhs.add_scaled(&value, c),
                }
                e.coef[pos] = 0;
            }
            w.unknown -= 1;
            if w.unknown == 0 {
                w.done = true;
                for e in std::mem::take(&mut w.equations) {
                    if !e.rhs.is_trivial() {
                        self.constraints.push(e.rhs);
                    }
                }
            } else {
                self.enqueue_if_ready(b);
            }
        }
        self.values[t] = value;
    }

    /// Inactivates the unknown packet that sits in the most stalled batches,
    /// lowest index on ties. Returns false when nothing is left to inactivate.
    fn inactivate_one(&mut self) -> bool {
        let mut best: Option<(usize, usize)> = None;
        for t in 0..self.vars.len() {
            if self.vars[t] != Var::Unknown {
                continue;
            }
            let score = self.dec.adjacency[t]
                .iter()
                .filter(|(b, _)| {
                    let w = &self.work[*b as usize];
                    !w.done && !w.equations.is_empty()
                })
                .count();
            if best.map_or(true, |(_, s)| score > s) {
                best = Some((t, score));
            }
        }
        let Some((t, score)) = best else {
            return false;
        };
        if score == 0 {
            // Nothing received constrains any remaining packet: they all stay
            // free symbols without touching a single equation.
            for t in 0..self.vars.len() {
                if self.vars[t] == Var::Unknown {
                    self.make_symbol(t);
                }
            }
            self.unknown = 0;
            return true;
        }
        self.make_symbol(t);
        self.unknown -= 1;
        self.substitute(t);
        true
    }

    fn make_symbol(&mut self, t: usize) {
        self.vars[t] = Var::Inactive;
        self.symbol_of[t] = self.symbols as u32;
        self.symbols += 1;
    }

    fn finish(mut self) -> Result<Decoded, DecodeFailure> {
        let n = self.symbols;
        let l = self.payload_len;
        // Echelon rows over [symbols | payload]; each has a distinct pivot
        // and is zero at the pivots of the rows before it.
        let mut basis: Vec<(usize, Vec<u8>)> = Vec::new();
        let mut row = vec![0u8; n + l];
        for c in std::mem::take(&mut self.constraints) {
            if basis.len() == n {
                break;
            }
            row.iter_mut().for_each(|x| *x = 0);
            row[..c.symbols.len()].copy_from_slice(&c.symbols);
            row[n..].copy_from_slice(&c.payload);
            for (p, r) in &basis {
                let f = row[*p];
                if f != 0 {
                    mul_add_assign(&mut row, r, f);
                }
            }
            if let Some(p) = row[..n].iter().position(|&x| x != 0) {
                let s = inv(row[p]);
                scale_assign(&mut row, s);
                basis.push((p, row.clone()));
            }
        }
        if basis.len() < n {
            return Err(DecodeFailure {
                unresolved: n - basis.len(),
                inactivated: n,
            });
        }
        let mut symbols = vec![vec![0u8; l]; n];
        for (p, r) in basis.iter().rev() {
            let mut v = r[n..].to_vec();
            for (q, &c) in r[..n].iter().enumerate() {
                if q != *p && c != 0 {
                    mul_add_assign(&mut v, &symbols[q], c);
                }
            }
            symbols[*p] = v;
        }
        let mut out = PayloadMatrix::zeros(self.dec.file_packets, l);
        for t in 0..self.dec.file_packets {
            let dst = out.row_mut(t);
            match self.vars[t] {
                Var::Inactive => dst.copy_from_slice(&symbols[self.symbol_of[t] as usize]),
                Var::Solved => {
                    let v = &self.values[t];
                    dst.copy_from_slice(&v.payload);
                    for (a, &c) in v.symbols.iter().enumerate() {
                        if c != 0 {
                            mul_add_assign(dst, &symbols[a], c);
                        }
                    }
                }
                Var::Unknown => unreachable!("propagation leaves no unknowns"),
            }
        }
        Ok(Decoded {
            packets: out,
            inactivated: n,
        })
    }
}
