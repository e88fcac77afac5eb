//! GF(2^8) arithmetic and dense linear algebra over it.
//!
//! The field is built on the reduction polynomial x^8 + x^4 + x^3 + x^2 + 1
//! (0x11D) with generator 0x02. Addition is XOR; multiplication goes through a
//! full 256x256 product table derived from log/antilog tables. Row operations
//! on long slices switch to 4-bit split tables and SSSE3 shuffles when the CPU
//! has them.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Sub};

use thiserror::Error;

/// Full reduction polynomial, bit 8 included.
pub const POLY: u16 = 0x11D;

const fn build_exp_log() -> ([u8; 512], [u8; 256]) {
    let mut exp = [0u8; 512];
    let mut log = [0u8; 256];
    let mut x: u16 = 1;
    let mut i = 0;
    while i < 255 {
        exp[i] = x as u8;
        exp[i + 255] = x as u8;
        log[x as usize] = i as u8;
        x <<= 1;
        if x & 0x100 != 0 {
            x ^= POLY;
        }
        i += 1;
    }
    (exp, log)
}

const EXP_LOG: ([u8; 512], [u8; 256]) = build_exp_log();
static EXP: [u8; 512] = EXP_LOG.0;
static LOG: [u8; 256] = EXP_LOG.1;

const fn build_mul_table() -> [[u8; 256]; 256] {
    let (exp, log) = build_exp_log();
    let mut t = [[0u8; 256]; 256];
    let mut a = 1;
    while a < 256 {
        let mut b = 1;
        while b < 256 {
            t[a][b] = exp[log[a] as usize + log[b] as usize];
            b += 1;
        }
        a += 1;
    }
    t
}

static MUL: [[u8; 256]; 256] = build_mul_table();

/// Product of two field elements.
#[inline]
pub fn mul(a: u8, b: u8) -> u8 {
    MUL[a as usize][b as usize]
}

/// Multiplicative inverse. Panics on zero.
#[inline]
pub fn inv(a: u8) -> u8 {
    assert_ne!(a, 0, "zero has no inverse in GF(256)");
    EXP[255 - LOG[a as usize] as usize]
}

/// `a / b`. Panics when `b` is zero.
#[inline]
pub fn div(a: u8, b: u8) -> u8 {
    mul(a, inv(b))
}

/// `a^e` by repeated squaring.
pub fn pow(a: u8, mut e: u32) -> u8 {
    let mut base = a;
    let mut acc = 1u8;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul(acc, base);
        }
        base = mul(base, base);
        e >>= 1;
    }
    acc
}

/// `c * x` for the low nibble `x` (`[c][0][x]`) and for `x << 4` (`[c][1][x]`).
const fn build_nibble_table() -> [[[u8; 16]; 2]; 256] {
    let t = build_mul_table();
    let mut out = [[[0u8; 16]; 2]; 256];
    let mut c = 0;
    while c < 256 {
        let mut x = 0;
        while x < 16 {
            out[c][0][x] = t[c][x];
            out[c][1][x] = t[c][x << 4];
            x += 1;
        }
        c += 1;
    }
    out
}

static NIBBLE: [[[u8; 16]; 2]; 256] = build_nibble_table();

/// Rows shorter than this stay on the scalar path.
#[cfg(target_arch = "x86_64")]
const SIMD_MIN_LEN: usize = 32;

#[cfg(target_arch = "x86_64")]
mod simd {
    use std::arch::x86_64::*;

    /// `dst[i] ^= c * src[i]` (or `dst[i] = c * dst[i]` when `src` is
    /// `None`) for the first `len - len % 16` bytes; returns how many were done.
    #[target_feature(enable = "ssse3")]
    pub(super) unsafe fn mul_ssse3(dst: &mut [u8], src: Option<&[u8]>, c: u8) -> usize {
        let len = match src {
            Some(s) => dst.len().min(s.len()),
            None => dst.len(),
        };
        let done = len - len % 16;
        let tables = &super::NIBBLE[c as usize];
        let lo_t = _mm_loadu_si128(tables[0].as_ptr() as *const __m128i);
        let hi_t = _mm_loadu_si128(tables[1].as_ptr() as *const __m128i);
        let mask = _mm_set1_epi8(0x0f);
        let mut i = 0;
        while i < done {
            let d = _mm_loadu_si128(dst.as_ptr().add(i) as *const __m128i);
            let x = match src {
                Some(s) => _mm_loadu_si128(s.as_ptr().add(i) as *const __m128i),
                None => d,
            };
            let lo = _mm_shuffle_epi8(lo_t, _mm_and_si128(x, mask));
            let hi = _mm_shuffle_epi8(hi_t, _mm_and_si128(_mm_srli_epi64(x, 4), mask));
            let prod = _mm_xor_si128(lo, hi);
            let out = match src {
                Some(_) => _mm_xor_si128(d, prod),
                None => prod,
            };
            _mm_storeu_si128(dst.as_mut_ptr().add(i) as *mut __m128i, out);
            i += 16;
        }
        done
    }
}

#[cfg(target_arch = "x86_64")]
#[inline]
fn simd_prefix(dst: &mut [u8], src: Option<&[u8]>, c: u8) -> usize {
    if dst.len() >= SIMD_MIN_LEN && std::arch::is_x86_feature_detected!("ssse3") {
        // SAFETY: the feature was detected at runtime and the kernel stays
        // within the bounds of both slices.
        unsafe { simd::mul_ssse3(dst, src, c) }
    } else {
        0
    }
}

#[cfg(not(target_arch = "x86_64"))]
#[inline]
fn simd_prefix(_dst: &mut [u8], _src: Option<&[u8]>, _c: u8) -> usize {
    0
}

/// `dst[i] += c * src[i]` over the common prefix of the two slices.
#[inline]
pub fn mul_add_assign(dst: &mut [u8], src: &[u8], c: u8) {
    match c {
        0 => {}
        1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d ^= *s),
        _ => {
            let done = simd_prefix(dst, Some(src), c);
            let row = &MUL[c as usize];
            dst[done..]
                .iter_mut()
                .zip(&src[done.min(src.len())..])
                .for_each(|(d, s)| *d ^= row[*s as usize]);
        }
    }
}

/// `row[i] *= c`.
#[inline]
pub fn scale_assign(row: &mut [u8], c: u8) {
    if c == 1 {
        return;
    }
    let done = simd_prefix(row, None, c);
    let t = &MUL[c as usize];
    row[done..].iter_mut().for_each(|x| *x = t[*x as usize]);
}

/// Inner product of two byte vectors over GF(256).
pub fn dot(a: &[u8], b: &[u8]) -> u8 {
    a.iter().zip(b).fold(0, |acc, (x, y)| acc ^ mul(*x, *y))
}

/// An element of GF(2^8).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
#[repr(transparent)]
pub struct FieldElement(pub u8);

impl FieldElement {
    pub const ZERO: Self = Self(0);
    pub const ONE: Self = Self(1);

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// `None` for zero.
    pub fn inverse(self) -> Option<Self> {
        (self.0 != 0).then(|| Self(inv(self.0)))
    }

    pub fn pow(self, e: u32) -> Self {
        Self(pow(self.0, e))
    }
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:02X}", self.0)
    }
}

impl From<u8> for FieldElement {
    fn from(v: u8) -> Self {
        Self(v)
    }
}

impl Add for FieldElement {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn add(self, rhs: Self) -> Self {
        Self(self.0 ^ rhs.0)
    }
}

impl AddAssign for FieldElement {
    #[allow(clippy::suspicious_op_assign_impl)]
    fn add_assign(&mut self, rhs: Self) {
        self.0 ^= rhs.0;
    }
}

impl Sub for FieldElement {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn sub(self, rhs: Self) -> Self {
        Self(self.0 ^ rhs.0)
    }
}

impl Mul for FieldElement {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self(mul(self.0, rhs.0))
    }
}

impl MulAssign for FieldElement {
    fn mul_assign(&mut self, rhs: Self) {
        self.0 = mul(self.0, rhs.0);
    }
}

impl Div for FieldElement {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        Self(div(self.0, rhs.0))
    }
}

/// Failure modes of [`solve`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolveError {
    #[error("row count mismatch: coefficient matrix has {a_rows} rows, right-hand side has {y_rows}")]
    DimensionMismatch { a_rows: usize, y_rows: usize },
    #[error("system is underdetermined: rank {rank} < {cols} unknowns")]
    Underdetermined { rank: usize, cols: usize },
    #[error("system is inconsistent")]
    Inconsistent,
}

/// Dense row-major matrix over GF(256).
///
/// Used both for coefficient matrices (generators, transfer matrices) and for
/// payload matrices, whose rows are packet payloads.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct CoeffMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

/// Payload rows share the coefficient matrix representation.
pub type PayloadMatrix = CoeffMatrix;

impl CoeffMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1);
        }
        m
    }

    /// Builds a matrix from row-major bytes. Panics if the length is wrong.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length does not match shape");
        Self { rows, cols, data }
    }

    /// Builds a matrix from equally long rows. An empty slice gives `0 x cols`.
    pub fn from_rows<R: AsRef<[u8]>>(rows: &[R], cols: usize) -> Self {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u8) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[u8] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [u8] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[u8]> {
        // chunks_exact(0) panics, so zero-width matrices yield empty rows by hand.
        let cols = self.cols;
        (0..self.rows).map(move |r| &self.data[r * cols..(r + 1) * cols])
    }

    pub fn push_row(&mut self, row: &[u8]) {
        assert_eq!(row.len(), self.cols, "row width mismatch");
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&b| b == 0)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    /// Matrix product `self * rhs`.
    pub fn mul(&self, rhs: &CoeffMatrix) -> CoeffMatrix {
        assert_eq!(self.cols, rhs.rows, "inner dimensions differ");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            let (a_row, out_row) = (self.row(r), &mut out.data[r * rhs.cols..(r + 1) * rhs.cols]);
            for (k, &a) in a_row.iter().enumerate() {
                mul_add_assign(out_row, rhs.row(k), a);
            }
        }
        out
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let (lo, hi) = (a.min(b), a.max(b));
        let (head, tail) = self.data.split_at_mut(hi * self.cols);
        head[lo * self.cols..(lo + 1) * self.cols].swap_with_slice(&mut tail[..self.cols]);
    }

    /// `row[dst] += c * row[src]`.
    fn add_scaled_row(&mut self, dst: usize, src: usize, c: u8) {
        if c == 0 || dst == src {
            return;
        }
        let cols = self.cols;
        if dst < src {
            let (head, tail) = self.data.split_at_mut(src * cols);
            mul_add_assign(&mut head[dst * cols..(dst + 1) * cols], &tail[..cols], c);
        } else {
            let (head, tail) = self.data.split_at_mut(dst * cols);
            mul_add_assign(&mut tail[..cols], &head[src * cols..(src + 1) * cols], c);
        }
    }

    /// Reduces in place to reduced row echelon form and returns the rank.
    ///
    /// Pivots are the first nonzero entry found scanning down each column.
    /// Zero rows end up at the bottom.
    pub fn row_reduce(&mut self) -> usize {
        reduce_pair(self, None).len()
    }

    /// Rank of the matrix. Does not modify `self`.
    pub fn rank(&self) -> usize {
        self.clone().row_reduce()
    }
}

impl fmt::Debug for CoeffMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CoeffMatrix {}x{} [", self.rows, self.cols)?;
        for r in self.iter_rows() {
            write!(f, "  ")?;
            for b in r {
                write!(f, "{b:02x} ")?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// Gauss-Jordan elimination of `a`, mirroring every row operation onto `rhs`.
/// Returns pivot columns in row order.
fn reduce_pair(a: &mut CoeffMatrix, mut rhs: Option<&mut CoeffMatrix>) -> Vec<usize> {
    let mut pivots = Vec::new();
    let mut next = 0;
    for col in 0..a.cols {
        if next == a.rows {
            break;
        }
        let Some(p) = (next..a.rows).find(|&r| a.get(r, col) != 0) else {
            continue;
        };
        a.swap_rows(next, p);
        if let Some(y) = rhs.as_deref_mut() {
            y.swap_rows(next, p);
        }
        let s = inv(a.get(next, col));
        scale_assign(a.row_mut(next), s);
        if let Some(y) = rhs.as_deref_mut() {
            scale_assign(y.row_mut(next), s);
        }
        for r in 0..a.rows {
            let c = a.get(r, col);
            if r != next && c != 0 {
                a.add_scaled_row(r, next, c);
                if let Some(y) = rhs.as_deref_mut() {
                    y.add_scaled_row(r, next, c);
                }
            }
        }
        pivots.push(col);
        next += 1;
    }
    pivots
}

/// Rank of `m` over GF(256).
pub fn rank(m: &CoeffMatrix) -> usize {
    m.rank()
}

/// Solves `a * x = y` for `x`.
///
/// `a` is `r x c`, `y` is `r x l`; the result is `c x l`. Requires full column
/// rank; extra rows must be consistent with the solution.
pub fn solve(a: &CoeffMatrix, y: &PayloadMatrix) -> Result<PayloadMatrix, SolveError> {
    if a.rows != y.rows {
        return Err(SolveError::DimensionMismatch {
            a_rows: a.rows,
            y_rows: y.rows,
        });
    }
    let mut a = a.clone();
    let mut y = y.clone();
    let pivots = reduce_pair(&mut a, Some(&mut y));
    let rank = pivots.len();
    if (rank..y.rows).any(|r| y.row(r).iter().any(|&b| b != 0)) {
        return Err(SolveError::Inconsistent);
    }
    if rank < a.cols {
        return Err(SolveError::Underdetermined { rank, cols: a.cols });
    }
    let mut x = CoeffMatrix::zeros(a.cols, y.cols);
    for (r, &c) in pivots.iter().enumerate() {
        x.row_mut(c).copy_from_slice(y.row(r));
    }
    Ok(x)
}

/// Incrementally maintained echelon basis of a subspace of GF(256)^n.
///
/// Each stored row has a distinct pivot (its first nonzero entry, scaled to 1)
/// and is zero at the pivots of every row inserted before it, so one in-order
/// sweep reduces a vector modulo the span.
#[derive(Clone, Debug, Default)]
pub struct EchelonBasis {
    width: usize,
    rows: Vec<(usize, Vec<u8>)>,
}

impl EchelonBasis {
    pub fn new(width: usize) -> Self {
        Self {
            width,
            rows: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    /// Reduces `v` modulo the span in place; zero result means `v` was in it.
    pub fn reduce(&self, v: &mut [u8]) {
        for (p, row) in &self.rows {
            let c = v[*p];
            if c != 0 {
                mul_add_assign(v, row, c);
            }
        }
    }

    pub fn contains(&self, v: &[u8]) -> bool {
        let mut w = v.to_vec();
        self.reduce(&mut w);
        w.iter().all(|&b| b == 0)
    }

    /// Adds `v` to the basis if it is independent; returns whether it was.
    pub fn insert(&mut self, v: &[u8]) -> bool {
        assert_eq!(v.len(), self.width, "vector width mismatch");
        let mut w = v.to_vec();
        self.reduce(&mut w);
        match w.iter().position(|&b| b != 0) {
            None => false,
            Some(p) => {
                let s = inv(w[p]);
                scale_assign(&mut w, s);
                self.rows.push((p, w));
                true
            }
        }
    }
}
