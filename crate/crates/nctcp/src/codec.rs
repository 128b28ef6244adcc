//! Systematic MDS erasure coding of k segments into n.
//!
//! Each segment is a fixed-size byte vector. The code is applied
//! independently to every symbol column across the k segments (a symbol is
//! one byte, or one big-endian byte pair when n needs a field wider than
//! GF(2^8)). Column j of the codeword is the degree-<k polynomial through
//! the k information symbols at evaluation points alpha^0..alpha^(k-1),
//! evaluated at alpha^0..alpha^(n-1). Any k received segments therefore
//! determine the block; decoding is Lagrange interpolation restricted to
//! the received positions. Erasure-only: symbols are either correct or
//! missing, never corrupted.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::gf::{Field, FieldElement};

/// Widest symbol indicator the wire format can carry, which bounds the
/// redundancy per codeword and hence the minimal code rate to 1/257.
pub const MAX_REDUNDANCY: u32 = 256;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("invalid code parameters: {0}")]
    BadParams(String),
    #[error("segment length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("insufficient segments: have {have}, need {need}")]
    InsufficientSegments { have: usize, need: usize },
    #[error("enumeration too large: q^k = 2^{bits} exceeds 2^20")]
    TooLarge { bits: u32 },
}

/// Code geometry: n coded segments carry k information segments of
/// `segment_size` bytes each.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodeParams {
    n: u32,
    k: u32,
    segment_size: usize,
}

impl CodeParams {
    pub fn new(n: u32, k: u32, segment_size: usize) -> Result<Self, CodecError> {
        if k == 0 {
            return Err(CodecError::BadParams("k must be at least 1".into()));
        }
        if k > n {
            return Err(CodecError::BadParams(format!("k={k} exceeds n={n}")));
        }
        if n - k > MAX_REDUNDANCY {
            return Err(CodecError::BadParams(format!(
                "n-k={} redundancy segments exceed the {MAX_REDUNDANCY} the symbol indicator can address",
                n - k
            )));
        }
        if segment_size == 0 {
            return Err(CodecError::BadParams("segment_size must be at least 1".into()));
        }
        Ok(Self { n, k, segment_size })
    }

    #[inline]
    pub fn n(&self) -> u32 {
        self.n
    }

    #[inline]
    pub fn k(&self) -> u32 {
        self.k
    }

    #[inline]
    pub fn segment_size(&self) -> usize {
        self.segment_size
    }

    /// Code rate k/n; at least 1/257 by construction.
    pub fn rate(&self) -> f64 {
        self.k as f64 / self.n as f64
    }
}

/// The k information segments of one block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentBlock {
    params: CodeParams,
    segments: Vec<Vec<u8>>,
}

impl SegmentBlock {
    pub fn new(params: CodeParams, segments: Vec<Vec<u8>>) -> Result<Self, CodecError> {
        if segments.len() != params.k() as usize {
            return Err(CodecError::BadParams(format!(
                "block must hold k={} segments, got {}",
                params.k(),
                segments.len()
            )));
        }
        for seg in &segments {
            if seg.len() != params.segment_size() {
                return Err(CodecError::LengthMismatch {
                    expected: params.segment_size(),
                    got: seg.len(),
                });
            }
        }
        Ok(Self { params, segments })
    }

    #[inline]
    pub fn params(&self) -> CodeParams {
        self.params
    }

    #[inline]
    pub fn segments(&self) -> &[Vec<u8>] {
        &self.segments
    }

    pub fn into_segments(self) -> Vec<Vec<u8>> {
        self.segments
    }
}

/// All n segments of one encoded block; the first k are the information
/// segments verbatim (systematic form).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codeword {
    params: CodeParams,
    segments: Vec<Vec<u8>>,
}

impl Codeword {
    #[inline]
    pub fn params(&self) -> CodeParams {
        self.params
    }

    #[inline]
    pub fn segments(&self) -> &[Vec<u8>] {
        &self.segments
    }

    pub fn into_segments(self) -> Vec<Vec<u8>> {
        self.segments
    }
}

/// Received (position, segment) pairs for one block, distinct positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceivedSet {
    params: CodeParams,
    entries: BTreeMap<u32, Vec<u8>>,
}

impl ReceivedSet {
    pub fn new(params: CodeParams) -> Self {
        Self { params, entries: BTreeMap::new() }
    }

    /// Adds a segment at `position`. Re-inserting an already-present
    /// position is a no-op returning `Ok(false)` (set semantics).
    pub fn insert(&mut self, position: u32, segment: Vec<u8>) -> Result<bool, CodecError> {
        if position >= self.params.n() {
            return Err(CodecError::BadParams(format!(
                "position {position} outside codeword of length {}",
                self.params.n()
            )));
        }
        if segment.len() != self.params.segment_size() {
            return Err(CodecError::LengthMismatch {
                expected: self.params.segment_size(),
                got: segment.len(),
            });
        }
        if self.entries.contains_key(&position) {
            return Ok(false);
        }
        self.entries.insert(position, segment);
        Ok(true)
    }

    #[inline]
    pub fn params(&self) -> CodeParams {
        self.params
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    #[inline]
    pub fn contains(&self, position: u32) -> bool {
        self.entries.contains_key(&position)
    }

    pub fn positions(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.keys().copied()
    }

    pub fn get(&self, position: u32) -> Option<&[u8]> {
        self.entries.get(&position).map(|s| s.as_slice())
    }
}

/// Number of differing coordinates between two equal-length symbol vectors.
pub fn hamming_distance<T: PartialEq>(a: &[T], b: &[T]) -> Result<usize, CodecError> {
    if a.len() != b.len() {
        return Err(CodecError::LengthMismatch { expected: a.len(), got: b.len() });
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x != y).count())
}

// ---------------------------------------------------------------------------
// Symbol-level Reed-Solomon code over GF(2^m)
// ---------------------------------------------------------------------------

/// (n, k) code over GF(2^m) on single symbols. Evaluation point j is
/// alpha^j, so n is bounded by the q-1 distinct nonzero elements.
pub struct RsCode {
    field: Field,
    n: u32,
    k: u32,
    /// Precomputed encoding rows: row r holds the k Lagrange coefficients
    /// mapping information symbols to codeword position k + r.
    enc_rows: Vec<Vec<FieldElement>>,
}

impl RsCode {
    pub fn new(m: u32, n: u32, k: u32) -> Result<Self, CodecError> {
        let field = Field::new(m)
            .map_err(|e| CodecError::BadParams(format!("field construction failed: {e}")))?;
        if k == 0 || k > n {
            return Err(CodecError::BadParams(format!("need 1 <= k <= n, got n={n} k={k}")));
        }
        if n > field.group_order() {
            return Err(CodecError::BadParams(format!(
                "n={n} exceeds the {} distinct evaluation points of GF(2^{m})",
                field.group_order()
            )));
        }
        let sys_points: Vec<FieldElement> = (0..k).map(|j| field.alpha_pow(j)).collect();
        let denoms = lagrange_denominators(&field, &sys_points);
        let enc_rows = (k..n)
            .map(|j| lagrange_row(&field, &sys_points, &denoms, field.alpha_pow(j)))
            .collect();
        Ok(Self { field, n, k, enc_rows })
    }

    #[inline]
    pub fn n(&self) -> u32 {
        self.n
    }

    #[inline]
    pub fn k(&self) -> u32 {
        self.k
    }

    #[inline]
    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn encode_row(&self, redundancy_index: u32) -> &[FieldElement] {
        &self.enc_rows[redundancy_index as usize]
    }

    /// Encodes k information symbols into the full n-symbol codeword.
    pub fn encode_symbols(&self, info: &[u16]) -> Vec<u16> {
        debug_assert_eq!(info.len(), self.k as usize);
        let mut out = Vec::with_capacity(self.n as usize);
        out.extend_from_slice(info);
        for row in &self.enc_rows {
            let mut acc = FieldElement::ZERO;
            for (coeff, &sym) in row.iter().zip(info) {
                acc = self.field.add(acc, self.field.mul(*coeff, FieldElement(sym)));
            }
            out.push(acc.value());
        }
        out
    }

    /// Coefficient rows reconstructing information symbols `targets` from
    /// the symbols at `positions` (k distinct coordinates of the codeword).
    pub fn decode_rows(&self, positions: &[u32], targets: &[u32]) -> Vec<Vec<FieldElement>> {
        debug_assert_eq!(positions.len(), self.k as usize);
        let points: Vec<FieldElement> =
            positions.iter().map(|&p| self.field.alpha_pow(p)).collect();
        let denoms = lagrange_denominators(&self.field, &points);
        targets
            .iter()
            .map(|&t| lagrange_row(&self.field, &points, &denoms, self.field.alpha_pow(t)))
            .collect()
    }

    /// Reconstructs the k information symbols from any k (position, symbol)
    /// entries.
    pub fn decode_symbols(&self, entries: &[(u32, u16)]) -> Result<Vec<u16>, CodecError> {
        if entries.len() < self.k as usize {
            return Err(CodecError::InsufficientSegments {
                have: entries.len(),
                need: self.k as usize,
            });
        }
        let chosen = &entries[..self.k as usize];
        let positions: Vec<u32> = chosen.iter().map(|&(p, _)| p).collect();
        let targets: Vec<u32> = (0..self.k).collect();
        let rows = self.decode_rows(&positions, &targets);
        Ok(rows
            .iter()
            .map(|row| {
                let mut acc = FieldElement::ZERO;
                for (coeff, &(_, sym)) in row.iter().zip(chosen) {
                    acc = self.field.add(acc, self.field.mul(*coeff, FieldElement(sym)));
                }
                acc.value()
            })
            .collect())
    }
}

/// denom[j] = prod_{l != j} (x_j - x_l) for distinct points.
fn lagrange_denominators(field: &Field, points: &[FieldElement]) -> Vec<FieldElement> {
    points
        .iter()
        .enumerate()
        .map(|(j, &xj)| {
            let mut acc = FieldElement::ONE;
            for (l, &xl) in points.iter().enumerate() {
                if l != j {
                    acc = field.mul(acc, field.sub(xj, xl));
                }
            }
            acc
        })
        .collect()
}

/// Lagrange basis values L_j(v) for a target v outside the point set.
/// Uses the full product P(v) = prod_l (v - x_l) and divides out (v - x_j).
fn lagrange_row(
    field: &Field,
    points: &[FieldElement],
    denoms: &[FieldElement],
    v: FieldElement,
) -> Vec<FieldElement> {
    let mut full = FieldElement::ONE;
    for &x in points {
        full = field.mul(full, field.sub(v, x));
    }
    points
        .iter()
        .zip(denoms)
        .map(|(&xj, &dj)| {
            let diff = field.sub(v, xj);
            debug_assert!(!diff.is_zero(), "target coincides with an interpolation point");
            let num = field.div(full, diff).expect("points are distinct from target");
            field.div(num, dj).expect("denominators are nonzero")
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Segment-level codec (per byte-column interleaving)
// ---------------------------------------------------------------------------

enum SymbolWidth {
    /// One byte per symbol, GF(2^8); n <= 255.
    Byte { log: Box<[u8; 256]>, exp: Box<[u8; 510]> },
    /// One big-endian byte pair per symbol, GF(2^16); 255 < n <= 65535.
    /// Requires an even segment size.
    Wide { log: Vec<u16>, exp: Vec<u16> },
}

/// Erasure codec over fixed-size byte segments.
pub struct SegmentCodec {
    params: CodeParams,
    code: RsCode,
    width: SymbolWidth,
}

impl SegmentCodec {
    pub fn new(params: CodeParams) -> Result<Self, CodecError> {
        let (m, width) = if params.n() <= 255 {
            let field = Field::new(8).expect("m=8 in range");
            let mut log = Box::new([0u8; 256]);
            let mut exp = Box::new([0u8; 510]);
            for v in 1..=255u16 {
                log[v as usize] = field.log_raw(v) as u8;
            }
            for i in 0..510 {
                exp[i] = field.exp_raw(i) as u8;
            }
            (8, SymbolWidth::Byte { log, exp })
        } else {
            if params.segment_size() % 2 != 0 {
                return Err(CodecError::BadParams(format!(
                    "n={} needs 16-bit symbols, which require an even segment size (got {})",
                    params.n(),
                    params.segment_size()
                )));
            }
            let field = Field::new(16).expect("m=16 in range");
            let group = field.group_order() as usize;
            let mut log = vec![0u16; field.order() as usize];
            let mut exp = vec![0u16; 2 * group];
            for v in 1..=u16::MAX {
                log[v as usize] = field.log_raw(v);
            }
            for (i, e) in exp.iter_mut().enumerate() {
                *e = field.exp_raw(i);
            }
            (16, SymbolWidth::Wide { log, exp })
        };
        let code = RsCode::new(m, params.n(), params.k())?;
        Ok(Self { params, code, width })
    }

    #[inline]
    pub fn params(&self) -> CodeParams {
        self.params
    }

    /// dst ^= coeff * src, symbol-wise across the whole segment.
    fn addmul(&self, dst: &mut [u8], src: &[u8], coeff: FieldElement) {
        debug_assert_eq!(dst.len(), src.len());
        if coeff.is_zero() {
            return;
        }
        match &self.width {
            SymbolWidth::Byte { log, exp } => {
                let c = coeff.value() as u8;
                if c == 1 {
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d ^= s;
                    }
                    return;
                }
                let log_c = log[c as usize] as usize;
                for (d, s) in dst.iter_mut().zip(src) {
                    if *s != 0 {
                        *d ^= exp[log[*s as usize] as usize + log_c];
                    }
                }
            }
            SymbolWidth::Wide { log, exp } => {
                if coeff == FieldElement::ONE {
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d ^= s;
                    }
                    return;
                }
                let log_c = log[coeff.value() as usize] as usize;
                for (d, s) in dst.chunks_exact_mut(2).zip(src.chunks_exact(2)) {
                    let sv = u16::from_be_bytes([s[0], s[1]]);
                    if sv != 0 {
                        let prod = exp[log[sv as usize] as usize + log_c];
                        let b = prod.to_be_bytes();
                        d[0] ^= b[0];
                        d[1] ^= b[1];
                    }
                }
            }
        }
    }

    /// Systematic encode: the k information segments followed by n-k
    /// redundancy segments.
    pub fn encode(&self, info: &SegmentBlock) -> Result<Codeword, CodecError> {
        if info.params() != self.params {
            return Err(CodecError::BadParams("block parameters do not match codec".into()));
        }
        let mut segments = Vec::with_capacity(self.params.n() as usize);
        segments.extend(info.segments().iter().cloned());
        for r in 0..self.params.n() - self.params.k() {
            let row = self.code.encode_row(r);
            let mut out = vec![0u8; self.params.segment_size()];
            for (coeff, seg) in row.iter().zip(info.segments()) {
                self.addmul(&mut out, seg, *coeff);
            }
            segments.push(out);
        }
        Ok(Codeword { params: self.params, segments })
    }

    /// Reconstructs the information block from any k received segments.
    /// Received information-position segments are returned verbatim; only
    /// the missing ones are solved for.
    pub fn decode(&self, received: &ReceivedSet) -> Result<SegmentBlock, CodecError> {
        if received.params() != self.params {
            return Err(CodecError::BadParams("received set does not match codec".into()));
        }
        let k = self.params.k();
        if (received.len() as u32) < k {
            return Err(CodecError::InsufficientSegments {
                have: received.len(),
                need: k as usize,
            });
        }
        let mut segments: Vec<Option<Vec<u8>>> = (0..k)
            .map(|t| received.get(t).map(|s| s.to_vec()))
            .collect();
        let missing: Vec<u32> =
            (0..k).filter(|&t| segments[t as usize].is_none()).collect();
        if !missing.is_empty() {
            // Deterministic choice: systematic positions first, then
            // redundancy positions in ascending order.
            let mut chosen: Vec<u32> = received.positions().filter(|&p| p < k).collect();
            for p in received.positions().filter(|&p| p >= k) {
                if chosen.len() == k as usize {
                    break;
                }
                chosen.push(p);
            }
            let rows = self.code.decode_rows(&chosen, &missing);
            for (t, row) in missing.iter().zip(rows) {
                let mut out = vec![0u8; self.params.segment_size()];
                for (coeff, &pos) in row.iter().zip(&chosen) {
                    self.addmul(&mut out, received.get(pos).expect("chosen position"), *coeff);
                }
                segments[*t as usize] = Some(out);
            }
        }
        SegmentBlock::new(
            self.params,
            segments.into_iter().map(|s| s.expect("all positions filled")).collect(),
        )
    }
}

/// Exhaustively measures the minimum distance of the (n, k) code over
/// GF(2^`field_m`) on single-symbol segments. Linearity reduces minimum
/// pairwise distance to minimum nonzero-codeword weight. Returns n - k + 1
/// for a correct MDS construction.
pub fn verify_mds(params: CodeParams, field_m: u32) -> Result<u32, CodecError> {
    if params.segment_size() != 1 {
        return Err(CodecError::BadParams(
            "minimum-distance enumeration requires segment_size = 1".into(),
        ));
    }
    let bits = field_m
        .checked_mul(params.k())
        .ok_or(CodecError::TooLarge { bits: u32::MAX })?;
    if bits > 20 {
        return Err(CodecError::TooLarge { bits });
    }
    let code = RsCode::new(field_m, params.n(), params.k())?;
    let q = code.field().order() as u64;
    let total = q.pow(params.k());
    let mut min_weight = params.n();
    let mut info = vec![0u16; params.k() as usize];
    for idx in 1..total {
        let mut rem = idx;
        for sym in info.iter_mut() {
            *sym = (rem % q) as u16;
            rem /= q;
        }
        let cw = code.encode_symbols(&info);
        let weight = cw.iter().filter(|&&s| s != 0).count() as u32;
        min_weight = min_weight.min(weight);
        if min_weight == 1 {
            break;
        }
    }
    Ok(min_weight)
}
