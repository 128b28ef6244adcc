//! Arithmetic over the extended Galois field GF(2^m).
//!
//! Elements are bit vectors of length `m` interpreted as polynomials over
//! GF(2), reduced modulo a fixed primitive polynomial. Addition is XOR;
//! multiplication goes through log/antilog tables built once at field
//! construction, which keeps the coding inner loops to two lookups and an
//! add. The default field is GF(2^8) with the polynomial
//! x^8 + x^4 + x^3 + x^2 + 1 (0x11D), the conventional byte-oriented choice.

use std::sync::OnceLock;

use thiserror::Error;

/// Widest supported field; tables for GF(2^16) are ~384 KiB.
pub const MAX_M: u32 = 16;
/// Narrowest supported field.
pub const MIN_M: u32 = 2;

/// Conventional primitive polynomials for m = 2..=16, x primitive in each.
/// Index i holds the polynomial for m = i + 2, including the x^m term.
const PRIMITIVE_POLYS: [u32; 15] = [
    0x7, 0xB, 0x13, 0x25, 0x43, 0x89, 0x11D, 0x211, 0x409, 0x805, 0x1053, 0x201B, 0x4443, 0x8003,
    0x1100B,
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GfError {
    /// Inversion (or a negative power) of the zero element was requested.
    #[error("zero element has no multiplicative inverse")]
    ZeroInverse,
    /// Field size outside the supported 2 <= m <= 16 range.
    #[error("unsupported field size m={0}, supported range is {MIN_M}..={MAX_M}")]
    UnsupportedFieldSize(u32),
    /// Value does not fit in the field.
    #[error("value {value:#x} is not an element of GF(2^{m})")]
    NotAnElement { value: u32, m: u32 },
}

/// An element of GF(2^m). The raw value is always < 2^m for the field that
/// produced it; construct through [`Field::element`] to keep that invariant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct FieldElement(pub u16);

impl FieldElement {
    pub const ZERO: Self = Self(0);
    pub const ONE: Self = Self(1);

    #[inline]
    pub fn value(self) -> u16 {
        self.0
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

/// GF(2^m) with its log/antilog tables.
///
/// `exp` holds 2*(q-1) entries (the second half mirrors the first) so that
/// products of two logs index it without a modular reduction. `log[0]` is
/// unused and left 0.
pub struct Field {
    m: u32,
    poly: u32,
    exp: Vec<u16>,
    log: Vec<u16>,
}

impl Field {
    /// Builds the field tables for GF(2^m), 2 <= m <= 16.
    pub fn new(m: u32) -> Result<Self, GfError> {
        if !(MIN_M..=MAX_M).contains(&m) {
            return Err(GfError::UnsupportedFieldSize(m));
        }
        let poly = PRIMITIVE_POLYS[(m - MIN_M) as usize];
        let q = 1u32 << m;
        let group = (q - 1) as usize;
        let mut exp = vec![0u16; 2 * group];
        let mut log = vec![0u16; q as usize];
        let mut val: u32 = 1;
        for i in 0..group {
            exp[i] = val as u16;
            exp[i + group] = val as u16;
            log[val as usize] = i as u16;
            val <<= 1;
            if val & q != 0 {
                val ^= poly;
            }
        }
        // x is primitive for every polynomial in the table; the generator
        // must return to 1 exactly after q-1 doublings.
        debug_assert_eq!(val, 1, "generator does not have order q-1");
        Ok(Self { m, poly, exp, log })
    }

    /// Shared GF(2^8) instance, the default symbol alphabet of the codec.
    pub fn gf256() -> &'static Field {
        static GF256: OnceLock<Field> = OnceLock::new();
        GF256.get_or_init(|| Field::new(8).expect("m=8 is in range"))
    }

    #[inline]
    pub fn m(&self) -> u32 {
        self.m
    }

    /// Field order q = 2^m.
    #[inline]
    pub fn order(&self) -> u32 {
        1 << self.m
    }

    /// Order of the multiplicative group, q - 1.
    #[inline]
    pub fn group_order(&self) -> u32 {
        (1 << self.m) - 1
    }

    /// The reduction polynomial, including the x^m term.
    #[inline]
    pub fn polynomial(&self) -> u32 {
        self.poly
    }

    /// Validates `value` as an element of this field.
    pub fn element(&self, value: u32) -> Result<FieldElement, GfError> {
        if value < self.order() {
            Ok(FieldElement(value as u16))
        } else {
            Err(GfError::NotAnElement { value, m: self.m })
        }
    }

    /// alpha^i where alpha = x is the primitive element; `i` taken modulo q-1.
    #[inline]
    pub fn alpha_pow(&self, i: u32) -> FieldElement {
        FieldElement(self.exp[(i % self.group_order()) as usize])
    }

    /// Addition: bitwise XOR of the polynomial representations. Every element
    /// is its own additive inverse.
    #[inline]
    pub fn add(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(a.0 ^ b.0)
    }

    /// Subtraction coincides with addition in characteristic 2.
    #[inline]
    pub fn sub(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        self.add(a, b)
    }

    /// Table-based multiplication.
    #[inline]
    pub fn mul(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        if a.is_zero() || b.is_zero() {
            return FieldElement::ZERO;
        }
        let idx = self.log[a.0 as usize] as usize + self.log[b.0 as usize] as usize;
        FieldElement(self.exp[idx])
    }

    /// Multiplicative inverse of a nonzero element.
    pub fn inv(&self, a: FieldElement) -> Result<FieldElement, GfError> {
        if a.is_zero() {
            return Err(GfError::ZeroInverse);
        }
        let group = self.group_order() as usize;
        let log_a = self.log[a.0 as usize] as usize;
        Ok(FieldElement(self.exp[group - log_a]))
    }

    /// `a / b`; errors on division by zero.
    pub fn div(&self, a: FieldElement, b: FieldElement) -> Result<FieldElement, GfError> {
        Ok(self.mul(a, self.inv(b)?))
    }

    /// `a^e`. Exponents are reduced modulo q-1 for nonzero bases; `a^0 = 1`
    /// for every `a` (including zero, as the empty product); negative powers
    /// of zero are rejected.
    pub fn pow(&self, a: FieldElement, e: i64) -> Result<FieldElement, GfError> {
        if e == 0 {
            return Ok(FieldElement::ONE);
        }
        if a.is_zero() {
            return if e < 0 { Err(GfError::ZeroInverse) } else { Ok(FieldElement::ZERO) };
        }
        let group = self.group_order() as i64;
        let log_a = self.log[a.0 as usize] as i64;
        let idx = (log_a * (e % group)).rem_euclid(group);
        Ok(FieldElement(self.exp[idx as usize]))
    }

    /// Raw log table lookup for a nonzero value; used by the codec to build
    /// specialized per-width tables.
    #[inline]
    pub fn log_raw(&self, value: u16) -> u16 {
        debug_assert!(value != 0);
        self.log[value as usize]
    }

    /// Raw antilog lookup, index already reduced modulo q-1 by the caller or
    /// within 0..2(q-1).
    #[inline]
    pub fn exp_raw(&self, idx: usize) -> u16 {
        self.exp[idx]
    }
}

impl std::fmt::Debug for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Field")
            .field("m", &self.m)
            .field("poly", &format_args!("{:#x}", self.poly))
            .finish()
    }
}
