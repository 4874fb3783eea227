//! Arithmetic in the binary extension field GF(2^q), 1 <= q <= 16.
//!
//! Elements are stored as the low `q` bits of a `u32`; bit `q-1` is the
//! coefficient of x^(q-1) and is the left-most bit when an element is written
//! as a bit string.
//!
//! Each degree uses a fixed reduction polynomial: the lexicographically
//! smallest irreducible polynomial of that degree over GF(2).
//!
//! | q  | modulus                     | hex     |
//! |----|-----------------------------|---------|
//! | 1  | x                           | 0x2     |
//! | 2  | x^2+x+1                     | 0x7     |
//! | 3  | x^3+x+1                     | 0xb     |
//! | 4  | x^4+x+1                     | 0x13    |
//! | 5  | x^5+x^2+1                   | 0x25    |
//! | 6  | x^6+x+1                     | 0x43    |
//! | 7  | x^7+x+1                     | 0x83    |
//! | 8  | x^8+x^4+x^3+x+1             | 0x11b   |
//! | 9  | x^9+x+1                     | 0x203   |
//! | 10 | x^10+x^3+1                  | 0x409   |
//! | 11 | x^11+x^2+1                  | 0x805   |
//! | 12 | x^12+x^3+1                  | 0x1009  |
//! | 13 | x^13+x^4+x^3+x+1            | 0x201b  |
//! | 14 | x^14+x^5+1                  | 0x4021  |
//! | 15 | x^15+x+1                    | 0x8003  |
//! | 16 | x^16+x^5+x^3+x+1            | 0x1002b |

use serde::{Deserialize, Serialize};

use crate::error::{usage, Error, Result};

pub const MAX_DEGREE: u32 = 16;

/// Smallest irreducible polynomial of each degree 1..=16, including the x^q term.
const DEFAULT_MODULI: [u32; 16] = [
    0x2, 0x7, 0xb, 0x13, 0x25, 0x43, 0x83, 0x11b, 0x203, 0x409, 0x805, 0x1009, 0x201b, 0x4021,
    0x8003, 0x1002b,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FieldElement {
    value: u32,
    width: u32,
}

impl FieldElement {
    pub fn new(value: u32, width: u32) -> Result<Self> {
        if width == 0 || width > MAX_DEGREE {
            return Err(usage!("field width {width} outside 1..={MAX_DEGREE}"));
        }
        if value >> width != 0 {
            return Err(usage!("value {value:#b} does not fit in {width} bits"));
        }
        Ok(Self { value, width })
    }

    pub fn zero(width: u32) -> Result<Self> {
        Self::new(0, width)
    }

    pub fn one(width: u32) -> Result<Self> {
        Self::new(1, width)
    }

    pub fn value(self) -> u32 {
        self.value
    }

    pub fn width(self) -> u32 {
        self.width
    }

    pub fn is_zero(self) -> bool {
        self.value == 0
    }

    /// Addition in characteristic 2.
    pub fn xor(self, other: Self) -> Result<Self> {
        if self.width != other.width {
            return Err(usage!("width mismatch: {} vs {}", self.width, other.width));
        }
        Ok(Self { value: self.value ^ other.value, width: self.width })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    q: u32,
    modulus: u32,
}

impl FieldSpec {
    /// Field of degree `q` with the pinned default modulus.
    pub fn new(q: u32) -> Result<Self> {
        if q == 0 || q > MAX_DEGREE {
            return Err(usage!("field degree {q} outside 1..={MAX_DEGREE}"));
        }
        Self::with_modulus(q, DEFAULT_MODULI[(q - 1) as usize])
    }

    /// Field of degree `q` reduced by `modulus`; rejects reducible polynomials.
    pub fn with_modulus(q: u32, modulus: u32) -> Result<Self> {
        if q == 0 || q > MAX_DEGREE {
            return Err(usage!("field degree {q} outside 1..={MAX_DEGREE}"));
        }
        if degree(modulus) != Some(q) {
            return Err(usage!("modulus {modulus:#x} does not have degree {q}"));
        }
        if !is_irreducible(modulus) {
            return Err(Error::Domain(format!("modulus {modulus:#x} is reducible")));
        }
        Ok(Self { q, modulus })
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn modulus(&self) -> u32 {
        self.modulus
    }

    pub fn order(&self) -> u32 {
        1 << self.q
    }

    pub fn element(&self, value: u32) -> Result<FieldElement> {
        FieldElement::new(value, self.q)
    }

    pub fn elements(&self) -> impl Iterator<Item = FieldElement> + '_ {
        (0..self.order()).map(move |v| FieldElement { value: v, width: self.q })
    }

    fn check(&self, a: FieldElement) -> Result<()> {
        if a.width != self.q {
            return Err(usage!("element width {} does not match field degree {}", a.width, self.q));
        }
        Ok(())
    }

    pub fn mul(&self, a: FieldElement, b: FieldElement) -> Result<FieldElement> {
        self.check(a)?;
        self.check(b)?;
        Ok(FieldElement { value: self.mul_raw(a.value, b.value), width: self.q })
    }

    /// Shift-and-XOR multiply with the reduction folded into each shift.
    pub(crate) fn mul_raw(&self, a: u32, mut b: u32) -> u32 {
        let top = 1u32 << (self.q - 1);
        let low_mask = self.order() - 1;
        let mut acc = 0u32;
        let mut a = a;
        while b != 0 {
            if b & 1 != 0 {
                acc ^= a;
            }
            b >>= 1;
            let carry = a & top != 0;
            a = (a << 1) & low_mask;
            if carry {
                a ^= self.modulus & low_mask;
            }
        }
        acc
    }

    pub fn inv(&self, a: FieldElement) -> Result<FieldElement> {
        self.check(a)?;
        if a.is_zero() {
            return Err(Error::Domain("zero has no multiplicative inverse".into()));
        }
        // a^(2^q - 2) by square-and-multiply
        let mut exp = self.order() - 2;
        let mut base = a.value;
        let mut acc = 1u32;
        while exp != 0 {
            if exp & 1 != 0 {
                acc = self.mul_raw(acc, base);
            }
            base = self.mul_raw(base, base);
            exp >>= 1;
        }
        Ok(FieldElement { value: acc, width: self.q })
    }
}

pub fn gf_mul(a: FieldElement, b: FieldElement, spec: &FieldSpec) -> Result<FieldElement> {
    spec.mul(a, b)
}

pub fn gf_inv(a: FieldElement, spec: &FieldSpec) -> Result<FieldElement> {
    spec.inv(a)
}

fn degree(p: u32) -> Option<u32> {
    (p != 0).then(|| 31 - p.leading_zeros())
}

fn poly_rem(mut a: u32, d: u32) -> u32 {
    let dd = degree(d).expect("nonzero divisor");
    while let Some(da) = degree(a) {
        if da < dd {
            break;
        }
        a ^= d << (da - dd);
    }
    a
}

/// Exhaustive trial division by every polynomial of degree 1..=deg/2.
pub fn is_irreducible(p: u32) -> bool {
    let Some(dp) = degree(p) else { return false };
    if dp == 0 {
        return false;
    }
    for dd in 1..=dp / 2 {
        for d in (1u32 << dd)..(1u32 << (dd + 1)) {
            if poly_rem(p, d) == 0 {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn el(spec: &FieldSpec, v: u32) -> FieldElement {
        spec.element(v).unwrap()
    }

    /// Carry-less product followed by long division; independent of `mul_raw`.
    fn clmul_reduce(a: u32, b: u32, modulus: u32) -> u32 {
        let mut prod = 0u64;
        for i in 0..32 {
            if b >> i & 1 == 1 {
                prod ^= (a as u64) << i;
            }
        }
        let dm = 63 - (modulus as u64).leading_zeros();
        while prod != 0 && 63 - prod.leading_zeros() >= dm {
            let dp = 63 - prod.leading_zeros();
            prod ^= (modulus as u64) << (dp - dm);
        }
        prod as u32
    }

    #[test]
    fn default_moduli_are_smallest_irreducibles() {
        for q in 1..=MAX_DEGREE {
            let smallest = ((1u32 << q)..(1u32 << (q + 1))).find(|&p| is_irreducible(p)).unwrap();
            assert_eq!(DEFAULT_MODULI[(q - 1) as usize], smallest, "q={q}");
        }
    }

    #[test]
    fn reducible_modulus_rejected() {
        // x^4 + 1 = (x + 1)^4
        assert!(matches!(FieldSpec::with_modulus(4, 0b10001), Err(Error::Domain(_))));
        assert!(FieldSpec::with_modulus(4, 0b11001).is_ok());
        assert!(FieldSpec::with_modulus(4, 0b1011).is_err());
    }

    #[test]
    fn gf16_worked_examples() {
        let f = FieldSpec::new(4).unwrap();
        assert_eq!(f.modulus(), 0b10011);
        assert_eq!(f.mul(el(&f, 0b0010), el(&f, 0b1000)).unwrap().value(), 0b0011);
        assert_eq!(f.inv(el(&f, 0b0010)).unwrap().value(), 0b1001);
        assert_eq!(f.inv(el(&f, 1)).unwrap().value(), 1);
        for x in f.elements() {
            assert_eq!(f.mul(el(&f, 1), x).unwrap(), x);
            assert!(f.mul(el(&f, 0), x).unwrap().is_zero());
        }
    }

    #[test]
    fn gf16_matches_log_antilog_tables() {
        // x is primitive for x^4+x+1; build tables by repeated multiplication by x.
        let f = FieldSpec::new(4).unwrap();
        let mut exp = [0u32; 15];
        let mut log = [0usize; 16];
        let mut v = 1u32;
        for (i, slot) in exp.iter_mut().enumerate() {
            *slot = v;
            log[v as usize] = i;
            v <<= 1;
            if v & 0x10 != 0 {
                v ^= 0x13;
            }
        }
        for a in 1..16u32 {
            for b in 1..16u32 {
                let want = exp[(log[a as usize] + log[b as usize]) % 15];
                assert_eq!(f.mul_raw(a, b), want);
            }
        }
    }

    #[test]
    fn mul_matches_clmul_reference() {
        for q in 1..=MAX_DEGREE {
            let f = FieldSpec::new(q).unwrap();
            let mask = f.order() - 1;
            let mut x = 0x9e37_79b9u32;
            for _ in 0..500 {
                x ^= x << 13;
                x ^= x >> 17;
                x ^= x << 5;
                let a = x & mask;
                let b = (x >> 16 | x << 16) & mask;
                assert_eq!(f.mul_raw(a, b), clmul_reduce(a, b, f.modulus()), "q={q}");
            }
        }
    }

    #[test]
    fn zero_inverse_is_domain_error() {
        let f = FieldSpec::new(6).unwrap();
        assert!(matches!(f.inv(el(&f, 0)), Err(Error::Domain(_))));
    }

    #[test]
    fn width_mismatch_is_usage_error() {
        let f = FieldSpec::new(4).unwrap();
        let a = FieldElement::new(3, 5).unwrap();
        assert!(matches!(f.mul(a, el(&f, 1)), Err(Error::Usage(_))));
        assert!(FieldElement::new(16, 4).is_err());
    }

    #[test]
    fn axioms_exhaustive_small_fields() {
        for q in 1..=6 {
            let f = FieldSpec::new(q).unwrap();
            let n = f.order();
            for a in 0..n {
                for b in 0..n {
                    let ab = f.mul_raw(a, b);
                    assert_eq!(ab, f.mul_raw(b, a));
                    for c in 0..n {
                        assert_eq!(f.mul_raw(ab, c), f.mul_raw(a, f.mul_raw(b, c)));
                        assert_eq!(f.mul_raw(a, b ^ c), ab ^ f.mul_raw(a, c));
                    }
                }
            }
        }
    }

    #[test]
    fn multiplication_by_nonzero_is_bijection() {
        for q in [1, 3, 5, 8, 10] {
            let f = FieldSpec::new(q).unwrap();
            for a in 1..f.order() {
                let mut seen = vec![false; f.order() as usize];
                for b in 0..f.order() {
                    let p = f.mul_raw(a, b) as usize;
                    assert!(!seen[p]);
                    seen[p] = true;
                }
            }
        }
    }

    #[test]
    fn identity_and_inverse_sampled_wide_fields() {
        for q in 9..=MAX_DEGREE {
            let f = FieldSpec::new(q).unwrap();
            let step = (f.order() / 997).max(1);
            for a in (1..f.order()).step_by(step as usize) {
                assert_eq!(f.mul_raw(a, 1), a);
                let inv = f.inv(el(&f, a)).unwrap();
                assert_eq!(f.mul_raw(a, inv.value()), 1);
            }
        }
    }
}
