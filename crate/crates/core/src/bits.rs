// SPDX-License-Identifier: Apache-2.0

//! Fixed-width two-state bit-vector values.
//!
//! Every signal in the supported subset is at most [`MAX_WIDTH`] bits wide, so a
//! value is a width plus a `u128` payload whose bits above the width are always
//! zero. Arithmetic wraps modulo `2^width`. Division and remainder by zero follow
//! the SMT-LIB `bvudiv`/`bvurem` convention (all ones / the dividend) so that the
//! simulator and the BMC encoding agree on every input.

use std::fmt;

use serde::{Deserialize, Serialize};

pub const MAX_WIDTH: u32 = 128;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bv {
    width: u32,
    bits: u128,
}

#[inline]
pub fn mask(width: u32) -> u128 {
    debug_assert!(width <= MAX_WIDTH);
    if width >= 128 {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}

impl Bv {
    /// Builds a value, truncating `bits` to `width`.
    pub fn new(width: u32, bits: u128) -> Self {
        assert!(
            (1..=MAX_WIDTH).contains(&width),
            "bit-vector width {width} out of range"
        );
        Bv {
            width,
            bits: bits & mask(width),
        }
    }

    pub fn zero(width: u32) -> Self {
        Bv::new(width, 0)
    }

    pub fn ones(width: u32) -> Self {
        Bv::new(width, u128::MAX)
    }

    pub fn from_bool(b: bool) -> Self {
        Bv::new(1, b as u128)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn bits(&self) -> u128 {
        self.bits
    }

    pub fn is_zero(&self) -> bool {
        self.bits == 0
    }

    pub fn is_true(&self) -> bool {
        self.bits != 0
    }

    pub fn bit(&self, i: u32) -> bool {
        i < self.width && (self.bits >> i) & 1 == 1
    }

    /// Zero-extends or truncates to `width`.
    pub fn resize(&self, width: u32) -> Self {
        Bv::new(width, self.bits)
    }

    pub fn slice(&self, hi: u32, lo: u32) -> Self {
        assert!(hi >= lo && hi < self.width, "slice [{hi}:{lo}] of {}-bit value", self.width);
        Bv::new(hi - lo + 1, self.bits >> lo)
    }

    /// `self` becomes the most significant part.
    pub fn concat(&self, low: &Bv) -> Self {
        let width = self.width + low.width;
        let hi = if low.width >= 128 { 0 } else { self.bits << low.width };
        Bv::new(width, hi | low.bits)
    }

    pub fn not(&self) -> Self {
        Bv::new(self.width, !self.bits)
    }

    pub fn neg(&self) -> Self {
        Bv::new(self.width, self.bits.wrapping_neg())
    }

    pub fn add(&self, o: &Bv) -> Self {
        Bv::new(self.width, self.bits.wrapping_add(o.bits))
    }

    pub fn sub(&self, o: &Bv) -> Self {
        Bv::new(self.width, self.bits.wrapping_sub(o.bits))
    }

    pub fn mul(&self, o: &Bv) -> Self {
        Bv::new(self.width, self.bits.wrapping_mul(o.bits))
    }

    pub fn udiv(&self, o: &Bv) -> Self {
        if o.bits == 0 {
            Bv::ones(self.width)
        } else {
            Bv::new(self.width, self.bits / o.bits)
        }
    }

    pub fn urem(&self, o: &Bv) -> Self {
        if o.bits == 0 {
            *self
        } else {
            Bv::new(self.width, self.bits % o.bits)
        }
    }

    pub fn and(&self, o: &Bv) -> Self {
        Bv::new(self.width, self.bits & o.bits)
    }

    pub fn or(&self, o: &Bv) -> Self {
        Bv::new(self.width, self.bits | o.bits)
    }

    pub fn xor(&self, o: &Bv) -> Self {
        Bv::new(self.width, self.bits ^ o.bits)
    }

    pub fn shl(&self, amount: &Bv) -> Self {
        if amount.bits >= self.width as u128 {
            Bv::zero(self.width)
        } else {
            Bv::new(self.width, self.bits << amount.bits)
        }
    }

    pub fn lshr(&self, amount: &Bv) -> Self {
        if amount.bits >= self.width as u128 {
            Bv::zero(self.width)
        } else {
            Bv::new(self.width, self.bits >> amount.bits)
        }
    }

    pub fn reduce_and(&self) -> Self {
        Bv::from_bool(self.bits == mask(self.width))
    }

    pub fn reduce_or(&self) -> Self {
        Bv::from_bool(self.bits != 0)
    }

    pub fn reduce_xor(&self) -> Self {
        Bv::from_bool(self.bits.count_ones() % 2 == 1)
    }

    pub fn to_bin_string(&self) -> String {
        (0..self.width)
            .rev()
            .map(|i| if self.bit(i) { '1' } else { '0' })
            .collect()
    }

    /// Hex digits, zero padded to `ceil(width / 4)`.
    pub fn to_hex_string(&self) -> String {
        let digits = self.width.div_ceil(4) as usize;
        format!("{:0digits$x}", self.bits)
    }

    /// Parses binary digits (`0`/`1`, `_` separators ignored) of the given width.
    pub fn parse_bin(width: u32, digits: &str) -> Option<Self> {
        let mut bits = 0u128;
        let mut n = 0;
        for c in digits.chars() {
            match c {
                '0' | '1' => {
                    if n >= MAX_WIDTH {
                        return None;
                    }
                    bits = (bits << 1) | (c == '1') as u128;
                    n += 1;
                }
                '_' => {}
                _ => return None,
            }
        }
        if n == 0 {
            return None;
        }
        Some(Bv::new(width, bits))
    }

    /// Parses a tabular cell: `0x`-prefixed hex or plain binary digits.
    pub fn parse_cell(width: u32, text: &str) -> Option<Self> {
        if let Some(hex) = text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
            let hex: String = hex.chars().filter(|c| *c != '_').collect();
            let v = u128::from_str_radix(&hex, 16).ok()?;
            if width < 128 && v > mask(width) {
                return None;
            }
            Some(Bv::new(width, v))
        } else {
            let v = Bv::parse_bin(width, text)?;
            let raw: String = text.chars().filter(|c| *c != '_').collect();
            let significant = raw.trim_start_matches('0').len() as u32;
            if significant > width {
                return None;
            }
            Some(v)
        }
    }
}

impl fmt::Debug for Bv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}'h{}", self.width, self.to_hex_string())
    }
}

impl fmt::Display for Bv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.width == 1 {
            write!(f, "{}", self.bits)
        } else {
            write!(f, "{}'h{}", self.width, self.to_hex_string())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wraps_and_masks() {
        let a = Bv::new(3, 7);
        assert_eq!(a.add(&Bv::new(3, 1)).bits(), 0);
        assert_eq!(Bv::new(4, 0x1f).bits(), 0xf);
        assert_eq!(Bv::new(128, u128::MAX).add(&Bv::new(128, 1)).bits(), 0);
    }

    #[test]
    fn div_by_zero_follows_smtlib() {
        let a = Bv::new(4, 9);
        assert_eq!(a.udiv(&Bv::zero(4)), Bv::ones(4));
        assert_eq!(a.urem(&Bv::zero(4)), a);
    }

    #[test]
    fn slice_and_concat() {
        let a = Bv::new(8, 0b1010_0110);
        assert_eq!(a.slice(7, 4).bits(), 0b1010);
        assert_eq!(a.slice(3, 0).concat(&a.slice(7, 4)).bits(), 0b0110_1010);
        let wide = Bv::new(64, 1).concat(&Bv::new(64, 2));
        assert_eq!(wide.width(), 128);
        assert_eq!(wide.bits(), (1u128 << 64) | 2);
    }

    #[test]
    fn shifts_saturate() {
        let a = Bv::new(4, 0b0011);
        assert_eq!(a.shl(&Bv::new(8, 2)).bits(), 0b1100);
        assert_eq!(a.shl(&Bv::new(8, 4)).bits(), 0);
        assert_eq!(a.lshr(&Bv::new(8, 1)).bits(), 0b0001);
    }

    #[test]
    fn reductions() {
        assert!(Bv::new(3, 7).reduce_and().is_true());
        assert!(!Bv::new(3, 6).reduce_and().is_true());
        assert!(Bv::new(3, 6).reduce_or().is_true());
        assert!(!Bv::new(3, 6).reduce_xor().is_true());
        assert!(Bv::new(3, 7).reduce_xor().is_true());
    }

    #[test]
    fn cells() {
        assert_eq!(Bv::parse_cell(8, "0xff"), Some(Bv::new(8, 255)));
        assert_eq!(Bv::parse_cell(3, "101"), Some(Bv::new(3, 5)));
        assert_eq!(Bv::parse_cell(2, "101"), None);
        assert_eq!(Bv::parse_cell(4, "0x1f"), None);
        assert_eq!(Bv::new(9, 0x1ab).to_hex_string(), "1ab");
        assert_eq!(Bv::new(5, 3).to_bin_string(), "00011");
    }
}
