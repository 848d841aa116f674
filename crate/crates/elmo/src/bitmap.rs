//! Fixed-width port bitmaps, the unit of every forwarding decision.
//!
//! Bit `0` is the switch's first port and is the most significant bit in the
//! printed form, so a leaf with eight host ports and two uplinks renders as
//! e.g. `00010111-00` (ports 3, 5, 6, 7 set, uplinks clear).

use std::fmt;

/// Set of output ports on one switch, at most 64 ports wide.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PortBitmap {
    bits: u64,
    width: u8,
}

impl PortBitmap {
    pub const MAX_WIDTH: u8 = 64;

    /// Empty bitmap over `width` ports. Panics if `width` exceeds 64.
    pub fn empty(width: u8) -> Self {
        assert!(width <= Self::MAX_WIDTH, "bitmap width {width} > 64");
        PortBitmap { bits: 0, width }
    }

    pub fn from_ports<I: IntoIterator<Item = u8>>(width: u8, ports: I) -> Self {
        let mut bm = Self::empty(width);
        for p in ports {
            bm.set(p);
        }
        bm
    }

    /// Parse the printed form, e.g. `"00010111-00"`. `-` separators are
    /// cosmetic and ignored.
    pub fn parse(s: &str) -> Option<Self> {
        let mut bm = Self::empty(0);
        for c in s.chars() {
            match c {
                '-' => continue,
                '0' | '1' => {
                    let p = bm.width;
                    if p >= Self::MAX_WIDTH {
                        return None;
                    }
                    bm.width += 1;
                    if c == '1' {
                        bm.set(p);
                    }
                }
                _ => return None,
            }
        }
        Some(bm)
    }

    #[inline]
    pub fn width(&self) -> u8 {
        self.width
    }

    #[inline]
    pub fn set(&mut self, port: u8) {
        debug_assert!(port < self.width, "port {port} out of range {}", self.width);
        self.bits |= 1 << port;
    }

    #[inline]
    pub fn clear(&mut self, port: u8) {
        self.bits &= !(1 << port);
    }

    #[inline]
    pub fn get(&self, port: u8) -> bool {
        debug_assert!(port < self.width);
        self.bits & (1 << port) != 0
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    #[inline]
    pub fn count_ones(&self) -> u32 {
        self.bits.count_ones()
    }

    #[inline]
    pub fn union(&self, other: &Self) -> Self {
        debug_assert_eq!(self.width, other.width);
        PortBitmap { bits: self.bits | other.bits, width: self.width }
    }

    #[inline]
    pub fn intersect(&self, other: &Self) -> Self {
        debug_assert_eq!(self.width, other.width);
        PortBitmap { bits: self.bits & other.bits, width: self.width }
    }

    /// Ports set in `self` but not in `other`.
    #[inline]
    pub fn minus(&self, other: &Self) -> Self {
        debug_assert_eq!(self.width, other.width);
        PortBitmap { bits: self.bits & !other.bits, width: self.width }
    }

    #[inline]
    pub fn contains(&self, other: &Self) -> bool {
        other.bits & !self.bits == 0
    }

    /// Hamming distance, i.e. number of differing ports.
    #[inline]
    pub fn hamming(&self, other: &Self) -> u32 {
        debug_assert_eq!(self.width, other.width);
        (self.bits ^ other.bits).count_ones()
    }

    /// Extra ports a union bitmap would add on top of `self`.
    #[inline]
    pub fn union_increase(&self, other: &Self) -> u32 {
        (other.bits & !self.bits).count_ones()
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = u8> + '_ {
        let width = self.width;
        let bits = self.bits;
        (0..width).filter(move |p| bits & (1 << p) != 0)
    }

    /// Raw bit block, port 0 in the least significant position.
    #[inline]
    pub fn raw(&self) -> u64 {
        self.bits
    }

    pub fn from_raw(width: u8, bits: u64) -> Self {
        let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
        PortBitmap { bits: bits & mask, width }
    }

    /// Printed form with a `-` before port `split` (no separator if `split`
    /// is 0 or ≥ width), matching the down/up port rendering.
    pub fn display_split(&self, split: u8) -> String {
        let mut s = String::with_capacity(self.width as usize + 1);
        for p in 0..self.width {
            if p == split && split > 0 {
                s.push('-');
            }
            s.push(if self.get(p) { '1' } else { '0' });
        }
        s
    }
}

impl fmt::Display for PortBitmap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display_split(0))
    }
}

impl fmt::Debug for PortBitmap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PortBitmap({})", self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_and_display_round_trip() {
        let bm = PortBitmap::parse("00010111-00").unwrap();
        assert_eq!(bm.width(), 10);
        assert_eq!(bm.count_ones(), 4);
        assert!(bm.get(3) && bm.get(5) && bm.get(6) && bm.get(7));
        assert_eq!(bm.display_split(8), "00010111-00");
        assert_eq!(bm.to_string(), "0001011100");
    }

    #[test]
    fn set_minus_union() {
        let a = PortBitmap::from_ports(8, [3, 5, 6, 7]);
        let b = PortBitmap::from_ports(8, [2, 3, 5, 6, 7]);
        assert!(b.contains(&a));
        assert_eq!(a.union(&b), b);
        assert_eq!(b.minus(&a).count_ones(), 1);
        assert_eq!(a.hamming(&b), 1);
        assert_eq!(a.union_increase(&b), 1);
    }

    proptest! {
        #[test]
        fn union_is_superset(xa in any::<u64>(), xb in any::<u64>(), w in 1u8..=64) {
            let a = PortBitmap::from_raw(w, xa);
            let b = PortBitmap::from_raw(w, xb);
            let u = a.union(&b);
            prop_assert!(u.contains(&a) && u.contains(&b));
            // distance to a covering union equals the extra ports
            prop_assert_eq!(u.hamming(&a), u.minus(&a).count_ones());
        }

        #[test]
        fn display_parse_identity(x in any::<u64>(), w in 1u8..=64) {
            let a = PortBitmap::from_raw(w, x);
            let s = a.to_string();
            prop_assert_eq!(PortBitmap::parse(&s).unwrap(), a);
        }
    }
}
