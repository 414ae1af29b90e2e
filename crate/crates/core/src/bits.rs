//! Fixed-width outcome strings.
//!
//! Wire 0 is the most significant bit everywhere: the string `"100"` on three
//! wires is basis index 4 and means wire 0 reads 1.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const MAX_BITS: usize = 64;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString {
    n: usize,
    bits: u64,
}

impl BitString {
    pub fn new(n: usize, index: u64) -> Result<Self> {
        if n > MAX_BITS {
            return Err(Error::structural(format!("{n} bits exceeds {MAX_BITS}")));
        }
        if n < MAX_BITS && index >> n != 0 {
            return Err(Error::structural(format!("index {index} does not fit in {n} bits")));
        }
        Ok(BitString { n, bits: index })
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n <= MAX_BITS);
        BitString { n, bits: 0 }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Basis index in the statevector.
    pub fn index(&self) -> u64 {
        self.bits
    }

    pub fn bit(&self, wire: usize) -> bool {
        debug_assert!(wire < self.n);
        (self.bits >> (self.n - 1 - wire)) & 1 == 1
    }

    pub fn flip(&mut self, wire: usize) {
        debug_assert!(wire < self.n);
        self.bits ^= 1 << (self.n - 1 - wire);
    }

    pub fn with_flipped(mut self, wire: usize) -> Self {
        self.flip(wire);
        self
    }

    pub fn distance(&self, other: &BitString) -> u32 {
        debug_assert_eq!(self.n, other.n);
        (self.bits ^ other.bits).count_ones()
    }

    pub fn xor(&self, other: &BitString) -> BitString {
        debug_assert_eq!(self.n, other.n);
        BitString { n: self.n, bits: self.bits ^ other.bits }
    }

    pub fn weight(&self) -> u32 {
        self.bits.count_ones()
    }

    /// Wires that read 1, in increasing wire order.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&w| self.bit(w))
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        let mut index = 0u64;
        for &b in bits {
            index = (index << 1) | b as u64;
        }
        BitString::new(bits.len(), index)
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for w in 0..self.n {
            f.write_str(if self.bit(w) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({self})")
    }
}

impl FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::structural(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        BitString::from_bits(&bits)
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
