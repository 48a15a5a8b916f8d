//! Finite binary words, one-sided sequences with eventually periodic tails,
//! and constant-length-2 substitutions.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;

/// A finite binary word over {0,1}.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Word(pub Vec<u8>);

impl Word {
    pub fn empty() -> Self {
        Word(Vec::new())
    }

    /// Parse from a string of '0'/'1' characters.
    pub fn parse(s: &str) -> Result<Self> {
        let mut bits = Vec::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '0' => bits.push(0),
                '1' => bits.push(1),
                _ => return Err(Error::OutOfRange(format!("invalid symbol {c:?} in word"))),
            }
        }
        Ok(Word(bits))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    /// Symbol-wise complement (0 <-> 1).
    pub fn flip(&self) -> Word {
        Word(self.0.iter().map(|&b| 1 - b).collect())
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    pub fn subword(&self, start: usize, len: usize) -> Word {
        Word(self.0[start..start + len].to_vec())
    }

    /// Number of 1-bits.
    pub fn ones(&self) -> usize {
        self.0.iter().filter(|&&b| b == 1).count()
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            write!(f, "{}", b)?;
        }
        Ok(())
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word(\"{self}\")")
    }
}

/// A one-sided infinite binary sequence, represented as an explicit finite
/// prefix followed by a periodically repeated tail.
///
/// Every digit is well defined; operations that the contract ties to the
/// explicit prefix check `prefix.len()` and raise
/// [`Error::InsufficientPrefix`] rather than silently relying on the tail.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Point {
    pub prefix: Word,
    pub tail: Word,
}

impl Point {
    pub fn new(prefix: Word, tail: Word) -> Result<Self> {
        if tail.is_empty() {
            return Err(Error::OutOfRange("point tail must be nonempty".into()));
        }
        Ok(Point { prefix, tail })
    }

    /// Convenience constructor from string literals.
    pub fn parse(prefix: &str, tail: &str) -> Result<Self> {
        Point::new(Word::parse(prefix)?, Word::parse(tail)?)
    }

    /// The i-th digit (total: the tail extends the prefix periodically).
    #[inline]
    pub fn digit(&self, i: usize) -> u8 {
        let p = self.prefix.len();
        if i < p {
            self.prefix.0[i]
        } else {
            self.tail.0[(i - p) % self.tail.len()]
        }
    }

    /// First `n` digits as a word.
    pub fn head(&self, n: usize) -> Word {
        Word((0..n).map(|i| self.digit(i)).collect())
    }

    /// The shifted point sigma^k(x).
    pub fn shift(&self, k: usize) -> Point {
        let p = self.prefix.len();
        if k <= p {
            Point {
                prefix: Word(self.prefix.0[k..].to_vec()),
                tail: self.tail.clone(),
            }
        } else {
            let t = self.tail.len();
            let r = (k - p) % t;
            let mut rot = self.tail.0[r..].to_vec();
            rot.extend_from_slice(&self.tail.0[..r]);
            Point {
                prefix: Word::empty(),
                tail: Word(rot),
            }
        }
    }

    /// Symbol-wise complement.
    pub fn flip(&self) -> Point {
        Point {
            prefix: self.prefix.flip(),
            tail: self.tail.flip(),
        }
    }
}

/// A binary substitution given by the images of 0 and 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Substitution {
    pub image0: Word,
    pub image1: Word,
}

impl Substitution {
    pub fn new(image0: Word, image1: Word) -> Result<Self> {
        if image0.is_empty() || image1.is_empty() {
            return Err(Error::OutOfRange("substitution images must be nonempty".into()));
        }
        Ok(Substitution { image0, image1 })
    }

    /// The Thue-Morse substitution 0 -> 01, 1 -> 10.
    pub fn thue_morse() -> Self {
        Substitution {
            image0: Word(vec![0, 1]),
            image1: Word(vec![1, 0]),
        }
    }

    /// The period-doubling substitution 0 -> 11, 1 -> 10.
    pub fn period_doubling() -> Self {
        Substitution {
            image0: Word(vec![1, 1]),
            image1: Word(vec![1, 0]),
        }
    }

    #[inline]
    pub fn image(&self, b: u8) -> &Word {
        if b == 0 {
            &self.image0
        } else {
            &self.image1
        }
    }

    /// Apply once.
    pub fn apply_once(&self, w: &Word, cap: usize) -> Result<Word> {
        let out_len: usize = w.0.iter().map(|&b| self.image(b).len()).sum();
        if out_len > cap {
            return Err(Error::CapExceeded { required: out_len, cap });
        }
        let mut out = Vec::with_capacity(out_len);
        for &b in &w.0 {
            out.extend_from_slice(&self.image(b).0);
        }
        Ok(Word(out))
    }

    /// Apply `iterations` times, guarding every intermediate length by `cap`.
    pub fn apply(&self, w: &Word, iterations: usize, cap: usize) -> Result<Word> {
        let mut cur = w.clone();
        for _ in 0..iterations {
            cur = self.apply_once(&cur, cap)?;
        }
        Ok(cur)
    }

    /// Apply to a point: a constant-length substitution maps an eventually
    /// periodic sequence to an eventually periodic sequence, exactly.
    pub fn apply_point(&self, x: &Point, iterations: usize, cap: usize) -> Result<Point> {
        let prefix = self.apply(&x.prefix, iterations, cap)?;
        let tail = self.apply(&x.tail, iterations, cap)?;
        Point::new(prefix, tail)
    }

    /// First `length` digits of the one-sided fixed point seeded at `seed`.
    ///
    /// Requires image(seed) to start with `seed` so that the iteration
    /// stabilizes digit by digit.
    pub fn fixed_point_prefix(&self, seed: u8, length: usize) -> Result<Word> {
        if length == 0 {
            return Err(Error::OutOfRange("length must be >= 1".into()));
        }
        if self.image(seed).0[0] != seed {
            return Err(Error::OutOfRange(format!(
                "image of {seed} does not start with {seed}; no one-sided fixed point"
            )));
        }
        let mut cur = Word(vec![seed]);
        while cur.len() < length {
            // Each iteration at least doubles the length for the built-ins.
            cur = self.apply_once(&cur, 4 * length.max(2))?;
        }
        cur.0.truncate(length);
        Ok(cur)
    }
}

/// First `length` digits of the Thue-Morse fixed point rho_seed.
pub fn thue_morse_prefix(seed: u8, length: usize) -> Word {
    // Direct formula: digit i of rho_0 is the bit-count parity of i.
    let mut bits = Vec::with_capacity(length);
    for i in 0..length {
        let parity = (i.count_ones() & 1) as u8;
        bits.push(if seed == 0 { parity } else { 1 - parity });
    }
    Word(bits)
}
