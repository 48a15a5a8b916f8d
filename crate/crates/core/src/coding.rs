//! The sliding-block code to the period-doubling sequence and the
//! parity-lexicographical order.

use crate::error::{Error, Result};
use crate::word::{Point, Word};
use std::cmp::Ordering;

/// Sliding-block code on finite words: output digit k is 1 iff the input
/// digits k and k+1 differ. The output is one digit shorter.
pub fn pi_word(w: &Word) -> Result<Word> {
    if w.len() < 2 {
        return Err(Error::InsufficientPrefix {
            required: 2,
            available: w.len(),
        });
    }
    Ok(Word(
        w.0.windows(2).map(|p| p[0] ^ p[1]).collect(),
    ))
}

/// Sliding-block code on points, exact: an eventually periodic sequence maps
/// to an eventually periodic sequence with the same period structure.
pub fn pi_point(x: &Point) -> Point {
    let p = x.prefix.len();
    let t = x.tail.len();
    let prefix = Word((0..p).map(|i| x.digit(i) ^ x.digit(i + 1)).collect());
    let tail = Word((p..p + t).map(|i| x.digit(i) ^ x.digit(i + 1)).collect());
    Point { prefix, tail }
}

/// Parity-lexicographical comparison of two finite words.
///
/// At the first disagreement after the common prefix w, the words are
/// ordered by the disagreeing bit, with the order reversed when w contains
/// an odd number of 1s. Equal words compare `Equal`; if one word is a strict
/// prefix of the other the comparison does not apply.
pub fn parity_lex_compare(x: &Word, y: &Word) -> Result<Ordering> {
    let mut ones = 0usize;
    for (a, b) in x.0.iter().zip(&y.0) {
        if a != b {
            let plain = a.cmp(b);
            return Ok(if ones % 2 == 0 { plain } else { plain.reverse() });
        }
        ones += *a as usize;
    }
    if x.len() == y.len() {
        Ok(Ordering::Equal)
    } else {
        Err(Error::PrefixComparable)
    }
}
