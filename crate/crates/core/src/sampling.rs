//! Seeded, reproducible generators for point and word ensembles used by
//! tests and the command-line tools.

use crate::error::{Error, Result};
use crate::language::Language;
use crate::word::{Point, Word};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The deterministic generator used everywhere: same seed, same ensemble.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform random binary word.
pub fn random_word(rng: &mut ChaCha8Rng, len: usize) -> Word {
    Word((0..len).map(|_| rng.gen_range(0..=1u8)).collect())
}

/// Uniform random factor of the given length.
pub fn random_factor(lang: &Language, rng: &mut ChaCha8Rng, len: usize) -> Result<Word> {
    let all = lang.factors_of_len(len)?;
    Ok(all[rng.gen_range(0..all.len())].clone())
}

/// A random point with exact distance level `level`: a uniformly chosen
/// non-right-special factor of that length, followed by its inadmissible
/// one-symbol extension, padded with random digits to `prefix_len` and
/// closed with a short random tail.
pub fn random_point_with_level(
    lang: &Language,
    rng: &mut ChaCha8Rng,
    level: usize,
    prefix_len: usize,
) -> Result<Point> {
    if level + 1 > lang.max_len {
        return Err(Error::OutOfRange(format!(
            "level {level} needs language maxLen >= {}",
            level + 1
        )));
    }
    if prefix_len < level + 1 {
        return Err(Error::OutOfRange(format!(
            "prefixLen {prefix_len} shorter than level + 1 = {}",
            level + 1
        )));
    }
    loop {
        let w = random_factor(lang, rng, level)?;
        let mut ext0 = w.bits().to_vec();
        ext0.push(0);
        let mut ext1 = w.bits().to_vec();
        ext1.push(1);
        let (f0, f1) = (lang.is_factor(&ext0), lang.is_factor(&ext1));
        if f0 && f1 {
            continue; // right-special: both extensions stay admissible
        }
        let mut prefix = if f0 { ext1 } else { ext0 };
        while prefix.len() < prefix_len {
            prefix.push(rng.gen_range(0..=1u8));
        }
        let tail_len = rng.gen_range(1..=8usize);
        let tail = random_word(rng, tail_len);
        return Point::new(Word(prefix), tail);
    }
}

/// A random point whose admissible window is a prefix of one of the two
/// substitution fixed points: rho-prefix of length `level`, followed by the
/// flipped next digit, random padding to `prefix_len`, and a short random
/// tail. Lengths at which the rho-prefix is right-special (so the flip stays
/// admissible) are re-rolled.
pub fn random_anchored_point(
    lang: &Language,
    rng: &mut ChaCha8Rng,
    level: usize,
    prefix_len: usize,
) -> Result<Point> {
    if level + 1 > lang.max_len {
        return Err(Error::OutOfRange(format!(
            "level {level} needs language maxLen >= {}",
            level + 1
        )));
    }
    if prefix_len < level + 1 {
        return Err(Error::OutOfRange(format!(
            "prefixLen {prefix_len} shorter than level + 1 = {}",
            level + 1
        )));
    }
    let seed = rng.gen_range(0..=1u8);
    let rho = crate::word::thue_morse_prefix(seed, level + 1);
    let mut prefix = rho.bits()[..level].to_vec();
    prefix.push(1 - rho.bits()[level]);
    if lang.is_factor(&prefix) {
        // Right-special prefix (length 2^k or 3*2^k): the flip stays
        // admissible and the level would overshoot.
        return Err(Error::OutOfRange(format!(
            "rho-prefix of length {level} is right-special"
        )));
    }
    while prefix.len() < prefix_len {
        prefix.push(rng.gen_range(0..=1u8));
    }
    let tail_len = rng.gen_range(1..=8usize);
    let tail = random_word(rng, tail_len);
    Point::new(Word(prefix), tail)
}

/// A random anchored point with level drawn uniformly from [lo, hi];
/// right-special lengths are redrawn.
pub fn random_anchored_level_point(
    lang: &Language,
    rng: &mut ChaCha8Rng,
    lo: usize,
    hi: usize,
    prefix_len: usize,
) -> Result<Point> {
    if lo < 1 || lo > hi {
        return Err(Error::OutOfRange(format!("bad level range [{lo}, {hi}]")));
    }
    if hi + 1 > lang.max_len || prefix_len < hi + 1 {
        return Err(Error::OutOfRange(format!(
            "range [{lo}, {hi}] needs language maxLen and prefixLen > {hi}"
        )));
    }
    let mut last = Error::OutOfRange(format!("no usable length in [{lo}, {hi}]"));
    for _ in 0..1000 {
        let level = rng.gen_range(lo..=hi);
        match random_anchored_point(lang, rng, level, prefix_len) {
            Err(e @ Error::OutOfRange(_)) => last = e,
            other => return other,
        }
    }
    Err(last)
}

/// A random point with level drawn uniformly from [lo, hi].
pub fn random_level_point(
    lang: &Language,
    rng: &mut ChaCha8Rng,
    lo: usize,
    hi: usize,
    prefix_len: usize,
) -> Result<Point> {
    if lo < 1 || lo > hi {
        return Err(Error::OutOfRange(format!("bad level range [{lo}, {hi}]")));
    }
    let level = rng.gen_range(lo..=hi);
    random_point_with_level(lang, rng, level, prefix_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::language::Level;

    #[test]
    fn levels_are_exact_and_reproducible() {
        let lang = Language::build(24).unwrap();
        let mut r1 = rng(0);
        let mut r2 = rng(0);
        for _ in 0..50 {
            let a = random_level_point(&lang, &mut r1, 8, 16, 64).unwrap();
            let b = random_level_point(&lang, &mut r2, 8, 16, 64).unwrap();
            assert_eq!(a, b);
            let lvl = lang.admissible_level(&a, 20).unwrap();
            match lvl {
                Level::Finite(m) => assert!((8..=16).contains(&m), "level {m}"),
                Level::Infinite => panic!("sampled point saturated the cap"),
            }
        }
    }

    #[test]
    fn requested_level_is_hit() {
        let lang = Language::build(24).unwrap();
        let mut r = rng(7);
        for level in [3usize, 5, 9, 14] {
            for _ in 0..10 {
                let x = random_point_with_level(&lang, &mut r, level, 40).unwrap();
                assert_eq!(
                    lang.admissible_level(&x, 20).unwrap(),
                    Level::Finite(level)
                );
                assert_eq!(x.prefix.len(), 40);
            }
        }
    }

    #[test]
    fn anchored_points_have_exact_levels_and_rho_prefix() {
        use crate::word::thue_morse_prefix;
        let lang = Language::build(24).unwrap();
        let mut r = rng(3);
        let rhos = [thue_morse_prefix(0, 20), thue_morse_prefix(1, 20)];
        for _ in 0..50 {
            let x = random_anchored_level_point(&lang, &mut r, 8, 16, 64).unwrap();
            let m = match lang.admissible_level(&x, 20).unwrap() {
                Level::Finite(m) => m,
                Level::Infinite => panic!("anchored point saturated the cap"),
            };
            assert!((8..=16).contains(&m), "level {m}");
            let pre: Vec<u8> = (0..m).map(|i| x.digit(i)).collect();
            assert!(rhos.iter().any(|rho| rho.bits()[..m] == pre[..]));
        }
        // Right-special lengths (2^k) are rejected outright.
        assert!(random_anchored_point(&lang, &mut r, 8, 64).is_err());
        assert!(random_anchored_point(&lang, &mut r, 9, 64).is_ok());
    }

    #[test]
    fn argument_validation() {
        let lang = Language::build(12).unwrap();
        let mut r = rng(1);
        assert!(random_point_with_level(&lang, &mut r, 12, 40).is_err());
        assert!(random_point_with_level(&lang, &mut r, 5, 4).is_err());
        assert!(random_level_point(&lang, &mut r, 0, 3, 10).is_err());
    }
}
