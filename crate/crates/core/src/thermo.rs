//! Thermodynamics of the first-return system induced on a cylinder that is
//! disjoint from the subshift: return-word partition coefficients, critical
//! exponents, pressure curves, phase-transition location, and the
//! excursion-series certificates.
//!
//! The induced system fixes a cylinder word `J` that is not a factor of the
//! subshift, so every point of `[J]` sits at the same distance from it. A
//! first-return word of length `n` is a word `u` such that `u·J` begins with
//! `J` and contains no other occurrence of `J` before position `n`. The
//! coefficient `a_n(γ)` sums `exp(-γ · S_n V)` over all first-return words of
//! length `n`, where the Birkhoff sum `S_n V` is evaluated along `u·J`; for
//! the supported potentials this sum is determined by `u·J` alone, because
//! the trailing copy of `J` pins down every admissible prefix and every
//! aligned block that the potential can see.
//!
//! Coefficients are computed twice: by a dynamic program over suffix states
//! (fast, used everywhere) and by direct enumeration of all `2^n` candidate
//! words (slow, the gating oracle for the dynamic program).

use crate::error::{Error, Result};
use crate::language::{admissible_prefix_len_unbounded, is_tm_factor, Language};
use crate::potential::{Perturbation, Potential};
use crate::word::{thue_morse_prefix, Word};
use std::collections::BTreeMap;

/// Numerical floor standing in for `z = 0+` in root brackets. The partition
/// series is evaluated at this point to decide whether a positive root
/// exists at all; bisection then proceeds multiplicatively, so roots many
/// orders of magnitude below 1 are still resolved to full relative
/// precision.
const Z_FLOOR: f64 = 1e-280;

/// The induced first-return system on the cylinder `[J]`.
#[derive(Debug, Clone)]
pub struct ReturnSystem {
    /// The cylinder word; never a factor of the subshift.
    pub j: Word,
    /// The common admissible level of every point of `[J]`.
    pub delta_j: usize,
    /// Truncation order for the coefficient sequence.
    pub n_max: usize,
    /// Factor language sized so that every admissible prefix arising along
    /// a return word of length `n_max` is resolved exactly.
    pub lang: Language,
}

impl ReturnSystem {
    /// Build the induced system. Fails when the cylinder word is a factor of
    /// the subshift (the induction requires `[J]` disjoint from it).
    pub fn build(j: &Word, n_max: usize) -> Result<ReturnSystem> {
        if j.is_empty() {
            return Err(Error::OutOfRange("cylinder word must be non-empty".into()));
        }
        if is_tm_factor(j.bits()) {
            return Err(Error::CylinderIsFactor);
        }
        if !(8..=128).contains(&n_max) {
            return Err(Error::OutOfRange(format!(
                "nMax {n_max} outside supported range [8, 128]"
            )));
        }
        // On [J] the longest admissible prefix is a proper prefix of J, so
        // the level is the same for every point of the cylinder.
        let delta_j = admissible_prefix_len_unbounded(j.bits());
        let lang = Language::build(n_max.max(20) + j.len() + 1)?;
        Ok(ReturnSystem {
            j: j.clone(),
            delta_j,
            n_max,
            lang,
        })
    }
}

fn validate_potential(v: &Potential) -> Result<()> {
    match v {
        Potential::DistancePower { a, .. } => {
            if !a.is_finite() || *a <= 0.0 {
                return Err(Error::OutOfRange(format!("exponent a = {a} must be > 0")));
            }
            Ok(())
        }
        Potential::UnboundedVu { .. } => Ok(()),
        Potential::CylinderUc { .. } => Err(Error::UnsupportedPotential(
            "cylinder_uc has no locally constant return-word sums".into(),
        )),
        Potential::CylinderTable { .. } => Err(Error::UnsupportedPotential(
            "cylinder_table has no locally constant return-word sums".into(),
        )),
    }
}

/// Aligned-block windows `(tau_m, taubar_m)` for all orders whose window fits
/// inside a word of length `limit`.
fn vu_windows(limit: usize) -> Vec<(Word, Word)> {
    let mut out = Vec::new();
    let mut m = 1usize;
    while (1usize << m) <= limit {
        let t = thue_morse_prefix(0, 1 << m);
        let tb = t.flip();
        out.push((t, tb));
        m += 1;
    }
    out
}

/// Block depth of the suffix starting one position past `w[i]`: the largest
/// `m` whose leading `2^m`-window matches an order-`m` image. Within the
/// induced system this leading block determines the potential value, because
/// any longer or later window would have to run into an occurrence of the
/// cylinder word, which no image contains.
fn leading_block_depth(w: &[u8], i: usize, taus: &[(Word, Word)]) -> usize {
    let mut d = 0usize;
    for (m1, (t, tb)) in taus.iter().enumerate() {
        let len = t.len();
        if i + 1 + len > w.len() {
            break;
        }
        let win = &w[i + 1..i + 1 + len];
        if win == t.bits() || win == tb.bits() {
            d = m1 + 1;
        } else {
            break;
        }
    }
    d
}

/// Weight `exp(-γ S_n V)` of a single candidate word `u`, or `None` when `u`
/// is not a first-return word. Direct per-position evaluation; shared by the
/// brute-force oracle and the short-word path of `return_coefficients`.
fn return_word_weight(
    rs: &ReturnSystem,
    v: &Potential,
    gamma: f64,
    taus: &[(Word, Word)],
    u: &[u8],
) -> Option<f64> {
    let j = rs.j.bits();
    let jlen = j.len();
    let n = u.len();
    let mut w = Vec::with_capacity(n + jlen);
    w.extend_from_slice(u);
    w.extend_from_slice(j);
    if &w[..jlen] != j {
        return None;
    }
    for i in 1..n {
        if &w[i..i + jlen] == j {
            return None;
        }
    }
    let s: f64 = match v {
        Potential::DistancePower { a, perturbation } => (0..n)
            .map(|i| {
                let level = rs.lang.admissible_prefix_len(&w[i..]);
                (level as f64).powf(-a) + perturbation.value(*a, level)
            })
            .sum(),
        Potential::UnboundedVu { alpha } => (0..n)
            .map(|i| alpha * (leading_block_depth(&w, i, taus) as f64 - 1.0))
            .sum(),
        _ => unreachable!("validated before enumeration"),
    };
    Some((-gamma * s).exp())
}

/// Direct enumeration oracle: all `2^n` candidate words with explicit
/// first-return filtering and digit-by-digit evaluation.
pub fn brute_force_coefficients(
    rs: &ReturnSystem,
    v: &Potential,
    gamma: f64,
    n_limit: usize,
) -> Result<Vec<f64>> {
    validate_potential(v)?;
    if n_limit == 0 || n_limit > 20 {
        return Err(Error::OutOfRange(format!(
            "brute-force limit {n_limit} outside [1, 20]"
        )));
    }
    let taus = vu_windows(n_limit + rs.j.len());
    let mut out = vec![0.0f64; n_limit];
    for n in 1..=n_limit {
        let mut total = 0.0f64;
        for mask in 0u32..(1u32 << n) {
            let u: Vec<u8> = (0..n).map(|i| ((mask >> (n - 1 - i)) & 1) as u8).collect();
            if let Some(weight) = return_word_weight(rs, v, gamma, &taus, &u) {
                total += weight;
            }
        }
        out[n - 1] = total;
    }
    Ok(out)
}

/// Suffix-state engine for the coefficient dynamic program. The word is
/// built back to front: `prepend` pushes one digit onto the front of the
/// current suffix and returns the weight factor contributed by the position
/// that digit creates.
trait PrependEngine {
    type State: Clone + Ord;
    fn empty(&mut self) -> Self::State;
    fn prepend(&mut self, st: &Self::State, b: u8) -> (Self::State, f64);
    /// The first `|J| - 1` digits of the current suffix (fewer while the
    /// suffix is still shorter than that).
    fn front<'s>(&self, st: &'s Self::State) -> &'s [u8];
}

/// Would prepending `b` complete an occurrence of `j` at the front of the
/// suffix? Any interior occurrence of the cylinder word is created exactly
/// once, at the step that prepends its first digit.
fn creates_cylinder<E: PrependEngine>(eng: &E, st: &E::State, b: u8, j: &[u8]) -> bool {
    let front = eng.front(st);
    front.len() == j.len() - 1 && b == j[0] && front == &j[1..]
}

fn dp_coefficients<E: PrependEngine>(rs: &ReturnSystem, eng: &mut E) -> Vec<f64> {
    let j = rs.j.bits().to_vec();
    let jlen = j.len();
    let n_max = rs.n_max;
    let mut out = vec![0.0f64; n_max];

    // Consume the trailing copy of J; its positions lie beyond the return
    // time and carry no weight.
    let mut st = eng.empty();
    for &b in j.iter().rev() {
        st = eng.prepend(&st, b).0;
    }
    let mut weights: BTreeMap<E::State, f64> = BTreeMap::new();
    weights.insert(st, 1.0);

    for t in jlen..=n_max {
        // Close the word of length t: prepend the leading copy of J. All but
        // the very first digit of the word must not start a new occurrence.
        let mut cur: Vec<(E::State, f64)> =
            weights.iter().map(|(s, &w)| (s.clone(), w)).collect();
        for (step, &b) in j.iter().rev().enumerate() {
            let interior = step + 1 < jlen;
            let mut next: BTreeMap<E::State, f64> = BTreeMap::new();
            for (s, w) in &cur {
                if interior && creates_cylinder(eng, s, b, &j) {
                    continue;
                }
                let (ns, credit) = eng.prepend(s, b);
                *next.entry(ns).or_insert(0.0) += w * credit;
            }
            cur = next.into_iter().collect();
        }
        out[t - 1] = cur.iter().map(|(_, w)| *w).sum();
        if t == n_max {
            break;
        }
        // Grow the interior by one digit.
        let mut next: BTreeMap<E::State, f64> = BTreeMap::new();
        for (s, &w) in &weights {
            for b in [0u8, 1u8] {
                if creates_cylinder(eng, s, b, &j) {
                    continue;
                }
                let (ns, credit) = eng.prepend(s, b);
                *next.entry(ns).or_insert(0.0) += w * credit;
            }
        }
        weights = next;
    }
    out
}

/// Engine for the distance-power potential. The state is the longest
/// admissible prefix of the current suffix (interned), which determines both
/// the level of the newly created position and all future levels: any
/// admissible prefix of the extended suffix is one digit followed by an
/// admissible prefix of the old one.
struct DistanceEngine<'a> {
    lang: &'a Language,
    gamma: f64,
    a: f64,
    pert: Perturbation,
    front_len: usize,
    laps: Vec<Vec<u8>>,
    lap_ids: BTreeMap<Vec<u8>, u32>,
    trans: BTreeMap<(u8, u32), (u32, f64)>,
}

impl<'a> DistanceEngine<'a> {
    fn new(lang: &'a Language, gamma: f64, a: f64, pert: Perturbation, jlen: usize) -> Self {
        DistanceEngine {
            lang,
            gamma,
            a,
            pert,
            front_len: jlen - 1,
            laps: Vec::new(),
            lap_ids: BTreeMap::new(),
            trans: BTreeMap::new(),
        }
    }

    fn intern(&mut self, w: Vec<u8>) -> u32 {
        if let Some(&id) = self.lap_ids.get(&w) {
            return id;
        }
        let id = self.laps.len() as u32;
        self.laps.push(w.clone());
        self.lap_ids.insert(w, id);
        id
    }
}

impl PrependEngine for DistanceEngine<'_> {
    type State = (u32, Vec<u8>);

    fn empty(&mut self) -> Self::State {
        (self.intern(Vec::new()), Vec::new())
    }

    fn prepend(&mut self, st: &Self::State, b: u8) -> (Self::State, f64) {
        let (id, front) = st;
        let (nid, credit) = if let Some(&cached) = self.trans.get(&(b, *id)) {
            cached
        } else {
            let lap = self.laps[*id as usize].clone();
            // Largest q such that b followed by the first q digits of the
            // old longest admissible prefix is still admissible; prefix
            // closure makes this monotone, so binary search applies.
            let admissible = |q: usize| {
                let mut w = Vec::with_capacity(q + 1);
                w.push(b);
                w.extend_from_slice(&lap[..q]);
                self.lang.is_factor(&w)
            };
            let (mut lo, mut hi) = (0usize, lap.len());
            while lo < hi {
                let mid = (lo + hi + 1) / 2;
                if admissible(mid) {
                    lo = mid;
                } else {
                    hi = mid - 1;
                }
            }
            let mut new_lap = Vec::with_capacity(lo + 1);
            new_lap.push(b);
            new_lap.extend_from_slice(&lap[..lo]);
            let level = new_lap.len();
            let value = (level as f64).powf(-self.a) + self.pert.value(self.a, level);
            let credit = (-self.gamma * value).exp();
            let nid = self.intern(new_lap);
            self.trans.insert((b, *id), (nid, credit));
            (nid, credit)
        };
        let mut nf = Vec::with_capacity(self.front_len.min(front.len() + 1));
        nf.push(b);
        nf.extend_from_slice(&front[..front.len().min(self.front_len.saturating_sub(1))]);
        ((nid, nf), credit)
    }

    fn front<'s>(&self, st: &'s Self::State) -> &'s [u8] {
        &st.1
    }
}

fn kmp_failure(pat: &[u8]) -> Vec<u8> {
    let mut fail = vec![0u8; pat.len()];
    let mut k = 0usize;
    for i in 1..pat.len() {
        while k > 0 && pat[k] != pat[i] {
            k = fail[k - 1] as usize;
        }
        if pat[k] == pat[i] {
            k += 1;
        }
        fail[i] = k as u8;
    }
    fail
}

fn kmp_step(pat: &[u8], fail: &[u8], pos: usize, b: u8) -> usize {
    let mut p = pos;
    if p == pat.len() {
        p = fail[p - 1] as usize;
    }
    loop {
        if pat[p] == b {
            return p + 1;
        }
        if p == 0 {
            return 0;
        }
        p = fail[p - 1] as usize;
    }
}

/// Engine for the unbounded block-depth potential. The word is built back to
/// front, so the digits seen so far form the suffix in reverse order; a set
/// of pattern matchers over the reversed order-`m` images answers "does the
/// current suffix start with an order-`m` block" for every order that fits.
/// The value of a position depends on the window starting one digit later,
/// so the credit is computed from the state before the digit is prepended.
struct VuEngine {
    gamma: f64,
    alpha: f64,
    front_len: usize,
    pats: Vec<Vec<u8>>,
    fails: Vec<Vec<u8>>,
}

impl VuEngine {
    fn new(gamma: f64, alpha: f64, jlen: usize, n_max: usize) -> Self {
        let mut pats = Vec::new();
        for (t, tb) in vu_windows(n_max + jlen) {
            let mut r = t.bits().to_vec();
            r.reverse();
            pats.push(r);
            let mut rb = tb.bits().to_vec();
            rb.reverse();
            pats.push(rb);
        }
        let fails = pats.iter().map(|p| kmp_failure(p)).collect();
        VuEngine {
            gamma,
            alpha,
            front_len: jlen - 1,
            pats,
            fails,
        }
    }

    /// Largest order whose window matches at the front of the suffix.
    fn depth(&self, st: &[u8]) -> usize {
        let mut d = 0usize;
        for m1 in 0..self.pats.len() / 2 {
            let full0 = st[2 * m1] as usize == self.pats[2 * m1].len();
            let full1 = st[2 * m1 + 1] as usize == self.pats[2 * m1 + 1].len();
            if full0 || full1 {
                d = m1 + 1;
            }
        }
        d
    }
}

impl PrependEngine for VuEngine {
    // Matcher positions for every pattern, then the leading suffix digits.
    type State = Vec<u8>;

    fn empty(&mut self) -> Self::State {
        vec![0u8; self.pats.len()]
    }

    fn prepend(&mut self, st: &Self::State, b: u8) -> (Self::State, f64) {
        let d = self.depth(st) as f64;
        let credit = (-self.gamma * self.alpha * (d - 1.0)).exp();
        let np = self.pats.len();
        let mut ns = Vec::with_capacity(np + self.front_len);
        for (i, pat) in self.pats.iter().enumerate() {
            ns.push(kmp_step(pat, &self.fails[i], st[i] as usize, b) as u8);
        }
        ns.push(b);
        let old_front = &st[np..];
        ns.extend_from_slice(&old_front[..old_front.len().min(self.front_len.saturating_sub(1))]);
        (ns, credit)
    }

    fn front<'s>(&self, st: &'s Self::State) -> &'s [u8] {
        &st[self.pats.len()..]
    }
}

/// Partition coefficients `a_n(γ)`, `n = 1..n_max`, by the suffix-state
/// dynamic program (words shorter than the cylinder word are enumerated
/// directly; there are at most `2^{|J|-1}` of them).
pub fn return_coefficients(rs: &ReturnSystem, v: &Potential, gamma: f64) -> Result<Vec<f64>> {
    validate_potential(v)?;
    if !gamma.is_finite() {
        return Err(Error::OutOfRange(format!("gamma = {gamma} must be finite")));
    }
    let jlen = rs.j.len();
    let mut out = match v {
        Potential::DistancePower { a, perturbation } => {
            let mut eng = DistanceEngine::new(&rs.lang, gamma, *a, perturbation.clone(), jlen);
            dp_coefficients(rs, &mut eng)
        }
        Potential::UnboundedVu { alpha } => {
            let mut eng = VuEngine::new(gamma, *alpha, jlen, rs.n_max);
            dp_coefficients(rs, &mut eng)
        }
        _ => unreachable!("validated above"),
    };
    let taus = vu_windows(rs.n_max + jlen);
    for n in 1..jlen.min(rs.n_max + 1) {
        let mut total = 0.0f64;
        for mask in 0u32..(1u32 << n) {
            let u: Vec<u8> = (0..n).map(|i| ((mask >> (n - 1 - i)) & 1) as u8).collect();
            if let Some(weight) = return_word_weight(rs, v, gamma, &taus, &u) {
                total += weight;
            }
        }
        out[n - 1] = total;
    }
    for (i, an) in out.iter().enumerate() {
        if !an.is_finite() {
            return Err(Error::OutOfRange(format!(
                "coefficient a_{} is not finite at gamma = {gamma}",
                i + 1
            )));
        }
    }
    Ok(out)
}

/// Geometric growth ratio estimated from the last coefficients; 0 when the
/// tail vanishes (no completion possible).
pub fn tail_ratio(coeffs: &[f64]) -> f64 {
    let n = coeffs.len();
    for w in [4usize, 2, 1] {
        if n > w && coeffs[n - 1] > 0.0 && coeffs[n - 1 - w] > 0.0 {
            return (coeffs[n - 1] / coeffs[n - 1 - w]).powf(1.0 / w as f64);
        }
    }
    0.0
}

/// Truncated partition series `Z(z) = Σ a_n e^{-nz}` completed by a
/// geometric tail fitted to the last coefficients. Returns `+∞` when the
/// fitted tail diverges at this `z` (the series is past its abscissa).
pub fn partition_value(coeffs: &[f64], z: f64) -> f64 {
    let mut sum = 0.0f64;
    for (i, &an) in coeffs.iter().enumerate() {
        sum += an * (-((i + 1) as f64) * z).exp();
    }
    let r = tail_ratio(coeffs);
    if r > 0.0 {
        let q = r * (-z).exp();
        if q >= 1.0 {
            return f64::INFINITY;
        }
        let n = coeffs.len() as f64;
        sum += coeffs[coeffs.len() - 1] * (-n * z).exp() * q / (1.0 - q);
    }
    sum
}

/// Root of `Z(z) = 1` in `z > 0`, or `None` when the completed series
/// already sits below 1 at `z = 0+` (the pressure-zero regime). Bisection is
/// multiplicative so that roots far below 1 keep full relative precision.
pub fn pressure_root(coeffs: &[f64]) -> Option<f64> {
    let mut hi = std::f64::consts::LN_2 + 1.0;
    while partition_value(coeffs, hi) >= 1.0 {
        hi += 1.0;
        if hi > 64.0 {
            return None; // pathological coefficients; no finite bracket
        }
    }
    if partition_value(coeffs, Z_FLOOR) <= 1.0 {
        return None;
    }
    let (mut llo, mut lhi) = (Z_FLOOR.ln(), hi.ln());
    for _ in 0..200 {
        let lmid = 0.5 * (llo + lhi);
        if partition_value(coeffs, lmid.exp()) >= 1.0 {
            llo = lmid;
        } else {
            lhi = lmid;
        }
    }
    Some((0.5 * (llo + lhi)).exp())
}

/// Tail-slope estimate of the abscissa of convergence, with a
/// window-halving stability delta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZcEstimate {
    /// Least-squares slope of `log a_n` over `n ∈ [nMax/2, nMax]`;
    /// `-∞` when the tail is identically zero.
    pub value: f64,
    /// Absolute change of the slope when the window is halved again.
    pub delta: f64,
}

fn ls_slope(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom == 0.0 {
        return None;
    }
    Some((n * sxy - sx * sy) / denom)
}

pub fn zc_estimate(coeffs: &[f64]) -> ZcEstimate {
    let n = coeffs.len();
    let window = |lo: usize| -> Vec<(f64, f64)> {
        (lo..=n)
            .filter(|&k| coeffs[k - 1] > 0.0)
            .map(|k| (k as f64, coeffs[k - 1].ln()))
            .collect()
    };
    let full = window(n / 2);
    let value = match ls_slope(&full) {
        Some(s) => s,
        None => {
            return ZcEstimate {
                value: f64::NEG_INFINITY,
                delta: 0.0,
            }
        }
    };
    let delta = match ls_slope(&window(3 * n / 4)) {
        Some(s) => (s - value).abs(),
        None => f64::INFINITY,
    };
    ZcEstimate { value, delta }
}

/// Pressure and critical-exponent curves over a γ grid.
#[derive(Debug, Clone)]
pub struct PressureCurve {
    pub gamma_grid: Vec<f64>,
    pub z_star: Vec<Option<f64>>,
    pub z_c: Vec<ZcEstimate>,
    pub pressure: Vec<f64>,
    /// Bracket `(lo, hi)` around the γ at which the positive root
    /// disappears, refined to relative width `10^{-3}`; `None` when the root
    /// survives across the whole grid.
    pub transition_gamma: Option<(f64, f64)>,
}

/// Pressure curve on an ascending γ grid: per grid point the root `z*`, the
/// tail-slope estimate, and `pressure = max(z*, 0)`; if the root disappears
/// inside the grid, the transition point is bracketed by bisection in γ.
pub fn pressure_curve(rs: &ReturnSystem, v: &Potential, grid: &[f64]) -> Result<PressureCurve> {
    if grid.is_empty() {
        return Err(Error::OutOfRange("empty gamma grid".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::OutOfRange("gamma grid must be strictly ascending".into()));
    }
    let mut z_star = Vec::with_capacity(grid.len());
    let mut z_c = Vec::with_capacity(grid.len());
    let mut pressure = Vec::with_capacity(grid.len());
    for &g in grid {
        let coeffs = return_coefficients(rs, v, g)?;
        let root = pressure_root(&coeffs);
        z_c.push(zc_estimate(&coeffs));
        pressure.push(root.unwrap_or(0.0).max(0.0));
        z_star.push(root);
    }
    let mut transition_gamma = None;
    for i in 0..grid.len() - 1 {
        if z_star[i].is_some() && z_star[i + 1].is_none() {
            let has_root = |g: f64| -> Result<bool> {
                Ok(pressure_root(&return_coefficients(rs, v, g)?).is_some())
            };
            let (mut lo, mut hi) = (grid[i], grid[i + 1]);
            while hi - lo > 1e-3 * lo.max(1e-6) {
                let mid = 0.5 * (lo + hi);
                if has_root(mid)? {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            transition_gamma = Some((lo, hi));
            break;
        }
    }
    Ok(PressureCurve {
        gamma_grid: grid.to_vec(),
        z_star,
        z_c,
        pressure,
        transition_gamma,
    })
}

/// Truncation self-consistency: the shift of the pressure root when the
/// coefficient sequence is cut to half its order. 0 when the root is absent
/// at both orders, `+∞` when truncation flips its existence.
pub fn nmax_stability(rs: &ReturnSystem, v: &Potential, gamma: f64) -> Result<f64> {
    let coeffs = return_coefficients(rs, v, gamma)?;
    let full = pressure_root(&coeffs);
    let half = pressure_root(&coeffs[..rs.n_max / 2]);
    Ok(match (full, half) {
        (None, None) => 0.0,
        (Some(a), Some(b)) => (a - b).abs(),
        _ => f64::INFINITY,
    })
}

/// Excursion-series bounds at `z = 0` for the distance-power potential with
/// exponent `0 < a < 1`, plus the closed-form upper bound used to
/// cross-check the direct summation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcursionBounds {
    /// Excursion cluster sum over gaps `d - b = 2^k`.
    pub b0: f64,
    /// Excursion cluster sum over gaps `d - b = 3·2^k`.
    pub c0: f64,
    /// Closed-form upper bound for `b0` (may be `+∞` for small γ).
    pub closed_bound: f64,
    /// False when a truncation cap was hit before the relative tail
    /// threshold.
    pub converged: bool,
}

pub fn excursion_bounds(a: f64, gamma: f64) -> Result<ExcursionBounds> {
    if !(0.0 < a && a < 1.0) {
        return Err(Error::OutOfRange(format!("a = {a} must lie in (0, 1)")));
    }
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::OutOfRange(format!("gamma = {gamma} must be positive")));
    }
    let mut converged = true;
    let c1 = gamma / (1.0 - a);
    // Inner j-sums and the outer k-sum truncate when a term drops below
    // 1e-10 of the running sum.
    let mut series = |j_start: usize, base_coeff: f64| -> f64 {
        let mut total = 0.0f64;
        for k in 4..=300usize {
            let pow_k = (2f64).powf(k as f64 * (1.0 - a));
            let mut jsum = 0.0f64;
            let mut j = j_start;
            loop {
                let d = (2f64).powi(k as i32) * (1.0 + j as f64 / 2.0);
                let term = (-c1 * (d.powf(1.0 - a) - base_coeff * pow_k)).exp();
                jsum += term;
                if term <= 1e-10 * jsum && j > j_start + 4 {
                    break;
                }
                if j > 10_000_000 {
                    converged = false;
                    break;
                }
                j += 1;
            }
            total += jsum;
            if jsum <= 1e-10 * total && k > 8 {
                break;
            }
        }
        total
    };
    let b0 = series(1, 1.0);
    let c0 = series(5, (3f64).powf(1.0 - a));
    let mut closed_bound = 0.0f64;
    for k in 4..=300usize {
        let x = gamma * (2f64).powf(k as f64 * (1.0 - a));
        if x <= 1.0 {
            closed_bound = f64::INFINITY;
            break;
        }
        let term = (1.0 + 3.0 / (x - 1.0)) * (2f64 / 3.0).powf(x);
        closed_bound += term;
        if term < 1e-16 * closed_bound.max(1e-300) && k > 8 {
            break;
        }
    }
    Ok(ExcursionBounds {
        b0,
        c0,
        converged,
    closed_bound,
    })
}

/// The free-path absorption parameters: a uniform `(1 - ε₀)` rescaling of γ
/// applied beyond length `n0`. The conservative implementation rescales
/// globally.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreePathConfig {
    pub epsilon0: f64,
    pub n0: usize,
}

impl Default for FreePathConfig {
    fn default() -> Self {
        FreePathConfig {
            epsilon0: 0.0,
            n0: 0,
        }
    }
}

/// The transfer-sum majorant whose value below 1 certifies that the
/// critical exponent has reached 0: a geometric free-path factor times a
/// geometric series over excursion clusters. `None` when any of the
/// geometric-domain guards fails (the bound is then vacuous, not violated).
///
/// The free-path rate uses ε = 5^{-a}: between excursions the orbit keeps
/// its admissible level at 5 or less (the cylinder word pins the first
/// return at distance at least 5), so the potential stays at or above
/// `5^{-a}` there.
pub fn certificate_majorant(a: f64, gamma: f64) -> Result<Option<f64>> {
    let eps = 5f64.powf(-a);
    let t = 2.0 * (-eps * gamma).exp();
    if t >= 1.0 {
        return Ok(None);
    }
    let eb = excursion_bounds(a, gamma)?;
    if !eb.converged {
        return Ok(None);
    }
    let s = eb.b0 + eb.c0;
    if s >= 1.0 {
        return Ok(None);
    }
    let inner = (t / (1.0 - t)) * (s / (1.0 - s));
    if inner >= 1.0 {
        return Ok(None);
    }
    let first = 32.0 * (-5.0 * eps * gamma).exp() / (1.0 - t);
    Ok(Some(first / (1.0 - inner)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaCertificate {
    /// Smallest grid γ at which the majorant is below 1.
    pub gamma0: f64,
    /// The majorant value there.
    pub majorant: f64,
    /// The free-path rate used.
    pub epsilon: f64,
}

/// Scan a fixed γ grid (step 1/4) for the smallest point where the full
/// majorant drops below 1.
pub fn gamma_certificate(a: f64) -> Result<GammaCertificate> {
    gamma_certificate_with(a, &FreePathConfig::default())
}

pub fn gamma_certificate_with(a: f64, fp: &FreePathConfig) -> Result<GammaCertificate> {
    if !(0.0..1.0).contains(&fp.epsilon0) {
        return Err(Error::OutOfRange(format!(
            "epsilon0 = {} must lie in [0, 1)",
            fp.epsilon0
        )));
    }
    for i in 1..=4000usize {
        let gamma = 0.25 * i as f64;
        let effective = gamma * (1.0 - fp.epsilon0);
        if effective <= 0.0 {
            continue;
        }
        if let Some(m) = certificate_majorant(a, effective)? {
            if m < 1.0 {
                return Ok(GammaCertificate {
                    gamma0: gamma,
                    majorant: m,
                    epsilon: 5f64.powf(-a),
                });
            }
        }
    }
    Err(Error::NoBracket(
        "certificate grid exhausted without majorant < 1".into(),
    ))
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// CSV rendering of a pressure curve:
/// `gamma,z_star,z_c,pressure,nmax,stability_delta` (CRLF rows; absent roots
/// render as empty fields).
pub fn pressure_curve_csv(curve: &PressureCurve, n_max: usize) -> String {
    let mut out = String::from("gamma,z_star,z_c,pressure,nmax,stability_delta\r\n");
    for i in 0..curve.gamma_grid.len() {
        let zs = curve.z_star[i]
            .map(|z| format!("{z}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\r\n",
            csv_field(&format!("{}", curve.gamma_grid[i])),
            csv_field(&zs),
            csv_field(&format!("{}", curve.z_c[i].value)),
            csv_field(&format!("{}", curve.pressure[i])),
            n_max,
            csv_field(&format!("{}", curve.z_c[i].delta)),
        ));
    }
    out
}

/// Content hash of the factor language (order-independent build check):
/// FNV-1a over all factors in sorted order, per length.
pub fn language_hash(lang: &Language) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let absorb = |h: &mut u64, byte: u8| {
        *h ^= byte as u64;
        *h = h.wrapping_mul(0x0000_0100_0000_01b3);
    };
    for n in 1..=lang.max_len {
        let mut ws: Vec<&Word> = lang.factors_of_len(n).unwrap_or(&[]).iter().collect();
        ws.sort();
        for w in ws {
            for &b in w.bits() {
                absorb(&mut h, b + b'0');
            }
            absorb(&mut h, b',');
        }
        absorb(&mut h, b';');
    }
    format!("{h:016x}")
}

/// JSON run manifest (UTF-8, sorted keys) describing a pressure computation.
pub fn run_manifest_json(rs: &ReturnSystem, v: &Potential, grid: &[f64]) -> String {
    use serde_json::{json, Value};
    let mut map = BTreeMap::new();
    map.insert("delta_j".to_string(), json!(rs.delta_j));
    map.insert(
        "gamma_grid".to_string(),
        json!(grid),
    );
    map.insert(
        "j_word".to_string(),
        json!(rs
            .j
            .bits()
            .iter()
            .map(|b| char::from(b'0' + b))
            .collect::<String>()),
    );
    map.insert("language_hash".to_string(), json!(language_hash(&rs.lang)));
    map.insert("language_max_len".to_string(), json!(rs.lang.max_len));
    map.insert("n_max".to_string(), json!(rs.n_max));
    map.insert(
        "potential".to_string(),
        serde_json::from_str::<Value>(&v.spec_json()).unwrap_or(Value::Null),
    );
    map.insert(
        "tolerances".to_string(),
        json!({
            "dp_oracle_relative": 1e-12,
            "root_bisection_iterations": 200,
            "tail_relative_cutoff": 1e-10,
            "transition_bracket_relative": 1e-3
        }),
    );
    serde_json::to_string(&map).expect("manifest serialization cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::Perturbation;

    fn dp_pot(a: f64) -> Potential {
        Potential::DistancePower {
            a,
            perturbation: Perturbation::Zero,
        }
    }

    fn vu_pot() -> Potential {
        Potential::UnboundedVu { alpha: -1.0 }
    }

    fn sys(n_max: usize) -> ReturnSystem {
        ReturnSystem::build(&Word::parse("000").unwrap(), n_max).unwrap()
    }

    #[test]
    fn build_accepts_non_factors_and_rejects_factors() {
        let rs = sys(16);
        assert_eq!(rs.delta_j, 2);
        let rs2 = ReturnSystem::build(&Word::parse("111").unwrap(), 16).unwrap();
        assert_eq!(rs2.delta_j, 2);
        assert!(matches!(
            ReturnSystem::build(&Word::parse("0110").unwrap(), 16),
            Err(Error::CylinderIsFactor)
        ));
        assert!(matches!(
            ReturnSystem::build(&Word::parse("00").unwrap(), 16),
            Err(Error::CylinderIsFactor)
        ));
        assert!(ReturnSystem::build(&Word::parse("000").unwrap(), 4).is_err());
    }

    #[test]
    fn unsupported_potentials_are_rejected() {
        let rs = sys(16);
        let uc = Potential::CylinderUc { c: 1.0 };
        assert!(matches!(
            return_coefficients(&rs, &uc, 1.0),
            Err(Error::UnsupportedPotential(_))
        ));
        assert!(brute_force_coefficients(&rs, &dp_pot(0.5), 0.0, 21).is_err());
    }

    #[test]
    fn gamma_zero_counts_are_integers_with_known_values() {
        // At γ = 0 the coefficients count first-return words. Hand-checked
        // leading values, and the three-term recurrence of words avoiding
        // the cylinder word in their interior.
        let rs = sys(18);
        let c = return_coefficients(&rs, &dp_pot(0.5), 0.0).unwrap();
        let expect = [1.0, 0.0, 0.0, 1.0, 1.0, 2.0, 4.0];
        for (i, e) in expect.iter().enumerate() {
            assert_eq!(c[i], *e, "a_{}", i + 1);
        }
        for n in 8..=18usize {
            assert_eq!(
                c[n - 1],
                c[n - 2] + c[n - 3] + c[n - 4],
                "recurrence at n = {n}"
            );
            assert_eq!(c[n - 1], c[n - 1].round(), "integrality at n = {n}");
        }
        // Counts do not depend on the potential at γ = 0.
        let cv = return_coefficients(&rs, &vu_pot(), 0.0).unwrap();
        assert_eq!(c, cv);
    }

    #[test]
    fn dp_matches_brute_force_oracle() {
        let rs = sys(14);
        let configs: Vec<(Potential, Vec<f64>)> = vec![
            (dp_pot(0.5), vec![0.0, 1.0]),
            (dp_pot(2.0), vec![1.0, 5.0]),
            (vu_pot(), vec![0.5, 2.0]),
        ];
        for (v, gammas) in &configs {
            for &g in gammas {
                let dp = return_coefficients(&rs, v, g).unwrap();
                let bf = brute_force_coefficients(&rs, v, g, 14).unwrap();
                for n in 1..=14usize {
                    let (x, y) = (dp[n - 1], bf[n - 1]);
                    let scale = y.abs().max(1e-300);
                    assert!(
                        (x - y).abs() <= 1e-12 * scale.max(1.0),
                        "n={n} γ={g} {v:?}: dp={x} brute={y}"
                    );
                }
            }
        }
    }

    #[test]
    fn flipped_cylinder_gives_identical_coefficients() {
        // The subshift and both supported potentials are invariant under
        // the 0 <-> 1 involution, so inducing on 111 matches inducing
        // on 000.
        let rs0 = sys(12);
        let rs1 = ReturnSystem::build(&Word::parse("111").unwrap(), 12).unwrap();
        for v in [dp_pot(0.7), vu_pot()] {
            let c0 = return_coefficients(&rs0, &v, 1.3).unwrap();
            let c1 = return_coefficients(&rs1, &v, 1.3).unwrap();
            for n in 0..12 {
                assert!((c0[n] - c1[n]).abs() <= 1e-12 * c0[n].abs().max(1.0));
            }
        }
    }

    #[test]
    fn determinism_of_coefficients() {
        let rs = sys(24);
        let a = return_coefficients(&rs, &dp_pot(0.5), 1.7).unwrap();
        let b = return_coefficients(&rs, &dp_pot(0.5), 1.7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn partition_series_is_decreasing_in_z_and_diverges_left() {
        let rs = sys(32);
        let c = return_coefficients(&rs, &dp_pot(0.5), 0.5).unwrap();
        // The window sits above the abscissa of convergence of the
        // completed series; below it every value is +infinity.
        let zs = [0.6, 0.8, 1.0, 1.3];
        for w in zs.windows(2) {
            assert!(partition_value(&c, w[0]) > partition_value(&c, w[1]));
        }
        assert_eq!(partition_value(&c, -1.0), f64::INFINITY);
    }

    #[test]
    fn entropy_anchor_at_gamma_zero() {
        // With the potential switched off the induced system is the full
        // 2-shift seen through first returns to [000]; its pressure root is
        // the topological entropy log 2.
        let rs = sys(64);
        let c = return_coefficients(&rs, &dp_pot(0.5), 0.0).unwrap();
        let root = pressure_root(&c).expect("root must exist at gamma 0");
        assert!(
            (root - std::f64::consts::LN_2).abs() < 1e-6,
            "root {root} vs {}",
            std::f64::consts::LN_2
        );
        // Tail-slope estimate: the counts grow like the dominant root of
        // x^3 = x^2 + x + 1.
        let zc = zc_estimate(&c);
        let trib = 1.839_286_755_214_161_1_f64.ln();
        assert!((zc.value - trib).abs() < 0.01, "zc {} vs {trib}", zc.value);
        assert!((zc.value - std::f64::consts::LN_2).abs() < 0.09);
        assert!(zc.delta < 1e-3, "unstable slope: delta {}", zc.delta);
        // Truncation self-consistency.
        assert!(nmax_stability(&rs, &dp_pot(0.5), 0.0).unwrap() < 1e-4);
        // Critical exponent sits below the root.
        assert!(zc.value <= root + 0.02);
    }

    #[test]
    fn zc_degenerate_marker() {
        let zc = zc_estimate(&[0.0; 16]);
        assert_eq!(zc.value, f64::NEG_INFINITY);
    }

    #[test]
    fn partial_sums_shrink_with_gamma_and_drop_below_one() {
        let rs = sys(32);
        let sum_at = |g: f64| -> f64 {
            return_coefficients(&rs, &dp_pot(0.5), g)
                .unwrap()
                .iter()
                .sum()
        };
        let (s0, s1, s5, s50) = (sum_at(0.0), sum_at(1.0), sum_at(5.0), sum_at(50.0));
        assert!(s0 > s1 && s1 > s5 && s5 > s50);
        assert!(s50 < 1.0, "large-gamma partial sum {s50}");
    }

    #[test]
    fn steep_potential_curve_is_positive_decreasing_convex() {
        // Distance exponent a = 2: pressure stays positive for every γ but
        // decays to (numerically) tiny values; no transition on the grid.
        let rs = sys(64);
        let grid: Vec<f64> = (0..=10).map(|i| 5.0 * i as f64).collect();
        let curve = pressure_curve(&rs, &dp_pot(2.0), &grid).unwrap();
        assert!(curve.transition_gamma.is_none());
        for (i, p) in curve.pressure.iter().enumerate() {
            assert!(*p > 0.0, "pressure at gamma {} is {p}", grid[i]);
        }
        for w in curve.pressure.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "not nonincreasing: {w:?}");
        }
        for w in curve.pressure.windows(3) {
            assert!(w[0] + w[2] - 2.0 * w[1] >= -1e-8, "not convex: {w:?}");
        }
        assert!(curve.pressure[curve.pressure.len() - 1] < 0.05);
        // Root ordering against the tail estimate where the root exists.
        for i in 0..grid.len() {
            if let Some(z) = curve.z_star[i] {
                assert!(curve.z_c[i].value <= z + 0.02);
            }
        }
    }

    #[test]
    fn shallow_potential_has_a_transition() {
        // Distance exponent a = 0.5: the positive root disappears at a
        // finite γ; beyond it the pressure is identically zero.
        let rs = sys(64);
        let grid: Vec<f64> = (0..=40).map(|i| 0.5 * i as f64).collect();
        let curve = pressure_curve(&rs, &dp_pot(0.5), &grid).unwrap();
        let (lo, hi) = curve
            .transition_gamma
            .expect("transition must exist on [0, 20]");
        assert!(hi - lo <= 1e-3 * lo, "bracket too wide: [{lo}, {hi}]");
        for (i, &g) in grid.iter().enumerate() {
            if g < lo {
                assert!(curve.pressure[i] > 0.0, "pressure should be positive at {g}");
            }
            if g > hi {
                assert!(curve.pressure[i] == 0.0, "pressure should vanish at {g}");
            }
        }
        // z* nonincreasing in γ while it exists.
        let mut prev = f64::INFINITY;
        for z in curve.z_star.iter().flatten() {
            assert!(*z <= prev + 1e-9);
            prev = *z;
        }
        // Convexity of the positive part.
        let positive: Vec<f64> = curve
            .pressure
            .iter()
            .copied()
            .take_while(|p| *p > 0.0)
            .collect();
        for w in positive.windows(3) {
            assert!(w[0] + w[2] - 2.0 * w[1] >= -1e-8, "not convex: {w:?}");
        }
        // Halving the truncation order moves the transition by under 1%.
        let rs_half = sys(32);
        let curve_half = pressure_curve(&rs_half, &dp_pot(0.5), &grid).unwrap();
        let (lo2, hi2) = curve_half.transition_gamma.expect("half-order transition");
        let mid = 0.5 * (lo + hi);
        let mid2 = 0.5 * (lo2 + hi2);
        assert!(
            (mid - mid2).abs() < 0.01 * mid,
            "transition moved from {mid} to {mid2}"
        );
    }

    #[test]
    fn unbounded_potential_has_no_transition() {
        let rs = sys(64);
        let grid: Vec<f64> = (0..=10).map(|i| 2.0 * i as f64).collect();
        let curve = pressure_curve(&rs, &vu_pot(), &grid).unwrap();
        assert!(curve.transition_gamma.is_none());
        for (i, p) in curve.pressure.iter().enumerate() {
            assert!(*p > 0.0, "pressure at gamma {} is {p}", grid[i]);
            assert!(curve.z_star[i].is_some());
        }
        // The unbounded potential takes negative values on deep-block
        // orbits (the period-0110 orbit has mean value -1/2 for alpha = -1),
        // so here the pressure grows with γ instead of decaying: the
        // root-monotonicity of nonnegative potentials does not apply.
        for w in curve.pressure.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "pressure should grow: {w:?}");
        }
        for w in curve.pressure.windows(3) {
            assert!(w[0] + w[2] - 2.0 * w[1] >= -1e-8, "not convex: {w:?}");
        }
        // Closed-form lower bound on the critical exponent at small γ.
        for g in [0.25f64, 0.5, 1.0] {
            let c = return_coefficients(&rs, &vu_pot(), g).unwrap();
            let zc = zc_estimate(&c);
            let bound = (2f64).powf(-((g).exp() * (2f64).exp()) + 1.0);
            assert!(
                zc.value >= bound - 0.02,
                "gamma {g}: zc {} below bound {bound}",
                zc.value
            );
        }
    }

    #[test]
    fn steep_potential_truncated_sums_grow_without_bound_at_zc() {
        // For a > 1 the excursion terms alone keep the series above 1 at the
        // critical exponent: the truncated sums climb steadily with the
        // truncation order instead of leveling off.
        let rs = sys(64);
        let c = return_coefficients(&rs, &dp_pot(2.0), 5.0).unwrap();
        let zc = zc_estimate(&c).value.max(0.0);
        let trunc = |n: usize| -> f64 {
            c[..n]
                .iter()
                .enumerate()
                .map(|(i, a)| a * (-((i + 1) as f64) * zc).exp())
                .sum()
        };
        let (t16, t32, t64) = (trunc(16), trunc(32), trunc(64));
        assert!(t16 < t32 && t32 < t64);
        assert!(t64 - t32 >= 0.5 * (t32 - t16), "increments decay: {t16} {t32} {t64}");
        assert!(partition_value(&c, zc) > 1.0);
    }

    #[test]
    fn excursion_bounds_behave() {
        let eb = excursion_bounds(0.5, 200.0).unwrap();
        assert!(eb.converged);
        assert!(eb.b0 + eb.c0 < 1e-3, "B+C = {}", eb.b0 + eb.c0);
        for a in [0.3f64, 0.5, 0.7] {
            let mut prev = f64::INFINITY;
            for g in [2f64, 4.0, 8.0, 100.0] {
                let e = excursion_bounds(a, g).unwrap();
                assert!(e.b0 <= e.closed_bound, "a={a} g={g}: {} > {}", e.b0, e.closed_bound);
                assert!(e.b0 < prev, "not decreasing in gamma at a={a}");
                prev = e.b0;
            }
        }
        assert!(excursion_bounds(1.5, 2.0).is_err());
        assert!(excursion_bounds(0.5, 0.0).is_err());
    }

    #[test]
    fn certificate_exists_and_is_minimal_on_grid() {
        let cert = gamma_certificate(0.5).unwrap();
        assert!(cert.majorant < 1.0);
        assert!(cert.gamma0 > 0.0);
        let before = certificate_majorant(0.5, cert.gamma0 - 0.25);
        match before.unwrap() {
            None => {}
            Some(m) => assert!(m >= 1.0, "earlier grid point already certifies: {m}"),
        }
        // Free-path absorption rescales γ, so the certified point moves up.
        let scaled = gamma_certificate_with(
            0.5,
            &FreePathConfig {
                epsilon0: 0.5,
                n0: 16,
            },
        )
        .unwrap();
        assert!(scaled.gamma0 >= cert.gamma0);
    }

    #[test]
    fn csv_and_manifest_shape() {
        let rs = sys(16);
        let grid = vec![0.0, 1.0, 2.0];
        let curve = pressure_curve(&rs, &dp_pot(0.5), &grid).unwrap();
        let csv = pressure_curve_csv(&curve, rs.n_max);
        let mut lines = csv.split("\r\n");
        assert_eq!(
            lines.next().unwrap(),
            "gamma,z_star,z_c,pressure,nmax,stability_delta"
        );
        assert_eq!(csv.trim_end().split("\r\n").count(), 1 + grid.len());
        let manifest = run_manifest_json(&rs, &dp_pot(0.5), &grid);
        let v: serde_json::Value = serde_json::from_str(&manifest).unwrap();
        for key in [
            "delta_j",
            "gamma_grid",
            "j_word",
            "language_hash",
            "n_max",
            "potential",
            "tolerances",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["j_word"], "000");
        assert_eq!(v["delta_j"], 2);
        // Same build, same hash.
        assert_eq!(language_hash(&rs.lang), language_hash(&sys(16).lang));
    }
}
