//! Construction of the circle-covering interval maps: a dyadically
//! continuous modification of the distance potential on depth-N cylinders,
//! the conformal eigen-measure of the associated weighted transfer action,
//! and the degree-two interval map obtained by transporting the shift
//! through the measure's distribution function.
//!
//! Everything lives on the algebra of depth-N cylinders (default N = 16,
//! 65536 cells): the abstract measure is replaced by its canonical
//! finite-rank surrogate, and depth-doubling drift is observable through
//! the reported diagnostics.

use crate::error::{Error, Result};
use crate::language::{admissible_prefix_len_unbounded, Language};
use std::collections::BTreeMap;

/// The modified distance potential on depth-N cylinders: the base value is
/// `level^{-a}` (0 on fully admissible cylinders), adjusted at dyadic
/// boundaries so that the two cylinders adjoining a boundary where the base
/// values differ both carry the value of the smaller level.
#[derive(Debug, Clone)]
pub struct ModifiedPotential {
    pub a: f64,
    pub depth: usize,
    /// Longest admissible prefix length of each depth-N word, dyadic order.
    pub levels: Vec<u16>,
    /// The adjusted potential values.
    pub table: Vec<f64>,
    /// Marks entries touched by a dyadic-boundary adjustment.
    pub patched: Vec<bool>,
}

impl ModifiedPotential {
    /// The zero potential at the given depth (unweighted doubling-map
    /// sanity case).
    pub fn zero(depth: usize) -> ModifiedPotential {
        let n = 1usize << depth;
        ModifiedPotential {
            a: 1.0,
            depth,
            levels: vec![depth as u16; n],
            table: vec![0.0; n],
            patched: vec![false; n],
        }
    }

    /// Unadjusted value of a cylinder.
    pub fn base(&self, i: usize) -> f64 {
        if self.levels[i] as usize == self.depth {
            0.0
        } else {
            (self.levels[i] as f64).powf(-self.a)
        }
    }
}

fn compute_levels(lang: &Language, depth: usize) -> Vec<u16> {
    fn rec(
        lang: &Language,
        depth: usize,
        word: &mut Vec<u8>,
        cut: Option<u16>,
        idx: usize,
        out: &mut Vec<u16>,
    ) {
        if word.len() == depth {
            out[idx] = cut.unwrap_or(depth as u16);
            return;
        }
        for b in 0..2u8 {
            word.push(b);
            let ncut = if cut.is_none() && !lang.is_factor(word) {
                Some((word.len() - 1) as u16)
            } else {
                cut
            };
            rec(lang, depth, word, ncut, (idx << 1) | b as usize, out);
            word.pop();
        }
    }
    let mut out = vec![0u16; 1usize << depth];
    let mut word = Vec::with_capacity(depth);
    rec(lang, depth, &mut word, None, 0, &mut out);
    out
}

/// Build the modified potential. Two depth-N cylinders adjoin each dyadic
/// boundary; when their base values differ and neither is fully admissible,
/// both entries receive the larger value (the one belonging to the smaller
/// level), which restores continuity of the potential across that boundary
/// at cylinder granularity. Boundaries with a fully admissible side are left
/// untouched: the zero set must remain exactly the admissible cylinders.
pub fn build_w(a: f64, depth: usize) -> Result<ModifiedPotential> {
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::OutOfRange(format!("exponent a = {a} must be > 0")));
    }
    if !(4..=20).contains(&depth) {
        return Err(Error::OutOfRange(format!(
            "depth {depth} outside supported range [4, 20]"
        )));
    }
    let lang = Language::build(depth)?;
    let levels = compute_levels(&lang, depth);
    let n = 1usize << depth;
    let mut table: Vec<f64> = (0..n)
        .map(|i| {
            if levels[i] as usize == depth {
                0.0
            } else {
                (levels[i] as f64).powf(-a)
            }
        })
        .collect();
    let mut patched = vec![false; n];
    for i in 0..n - 1 {
        let (m1, m2) = (levels[i] as usize, levels[i + 1] as usize);
        if m1 < depth && m2 < depth && m1 != m2 {
            // Overlapping adjustments from both neighbors of a cylinder
            // resolve to the larger value.
            let v = (m1.min(m2) as f64).powf(-a);
            if v > table[i] {
                table[i] = v;
            }
            if v > table[i + 1] {
                table[i + 1] = v;
            }
            patched[i] = true;
            patched[i + 1] = true;
        }
    }
    Ok(ModifiedPotential {
        a,
        depth,
        levels,
        table,
        patched,
    })
}

/// Probe the admissible level of the one-sided expansions meeting at the
/// dyadic boundary between cylinders `i` and `i+1` (appending three equal
/// digits is enough: no fourth equal digit survives in any factor).
pub fn boundary_levels(w: &ModifiedPotential, i: usize) -> (usize, usize) {
    let depth = w.depth;
    let bits = |idx: usize| -> Vec<u8> {
        (0..depth)
            .map(|k| ((idx >> (depth - 1 - k)) & 1) as u8)
            .collect()
    };
    let mut left = bits(i);
    left.extend_from_slice(&[1, 1, 1]);
    let mut right = bits(i + 1);
    right.extend_from_slice(&[0, 0, 0]);
    (
        admissible_prefix_len_unbounded(&left),
        admissible_prefix_len_unbounded(&right),
    )
}

/// The conformal eigen-measure on depth-N cylinders: the fixed point of the
/// adjoint weighted-transfer action, with the dominant eigenvalue and the
/// per-cylinder conformality residual.
#[derive(Debug, Clone)]
pub struct ConformalMeasure {
    pub depth: usize,
    pub gamma1: f64,
    /// Cylinder weights in dyadic order; nonnegative, summing to 1.
    pub weights: Vec<f64>,
    /// Dominant eigenvalue; the Jacobian of the shift with respect to the
    /// measure is `eigenvalue · e^{gamma1 · W}`.
    pub eigenvalue: f64,
    /// Max over cylinders `B` of `|ν(σB) - eigenvalue · e^{γ₁ W(B)} ν(B)|`.
    pub residual: f64,
    pub iterations: usize,
}

/// Power iteration for the adjoint action
/// `(L*ν)(B) = e^{-γ₁ W(B)} · ν(σB)` on depth-N cylinder weights, with L1
/// normalization each step, until the L1 change of the weight vector drops
/// below 1e-12.
pub fn conformal_measure(
    w: &ModifiedPotential,
    gamma1: f64,
    max_iterations: usize,
) -> Result<ConformalMeasure> {
    if !(gamma1.is_finite() && gamma1 >= 0.0) {
        return Err(Error::OutOfRange(format!(
            "gamma1 = {gamma1} must be nonnegative"
        )));
    }
    let n = 1usize << w.depth;
    let half = n >> 1;
    let factor: Vec<f64> = w.table.iter().map(|v| (-gamma1 * v).exp()).collect();
    let mut nu = vec![1.0 / n as f64; n];
    let mut eigenvalue = 0.0f64;
    let mut iterations = 0usize;
    let mut delta = f64::INFINITY;
    while iterations < max_iterations {
        iterations += 1;
        let mut next = vec![0.0f64; n];
        let mut total = 0.0f64;
        for (i, slot) in next.iter_mut().enumerate() {
            let j = i & (half - 1);
            *slot = factor[i] * (nu[2 * j] + nu[2 * j + 1]);
            total += *slot;
        }
        for slot in next.iter_mut() {
            *slot /= total;
        }
        delta = nu
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
        nu = next;
        eigenvalue = total;
        if delta < 1e-12 {
            break;
        }
    }
    if delta >= 1e-12 {
        return Err(Error::NoConvergence { iterations, delta });
    }
    let mut residual = 0.0f64;
    for i in 0..n {
        let j = i & (half - 1);
        let sigma_mass = nu[2 * j] + nu[2 * j + 1];
        let r = (eigenvalue * (gamma1 * w.table[i]).exp() * nu[i] - sigma_mass).abs();
        residual = residual.max(r);
    }
    Ok(ConformalMeasure {
        depth: w.depth,
        gamma1,
        weights: nu,
        eigenvalue,
        residual,
        iterations,
    })
}

/// Distribution function of the measure: cumulative weights in dyadic
/// order, length `2^depth + 1`, from 0 to 1.
pub fn theta_cdf(nu: &ConformalMeasure) -> Vec<f64> {
    let mut th = Vec::with_capacity(nu.weights.len() + 1);
    let mut acc = 0.0f64;
    th.push(0.0);
    for w in &nu.weights {
        acc += w;
        th.push(acc);
    }
    let last = th.len() - 1;
    th[last] = 1.0;
    th
}

/// The interval map sampled at cylinder endpoints.
#[derive(Debug, Clone)]
pub struct FaMap {
    /// Sample abscissae: images under the distribution function of evenly
    /// spaced cylinder boundaries.
    pub t: Vec<f64>,
    /// Map values at those abscissae.
    pub f: Vec<f64>,
    /// Abscissa where the second branch starts.
    pub branch_point: f64,
}

/// Sample the interval map at `grid_size + 1` cylinder boundaries
/// (`grid_size` must divide `2^depth`). On the cylinder with digits
/// `w₁…w_N` the map sends the distribution-function image of the cylinder
/// onto that of `w₂…w_N`, so the sampled values are distribution values of
/// shifted indices.
pub fn build_fa(nu: &ConformalMeasure, grid_size: usize) -> Result<FaMap> {
    let n = 1usize << nu.depth;
    if grid_size < 2 || grid_size > n || n % grid_size != 0 {
        return Err(Error::OutOfRange(format!(
            "grid size {grid_size} must divide 2^depth = {n}"
        )));
    }
    let th = theta_cdf(nu);
    let half = n >> 1;
    let step = n / grid_size;
    let mut t = Vec::with_capacity(grid_size + 1);
    let mut f = Vec::with_capacity(grid_size + 1);
    for g in 0..=grid_size {
        let k = g * step;
        t.push(th[k]);
        if k == n {
            f.push(1.0);
        } else {
            f.push(th[(k & (half - 1)) << 1]);
        }
    }
    Ok(FaMap {
        t,
        f,
        branch_point: th[half],
    })
}

/// Comparison of the per-cylinder finite-difference slope of the interval
/// map with the conformal identity `slope = eigenvalue · e^{γ₁ W}`.
#[derive(Debug, Clone, Copy)]
pub struct DerivativeReport {
    /// Max relative deviation from the identity over all cylinders.
    pub max_rel_error: f64,
    pub min_slope: f64,
    pub max_slope: f64,
    /// Slope extrema over fully admissible cylinders (where the map is
    /// least expanding).
    pub admissible_min_slope: f64,
    pub admissible_max_slope: f64,
}

pub fn derivative_check(nu: &ConformalMeasure, w: &ModifiedPotential) -> Result<DerivativeReport> {
    if nu.depth != w.depth {
        return Err(Error::OutOfRange(format!(
            "measure depth {} does not match potential depth {}",
            nu.depth, w.depth
        )));
    }
    let n = 1usize << nu.depth;
    let half = n >> 1;
    let th = theta_cdf(nu);
    let mut rep = DerivativeReport {
        max_rel_error: 0.0,
        min_slope: f64::INFINITY,
        max_slope: 0.0,
        admissible_min_slope: f64::INFINITY,
        admissible_max_slope: 0.0,
    };
    for i in 0..n {
        let denom = th[i + 1] - th[i];
        if denom <= 0.0 {
            return Err(Error::OutOfRange(format!("cylinder {i} has zero mass")));
        }
        let j = i & (half - 1);
        let slope = (th[2 * j + 2] - th[2 * j]) / denom;
        let predicted = nu.eigenvalue * (nu.gamma1 * w.table[i]).exp();
        rep.max_rel_error = rep.max_rel_error.max((slope - predicted).abs() / predicted);
        rep.min_slope = rep.min_slope.min(slope);
        rep.max_slope = rep.max_slope.max(slope);
        if w.levels[i] as usize == w.depth {
            rep.admissible_min_slope = rep.admissible_min_slope.min(slope);
            rep.admissible_max_slope = rep.admissible_max_slope.max(slope);
        }
    }
    Ok(rep)
}

/// CSV rows `t,f_a,slope,w` at `grid_size` sampled cylinders.
pub fn fa_csv(nu: &ConformalMeasure, w: &ModifiedPotential, grid_size: usize) -> Result<String> {
    if nu.depth != w.depth {
        return Err(Error::OutOfRange("depth mismatch".into()));
    }
    let n = 1usize << nu.depth;
    if grid_size < 2 || grid_size > n || n % grid_size != 0 {
        return Err(Error::OutOfRange(format!(
            "grid size {grid_size} must divide 2^depth = {n}"
        )));
    }
    let th = theta_cdf(nu);
    let half = n >> 1;
    let step = n / grid_size;
    let mut out = String::from("t,f_a,slope,w\r\n");
    for g in 0..grid_size {
        let k = g * step;
        let j = k & (half - 1);
        let slope = (th[2 * j + 2] - th[2 * j]) / (th[k + 1] - th[k]);
        out.push_str(&format!(
            "{},{},{},{}\r\n",
            th[k],
            th[(k & (half - 1)) << 1],
            slope,
            w.table[k]
        ));
    }
    Ok(out)
}

/// JSON manifest (sorted keys) for an interval-map build.
pub fn interval_manifest_json(nu: &ConformalMeasure, w: &ModifiedPotential) -> String {
    use serde_json::json;
    let mut map = BTreeMap::new();
    map.insert("a".to_string(), json!(w.a));
    map.insert("depth".to_string(), json!(w.depth));
    map.insert("eigenvalue".to_string(), json!(nu.eigenvalue));
    map.insert("gamma1".to_string(), json!(nu.gamma1));
    map.insert("iterations".to_string(), json!(nu.iterations));
    map.insert(
        "patched_cylinders".to_string(),
        json!(w.patched.iter().filter(|p| **p).count()),
    );
    map.insert("residual".to_string(), json!(nu.residual));
    serde_json::to_string(&map).expect("manifest serialization cannot fail")
}
