//! Batch front end: every experiment is a subcommand writing CSV (or JSON)
//! to `--out` plus a run manifest alongside. Exit codes: 0 success, 1 usage
//! error, 2 invariant-suite failure.

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use tm_lab::accidents::accidents as scan_accidents;
use tm_lab::accidents::{record_shape_ok, record_structure_ok};
use tm_lab::coding::pi_word;
use tm_lab::interval::{build_w, conformal_measure, derivative_check, fa_csv};
use tm_lab::language::{
    disjoint_decomposition_check, overlap_bound, Language,
};
use tm_lab::potential::{integral_mu_k, MuK, Perturbation, Potential};
use tm_lab::renorm::{cesaro_mean, fixed_point_residual, power_scaling_check, renorm_apply};
use tm_lab::sampling::{
    random_anchored_level_point, random_level_point, random_point_with_level, random_word, rng,
};
use tm_lab::thermo::{
    gamma_certificate, language_hash, pressure_curve, pressure_curve_csv, pressure_root,
    return_coefficients, zc_estimate, PressureCurve, ReturnSystem, ZcEstimate,
};
use tm_lab::word::{thue_morse_prefix, Substitution, Word};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "tm-lab", version, about = "Thue-Morse subshift lab: combinatorics, renormalization, induced thermodynamics, interval maps")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Seed for randomized ensembles.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for grid sweeps (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON config file whose keys mirror the long flags; explicit flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path; the run manifest is written alongside as
    /// <stem>.manifest.json.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Factor counts of the subshift language per length.
    Language(LanguageArgs),
    /// Factor complexity vs the closed formula.
    Complexity(ComplexityArgs),
    /// Left-/right-/bispecial factors of one length.
    SpecialWords(SpecialWordsArgs),
    /// Accident detection and shape checks on random ensembles.
    Accidents(AccidentsArgs),
    /// Disjoint block decomposition and overlap bounds.
    Decomposition(DecompositionArgs),
    /// Exact evaluations of the renormalization operator iterates.
    Renorm(RenormArgs),
    /// Cesaro means of operator iterates against the two-sided bounds.
    Cesaro(CesaroArgs),
    /// Iterate values and ratios of the distance-power potential.
    PowerScaling(PowerScalingArgs),
    /// Fixed-point residuals of the renormalization operator.
    FixedResidual(FixedResidualArgs),
    /// Pressure curve of the induced system over a gamma grid.
    Pressure(PressureArgs),
    /// Locate the phase-transition gamma bracket.
    Transition(TransitionArgs),
    /// Excursion series bounds and the gamma certificate.
    ExcursionBounds(ExcursionBoundsArgs),
    /// Positivity and critical-exponent checks for the unbounded potential.
    VuCheck(VuCheckArgs),
    /// Build the interval map from the conformal eigen-measure.
    IntervalMap(IntervalMapArgs),
    /// Sliding-block code identities.
    PiCode(PiCodeArgs),
}

#[derive(Args)]
struct LanguageArgs {
    /// Maximum factor length.
    #[arg(long)]
    max_len: Option<usize>,
}

#[derive(Args)]
struct ComplexityArgs {
    /// Check lengths 1..=max-n.
    #[arg(long)]
    max_n: Option<usize>,
}

#[derive(Args)]
struct SpecialWordsArgs {
    /// Word length to classify.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args)]
struct AccidentsArgs {
    /// Number of random points.
    #[arg(long)]
    count: Option<usize>,
    /// Lower bound of the sampled level range.
    #[arg(long)]
    level_lo: Option<usize>,
    /// Upper bound of the sampled level range.
    #[arg(long)]
    level_hi: Option<usize>,
    /// Scan horizon per point.
    #[arg(long)]
    horizon: Option<usize>,
}

#[derive(Args)]
struct DecompositionArgs {
    /// Decomposition levels 1..=k-max.
    #[arg(long)]
    k_max: Option<usize>,
    /// Overlap bounds for 2..=overlap-k-max.
    #[arg(long)]
    overlap_k_max: Option<usize>,
}

#[derive(Args)]
struct RenormArgs {
    /// Distance-power exponent.
    #[arg(long)]
    a: Option<f64>,
    /// Level of the sampled base point.
    #[arg(long)]
    level: Option<usize>,
    /// Evaluate iterates 0..=n-max.
    #[arg(long)]
    n_max: Option<usize>,
}

#[derive(Args)]
struct CesaroArgs {
    /// Distance-power exponent of the potential.
    #[arg(long)]
    a: Option<f64>,
    /// Number of iterates averaged.
    #[arg(long)]
    n: Option<usize>,
    /// Level range lower end.
    #[arg(long)]
    m_lo: Option<usize>,
    /// Level range upper end.
    #[arg(long)]
    m_hi: Option<usize>,
    /// Samples per level.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct PowerScalingArgs {
    /// Distance-power exponent.
    #[arg(long)]
    a: Option<f64>,
    /// Level of the sampled base point.
    #[arg(long)]
    level: Option<usize>,
    /// Iterates 0..=n-max.
    #[arg(long)]
    n_max: Option<usize>,
}

#[derive(Args)]
struct FixedResidualArgs {
    /// Potential family: uc or vu.
    #[arg(long)]
    potential: Option<String>,
    /// Coefficient of the bounded family.
    #[arg(long)]
    c: Option<f64>,
    /// Slope of the unbounded family.
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    /// Sample count.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct PressureArgs {
    /// Potential family: distance-power or vu.
    #[arg(long)]
    potential: Option<String>,
    /// Distance-power exponent.
    #[arg(long)]
    a: Option<f64>,
    /// Slope of the unbounded family.
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    /// Grid lo:hi:step.
    #[arg(long)]
    gamma_grid: Option<String>,
    /// Return-word truncation order.
    #[arg(long)]
    nmax: Option<usize>,
}

#[derive(Args)]
struct TransitionArgs {
    /// Distance-power exponent.
    #[arg(long)]
    a: Option<f64>,
    /// Scan gamma up to this value.
    #[arg(long)]
    gamma_max: Option<f64>,
    /// Scan step.
    #[arg(long)]
    gamma_step: Option<f64>,
    /// Return-word truncation order.
    #[arg(long)]
    nmax: Option<usize>,
}

#[derive(Args)]
struct ExcursionBoundsArgs {
    /// Distance-power exponent in (0,1).
    #[arg(long)]
    a: Option<f64>,
    /// Grid lo:hi:step.
    #[arg(long)]
    gamma_grid: Option<String>,
}

#[derive(Args)]
struct VuCheckArgs {
    /// Slope of the unbounded family.
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    /// Grid lo:hi:step.
    #[arg(long)]
    gamma_grid: Option<String>,
    /// Return-word truncation order.
    #[arg(long)]
    nmax: Option<usize>,
}

#[derive(Args)]
struct IntervalMapArgs {
    /// Distance-power exponent.
    #[arg(long)]
    a: Option<f64>,
    /// Cylinder depth.
    #[arg(long)]
    depth: Option<usize>,
    /// Sampling grid size (must divide 2^depth).
    #[arg(long)]
    grid_size: Option<usize>,
    /// Transition parameter; computed from the pressure curve when omitted.
    #[arg(long)]
    gamma1: Option<f64>,
    /// Power-iteration cap.
    #[arg(long)]
    iterations: Option<usize>,
    /// Truncation order for the transition search.
    #[arg(long)]
    nmax: Option<usize>,
}

#[derive(Args)]
struct PiCodeArgs {
    /// Compared prefix length.
    #[arg(long)]
    length: Option<usize>,
    /// Random words for the conjugation identity.
    #[arg(long)]
    words: Option<usize>,
}

/// Everything a finished run hands back to `main` for writing.
struct RunOutput {
    body: String,
    params: BTreeMap<String, Value>,
    language_hash: String,
    tolerances: BTreeMap<String, Value>,
    violations: Vec<String>,
}

/// Flat JSON config mirroring the long flag names; explicit flags win.
struct Config(serde_json::Map<String, Value>);

impl Config {
    fn load(path: Option<&PathBuf>) -> Result<Config, String> {
        match path {
            None => Ok(Config(serde_json::Map::new())),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| format!("cannot read config {}: {e}", p.display()))?;
                let v: Value = serde_json::from_str(&text)
                    .map_err(|e| format!("config {} is not JSON: {e}", p.display()))?;
                match v {
                    Value::Object(m) => Ok(Config(m)),
                    _ => Err(format!("config {} must be a JSON object", p.display())),
                }
            }
        }
    }

    fn get<T: serde::de::DeserializeOwned>(&self, key: &str, flag: Option<T>) -> Option<T> {
        flag.or_else(|| {
            self.0
                .get(key)
                .and_then(|v| serde_json::from_value(v.clone()).ok())
        })
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn word_str(w: &Word) -> String {
    w.bits().iter().map(|b| if *b == 0 { '0' } else { '1' }).collect()
}

fn parse_grid(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("grid '{spec}' must be lo:hi:step"));
    }
    let lo: f64 = parts[0].parse().map_err(|_| format!("bad grid lo '{}'", parts[0]))?;
    let hi: f64 = parts[1].parse().map_err(|_| format!("bad grid hi '{}'", parts[1]))?;
    let step: f64 = parts[2].parse().map_err(|_| format!("bad grid step '{}'", parts[2]))?;
    if !(step > 0.0 && hi >= lo) {
        return Err(format!("grid '{spec}' must ascend"));
    }
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let g = lo + step * k as f64;
        if g > hi + step * 1e-9 {
            break;
        }
        out.push(g);
        k += 1;
    }
    Ok(out)
}

/// Map `f` over `0..n` on the requested number of workers; the output order
/// is by index regardless of scheduling.
fn parallel_map<T, F>(n: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = threads.max(1).min(n.max(1));
    let next = AtomicUsize::new(0);
    let mut indexed: Vec<(usize, T)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                let f = &f;
                let next = &next;
                s.spawn(move || {
                    let mut acc = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        if i >= n {
                            break;
                        }
                        acc.push((i, f(i)));
                    }
                    acc
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    indexed.sort_by_key(|p| p.0);
    indexed.into_iter().map(|p| p.1).collect()
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

type CmdResult = Result<RunOutput, String>;

fn err_str<E: std::fmt::Display>(e: E) -> String {
    format!("{e}")
}

fn run_language(a: &LanguageArgs, cfg: &Config) -> CmdResult {
    let max_len = cfg.get("max-len", a.max_len).unwrap_or(20);
    let lang = Language::build(max_len).map_err(err_str)?;
    let mut body = String::from("n,count\r\n");
    for n in 1..=max_len {
        body.push_str(&format!("{},{}\r\n", n, lang.factor_complexity(n).map_err(err_str)?));
    }
    Ok(RunOutput {
        body,
        params: BTreeMap::from([("max-len".into(), json!(max_len))]),
        language_hash: language_hash(&lang),
        tolerances: BTreeMap::new(),
        violations: Vec::new(),
    })
}

fn run_complexity(a: &ComplexityArgs, cfg: &Config) -> CmdResult {
    let max_n = cfg.get("max-n", a.max_n).unwrap_or(64);
    let lang = Language::build(max_n).map_err(err_str)?;
    let mut body = String::from("n,p_n,formula,match\r\n");
    let mut violations = Vec::new();
    for n in 1..=max_n {
        let p = lang.factor_complexity(n).map_err(err_str)?;
        let f = Language::complexity_closed_form(n);
        if p != f {
            violations.push(format!("complexity mismatch at n={n}: enumerated {p}, formula {f}"));
        }
        body.push_str(&format!("{},{},{},{}\r\n", n, p, f, p == f));
    }
    Ok(RunOutput {
        body,
        params: BTreeMap::from([("max-n".into(), json!(max_n))]),
        language_hash: language_hash(&lang),
        tolerances: BTreeMap::new(),
        violations,
    })
}

fn run_special_words(a: &SpecialWordsArgs, cfg: &Config) -> CmdResult {
    let n = cfg.get("n", a.n).unwrap_or(8);
    let lang = Language::build(n + 1).map_err(err_str)?;
    let (left, right, bi) = lang.special_words(n).map_err(err_str)?;
    let mut body = String::from("kind,word\r\n");
    for (kind, words) in [("left", &left), ("right", &right), ("bispecial", &bi)] {
        let mut ws = words.clone();
        ws.sort();
        for w in &ws {
            body.push_str(&format!("{},{}\r\n", kind, csv_field(&word_str(w))));
        }
    }
    Ok(RunOutput {
        body,
        params: BTreeMap::from([("n".into(), json!(n))]),
        language_hash: language_hash(&lang),
        tolerances: BTreeMap::new(),
        violations: Vec::new(),
    })
}

fn run_accidents(a: &AccidentsArgs, cfg: &Config, seed: u64) -> CmdResult {
    let count = cfg.get("count", a.count).unwrap_or(200);
    let level_lo = cfg.get("level-lo", a.level_lo).unwrap_or(8);
    let level_hi = cfg.get("level-hi", a.level_hi).unwrap_or(16);
    let horizon = cfg.get("horizon", a.horizon).unwrap_or(48);
    let lang = Language::build(40).map_err(err_str)?;
    let mut r = rng(seed);
    let mut body = String::from("sample,at,b,d_before,d_after,gap,structure_ok,shape_ok\r\n");
    let mut violations = Vec::new();
    for sample in 0..count {
        let x = random_anchored_level_point(&lang, &mut r, level_lo, level_hi, 96).map_err(err_str)?;
        let recs = scan_accidents(&lang, &x, horizon, 24).map_err(err_str)?;
        for rec in &recs {
            let origin = rec.at - rec.b;
            let structure = record_structure_ok(&lang, &x, origin, rec);
            // The accident-time lower bound needs the window anchored at a
            // fixed-point prefix, which holds only for the first piece.
            let anchored = origin == 0;
            let shape = record_shape_ok(&lang, &x, origin, rec);
            if !structure {
                violations.push(format!("accident structure violation at sample {sample}, shift {}", rec.at));
            } else if anchored && !shape {
                violations.push(format!("accident time-bound violation at sample {sample}, shift {}", rec.at));
            }
            body.push_str(&format!(
                "{},{},{},{},{},{},{},{}\r\n",
                sample, rec.at, rec.b, rec.d_before, rec.d_after, rec.gap(), structure, shape
            ));
        }
    }
    Ok(RunOutput {
        body,
        params: BTreeMap::from([
            ("count".into(), json!(count)),
            ("level-lo".into(), json!(level_lo)),
            ("level-hi".into(), json!(level_hi)),
            ("horizon".into(), json!(horizon)),
            ("seed".into(), json!(seed)),
        ]),
        language_hash: language_hash(&lang),
        tolerances: BTreeMap::new(),
        violations,
    })
}

fn run_decomposition(a: &DecompositionArgs, cfg: &Config) -> CmdResult {
    let k_max = cfg.get("k-max", a.k_max).unwrap_or(4);
    let overlap_k_max = cfg.get("overlap-k-max", a.overlap_k_max).unwrap_or(8);
    if !(1..=6).contains(&k_max) {
        return Err(format!("k-max {k_max} outside [1, 6]"));
    }
    if !(2..=8).contains(&overlap_k_max) {
        return Err(format!("overlap-k-max {overlap_k_max} outside [2, 8]"));
    }
    let sample_depth = |k: usize| (1usize << k) * 8;
    let lang = Language::build(sample_depth(k_max)).map_err(err_str)?;
    let mut body = String::from("check,k,sample_depth,value,ok\r\n");
    let mut violations = Vec::new();
    for k in 1..=k_max {
        let depth = sample_depth(k);
        let ok = disjoint_decomposition_check(&lang, k, depth).map_err(err_str)?;
        if !ok {
            violations.push(format!("decomposition failed at k={k}"));
        }
        body.push_str(&format!("decomposition,{},{},,{}\r\n", k, depth, ok));
    }
    for k in 2..=overlap_k_max {
        let v = overlap_bound(k).map_err(err_str)?;
        let ok = v <= 1usize << (k - 1);
        if !ok {
            violations.push(format!("overlap bound exceeded at k={k}: {v}"));
        }
        body.push_str(&format!("overlap,{},,{},{}\r\n", k, v, ok));
    }
    Ok(RunOutput {
        body,
        params: BTreeMap::from([
            ("k-max".into(), json!(k_max)),
            ("overlap-k-max".into(), json!(overlap_k_max)),
        ]),
        language_hash: language_hash(&lang),
        tolerances: BTreeMap::new(),
        violations,
    })
}

fn run_renorm(a: &RenormArgs, cfg: &Config, seed: u64) -> CmdResult {
    let aexp = cfg.get("a", a.a).unwrap_or(1.0);
    let level = cfg.get("level", a.level).unwrap_or(8);
    let n_max = cfg.get("n-max", a.n_max).unwrap_or(8);
    let lang = Language::build(24).map_err(err_str)?;
    let mut r = rng(seed);
    let prefix_len = (1usize << n_max) * 24;
    let x = random_point_with_level(&lang, &mut r, level, prefix_len).map_err(err_str)?;
    let v = Potential::DistancePower { a: aexp, perturbation: Perturbation::Zero };
    let mut body = String::from("n,value\r\n");
    for n in 0..=n_max {
        let ev = renorm_apply(&v, &lang, &x, n, 20).map_err(err_str)?;
        body.push_str(&format!("{},{}\r\n", n, ev.value));
    }
    Ok(RunOutput {
        body,
        params: BTreeMap::from([
            ("a".into(), json!(aexp)),
            ("level".into(), json!(level)),
            ("n-max".into(), json!(n_max)),
            ("seed".into(), json!(seed)),
        ]),
        language_hash: language_hash(&lang),
        tolerances: BTreeMap::new(),
        violations: Vec::new(),
    })
}

fn run_cesaro(a: &CesaroArgs, cfg: &Config, seed: u64) -> CmdResult {
    let aexp = cfg.get("a", a.a).unwrap_or(1.0);
    let n = cfg.get("n", a.n).unwrap_or(12);
    let m_lo = cfg.get("m-lo", a.m_lo).unwrap_or(3);
    let m_hi = cfg.get("m-hi", a.m_hi).unwrap_or(12);
    let samples = cfg.get("samples", a.samples).unwrap_or(10);
    let lang = Language::build(24).map_err(err_str)?;
    let v = Potential::DistancePower { a: aexp, perturbation: Perturbation::Zero };
    let mut r = rng(seed);
    let mut body = String::from("m,sample,value,lower,upper,ok\r\n");
    let mut violations = Vec::new();
    for m in m_lo..=m_hi {
        let lower = 1.0 / (2.0 * m as f64);
        let upper = 1.0 / (m as f64 - 1.0);
        for s in 0..samples {
            let prefix_len = (1usize << n.saturating_sub(1)) * 24;
            let x = random_point_with_level(&lang, &mut r, m, prefix_len).map_err(err_str)?;
            let value = cesaro_mean(&v, &lang, &x, n, 20).map_err(err_str)?;
            let ok = value >= lower * 0.9 && value <= upper * 1.1;
            if !ok {
                violations.push(format!("Cesaro mean {value} outside widened [{lower}, {upper}] at m={m} sample {s}"));
            }
            body.push_str(&format!("{},{},{},{},{},{}\r\n", m, s, value, lower, upper, ok));
        }
    }
    Ok(RunOutput {
        body,
        params: BTreeMap::from([
            ("a".into(), json!(aexp)),
            ("n".into(), json!(n)),
            ("m-lo".into(), json!(m_lo)),
            ("m-hi".into(), json!(m_hi)),
            ("samples".into(), json!(samples)),
            ("seed".into(), json!(seed)),
        ]),
        language_hash: language_hash(&lang),
        tolerances: BTreeMap::from([("widening".into(), json!(0.1))]),
        violations,
    })
}

fn run_power_scaling(a: &PowerScalingArgs, cfg: &Config, seed: u64) -> CmdResult {
    let aexp = cfg.get("a", a.a).unwrap_or(0.5);
    let level = cfg.get("level", a.level).unwrap_or(6);
    let n_max = cfg.get("n-max", a.n_max).unwrap_or(10);
    let lang = Language::build(24).map_err(err_str)?;
    let mut r = rng(seed);
    let prefix_len = (1usize << n_max) * 24;
    let x = random_point_with_level(&lang, &mut r, level, prefix_len).map_err(err_str)?;
    let range: Vec<usize> = (0..=n_max).collect();
    let rows = power_scaling_check(aexp, &lang, &x, &range, 20).map_err(err_str)?;
    let target = 2f64.powf(1.0 - aexp);
    let mut body = String::from("n,value,ratio,target,ok\r\n");
    let mut violations = Vec::new();
    for row in &rows {
        let (ratio_s, ok) = match row.ratio {
            None => (String::new(), true),
            Some(ratio) => {
                let checked = row.n >= 4;
                let ok = !checked || (ratio / target - 1.0).abs() <= 0.1;
                if !ok {
                    violations.push(format!("scaling ratio {ratio} at n={} off target {target}", row.n));
                }
                (format!("{ratio}"), ok)
            }
        };
        body.push_str(&format!("{},{},{},{},{}\r\n", row.n, row.value, ratio_s, target, ok));
    }
    Ok(RunOutput {
        body,
        params: BTreeMap::from([
            ("a".into(), json!(aexp)),
            ("level".into(), json!(level)),
            ("n-max".into(), json!(n_max)),
            ("seed".into(), json!(seed)),
        ]),
        language_hash: language_hash(&lang),
        tolerances: BTreeMap::from([("ratio-rel".into(), json!(0.1))]),
        violations,
    })
}

fn run_fixed_residual(a: &FixedResidualArgs, cfg: &Config, seed: u64) -> CmdResult {
    let family = cfg.get("potential", a.potential.clone()).unwrap_or_else(|| "uc".into());
    let c = cfg.get("c", a.c).unwrap_or(1.0);
    let alpha = cfg.get("alpha", a.alpha).unwrap_or(-1.0);
    let samples = cfg.get("samples", a.samples).unwrap_or(1000);
    let lang = Language::build(24).map_err(err_str)?;
    let v = match family.as_str() {
        "uc" => Potential::CylinderUc { c },
        "vu" => Potential::UnboundedVu { alpha },
        other => return Err(format!("unknown potential family '{other}'")),
    };
    let mut r = rng(seed);
    let mut pts = Vec::with_capacity(samples);
    let mut attempts = 0usize;
    while pts.len() < samples && attempts < samples * 50 {
        attempts += 1;
        let x = random_level_point(&lang, &mut r, 3, 12, 96).map_err(err_str)?;
        // The unbounded family is undefined off block-structured points;
        // sample only where the potential evaluates.
        if v.eval(&lang, &x, 20).is_ok() {
            pts.push(x);
        }
    }
    if pts.is_empty() {
        return Err("no admissible samples for the residual check".into());
    }
    let residual = fixed_point_residual(&v, &lang, &pts, 20).map_err(err_str)?;
    let mut violations = Vec::new();
    if residual != 0.0 {
        violations.push(format!("fixed-point residual {residual} is not exactly 0"));
    }
    let body = format!(
        "potential,samples,max_residual\r\n{},{},{}\r\n",
        family,
        pts.len(),
        residual
    );
    Ok(RunOutput {
        body,
        params: BTreeMap::from([
            ("potential".into(), json!(family)),
            ("c".into(), json!(c)),
            ("alpha".into(), json!(alpha)),
            ("samples".into(), json!(samples)),
            ("seed".into(), json!(seed)),
        ]),
        language_hash: language_hash(&lang),
        tolerances: BTreeMap::from([("residual".into(), json!(0.0))]),
        violations,
    })
}

fn sweep_curve(
    rs: &ReturnSystem,
    v: &Potential,
    grid: &[f64],
    threads: usize,
) -> Result<PressureCurve, String> {
    let rows: Vec<Result<(Option<f64>, ZcEstimate), String>> = parallel_map(grid.len(), threads, |i| {
        let coeffs = return_coefficients(rs, v, grid[i]).map_err(err_str)?;
        Ok((pressure_root(&coeffs), zc_estimate(&coeffs)))
    });
    let mut z_star = Vec::with_capacity(grid.len());
    let mut z_c = Vec::with_capacity(grid.len());
    let mut pressure = Vec::with_capacity(grid.len());
    for row in rows {
        let (z, zc) = row?;
        pressure.push(z.unwrap_or(0.0).max(0.0));
        z_star.push(z);
        z_c.push(zc);
    }
    Ok(PressureCurve {
        gamma_grid: grid.to_vec(),
        z_star,
        z_c,
        pressure,
        transition_gamma: None,
    })
}

fn build_potential(family: &str, a: f64, alpha: f64) -> Result<Potential, String> {
    match family {
        "distance-power" => Ok(Potential::DistancePower { a, perturbation: Perturbation::Zero }),
        "vu" => Ok(Potential::UnboundedVu { alpha }),
        other => Err(format!("unknown potential family '{other}'")),
    }
}

fn run_pressure(a: &PressureArgs, cfg: &Config, threads: usize) -> CmdResult {
    let family = cfg.get("potential", a.potential.clone()).unwrap_or_else(|| "distance-power".into());
    let aexp = cfg.get("a", a.a).unwrap_or(0.5);
    let alpha = cfg.get("alpha", a.alpha).unwrap_or(-1.0);
    let grid_spec = cfg.get("gamma-grid", a.gamma_grid.clone()).unwrap_or_else(|| "0:20:0.5".into());
    let nmax = cfg.get("nmax", a.nmax).unwrap_or(64);
    let grid = parse_grid(&grid_spec)?;
    let v = build_potential(&family, aexp, alpha)?;
    let rs = ReturnSystem::build(&Word::parse("000").map_err(err_str)?, nmax).map_err(err_str)?;
    let curve = sweep_curve(&rs, &v, &grid, threads)?;
    let body = pressure_curve_csv(&curve, nmax);
    Ok(RunOutput {
        body,
        params: BTreeMap::from([
            ("potential".into(), json!(family)),
            ("a".into(), json!(aexp)),
            ("alpha".into(), json!(alpha)),
            ("gamma-grid".into(), json!(grid_spec)),
            ("nmax".into(), json!(nmax)),
            ("threads".into(), json!(threads)),
        ]),
        language_hash: language_hash(&rs.lang),
        tolerances: BTreeMap::new(),
        violations: Vec::new(),
    })
}

fn run_transition(a: &TransitionArgs, cfg: &Config) -> CmdResult {
    let aexp = cfg.get("a", a.a).unwrap_or(0.5);
    let gamma_max = cfg.get("gamma-max", a.gamma_max).unwrap_or(400.0);
    let gamma_step = cfg.get("gamma-step", a.gamma_step).unwrap_or(0.5);
    let nmax = cfg.get("nmax", a.nmax).unwrap_or(64);
    let grid = parse_grid(&format!("0:{gamma_max}:{gamma_step}"))?;
    let v = Potential::DistancePower { a: aexp, perturbation: Perturbation::Zero };
    let rs = ReturnSystem::build(&Word::parse("000").map_err(err_str)?, nmax).map_err(err_str)?;
    let curve = pressure_curve(&rs, &v, &grid).map_err(err_str)?;
    let transition = match curve.transition_gamma {
        None => Value::Null,
        Some((lo, hi)) => json!({"gamma_lo": lo, "gamma_hi": hi, "gamma_mid": 0.5 * (lo + hi)}),
    };
    let doc = BTreeMap::from([
        ("a".to_string(), json!(aexp)),
        ("gamma_max".to_string(), json!(gamma_max)),
        ("gamma_step".to_string(), json!(gamma_step)),
        ("nmax".to_string(), json!(nmax)),
        ("transition".to_string(), transition),
    ]);
    Ok(RunOutput {
        body: serde_json::to_string_pretty(&doc).map_err(err_str)? + "\n",
        params: BTreeMap::from([
            ("a".into(), json!(aexp)),
            ("gamma-max".into(), json!(gamma_max)),
            ("gamma-step".into(), json!(gamma_step)),
            ("nmax".into(), json!(nmax)),
        ]),
        language_hash: language_hash(&rs.lang),
        tolerances: BTreeMap::from([("bracket-rel-width".into(), json!(1e-3))]),
        violations: Vec::new(),
    })
}

fn run_excursion_bounds(a: &ExcursionBoundsArgs, cfg: &Config) -> CmdResult {
    let aexp = cfg.get("a", a.a).unwrap_or(0.5);
    let grid_spec = cfg.get("gamma-grid", a.gamma_grid.clone()).unwrap_or_else(|| "25:400:25".into());
    let grid = parse_grid(&grid_spec)?;
    let mut body = String::from("gamma,b0,c0,closed_bound,converged\r\n");
    for &g in &grid {
        let b = tm_lab::thermo::excursion_bounds(aexp, g).map_err(err_str)?;
        body.push_str(&format!(
            "{},{},{},{},{}\r\n",
            g, b.b0, b.c0, b.closed_bound, b.converged
        ));
    }
    let cert = gamma_certificate(aexp).map_err(err_str)?;
    Ok(RunOutput {
        body,
        params: BTreeMap::from([
            ("a".into(), json!(aexp)),
            ("gamma-grid".into(), json!(grid_spec)),
            ("certificate-gamma0".into(), json!(cert.gamma0)),
            ("certificate-majorant".into(), json!(cert.majorant)),
        ]),
        language_hash: String::new(),
        tolerances: BTreeMap::from([("series-truncation-rel".into(), json!(1e-10))]),
        violations: Vec::new(),
    })
}

fn run_vu_check(a: &VuCheckArgs, cfg: &Config, threads: usize) -> CmdResult {
    let alpha = cfg.get("alpha", a.alpha).unwrap_or(-1.0);
    let grid_spec = cfg.get("gamma-grid", a.gamma_grid.clone()).unwrap_or_else(|| "0:20:0.5".into());
    let nmax = cfg.get("nmax", a.nmax).unwrap_or(64);
    let grid = parse_grid(&grid_spec)?;
    let v = Potential::UnboundedVu { alpha };
    let rs = ReturnSystem::build(&Word::parse("000").map_err(err_str)?, nmax).map_err(err_str)?;
    let curve = sweep_curve(&rs, &v, &grid, threads)?;
    let mut violations = Vec::new();
    for (g, p) in curve.gamma_grid.iter().zip(&curve.pressure) {
        if !(*p > 0.0) {
            violations.push(format!("pressure not positive at gamma {g}: {p}"));
        }
    }
    let mu = MuK::build(8, 1 << 14).map_err(err_str)?;
    let integral = integral_mu_k(&v, &mu).map_err(err_str)?;
    if integral.abs() > 1e-12 {
        violations.push(format!("ground-state integral {integral} exceeds 1e-12"));
    }
    let body = pressure_curve_csv(&curve, nmax);
    Ok(RunOutput {
        body,
        params: BTreeMap::from([
            ("alpha".into(), json!(alpha)),
            ("gamma-grid".into(), json!(grid_spec)),
            ("nmax".into(), json!(nmax)),
            ("threads".into(), json!(threads)),
            ("ground-state-integral".into(), json!(integral)),
        ]),
        language_hash: language_hash(&rs.lang),
        tolerances: BTreeMap::from([("integral".into(), json!(1e-12))]),
        violations,
    })
}

fn run_interval_map(a: &IntervalMapArgs, cfg: &Config) -> CmdResult {
    let aexp = cfg.get("a", a.a).unwrap_or(0.5);
    let depth = cfg.get("depth", a.depth).unwrap_or(16);
    let grid_size = cfg.get("grid-size", a.grid_size).unwrap_or_else(|| (1usize << depth).min(4096));
    let iterations = cfg.get("iterations", a.iterations).unwrap_or(200_000);
    let nmax = cfg.get("nmax", a.nmax).unwrap_or(64);
    let gamma1 = match cfg.get("gamma1", a.gamma1) {
        Some(g) => g,
        None => {
            let v = Potential::DistancePower { a: aexp, perturbation: Perturbation::Zero };
            let rs = ReturnSystem::build(&Word::parse("000").map_err(err_str)?, nmax).map_err(err_str)?;
            let grid = parse_grid("0:20:0.5")?;
            let curve = pressure_curve(&rs, &v, &grid).map_err(err_str)?;
            match curve.transition_gamma {
                Some((lo, hi)) => 0.5 * (lo + hi),
                None => return Err("no transition found; pass --gamma1 explicitly".into()),
            }
        }
    };
    let w = build_w(aexp, depth).map_err(err_str)?;
    let nu = conformal_measure(&w, gamma1, iterations).map_err(err_str)?;
    let rep = derivative_check(&nu, &w).map_err(err_str)?;
    let body = fa_csv(&nu, &w, grid_size).map_err(err_str)?;
    let mut violations = Vec::new();
    if nu.residual > 1e-10 {
        violations.push(format!("conformality residual {} exceeds 1e-10", nu.residual));
    }
    if rep.max_rel_error > 0.05 {
        violations.push(format!("derivative identity error {} exceeds 5%", rep.max_rel_error));
    }
    let lang = Language::build(depth).map_err(err_str)?;
    Ok(RunOutput {
        body,
        params: BTreeMap::from([
            ("a".into(), json!(aexp)),
            ("depth".into(), json!(depth)),
            ("grid-size".into(), json!(grid_size)),
            ("gamma1".into(), json!(gamma1)),
            ("iterations".into(), json!(nu.iterations)),
            ("nmax".into(), json!(nmax)),
            ("eigenvalue".into(), json!(nu.eigenvalue)),
            ("residual".into(), json!(nu.residual)),
            ("min-slope".into(), json!(rep.min_slope)),
            ("max-slope".into(), json!(rep.max_slope)),
        ]),
        language_hash: language_hash(&lang),
        tolerances: BTreeMap::from([
            ("residual".into(), json!(1e-10)),
            ("derivative-rel".into(), json!(0.05)),
        ]),
        violations,
    })
}

fn run_pi_code(a: &PiCodeArgs, cfg: &Config, seed: u64) -> CmdResult {
    let length = cfg.get("length", a.length).unwrap_or(64);
    let words = cfg.get("words", a.words).unwrap_or(1000);
    let rho0 = thue_morse_prefix(0, length + 1);
    let img = pi_word(&rho0).map_err(err_str)?;
    let pd = Substitution::period_doubling()
        .fixed_point_prefix(1, length)
        .map_err(err_str)?;
    let mut body = String::from("i,pi_digit,pd_digit,match\r\n");
    let mut violations = Vec::new();
    for i in 0..length {
        let (x, y) = (img.bits()[i], pd.bits()[i]);
        if x != y {
            violations.push(format!("coded digit mismatch at {i}"));
        }
        body.push_str(&format!("{},{},{},{}\r\n", i, x, y, x == y));
    }
    // Conjugation identity on random words: coding the substitution image
    // equals substituting the coded word (up to the one-digit shortening).
    let h = Substitution::thue_morse();
    let pd_sub = Substitution::period_doubling();
    let mut r = rng(seed);
    for k in 0..words {
        let w = random_word(&mut r, 16);
        let lhs = pi_word(&h.apply_once(&w, 1 << 12).map_err(err_str)?).map_err(err_str)?;
        let rhs = pd_sub
            .apply_once(&pi_word(&w).map_err(err_str)?, 1 << 12)
            .map_err(err_str)?;
        if lhs.bits()[..rhs.len()] != *rhs.bits() {
            violations.push(format!("conjugation identity failed on random word {k}"));
        }
    }
    Ok(RunOutput {
        body,
        params: BTreeMap::from([
            ("length".into(), json!(length)),
            ("words".into(), json!(words)),
            ("seed".into(), json!(seed)),
        ]),
        language_hash: String::new(),
        tolerances: BTreeMap::new(),
        violations,
    })
}

fn subcommand_name(cmd: &Cmd) -> &'static str {
    match cmd {
        Cmd::Language(_) => "language",
        Cmd::Complexity(_) => "complexity",
        Cmd::SpecialWords(_) => "special-words",
        Cmd::Accidents(_) => "accidents",
        Cmd::Decomposition(_) => "decomposition",
        Cmd::Renorm(_) => "renorm",
        Cmd::Cesaro(_) => "cesaro",
        Cmd::PowerScaling(_) => "power-scaling",
        Cmd::FixedResidual(_) => "fixed-residual",
        Cmd::Pressure(_) => "pressure",
        Cmd::Transition(_) => "transition",
        Cmd::ExcursionBounds(_) => "excursion-bounds",
        Cmd::VuCheck(_) => "vu-check",
        Cmd::IntervalMap(_) => "interval-map",
        Cmd::PiCode(_) => "pi-code",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Help/version requests are not usage errors.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0u8,
                _ => 1u8,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let start = Instant::now();
    let cfg = match Config::load(cli.config.as_ref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let seed = cfg.get("seed", cli.seed).unwrap_or(0);
    let threads = cfg.get("threads", cli.threads).unwrap_or_else(default_threads);
    let out_path = match cfg.get("out", cli.out.clone()) {
        Some(p) => p,
        None => {
            eprintln!("error: --out is required");
            return ExitCode::from(1);
        }
    };
    let result = match &cli.cmd {
        Cmd::Language(a) => run_language(a, &cfg),
        Cmd::Complexity(a) => run_complexity(a, &cfg),
        Cmd::SpecialWords(a) => run_special_words(a, &cfg),
        Cmd::Accidents(a) => run_accidents(a, &cfg, seed),
        Cmd::Decomposition(a) => run_decomposition(a, &cfg),
        Cmd::Renorm(a) => run_renorm(a, &cfg, seed),
        Cmd::Cesaro(a) => run_cesaro(a, &cfg, seed),
        Cmd::PowerScaling(a) => run_power_scaling(a, &cfg, seed),
        Cmd::FixedResidual(a) => run_fixed_residual(a, &cfg, seed),
        Cmd::Pressure(a) => run_pressure(a, &cfg, threads),
        Cmd::Transition(a) => run_transition(a, &cfg),
        Cmd::ExcursionBounds(a) => run_excursion_bounds(a, &cfg),
        Cmd::VuCheck(a) => run_vu_check(a, &cfg, threads),
        Cmd::IntervalMap(a) => run_interval_map(a, &cfg),
        Cmd::PiCode(a) => run_pi_code(a, &cfg, seed),
    };
    let output = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Err(e) = std::fs::write(&out_path, &output.body) {
        eprintln!("error: cannot write {}: {e}", out_path.display());
        return ExitCode::from(1);
    }
    let manifest_path = out_path.with_extension("manifest.json");
    let manifest = BTreeMap::from([
        ("subcommand".to_string(), json!(subcommand_name(&cli.cmd))),
        ("params".to_string(), json!(output.params)),
        ("language_hash".to_string(), json!(output.language_hash)),
        ("tolerances".to_string(), json!(output.tolerances)),
        ("tool_version".to_string(), json!(VERSION)),
        (
            "wall_time_ms".to_string(),
            json!(start.elapsed().as_millis() as u64),
        ),
        (
            "violations".to_string(),
            json!(output.violations),
        ),
    ]);
    let manifest_text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    if let Err(e) = std::fs::write(&manifest_path, manifest_text) {
        eprintln!("error: cannot write {}: {e}", manifest_path.display());
        return ExitCode::from(1);
    }
    if output.violations.is_empty() {
        ExitCode::SUCCESS
    } else {
        for v in &output.violations {
            eprintln!("violation: {v}");
        }
        ExitCode::from(2)
    }
}
