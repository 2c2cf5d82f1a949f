//! Profile generators, mechanism evaluation and worst-case index estimation.
//!
//! Every generated profile is a pure function of `(seed, index)`, and
//! streams are processed in fixed-size chunks whose partial results are
//! merged in chunk order. Reports are therefore identical for any number of
//! worker threads.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use num_rational::BigRational;
use num_traits::Zero;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clarke::{clarke_payments, clarke_surplus, leave_one_out_surpluses, SurplusCache};
use crate::error::{Error, Result};
use crate::money::{int, ratio, Money};
use crate::ordering::rank_agents;
use crate::profile::{BidProfile, MechanismOutcome, ProfileFile};
use crate::rebates::{hetero_alphas, hetero_evaluate, HeteroCoefficients};
use crate::scaling::{scaling_outcome_for_values, scaling_values, solve_lp, ScalingModel};
use crate::wco::{wco_coefficients, wco_index, wco_rebates_for_values, RebateCoefficients};

/// Profiles per work unit. Fixed so that results do not depend on scheduling.
pub const CHUNK_SIZE: u64 = 1024;

/// Largest exponent accepted by the exhaustive binary generator.
pub const MAX_BINARY_BITS: usize = 26;

/// A float surplus counts as positive when it exceeds this multiple of
/// `max(1, v(k*))`.
pub const POSITIVE_SURPLUS_TOLERANCE: f64 = 1e-9;

pub const DEFAULT_TRIALS: u64 = 10_000;
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Counterexamples kept verbatim in a report; the rest are only counted.
const MAX_COUNTEREXAMPLES: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    Wco,
    Scaling,
    BaileyCavallo,
    Hetero,
}

impl MechanismKind {
    pub fn name(self) -> &'static str {
        match self {
            MechanismKind::Wco => "wco",
            MechanismKind::Scaling => "scaling",
            MechanismKind::BaileyCavallo => "bailey_cavallo",
            MechanismKind::Hetero => "hetero",
        }
    }
}

impl fmt::Display for MechanismKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "wco" => Ok(MechanismKind::Wco),
            "scaling" => Ok(MechanismKind::Scaling),
            "bailey_cavallo" | "bc" => Ok(MechanismKind::BaileyCavallo),
            "hetero" => Ok(MechanismKind::Hetero),
            other => Err(Error::InvalidConfig(format!("unknown mechanism `{other}`"))),
        }
    }
}

/// A rebate rule with its coefficients computed for a fixed `(n, p)`.
#[derive(Clone, Debug)]
pub enum Mechanism {
    Wco(RebateCoefficients),
    Scaling(Box<ScalingModel>),
    BaileyCavallo { n: usize, p: usize },
    Hetero(HeteroCoefficients),
}

impl Mechanism {
    pub fn prepare(kind: MechanismKind, n: usize, p: usize, gamma: Option<&[BigRational]>) -> Result<Self> {
        if gamma.is_some() && kind != MechanismKind::Scaling {
            return Err(Error::InvalidConfig("gamma applies to the scaling mechanism only".into()));
        }
        Ok(match kind {
            MechanismKind::Wco => Mechanism::Wco(wco_coefficients(n, p)?),
            MechanismKind::Scaling => {
                let gamma = gamma.ok_or_else(|| Error::InvalidConfig("scaling requires gamma".into()))?;
                let model = solve_lp(n, p, gamma.to_vec())?;
                model.solution()?;
                Mechanism::Scaling(Box::new(model))
            }
            MechanismKind::BaileyCavallo => {
                if n < 2 || p == 0 {
                    return Err(Error::InvalidSize {
                        n,
                        p,
                        reason: "requires n >= 2 and p >= 1".into(),
                    });
                }
                Mechanism::BaileyCavallo { n, p }
            }
            MechanismKind::Hetero => Mechanism::Hetero(hetero_alphas(n, p)?),
        })
    }

    pub fn kind(&self) -> MechanismKind {
        match self {
            Mechanism::Wco(_) => MechanismKind::Wco,
            Mechanism::Scaling(_) => MechanismKind::Scaling,
            Mechanism::BaileyCavallo { .. } => MechanismKind::BaileyCavallo,
            Mechanism::Hetero(_) => MechanismKind::Hetero,
        }
    }

    pub fn size(&self) -> (usize, usize) {
        match self {
            Mechanism::Wco(c) => (c.n, c.p),
            Mechanism::Scaling(m) => (m.n, m.p),
            Mechanism::BaileyCavallo { n, p } => (*n, *p),
            Mechanism::Hetero(h) => (h.n, h.p),
        }
    }

    /// Guaranteed lower bound on the redistributed fraction. For HETERO this
    /// is the conjectured WCO index.
    pub fn index_bound(&self) -> Option<BigRational> {
        match self {
            Mechanism::Wco(c) => wco_index(c.n, c.p).ok(),
            Mechanism::Scaling(m) => m.solution().ok().map(|s| s.e_star.clone()),
            Mechanism::BaileyCavallo { n, p } if *n > 2 * p => Some(ratio((n - 2 * p) as i64, *n as i64)),
            Mechanism::BaileyCavallo { .. } => None,
            Mechanism::Hetero(h) => wco_index(h.n, h.p).ok(),
        }
    }

    /// Profile form the rebate rule can be applied to.
    pub fn required_shape(&self) -> Shape {
        match self {
            Mechanism::Wco(_) => Shape::Homogeneous,
            Mechanism::Scaling(_) => Shape::Scaled,
            _ => Shape::Free,
        }
    }
}

/// Form of generated profiles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Independent bid per agent and object.
    Free,
    /// One scalar per agent, bid on every object.
    Homogeneous,
    /// One scalar `v_i` per agent, bid `gamma_j * v_i` on object `j`.
    Scaled,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Generator {
    Uniform { lo: f64, hi: f64 },
    /// Every profile with entries in `{0, 1}`.
    Binary,
    /// A fixed list, usually loaded from a file.
    Profiles(Vec<BidProfile<f64>>),
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generator::Uniform { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
            Generator::Binary => f.write_str("binary"),
            Generator::Profiles(list) => write!(f, "file({} profiles)", list.len()),
        }
    }
}

impl FromStr for Generator {
    type Err = Error;

    /// `uniform`, `uniform:LO:HI` or `binary`. Files are loaded by the caller.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::InvalidConfig(format!("unknown generator `{s}`"));
        match parts.as_slice() {
            ["uniform"] => Ok(Generator::Uniform { lo: 0.0, hi: 100.0 }),
            ["uniform", lo, hi] => {
                let lo: f64 = lo.parse().map_err(|_| bad())?;
                let hi: f64 = hi.parse().map_err(|_| bad())?;
                check_bounds(lo, hi)?;
                Ok(Generator::Uniform { lo, hi })
            }
            ["binary"] => Ok(Generator::Binary),
            _ => Err(bad()),
        }
    }
}

fn check_bounds(lo: f64, hi: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi) {
        return Err(Error::InvalidConfig(format!(
            "uniform bounds must satisfy 0 <= lo < hi, got [{lo}, {hi}]"
        )));
    }
    Ok(())
}

fn binary_bits(n: usize, p: usize, shape: Shape) -> usize {
    match shape {
        Shape::Free => n * p,
        Shape::Homogeneous | Shape::Scaled => n,
    }
}

impl Generator {
    pub fn validate(&self, n: usize, p: usize, shape: Shape) -> Result<()> {
        match self {
            Generator::Uniform { lo, hi } => check_bounds(*lo, *hi),
            Generator::Binary => {
                let bits = binary_bits(n, p, shape);
                if bits > MAX_BINARY_BITS {
                    return Err(Error::EnumerationCap {
                        count: 1u128 << bits,
                        cap: 1u128 << MAX_BINARY_BITS,
                    });
                }
                Ok(())
            }
            Generator::Profiles(list) => {
                if let Some((k, bad)) = list.iter().enumerate().find(|(_, q)| q.n() != n || q.p() != p) {
                    return Err(Error::DimensionMismatch(format!(
                        "profile {} is {}x{}, expected {n}x{p}",
                        k + 1,
                        bad.n(),
                        bad.p()
                    )));
                }
                Ok(())
            }
        }
    }

    /// Number of profiles in the stream.
    pub fn len(&self, n: usize, p: usize, shape: Shape, trials: u64) -> u64 {
        match self {
            Generator::Uniform { .. } => trials,
            Generator::Binary => 1u64 << binary_bits(n, p, shape),
            Generator::Profiles(list) => list.len() as u64,
        }
    }

    /// Profile number `index` of the stream.
    pub fn profile(
        &self,
        n: usize,
        p: usize,
        shape: Shape,
        gamma: &[f64],
        seed: u64,
        index: u64,
    ) -> Result<BidProfile<f64>> {
        let expand = |values: Vec<f64>| match shape {
            Shape::Homogeneous => BidProfile::homogeneous(&values, p),
            Shape::Scaled => BidProfile::scaled(gamma, &values),
            Shape::Free => unreachable!("free profiles are drawn directly"),
        };
        match (self, shape) {
            (Generator::Uniform { lo, hi }, Shape::Free) => random_profile(n, p, *lo, *hi, seed, index),
            (Generator::Uniform { lo, hi }, _) => expand(random_values(n, *lo, *hi, seed, index)?),
            (Generator::Binary, Shape::Free) => binary_profile(n, p, index),
            (Generator::Binary, _) => expand(binary_entries(n, index)),
            (Generator::Profiles(list), _) => list
                .get(index as usize)
                .cloned()
                .ok_or_else(|| Error::InvalidConfig(format!("profile index {index} out of range"))),
        }
    }
}

/// Profiles from JSON text holding either one profile object or an array of them.
pub fn load_profiles(text: &str) -> Result<Vec<BidProfile<f64>>> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::InvalidProfile(e.to_string()))?;
    let files: Vec<ProfileFile> = if value.is_array() {
        serde_json::from_value(value)
    } else {
        serde_json::from_value(value).map(|f| vec![f])
    }
    .map_err(|e| Error::InvalidProfile(e.to_string()))?;
    files.into_iter().map(BidProfile::from_file).collect()
}

fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `lo + (hi - lo) * u / 2^32` for a uniform 32-bit `u`.
///
/// On `[0, 100]` every draw is a multiple of `2^-30` below `2^7`, so sums of
/// up to a few thousand draws are exact in `f64` and surplus comparisons
/// carry no rounding.
fn quantized(lo: f64, hi: f64, u: u32) -> f64 {
    lo + (hi - lo) * (f64::from(u) / 4_294_967_296.0)
}

/// Uniform profile number `index` of the stream seeded by `seed`.
pub fn random_profile(n: usize, p: usize, lo: f64, hi: f64, seed: u64, index: u64) -> Result<BidProfile<f64>> {
    check_bounds(lo, hi)?;
    let mut rng = stream_rng(seed, index);
    let rows = (0..n)
        .map(|_| (0..p).map(|_| quantized(lo, hi, rng.next_u32())).collect())
        .collect();
    BidProfile::new(n, p, rows)
}

/// `n` uniform per-agent scalars for homogeneous or scaled streams.
pub fn random_values(n: usize, lo: f64, hi: f64, seed: u64, index: u64) -> Result<Vec<f64>> {
    check_bounds(lo, hi)?;
    let mut rng = stream_rng(seed, index);
    Ok((0..n).map(|_| quantized(lo, hi, rng.next_u32())).collect())
}

/// Bits of `index` over `len` entries, first entry most significant.
fn binary_entries(len: usize, index: u64) -> Vec<f64> {
    (0..len).map(|k| ((index >> (len - 1 - k)) & 1) as f64).collect()
}

/// Binary profile number `index`; entries in row-major order, first entry
/// the most significant bit.
pub fn binary_profile(n: usize, p: usize, index: u64) -> Result<BidProfile<f64>> {
    if n * p > MAX_BINARY_BITS {
        return Err(Error::EnumerationCap {
            count: 1u128 << (n * p).min(127),
            cap: 1u128 << MAX_BINARY_BITS,
        });
    }
    let entries = binary_entries(n * p, index);
    BidProfile::new(n, p, entries.chunks(p).map(<[f64]>::to_vec).collect())
}

/// All `2^{np}` binary profiles in index order.
pub fn binary_profiles(n: usize, p: usize) -> Result<impl Iterator<Item = BidProfile<f64>>> {
    binary_profile(n, p, 0)?;
    Ok((0..1u64 << (n * p)).map(move |i| binary_profile(n, p, i).expect("size checked")))
}

/// Outcome plus the per-agent quantities the checks need.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation<M> {
    pub outcome: MechanismOutcome<M>,
    /// `v(k*)` over all agents.
    pub optimal_value: M,
    /// `t^{-i}` per agent.
    pub leave_one_out: Vec<M>,
    /// `Gamma_2 / Gamma_1` per agent (HETERO only).
    pub gamma_ratios: Vec<Option<f64>>,
}

/// Whether a surplus is positive. Exact for rationals; floats must clear
/// [`POSITIVE_SURPLUS_TOLERANCE`] relative to the optimal value.
pub fn has_positive_surplus<M: Money>(surplus: &M, optimal_value: &M) -> bool {
    if surplus.to_rational().is_some() {
        surplus.is_positive()
    } else {
        surplus.as_f64() > POSITIVE_SURPLUS_TOLERANCE * optimal_value.as_f64().max(1.0)
    }
}

pub fn evaluate<M: Money>(profile: &BidProfile<M>, mechanism: &Mechanism) -> Result<MechanismOutcome<M>> {
    evaluate_detailed(profile, mechanism).map(|e| e.outcome)
}

pub fn evaluate_detailed<M: Money>(profile: &BidProfile<M>, mechanism: &Mechanism) -> Result<Evaluation<M>> {
    let (n, p) = mechanism.size();
    if profile.n() != n || profile.p() != p {
        return Err(Error::DimensionMismatch(format!(
            "mechanism prepared for n={n}, p={p}; profile has n={}, p={}",
            profile.n(),
            profile.p()
        )));
    }
    let all = profile.agents();
    let clarke = clarke_payments(profile, all);
    let optimal_value = clarke.allocation.value.clone();
    let direct_leave_one_out =
        || -> Vec<M> { (0..n).map(|i| clarke_surplus(profile, all.without(i))).collect() };
    let (surplus, rebates, leave_one_out, gamma_ratios) = match mechanism {
        Mechanism::Wco(coeffs) => {
            let values = profile.homogeneous_values()?;
            let rebates = wco_rebates_for_values(&values, coeffs)?;
            (clarke_surplus(profile, all), rebates, direct_leave_one_out(), vec![None; n])
        }
        Mechanism::Scaling(model) => {
            let values = scaling_values(profile, &model.gamma)?;
            let (_, rebates) = scaling_outcome_for_values(model, &values)?;
            (clarke_surplus(profile, all), rebates, direct_leave_one_out(), vec![None; n])
        }
        Mechanism::BaileyCavallo { .. } => {
            let mut cache = SurplusCache::new(profile)?;
            let leave = leave_one_out_surpluses(&mut cache);
            let count = M::from_count(n);
            let rebates = leave.iter().map(|t| t.clone() / count.clone()).collect();
            (cache.surplus(all), rebates, leave, vec![None; n])
        }
        Mechanism::Hetero(coeffs) => {
            let mut cache = SurplusCache::new(profile)?;
            let eval = hetero_evaluate(&mut cache, coeffs)?;
            (cache.surplus(all), eval.rebates, eval.leave_one_out, eval.gamma_ratios)
        }
    };
    let total = rebates.iter().fold(M::zero(), |acc, r: &M| acc + r.clone());
    let fraction = if has_positive_surplus(&surplus, &optimal_value) {
        Some(match (total.to_rational(), surplus.to_rational()) {
            (Some(a), Some(b)) => (a / b).as_f64(),
            _ => total.as_f64() / surplus.as_f64(),
        })
    } else {
        None
    };
    Ok(Evaluation {
        outcome: MechanismOutcome {
            allocation: clarke.allocation,
            payments: clarke.payments,
            rebates,
            surplus,
            fraction,
        },
        optimal_value,
        leave_one_out,
        gamma_ratios,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub n: usize,
    pub p: usize,
    pub mechanism: MechanismKind,
    pub generator: Generator,
    /// Stream length for the uniform generator.
    pub trials: u64,
    pub seed: u64,
    /// Scaling mechanism only.
    pub gamma: Option<Vec<BigRational>>,
    /// Restrict BAILEY-CAVALLO or HETERO streams to identical objects.
    pub homogeneous: bool,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    /// Violation tolerance relative to `max(1, v(k*))`.
    pub tolerance: f64,
}

impl ExperimentConfig {
    pub fn new(n: usize, p: usize, mechanism: MechanismKind, generator: Generator) -> Self {
        ExperimentConfig {
            n,
            p,
            mechanism,
            generator,
            trials: DEFAULT_TRIALS,
            seed: 0,
            gamma: None,
            homogeneous: false,
            workers: None,
            tolerance: DEFAULT_TOLERANCE,
        }
    }

    fn shape(&self, mechanism: &Mechanism) -> Shape {
        match mechanism.required_shape() {
            Shape::Free if self.homogeneous => Shape::Homogeneous,
            s => s,
        }
    }

    /// Checks every field and prepares the mechanism.
    pub fn prepare(&self) -> Result<(Mechanism, Shape)> {
        if self.workers == Some(0) {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(Error::InvalidConfig("tolerance must be finite and nonnegative".into()));
        }
        if matches!(self.generator, Generator::Uniform { .. }) && self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        let mechanism = Mechanism::prepare(self.mechanism, self.n, self.p, self.gamma.as_deref())?;
        let shape = self.shape(&mechanism);
        self.generator.validate(self.n, self.p, shape)?;
        Ok((mechanism, shape))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub index: u64,
    pub fraction: f64,
    pub profile: ProfileFile,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Counterexample {
    pub index: u64,
    pub property: String,
    /// Size of the violation in money units.
    pub amount: f64,
}

/// Distribution of `Gamma_2 / Gamma_1` over agents with `Gamma_1 > 0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GammaHistogram {
    /// Ten bins of width 0.1 on `[0, 1]`; the last one is closed.
    pub counts: Vec<u64>,
    pub below_zero: u64,
    pub above_one: u64,
    pub observations: u64,
    pub min: Option<f64>,
    pub max: Option<f64>,
    /// Observations inside `[0.5, 1]`.
    pub in_half_to_one: u64,
}

impl Default for GammaHistogram {
    fn default() -> Self {
        GammaHistogram {
            counts: vec![0; 10],
            below_zero: 0,
            above_one: 0,
            observations: 0,
            min: None,
            max: None,
            in_half_to_one: 0,
        }
    }
}

impl GammaHistogram {
    pub fn record(&mut self, ratio: f64) {
        self.observations += 1;
        self.min = Some(self.min.map_or(ratio, |m| m.min(ratio)));
        self.max = Some(self.max.map_or(ratio, |m| m.max(ratio)));
        if ratio < 0.0 {
            self.below_zero += 1;
        } else if ratio > 1.0 {
            self.above_one += 1;
        } else {
            self.counts[((ratio * 10.0) as usize).min(9)] += 1;
        }
        if (0.5..=1.0).contains(&ratio) {
            self.in_half_to_one += 1;
        }
    }

    fn merge(&mut self, other: &GammaHistogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.below_zero += other.below_zero;
        self.above_one += other.above_one;
        self.observations += other.observations;
        self.in_half_to_one += other.in_half_to_one;
        self.min = match (self.min, other.min) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        self.max = match (self.max, other.max) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub mechanism: MechanismKind,
    pub n: usize,
    pub p: usize,
    pub generator: String,
    pub shape: Shape,
    pub seed: u64,
    pub profiles: u64,
    pub zero_surplus: u64,
    pub positive_surplus: u64,
    pub min_fraction: Option<f64>,
    pub mean_fraction: Option<f64>,
    /// Guaranteed (or for HETERO conjectured) lower bound on the fraction.
    pub index_bound: Option<f64>,
    pub bound_violations: u64,
    /// Profiles with some rebate below `-tolerance`.
    pub ir_violations: u64,
    /// Profiles with total rebate above `surplus + tolerance`.
    pub feasibility_violations: u64,
    /// Profiles with more than `2p` agents whose removal changes the surplus.
    pub pivotal_bound_violations: u64,
    pub max_pivotal_agents: usize,
    pub witness: Option<Witness>,
    /// HETERO rebates that break IR or feasibility; recorded, not fatal.
    pub conjecture_counterexamples: Vec<Counterexample>,
    pub gamma_ratio_histogram: Option<GammaHistogram>,
    pub note: Option<String>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Clone, Debug, Default)]
struct Tally {
    profiles: u64,
    zero_surplus: u64,
    positive: u64,
    sum_fraction: f64,
    worst: Option<(f64, u64)>,
    bound_violations: u64,
    ir_violations: u64,
    feasibility_violations: u64,
    pivotal_bound_violations: u64,
    max_pivotal: usize,
    counterexamples: Vec<Counterexample>,
    histogram: GammaHistogram,
}

impl Tally {
    fn record_fraction(&mut self, fraction: f64, index: u64) {
        self.positive += 1;
        self.sum_fraction += fraction;
        if self.worst.is_none_or(|(w, _)| fraction < w) {
            self.worst = Some((fraction, index));
        }
    }

    /// Folds a later chunk into this one.
    fn merge(&mut self, other: Tally) {
        self.profiles += other.profiles;
        self.zero_surplus += other.zero_surplus;
        self.positive += other.positive;
        self.sum_fraction += other.sum_fraction;
        if let Some((w, i)) = other.worst {
            if self.worst.is_none_or(|(mine, _)| w < mine) {
                self.worst = Some((w, i));
            }
        }
        self.bound_violations += other.bound_violations;
        self.ir_violations += other.ir_violations;
        self.feasibility_violations += other.feasibility_violations;
        self.pivotal_bound_violations += other.pivotal_bound_violations;
        self.max_pivotal = self.max_pivotal.max(other.max_pivotal);
        let room = MAX_COUNTEREXAMPLES.saturating_sub(self.counterexamples.len());
        self.counterexamples.extend(other.counterexamples.into_iter().take(room));
        self.histogram.merge(&other.histogram);
    }

    fn mean(&self) -> Option<f64> {
        (self.positive > 0).then(|| self.sum_fraction / self.positive as f64)
    }
}

/// Runs `job` over `0..total` in fixed chunks and returns the per-chunk
/// results in chunk order. The first error in chunk order wins.
fn run_chunks<A, F>(total: u64, workers: Option<usize>, job: F) -> Result<Vec<A>>
where
    A: Send,
    F: Fn(Range<u64>) -> Result<A> + Sync,
{
    let chunks: Vec<Range<u64>> = (0..total.div_ceil(CHUNK_SIZE))
        .map(|c| c * CHUNK_SIZE..((c + 1) * CHUNK_SIZE).min(total))
        .collect();
    let work = || chunks.par_iter().map(|r| job(r.clone())).collect::<Vec<_>>();
    let results = match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?
            .install(work),
        None => work(),
    };
    results.into_iter().collect()
}

/// Number of agents whose removal changes the surplus.
fn pivotal_agents<M: Money>(surplus: &M, leave_one_out: &[M]) -> usize {
    leave_one_out.iter().filter(|t| !t.ties(surplus)).count()
}

/// Whether the fraction respects the mechanism's lower bound.
fn within_bound(mechanism: &Mechanism, eval: &Evaluation<f64>, bound: Option<f64>, tol: f64) -> bool {
    let Some(fraction) = eval.outcome.fraction else {
        return true;
    };
    match mechanism {
        // sum_i t^{-i} >= (n - 2p) t, compared without division. On quantized
        // inputs both sides are exact.
        Mechanism::BaileyCavallo { n, p } if *n > 2 * p => {
            let lhs: f64 = eval.leave_one_out.iter().sum();
            lhs >= (n - 2 * p) as f64 * eval.outcome.surplus
        }
        _ => bound.is_none_or(|b| fraction >= b - tol),
    }
}

fn tally_profile(
    tally: &mut Tally,
    mechanism: &Mechanism,
    eval: &Evaluation<f64>,
    bound: Option<f64>,
    tol: f64,
    index: u64,
) -> Result<()> {
    let out = &eval.outcome;
    let slack = tol * eval.optimal_value.max(1.0);
    let hard = mechanism.kind() != MechanismKind::Hetero;
    let violation = |property: &str| Error::InvariantViolated {
        mechanism: mechanism.kind().name().into(),
        property: property.into(),
        index,
    };
    tally.profiles += 1;
    let min_rebate = out.rebates.iter().copied().fold(f64::INFINITY, f64::min);
    if min_rebate < -slack {
        if hard {
            return Err(violation("individual_rationality"));
        }
        tally.ir_violations += 1;
        tally.counterexamples.push(Counterexample {
            index,
            property: "individual_rationality".into(),
            amount: -min_rebate,
        });
    }
    let excess = out.total_rebate() - out.surplus;
    if excess > slack {
        if hard {
            return Err(violation("feasibility"));
        }
        tally.feasibility_violations += 1;
        tally.counterexamples.push(Counterexample {
            index,
            property: "feasibility".into(),
            amount: excess,
        });
    }
    tally.counterexamples.truncate(MAX_COUNTEREXAMPLES);
    let pivotal = pivotal_agents(&out.surplus, &eval.leave_one_out);
    tally.max_pivotal = tally.max_pivotal.max(pivotal);
    if pivotal > 2 * mechanism.size().1 {
        tally.pivotal_bound_violations += 1;
    }
    for r in eval.gamma_ratios.iter().flatten() {
        tally.histogram.record(*r);
    }
    match out.fraction {
        Some(f) => {
            tally.record_fraction(f, index);
            if !within_bound(mechanism, eval, bound, tol) {
                tally.bound_violations += 1;
            }
        }
        None => tally.zero_surplus += 1,
    }
    Ok(())
}

/// Evaluates the configured mechanism over the whole generator stream.
pub fn worst_case_index(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let (mechanism, shape) = config.prepare()?;
    let (n, p) = (config.n, config.p);
    let gamma: Vec<f64> = config
        .gamma
        .as_ref()
        .map(|g| g.iter().map(Money::as_f64).collect())
        .unwrap_or_default();
    let total = config.generator.len(n, p, shape, config.trials);
    let bound = mechanism.index_bound().map(|b| b.as_f64());
    let draw = |index| config.generator.profile(n, p, shape, &gamma, config.seed, index);
    let chunks = run_chunks(total, config.workers, |range| {
        let mut tally = Tally::default();
        for index in range {
            let eval = evaluate_detailed(&draw(index)?, &mechanism)?;
            tally_profile(&mut tally, &mechanism, &eval, bound, config.tolerance, index)?;
        }
        Ok(tally)
    })?;
    let mut tally = Tally::default();
    for chunk in chunks {
        tally.merge(chunk);
    }
    let witness = match tally.worst {
        Some((fraction, index)) => Some(Witness {
            index,
            fraction,
            profile: draw(index)?.to_file(),
        }),
        None => None,
    };
    Ok(ExperimentReport {
        mechanism: config.mechanism,
        n,
        p,
        generator: config.generator.to_string(),
        shape,
        seed: config.seed,
        profiles: tally.profiles,
        zero_surplus: tally.zero_surplus,
        positive_surplus: tally.positive,
        min_fraction: tally.worst.map(|w| w.0),
        mean_fraction: tally.mean(),
        index_bound: bound,
        bound_violations: tally.bound_violations,
        ir_violations: tally.ir_violations,
        feasibility_violations: tally.feasibility_violations,
        pivotal_bound_violations: tally.pivotal_bound_violations,
        max_pivotal_agents: tally.max_pivotal,
        witness,
        conjecture_counterexamples: tally.counterexamples,
        gamma_ratio_histogram: (config.mechanism == MechanismKind::Hetero).then_some(tally.histogram),
        note: (tally.positive == 0).then(|| "no profile with t > 0".to_string()),
    })
}

/// The profile on which every linear rebate of the forced form returns zero:
/// agent `k <= p` bids `2p - k - j + 1` on object `j`, all others bid zero.
pub fn adversarial_profile(n: usize, p: usize) -> Result<BidProfile<BigRational>> {
    if p < 2 || n <= p {
        return Err(Error::InvalidSize {
            n,
            p,
            reason: "requires n > p >= 2".into(),
        });
    }
    let rows = (1..=n)
        .map(|k| {
            (1..=p)
                .map(|j| if k <= p { int((2 * p + 1 - k - j) as i64) } else { BigRational::zero() })
                .collect()
        })
        .collect();
    BidProfile::new(n, p, rows)
}

/// Linear rebate of the form forced by anonymity and incentive
/// compatibility: agents are ranked, agent `i` is removed from the ranked
/// list `w_1, ..., w_{n-1}` of the others, and `r_i = sum_m (c_m, w_m)` with
/// `c_1 = ... = c_p = 0`. `coeffs` holds `c_{p+1}, ..., c_{n-1}`, each of
/// length `p`.
pub fn ranked_linear_rebates<M: Money>(profile: &BidProfile<M>, coeffs: &[Vec<BigRational>]) -> Result<Vec<M>> {
    let (n, p) = (profile.n(), profile.p());
    if n <= p || coeffs.len() != n - 1 - p || coeffs.iter().any(|c| c.len() != p) {
        return Err(Error::DimensionMismatch(format!(
            "expected {} coefficient vectors of length {p}",
            n.saturating_sub(p + 1)
        )));
    }
    let order = rank_agents(profile)?.order();
    let c: Vec<Vec<M>> = coeffs
        .iter()
        .map(|v| v.iter().map(M::from_rational).collect())
        .collect();
    let mut rebates = vec![M::zero(); n];
    for (pos, &agent) in order.iter().enumerate() {
        let others: Vec<usize> = order
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != pos)
            .map(|(_, &a)| a)
            .collect();
        rebates[agent] = others
            .iter()
            .enumerate()
            .skip(p)
            .fold(M::zero(), |acc, (m, &other)| {
                profile
                    .row(other)
                    .iter()
                    .zip(&c[m - p])
                    .fold(acc, |acc, (b, cm)| acc + cm.clone() * b.clone())
            });
    }
    Ok(rebates)
}

/// One CSV line of the Figure 1 comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Figure1Row {
    pub p: usize,
    pub mech: String,
    pub worst_fraction: Option<f64>,
    pub mean_fraction: Option<f64>,
    pub trials: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Figure1Comparison {
    pub p: usize,
    pub positive_surplus: u64,
    /// Share of positive-surplus profiles where BAILEY-CAVALLO returns a
    /// strictly larger fraction than HETERO.
    pub bc_better_share: Option<f64>,
    pub hetero_ir_violations: u64,
    pub hetero_feasibility_violations: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Figure1 {
    pub n: usize,
    pub rows: Vec<Figure1Row>,
    pub comparisons: Vec<Figure1Comparison>,
}

impl Figure1 {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn row(&self, p: usize, mech: &str) -> Option<&Figure1Row> {
        self.rows.iter().find(|r| r.p == p && r.mech == mech)
    }
}

#[derive(Clone, Debug, Default)]
struct PairTally {
    bc: Tally,
    hetero: Tally,
    bc_better: u64,
}

/// BAILEY-CAVALLO and HETERO on the same uniform `[0, 100]` stream for each
/// `p`, plus the WCO index as a reference row. HETERO is skipped where it
/// is undefined (`n <= p + 1`).
pub fn figure1_experiment(
    n: usize,
    p_range: Range<usize>,
    trials: u64,
    seed: u64,
    workers: Option<usize>,
) -> Result<Figure1> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    if workers == Some(0) {
        return Err(Error::InvalidConfig("workers must be at least 1".into()));
    }
    let mut rows = Vec::new();
    let mut comparisons = Vec::new();
    for p in p_range {
        Mechanism::prepare(MechanismKind::BaileyCavallo, n, p, None)?;
        let hetero = hetero_alphas(n, p).ok();
        let chunks = run_chunks(trials, workers, |range| {
            let mut t = PairTally::default();
            for index in range {
                let profile = random_profile(n, p, 0.0, 100.0, seed, index)?;
                let mut cache = SurplusCache::new(&profile)?;
                let all = profile.agents();
                let surplus = cache.surplus(all);
                let value = cache.value(all);
                let leave = leave_one_out_surpluses(&mut cache);
                t.bc.profiles += 1;
                if !has_positive_surplus(&surplus, &value) {
                    t.bc.zero_surplus += 1;
                    continue;
                }
                let bc_fraction = leave.iter().sum::<f64>() / n as f64 / surplus;
                t.bc.record_fraction(bc_fraction, index);
                if let Some(coeffs) = &hetero {
                    let eval = hetero_evaluate(&mut cache, coeffs)?;
                    let total: f64 = eval.rebates.iter().sum();
                    let slack = DEFAULT_TOLERANCE * value.max(1.0);
                    t.hetero.profiles += 1;
                    if eval.rebates.iter().any(|&r| r < -slack) {
                        t.hetero.ir_violations += 1;
                    }
                    if total > surplus + slack {
                        t.hetero.feasibility_violations += 1;
                    }
                    let h_fraction = total / surplus;
                    t.hetero.record_fraction(h_fraction, index);
                    if bc_fraction > h_fraction {
                        t.bc_better += 1;
                    }
                }
            }
            Ok(t)
        })?;
        let mut total = PairTally::default();
        for c in chunks {
            total.bc.merge(c.bc);
            total.hetero.merge(c.hetero);
            total.bc_better += c.bc_better;
        }
        let row = |mech: &str, tally: &Tally| Figure1Row {
            p,
            mech: mech.into(),
            worst_fraction: tally.worst.map(|w| w.0),
            mean_fraction: tally.mean(),
            trials,
            seed,
        };
        rows.push(row("bailey_cavallo", &total.bc));
        if hetero.is_some() {
            rows.push(row("hetero", &total.hetero));
        }
        if let Ok(e) = wco_index(n, p) {
            rows.push(Figure1Row {
                p,
                mech: "wco_index".into(),
                worst_fraction: Some(e.as_f64()),
                mean_fraction: None,
                trials,
                seed,
            });
        }
        comparisons.push(Figure1Comparison {
            p,
            positive_surplus: total.hetero.positive,
            bc_better_share: (hetero.is_some() && total.hetero.positive > 0)
                .then(|| total.bc_better as f64 / total.hetero.positive as f64),
            hetero_ir_violations: total.hetero.ir_violations,
            hetero_feasibility_violations: total.hetero.feasibility_violations,
        });
    }
    Ok(Figure1 { n, rows, comparisons })
}
