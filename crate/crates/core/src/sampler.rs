//! Distribution evaluation and ancestral sampling with forced observations.
//!
//! Samples are drawn parents-first along the dependency graph; variables
//! observed through a positive `delta_interval` take their observed value
//! without consuming randomness. Forcing applies to continuous-support
//! variables only: on countable supports `delta_interval` is an equality
//! test and the variable is sampled as usual.

use crate::formula::PropFormula;
use crate::transform::{CoreDist, DependencyGraph, GroundDfplpProgram, RvId, SupportKind};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use statrs::function::gamma::ln_gamma;
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("invalid distribution parameter: {0}")]
    InvalidParameter(String),
    #[error("random variable {var} observed with two different values ({a} and {b})")]
    ImpossibleObservation { var: String, a: f64, b: f64 },
    #[error("no sample value for random variable {0}")]
    UnassignedVariable(String),
}

/// One joint value assignment to all random variables.
#[derive(Debug, Clone)]
pub struct AncestralSample {
    pub values: Vec<f64>,
    pub forced: Vec<bool>,
}

impl AncestralSample {
    pub fn value(&self, id: RvId) -> f64 {
        self.values[id.index()]
    }
}

/// Deterministic per-sample generator: the stream for sample `index` under
/// `seed` is ChaCha8 keyed with a splitmix64 hash of both, so results do not
/// depend on how samples are distributed over threads.
pub fn per_sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(
        seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15),
    ))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Collects the forced values from the positive `delta_interval` occurrences
/// of the formula: every continuous-support variable observed this way is
/// pinned to its observed value. Two distinct values for one variable are
/// rejected.
pub fn forced_assignments(
    f: &PropFormula,
    core: &GroundDfplpProgram,
) -> Result<HashMap<RvId, f64>, SampleError> {
    let mut forced: HashMap<RvId, f64> = HashMap::new();
    for (_, rv, value) in &f.positive_deltas {
        if !core.vars[rv.index()].support.is_continuous() {
            continue;
        }
        if let Some(&prev) = forced.get(rv) {
            if prev != *value {
                return Err(SampleError::ImpossibleObservation {
                    var: core.vars[rv.index()].name.clone(),
                    a: prev,
                    b: *value,
                });
            }
        } else {
            forced.insert(*rv, *value);
        }
    }
    Ok(forced)
}

/// Draws one ancestral sample: topological order, forced variables take
/// their forced value, everything else is sampled from its distribution with
/// parent values substituted into the parameters.
pub fn draw_ancestral(
    core: &GroundDfplpProgram,
    graph: &DependencyGraph,
    forced: &HashMap<RvId, f64>,
    rng: &mut impl Rng,
) -> Result<AncestralSample, SampleError> {
    let n = core.vars.len();
    let mut values = vec![f64::NAN; n];
    let mut forced_mask = vec![false; n];
    for &id in &graph.topo {
        if let Some(&v) = forced.get(&id) {
            values[id.index()] = v;
            forced_mask[id.index()] = true;
            continue;
        }
        let info = &core.vars[id.index()];
        let vals = &values;
        let lookup = |p: RvId| vals[p.index()];
        values[id.index()] = sample_dist(&info.dist, &lookup, rng)
            .map_err(|e| SampleError::InvalidParameter(format!("{}: {e}", info.name)))?;
    }
    Ok(AncestralSample {
        values,
        forced: forced_mask,
    })
}

fn require(cond: bool, msg: impl Fn() -> String) -> Result<(), ParamError> {
    if cond {
        Ok(())
    } else {
        Err(ParamError(msg()))
    }
}

#[derive(Debug, Error)]
#[error("{0}")]
pub struct ParamError(String);

impl ParamError {
    pub fn new(msg: String) -> Self {
        ParamError(msg)
    }
}

impl From<SampleError> for ParamError {
    fn from(e: SampleError) -> Self {
        ParamError(e.to_string())
    }
}

/// Samples a value from a core distribution with the given parent values.
pub fn sample_dist(
    dist: &CoreDist,
    lookup: &impl Fn(RvId) -> f64,
    rng: &mut impl Rng,
) -> Result<f64, ParamError> {
    Ok(match dist {
        CoreDist::Flip(p) => {
            let p = p.eval(lookup);
            require((-1e-9..=1.0 + 1e-9).contains(&p), || {
                format!("flip weight {p} outside [0,1]")
            })?;
            let p = p.clamp(0.0, 1.0);
            if rng.random::<f64>() < p {
                1.0
            } else {
                0.0
            }
        }
        CoreDist::Finite(pairs) => {
            let weights: Vec<f64> = pairs.iter().map(|(p, _)| p.eval(lookup)).collect();
            let mut sum = 0.0;
            for &w in &weights {
                require((-1e-9..=1.0 + 1e-9).contains(&w), || {
                    format!("finite weight {w} outside [0,1]")
                })?;
                sum += w.max(0.0);
            }
            require(sum <= 1.0 + 1e-9, || {
                format!("finite weights sum to {sum}")
            })?;
            let u = rng.random::<f64>();
            let mut acc = 0.0;
            let mut result = f64::NAN;
            for (&w, (_, value)) in weights.iter().zip(pairs) {
                acc += w.max(0.0);
                if u < acc {
                    result = *value;
                    break;
                }
            }
            if result.is_nan() && (sum - 1.0).abs() <= 1e-9 {
                // Exhaustive support: numerical slack goes to the last entry.
                result = pairs.last().map(|(_, v)| *v).unwrap_or(f64::NAN);
            }
            result
        }
        CoreDist::Normal(mu, sigma) => {
            let (mu, sigma) = (mu.eval(lookup), sigma.eval(lookup));
            require(sigma > 0.0 && sigma.is_finite(), || {
                format!("normal stddev {sigma} must be positive")
            })?;
            rand_distr::Normal::new(mu, sigma)
                .map_err(|e| ParamError(e.to_string()))?
                .sample(rng)
        }
        CoreDist::Beta(a, b) => {
            let (a, b) = (a.eval(lookup), b.eval(lookup));
            require(a > 0.0 && b > 0.0, || {
                format!("beta parameters ({a},{b}) must be positive")
            })?;
            rand_distr::Beta::new(a, b)
                .map_err(|e| ParamError(e.to_string()))?
                .sample(rng)
        }
        CoreDist::Poisson(l) => {
            let l = l.eval(lookup);
            require(l >= 0.0 && l.is_finite(), || {
                format!("poisson rate {l} must be non-negative")
            })?;
            // Rate zero is the point mass at zero.
            if l == 0.0 {
                0.0
            } else {
                let v: f64 = rand_distr::Poisson::new(l)
                    .map_err(|e| ParamError(e.to_string()))?
                    .sample(rng);
                v.round()
            }
        }
        CoreDist::UniformCont(a, b) => {
            let (a, b) = (a.eval(lookup), b.eval(lookup));
            require(a < b, || format!("uniform bounds ({a},{b}) must satisfy a<b"))?;
            a + (b - a) * rng.random::<f64>()
        }
        CoreDist::UniformList(values) => {
            require(!values.is_empty(), || "empty uniform list".to_string())?;
            values[rng.random_range(0..values.len())]
        }
        CoreDist::Delta(v) => v.eval(lookup),
    })
}

/// Density (continuous) or mass (countable) of a core distribution at `x`,
/// with parent values substituted. Zero outside the support.
pub fn density(
    dist: &CoreDist,
    lookup: &impl Fn(RvId) -> f64,
    x: f64,
) -> Result<f64, ParamError> {
    Ok(match dist {
        CoreDist::Flip(p) => {
            let p = p.eval(lookup).clamp(0.0, 1.0);
            if x == 1.0 {
                p
            } else if x == 0.0 {
                1.0 - p
            } else {
                0.0
            }
        }
        CoreDist::Finite(pairs) => {
            let mut mass = 0.0;
            let mut listed = 0.0;
            let mut hit = false;
            for (p, value) in pairs {
                let w = p.eval(lookup).max(0.0);
                listed += w;
                if *value == x {
                    mass += w;
                    hit = true;
                }
            }
            if x.is_nan() && !hit {
                (1.0 - listed).max(0.0)
            } else {
                mass
            }
        }
        CoreDist::Normal(mu, sigma) => {
            let (mu, sigma) = (mu.eval(lookup), sigma.eval(lookup));
            require(sigma > 0.0 && sigma.is_finite(), || {
                format!("normal stddev {sigma} must be positive")
            })?;
            let z = (x - mu) / sigma;
            (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
        }
        CoreDist::Beta(a, b) => {
            let (a, b) = (a.eval(lookup), b.eval(lookup));
            require(a > 0.0 && b > 0.0, || {
                format!("beta parameters ({a},{b}) must be positive")
            })?;
            if !(0.0..=1.0).contains(&x) {
                0.0
            } else {
                let ln_b = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
                ((a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_b).exp()
            }
        }
        CoreDist::Poisson(l) => {
            let l = l.eval(lookup);
            require(l >= 0.0 && l.is_finite(), || {
                format!("poisson rate {l} must be non-negative")
            })?;
            if x < 0.0 || x.fract() != 0.0 {
                0.0
            } else if l == 0.0 {
                if x == 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                (x * l.ln() - l - ln_gamma(x + 1.0)).exp()
            }
        }
        CoreDist::UniformCont(a, b) => {
            let (a, b) = (a.eval(lookup), b.eval(lookup));
            require(a < b, || format!("uniform bounds ({a},{b}) must satisfy a<b"))?;
            if (a..=b).contains(&x) {
                1.0 / (b - a)
            } else {
                0.0
            }
        }
        CoreDist::UniformList(values) => {
            let n = values.len() as f64;
            values.iter().filter(|&&v| v == x).count() as f64 / n
        }
        CoreDist::Delta(v) => {
            if v.eval(lookup) == x {
                1.0
            } else {
                0.0
            }
        }
    })
}

/// Whether samples of this variable can influence circuit leaves (it is
/// neither forced nor symbolically marginalized).
pub fn support_of(core: &GroundDfplpProgram, id: RvId) -> &SupportKind {
    &core.vars[id.index()].support
}
