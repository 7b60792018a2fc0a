//! Scenario configuration and the seeded ground-truth generator.

use std::path::PathBuf;

use possr_core::solver::DeltapRule;
use possr_core::AtomicMeasure;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Context, Result};
use crate::formats::{MeasureFile, NormName, WindowSpec};

/// Draws K atoms uniformly from [floor, 1 − floor]² with weights uniform in
/// `weight_range`, rejecting configurations whose separation is below
/// `sep_floor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub k: usize,
    pub sep_floor: f64,
    pub weight_range: [f64; 2],
    pub seed: u64,
}

const MAX_DRAWS: usize = 1_000_000;

impl GeneratorSpec {
    pub fn generate(&self) -> Result<AtomicMeasure> {
        let [lo, hi] = self.weight_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(AppError::Config("weight_range must satisfy 0 < lo ≤ hi".into()));
        }
        if !(self.sep_floor > 0.0) || (self.k as f64 + 1.0) * self.sep_floor >= 1.0 {
            return Err(AppError::Config(format!(
                "{} atoms cannot be {}-separated",
                self.k, self.sep_floor
            )));
        }
        if self.k == 0 {
            return Ok(AtomicMeasure::empty());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let span = self.sep_floor..=1.0 - self.sep_floor;
        for _ in 0..MAX_DRAWS {
            let triples: Vec<(f64, f64, f64)> = (0..self.k)
                .map(|_| {
                    let t = rng.random_range(span.clone());
                    let s = rng.random_range(span.clone());
                    let w = if lo == hi { lo } else { rng.random_range(lo..hi) };
                    (t, s, w)
                })
                .collect();
            let x = AtomicMeasure::from_triples(&triples).context("generator")?;
            if x.len() == self.k && x.sep().context("generator")? >= self.sep_floor {
                return Ok(x);
            }
        }
        Err(AppError::Config(format!(
            "no {}-separated configuration of {} atoms after {MAX_DRAWS} draws",
            self.sep_floor, self.k
        )))
    }
}

/// Ground truth: explicit atoms or a generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Truth {
    Atoms(MeasureFile),
    Generate { generate: GeneratorSpec },
}

impl Truth {
    pub fn measure(&self) -> Result<AtomicMeasure> {
        match self {
            Truth::Atoms(m) => m.to_measure(),
            Truth::Generate { generate } => generate.generate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase", deny_unknown_fields)]
pub enum DeltapSpec {
    Explicit {
        value: f64,
    },
    /// δ + L·R.
    #[default]
    Additive,
    /// (1 + L·R)·δ.
    Multiplicative,
}

impl DeltapSpec {
    pub fn rule(&self) -> DeltapRule {
        match *self {
            DeltapSpec::Explicit { value } => DeltapRule::Explicit(value),
            DeltapSpec::Additive => DeltapRule::Additive,
            DeltapSpec::Multiplicative => DeltapRule::Multiplicative,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DeltapSpec::Explicit { .. } => "explicit",
            DeltapSpec::Additive => "additive",
            DeltapSpec::Multiplicative => "multiplicative",
        }
    }
}

fn default_grid_n() -> usize {
    256
}

fn default_deltap_floor() -> f64 {
    1e-8
}

fn default_lambda() -> f64 {
    1.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub window: WindowSpec,
    pub truth: Truth,
    /// Frobenius norm of the added noise.
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub noise_seed: u64,
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
    #[serde(default)]
    pub deltap: DeltapSpec,
    /// Lower bound on δ′, so that noiseless runs have a nonzero radius.
    #[serde(default = "default_deltap_floor")]
    pub deltap_floor: f64,
    /// Separation scale of the model; enables R(x,K,ε) and certificates.
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Sparsity of the model; defaults to the number of true atoms.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub certificates: bool,
    #[serde(default)]
    pub ground_norm: NormName,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl Scenario {
    pub fn new(window: WindowSpec, truth: Truth) -> Self {
        Scenario {
            window,
            truth,
            delta: 0.0,
            noise_seed: 0,
            grid_n: default_grid_n(),
            deltap: DeltapSpec::default(),
            deltap_floor: default_deltap_floor(),
            epsilon: None,
            k: None,
            lambda: default_lambda(),
            certificates: false,
            ground_norm: NormName::L2,
            out: None,
        }
    }

    /// Sets the noise seed and, for generated truth, the generator seed.
    pub fn reseed(&mut self, seed: u64) {
        self.noise_seed = seed;
        if let Truth::Generate { generate } = &mut self.truth {
            generate.seed = seed;
        }
    }

    /// Offsets both seeds by `rep`.
    pub fn replicate(&self, rep: u64) -> Scenario {
        let mut sc = self.clone();
        sc.noise_seed = sc.noise_seed.wrapping_add(rep);
        if let Truth::Generate { generate } = &mut sc.truth {
            generate.seed = generate.seed.wrapping_add(rep);
        }
        sc
    }
}
