//! Random channels from a two-level Dirichlet model.
//!
//! `k₀` prototype rows are drawn from `Dir(s₁·1)`. Every input slot is tied
//! to a prototype and its row is drawn from `Dir(s₂·prototype)`, so a large
//! `s₂` keeps rows close to their prototype. A small mass `ε` is then added
//! to every entry so that all rows share full support.
//!
//! All randomness comes from a ChaCha20 stream seeded with
//! [`GeneratorConfig::seed`]. Prototypes are drawn first, then the slot
//! assignment (uniform-random mode only), then rows in slot order.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution as _, Gamma, Open01};
use serde::{Deserialize, Serialize};

use crate::channel::Channel;
use crate::error::{Error, Result};
use crate::prob::Distribution;

/// Prototype entries below this are raised to it before scaling.
pub const PROTOTYPE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotAssignment {
    /// Slot `i` uses prototype `i mod k₀`.
    #[default]
    RoundRobin,
    /// Each slot picks a prototype uniformly at random.
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub num_inputs: usize,
    pub num_outputs: usize,
    pub num_prototypes: usize,
    pub proto_scale: f64,
    pub row_scale: f64,
    pub smoothing_eps: f64,
    pub seed: u64,
    pub assignment: SlotAssignment,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            num_inputs: 30,
            num_outputs: 30,
            num_prototypes: 5,
            proto_scale: 0.005,
            row_scale: 1e10,
            smoothing_eps: 1e-9,
            seed: 0,
            assignment: SlotAssignment::RoundRobin,
        }
    }
}

impl GeneratorConfig {
    pub fn new(num_inputs: usize, num_outputs: usize) -> Self {
        Self {
            num_inputs,
            num_outputs,
            ..Self::default()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_outputs == 0 {
            return bad("num_outputs must be positive".into());
        }
        if self.num_prototypes == 0 || self.num_prototypes >= self.num_inputs {
            return bad(format!(
                "num_prototypes must lie in [1, num_inputs), got {} for {} inputs",
                self.num_prototypes, self.num_inputs
            ));
        }
        if !(self.proto_scale > 0.0 && self.proto_scale.is_finite()) {
            return bad(format!("proto_scale must be positive, got {}", self.proto_scale));
        }
        if !(self.row_scale > 0.0 && self.row_scale.is_finite()) {
            return bad(format!("row_scale must be positive, got {}", self.row_scale));
        }
        if !(self.smoothing_eps >= 0.0 && self.smoothing_eps.is_finite()) {
            return bad(format!("smoothing_eps must be non-negative, got {}", self.smoothing_eps));
        }
        Ok(())
    }
}

fn log_gamma_sample<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        Gamma::new(shape, 1.0).expect("shape is positive").sample(rng).ln()
    } else {
        // G(a) = G(a + 1) · U^(1/a), kept in log space for tiny shapes.
        let g = Gamma::new(shape + 1.0, 1.0).expect("shape is positive").sample(rng);
        let u: f64 = Open01.sample(rng);
        g.ln() + u.ln() / shape
    }
}

/// One draw from `Dir(alpha)` via normalized Gamma variates.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Distribution> {
    if alpha.is_empty() {
        return Err(Error::InvalidAlpha("empty parameter vector".into()));
    }
    if let Some((i, a)) = alpha.iter().enumerate().find(|(_, &a)| !(a > 0.0 && a.is_finite())) {
        return Err(Error::InvalidAlpha(format!("alpha[{i}] = {a}")));
    }
    let logs: Vec<f64> = alpha.iter().map(|&a| log_gamma_sample(a, rng)).collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    Distribution::normalized(w)
}

/// Prototype rows and the prototype index of every slot.
pub fn sample_prototypes<R: Rng + ?Sized>(config: &GeneratorConfig, rng: &mut R) -> Result<(Vec<Distribution>, Vec<usize>)> {
    config.validate()?;
    let flat = vec![config.proto_scale; config.num_outputs];
    let protos = (0..config.num_prototypes)
        .map(|_| sample_dirichlet(&flat, rng))
        .collect::<Result<Vec<_>>>()?;
    let slots = match config.assignment {
        SlotAssignment::RoundRobin => (0..config.num_inputs).map(|i| i % config.num_prototypes).collect(),
        SlotAssignment::UniformRandom => (0..config.num_inputs)
            .map(|_| rng.random_range(0..config.num_prototypes))
            .collect(),
    };
    Ok((protos, slots))
}

/// Samples a channel; the same config always gives the same channel.
pub fn sample_dmc(config: &GeneratorConfig) -> Result<Channel> {
    Ok(sample_dmc_with_groups(config)?.0)
}

/// Like [`sample_dmc`], also returning each row's prototype index.
pub fn sample_dmc_with_groups(config: &GeneratorConfig) -> Result<(Channel, Vec<usize>)> {
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let (protos, slots) = sample_prototypes(config, &mut rng)?;
    let mut rows = Vec::with_capacity(config.num_inputs);
    for &s in &slots {
        let alpha: Vec<f64> = protos[s]
            .iter()
            .map(|&p| config.row_scale * p.max(PROTOTYPE_FLOOR))
            .collect();
        let mut row = sample_dirichlet(&alpha, &mut rng)?.into_vec();
        if config.smoothing_eps > 0.0 {
            row.iter_mut().for_each(|v| *v += config.smoothing_eps);
        }
        rows.push(Distribution::normalized(row)?);
    }
    Ok((Channel::from_distributions(&rows)?, slots))
}
