//! Pseudo-capacity: the minimax KL radius with the output law restricted to
//! the pseudo-simplex `{Q : Q(y) ≥ η, Σ Q = 1}`.
//!
//! Solved through its concave dual `f(p) = min_{Q ≥ η} Σ_x p(x) D(W_x‖Q)`.
//! The inner minimum is a closed-form water-filling of `q = pW` against the
//! floor `η`, and `∇f(p)_x = D(W_x‖Q(p))`, so the same multiplicative and
//! Newton steps as for capacity apply. Every iterate yields a certified
//! bracket: `f(p) ≤ C_η ≤ max_x D(W_x‖Q(p))`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::capacity::{ascend, gram, neg_entropies, weighted, Ascent, DEFAULT_MAX_ITER, DEFAULT_TOL_NATS};
use crate::channel::Channel;
use crate::error::{Error, Result};
use crate::prob::{kl_raw, Distribution};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoOptions {
    pub tol_nats: f64,
    pub max_iter: usize,
}

impl Default for PseudoOptions {
    fn default() -> Self {
        Self {
            tol_nats: DEFAULT_TOL_NATS,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PseudoCapacityResult {
    pub eta: f64,
    /// `max_x D(W_x‖Q_η)` at the returned output law.
    pub pseudo_capacity_nats: f64,
    /// Pseudo capacity-achieving output distribution; every mass `≥ η`.
    pub output_dist: Distribution,
    /// Dual weights over the inputs at termination.
    pub input_dist: Distribution,
    pub lower_bracket: f64,
    pub upper_bracket: f64,
    pub iterations: usize,
}

/// `argmax_{Q ≥ η, ΣQ = 1} Σ_y q(y) ln Q(y)`, i.e. `Q(y) = max(η, q(y)/λ)`
/// with `λ` fixed by normalization. Requires `0 < η ≤ 1/|Y|`.
pub fn waterfill(q: &[f64], eta: f64) -> Vec<f64> {
    let n = q.len();
    if is_uniform_floor(eta, n) {
        return vec![1.0 / n as f64; n];
    }
    let mut clamped = vec![false; n];
    let mut n_clamped = 0usize;
    loop {
        let free_mass: f64 = q
            .iter()
            .zip(&clamped)
            .filter(|(_, &c)| !c)
            .map(|(v, _)| v)
            .sum();
        let budget = 1.0 - n_clamped as f64 * eta;
        let lambda = free_mass / budget;
        let mut changed = false;
        for (y, &v) in q.iter().enumerate() {
            if !clamped[y] && !(v > eta * lambda) {
                clamped[y] = true;
                n_clamped += 1;
                changed = true;
            }
        }
        if !changed {
            return q
                .iter()
                .zip(&clamped)
                .map(|(&v, &c)| if c { eta } else { v / lambda })
                .collect();
        }
        if n_clamped == n {
            return vec![1.0 / n as f64; n];
        }
    }
}

/// `η` equal to `1/|Y|` up to rounding pins `Q` to the uniform law.
fn is_uniform_floor(eta: f64, ny: usize) -> bool {
    eta * ny as f64 >= 1.0 - 1e-12
}

struct Dual<'a> {
    channel: &'a Channel,
    eta: f64,
    neg_ent: Vec<f64>,
    q: Vec<f64>,
    q_eta: Vec<f64>,
    d: Vec<f64>,
}

impl Dual<'_> {
    fn divergences(&self, q_eta: &[f64], out: &mut [f64]) {
        let log_q: Vec<f64> = q_eta.iter().map(|v| v.ln()).collect();
        for ((o, row), &ne) in out.iter_mut().zip(self.channel.rows()).zip(&self.neg_ent) {
            let cross: f64 = row
                .iter()
                .zip(&log_q)
                .filter(|(&w, _)| w > 0.0)
                .map(|(w, l)| w * l)
                .sum();
            *o = ne - cross;
        }
    }
}

impl Ascent for Dual<'_> {
    fn num_inputs(&self) -> usize {
        self.channel.num_inputs()
    }

    fn eval(&mut self, p: &[f64]) -> (f64, f64) {
        self.channel.push_forward_into(p, &mut self.q);
        self.q_eta = waterfill(&self.q, self.eta);
        let mut d = std::mem::take(&mut self.d);
        self.divergences(&self.q_eta, &mut d);
        self.d = d;
        (weighted(p, &self.d), self.d.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    fn probe(&self, p: &[f64]) -> (f64, f64) {
        let mut q = vec![0.0; self.channel.num_outputs()];
        self.channel.push_forward_into(p, &mut q);
        let mut d = vec![0.0; p.len()];
        self.divergences(&waterfill(&q, self.eta), &mut d);
        (weighted(p, &d), d.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    fn grad(&self) -> &[f64] {
        &self.d
    }

    // Unclamped outputs follow `Q = q / λ` with `λ ∝ Σ_free q`, so the
    // curvature is the capacity one on the free outputs minus a rank-one
    // term. That term leaves `p` in the kernel; adding `c·11ᵀ` restores
    // definiteness without changing the form on the tangent space.
    fn curvature(&self, support: &[usize]) -> DMatrix<f64> {
        let free: Vec<bool> = self.q.iter().zip(&self.q_eta).map(|(&q, &qe)| q > 0.0 && qe > self.eta).collect();
        let inv_q: Vec<f64> = self
            .q
            .iter()
            .zip(&free)
            .map(|(&q, &f)| if f { 1.0 / q } else { 0.0 })
            .collect();
        let mut h = gram(self.channel, support, &inv_q);
        let mass: f64 = self.q.iter().zip(&free).filter(|(_, &f)| f).map(|(q, _)| q).sum();
        if mass > 0.0 {
            let s: Vec<f64> = support
                .iter()
                .map(|&x| self.channel.row(x).iter().zip(&free).filter(|(_, &f)| f).map(|(w, _)| w).sum())
                .collect();
            let m = support.len();
            let shift = h.trace() / m as f64;
            for i in 0..m {
                for j in 0..m {
                    h[(i, j)] += shift - s[i] * s[j] / mass;
                }
            }
        }
        h
    }
}

/// `C_η(W) = min_{Q ∈ P_η} max_x D(W_x‖Q)` for `0 < η ≤ 1/|Y|`.
pub fn pseudo_capacity(
    channel: &Channel,
    eta: f64,
    opts: &PseudoOptions,
) -> Result<PseudoCapacityResult> {
    let ny = channel.num_outputs();
    let max_eta = 1.0 / ny as f64;
    if !(eta > 0.0 && eta <= max_eta) {
        return Err(Error::EtaInfeasible { eta, max: max_eta });
    }
    if !(opts.tol_nats > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {}",
            opts.tol_nats
        )));
    }
    solve(channel, eta, opts.tol_nats, opts.max_iter)
}

fn solve(channel: &Channel, eta: f64, tol: f64, max_iter: usize) -> Result<PseudoCapacityResult> {
    let (nx, ny) = (channel.num_inputs(), channel.num_outputs());
    if is_uniform_floor(eta, ny) {
        let uniform = vec![1.0 / ny as f64; ny];
        let d: Vec<f64> = channel.rows().map(|r| kl_raw(r, &uniform)).collect();
        let best = (0..nx).fold(0, |b, x| if d[x] > d[b] { x } else { b });
        return Ok(PseudoCapacityResult {
            eta,
            pseudo_capacity_nats: d[best],
            output_dist: Distribution::from_vec_unchecked(uniform),
            input_dist: Distribution::degenerate(nx, best),
            lower_bracket: d[best],
            upper_bracket: d[best],
            iterations: 0,
        });
    }
    let mut dual = Dual {
        channel,
        eta,
        neg_ent: neg_entropies(channel),
        q: vec![0.0; channel.num_outputs()],
        q_eta: Vec::new(),
        d: vec![0.0; channel.num_inputs()],
    };
    let run = ascend(&mut dual, tol, max_iter, None)?;
    Ok(PseudoCapacityResult {
        eta,
        pseudo_capacity_nats: run.upper,
        output_dist: Distribution::from_vec_unchecked(dual.q_eta),
        input_dist: Distribution::from_vec_unchecked(run.p),
        lower_bracket: run.lower,
        upper_bracket: run.upper,
        iterations: run.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capacity::{blahut_arimoto, BaOptions};
    use crate::channel::fixtures::{bsc, counterexample};
    use crate::channel::validate_channel;
    use crate::prob::kl_raw;

    /// Exhaustive 1-D search over `Q = (q, 1 − q)` for binary outputs.
    fn grid_oracle_binary(ch: &Channel, eta: f64, step: f64) -> f64 {
        let n = ((1.0 - 2.0 * eta) / step).round() as usize;
        (0..=n)
            .map(|i| {
                let q = eta + i as f64 * step;
                let qv = [q, 1.0 - q];
                ch.rows().map(|r| kl_raw(r, &qv)).fold(0.0, f64::max)
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn waterfill_properties() {
        let q = [0.7, 0.25, 0.05, 0.0];
        let w = waterfill(&q, 0.1);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(w.iter().all(|&v| v >= 0.1 - 1e-15));
        assert_eq!(w[2], 0.1);
        assert_eq!(w[3], 0.1);
        // unclamped entries keep their ratio
        assert!((w[0] / w[1] - 0.7 / 0.25).abs() < 1e-12);
        // inactive floor is the identity
        let q = [0.3, 0.3, 0.4];
        let w = waterfill(&q, 0.01);
        for (a, b) in q.iter().zip(&w) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(waterfill(&[1.0, 0.0], 0.5), vec![0.5, 0.5]);
    }

    #[test]
    fn bsc_matches_grid() {
        let ch = bsc(0.1);
        let r = pseudo_capacity(&ch, 0.25, &PseudoOptions::default()).unwrap();
        let oracle = grid_oracle_binary(&ch, 0.25, 1e-6);
        assert!((r.pseudo_capacity_nats - oracle).abs() < 1e-5);
    }

    #[test]
    fn active_floor_matches_grid() {
        let ch = validate_channel(&[vec![0.98, 0.02], vec![0.6, 0.4]]).unwrap();
        for eta in [0.05, 0.2, 0.35, 0.5] {
            let r = pseudo_capacity(&ch, eta, &PseudoOptions::default()).unwrap_or_else(|e| panic!("eta {eta}: {e}"));
            let oracle = grid_oracle_binary(&ch, eta, 1e-6);
            assert!(
                (r.pseudo_capacity_nats - oracle).abs() < 1e-5,
                "eta {eta}: {} vs {oracle}",
                r.pseudo_capacity_nats
            );
            assert!(r.output_dist.iter().all(|&v| v >= eta - 1e-12));
        }
    }

    #[test]
    fn small_eta_recovers_capacity() {
        let ch = counterexample();
        let c = blahut_arimoto(&ch, &BaOptions::default()).unwrap().capacity_nats;
        let r = pseudo_capacity(&ch, 1e-9, &PseudoOptions::default()).unwrap();
        assert!((r.pseudo_capacity_nats - c).abs() < 1e-4);
        assert!(r.pseudo_capacity_nats >= c - 1e-9);
    }

    #[test]
    fn uniform_rows_are_zero() {
        let ch = validate_channel(&[vec![0.25; 4], vec![0.25; 4]]).unwrap();
        for eta in [0.01, 0.1, 0.25] {
            let r = pseudo_capacity(&ch, eta, &PseudoOptions::default()).unwrap();
            assert!(r.pseudo_capacity_nats.abs() < 1e-12);
        }
    }

    #[test]
    fn eta_bounds() {
        let ch = bsc(0.1);
        let opts = PseudoOptions::default();
        assert!(matches!(
            pseudo_capacity(&ch, 0.51, &opts),
            Err(Error::EtaInfeasible { .. })
        ));
        assert!(pseudo_capacity(&ch, 0.0, &opts).is_err());
        assert!(pseudo_capacity(&ch, 0.5, &opts).is_ok());
    }

    #[test]
    fn converges_when_dual_is_nearly_linear() {
        let cfg = crate::gen::GeneratorConfig {
            num_prototypes: 1,
            proto_scale: 0.05,
            ..crate::gen::GeneratorConfig::new(10, 7).with_seed(88446)
        };
        let ch = crate::gen::sample_dmc(&cfg).unwrap();
        let r = pseudo_capacity(&ch, 0.5 / 7.0, &PseudoOptions::default()).unwrap();
        assert!(r.upper_bracket - r.lower_bracket <= DEFAULT_TOL_NATS);
    }
}
