//! χ² geometry of a channel's convex hull.
//!
//! The distance from a conditional row `P_x` to the hull of a sub-channel
//! `W_R` is `δ_R(x) = min_c χ²(P_x ‖ Σ_r c_r W_r)` over the simplex of
//! mixture weights. The objective is convex in `c` and the feasible set is a
//! simplex whose vertices are the rows, so the linear subproblem of
//! Frank–Wolfe is a single argmin over rows. Away steps keep convergence
//! linear when the optimum sits on a face; each step uses an exact line
//! search along its segment. Once plain steps slow down, projected Newton
//! steps on the current face finish the job.

use nalgebra::DVector;
use serde::Serialize;

use crate::capacity::gram;
use crate::channel::{Channel, InputSubset};
use crate::error::{Error, Result};
use crate::newton::face_direction;
use crate::prob::{chi2_raw, min_positive, DivergenceValue, Distribution};

pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-7;
/// Frank–Wolfe iterations before Newton steps are attempted.
const NEWTON_AFTER: usize = 64;
/// Share of the distance to the boundary taken when dropping a vertex is
/// rejected.
const BOUNDARY_FRACTION: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HullOptions {
    /// Stop once the Frank–Wolfe duality gap is at most `tol · max(1, χ²)`.
    pub tol: f64,
    pub max_iter: usize,
    pub record_trace: bool,
}

impl Default for HullOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HullProjection {
    /// `δ_R(x)`.
    pub distance_chi2: DivergenceValue,
    /// Mixture weights over the rows of `W_R`.
    pub weights: Distribution,
    /// The minimizing hull point `Σ_r c_r W_r`.
    pub hull_point: Distribution,
    /// Smallest non-zero mass of `hull_point`.
    pub kappa: f64,
    pub gap: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub trace: Vec<f64>,
}

fn check_dims(sub: &Channel, target: &[f64]) -> Result<()> {
    if sub.num_outputs() != target.len() {
        return Err(Error::DimensionMismatch {
            expected: sub.num_outputs(),
            found: target.len(),
        });
    }
    Ok(())
}

/// `dφ/dγ` for `φ(γ) = χ²(P ‖ M + γ·dir)`; `+∞` once a covered coordinate
/// loses its mass.
fn line_derivative(target: &[f64], mix: &[f64], dir: &[f64], gamma: f64) -> f64 {
    let mut acc = 0.0;
    for ((&p, &m), &d) in target.iter().zip(mix).zip(dir) {
        if p > 0.0 {
            let v = m + gamma * d;
            if v <= 0.0 {
                return f64::INFINITY;
            }
            let r = p / v;
            acc -= r * r * d;
        }
    }
    acc
}

fn line_search(target: &[f64], mix: &[f64], dir: &[f64], gamma_max: f64) -> f64 {
    if line_derivative(target, mix, dir, 0.0) >= 0.0 {
        return 0.0;
    }
    if line_derivative(target, mix, dir, gamma_max) <= 0.0 {
        return gamma_max;
    }
    let (mut lo, mut hi) = (0.0, gamma_max);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if line_derivative(target, mix, dir, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Projects `target` onto the hull of the rows of `sub` in χ² divergence.
///
/// Fails with [`Error::SupportInfeasible`] when no mixture of the rows covers
/// the support of `target` (the distance is then infinite).
pub fn chi2_to_hull(sub: &Channel, target: &[f64], opts: &HullOptions) -> Result<HullProjection> {
    check_dims(sub, target)?;
    let m = sub.num_inputs();
    let ny = sub.num_outputs();

    // the uniform mixture has the widest support of any hull point
    let covered = (0..ny).all(|y| target[y] == 0.0 || sub.rows().any(|r| r[y] > 0.0));
    if !covered {
        return Err(Error::SupportInfeasible);
    }

    let (nn, nn_val) = nearest_neighbor(sub, target)?;
    let mut weights = if nn_val.is_finite() {
        let mut w = vec![0.0; m];
        w[nn] = 1.0;
        w
    } else {
        vec![1.0 / m as f64; m]
    };
    let mut mix = vec![0.0; ny];
    sub.push_forward_into(&weights, &mut mix);
    let mut value = chi2_raw(target, &mix);
    let mut trace = Vec::new();
    let mut grad = vec![0.0; m];
    let mut dir = vec![0.0; ny];
    let mut gap = f64::INFINITY;
    let mut restarted = false;
    if m == 1 {
        return Ok(finish(sub, weights, mix, value, 0.0, 0, trace));
    }

    for iter in 1..=opts.max_iter {
        gradient(sub, target, &mix, &mut grad);
        if !grad.iter().all(|g| g.is_finite()) {
            if !restarted {
                // restart from the point with the widest support
                restarted = true;
                weights = vec![1.0 / m as f64; m];
                sub.push_forward_into(&weights, &mut mix);
                value = chi2_raw(target, &mix);
                continue;
            }
            // χ² beyond the range of f64
            return Ok(finish(sub, weights, mix, f64::INFINITY, f64::INFINITY, iter, trace));
        }
        let at_c: f64 = grad.iter().zip(&weights).map(|(g, c)| g * c).sum();
        let mut fw = 0;
        let mut away = usize::MAX;
        for r in 0..m {
            if grad[r] < grad[fw] {
                fw = r;
            }
            if weights[r] > 0.0 && (away == usize::MAX || grad[r] > grad[away]) {
                away = r;
            }
        }
        gap = at_c - grad[fw];
        if opts.record_trace {
            trace.push(value);
        }
        if gap <= opts.tol * value.max(1.0) {
            return Ok(finish(sub, weights, mix, value, gap, iter, trace));
        }
        let away_gap = grad[away] - at_c;
        let ca = weights[away];
        let away_max = if ca < 1.0 { ca / (1.0 - ca) } else { f64::INFINITY };
        // compare the linear decrease available over each feasible segment
        let (gamma, toward, gamma_max) = if gap >= away_gap * away_max.min(1.0) {
            let row = sub.row(fw);
            for ((d, &w), &q) in dir.iter_mut().zip(row).zip(&mix) {
                *d = w - q;
            }
            (line_search(target, &mix, &dir, 1.0), true, 1.0)
        } else {
            let row = sub.row(away);
            for ((d, &w), &q) in dir.iter_mut().zip(row).zip(&mix) {
                *d = q - w;
            }
            (line_search(target, &mix, &dir, away_max.min(1e12)), false, away_max)
        };
        if gamma > 0.0 {
            step_weights(&mut weights, gamma, gamma_max, if toward { Some(fw) } else { None }, away);
            sub.push_forward_into(&weights, &mut mix);
            value = chi2_raw(target, &mix);
        }
        if iter > NEWTON_AFTER {
            if let Some(next) = newton_step(sub, target, &weights, &mix, value) {
                weights = next;
                sub.push_forward_into(&weights, &mut mix);
                value = chi2_raw(target, &mix);
                continue;
            }
        }
        if gamma == 0.0 {
            // no descent along either direction at floating-point resolution
            return Ok(finish(sub, weights, mix, value, gap, iter, trace));
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iter,
        gap,
    })
}

/// Moves `gamma` toward vertex `fw`, or away from vertex `away` when `fw`
/// is `None`.
fn step_weights(weights: &mut [f64], gamma: f64, gamma_max: f64, fw: Option<usize>, away: usize) {
    match fw {
        Some(fw) => {
            weights.iter_mut().for_each(|c| *c *= 1.0 - gamma);
            weights[fw] += gamma;
        }
        None => {
            weights.iter_mut().for_each(|c| *c *= 1.0 + gamma);
            weights[away] -= gamma;
            if gamma >= gamma_max {
                weights[away] = 0.0;
            }
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|c| *c = (*c / total).max(0.0));
}

/// `∂/∂c_r χ²(P‖M) = −Σ_y P(y)² W_r(y) / M(y)²`.
fn gradient(sub: &Channel, target: &[f64], mix: &[f64], grad: &mut [f64]) {
    let scale: Vec<f64> = target
        .iter()
        .zip(mix)
        .map(|(&p, &q)| if p > 0.0 { (p / q) * (p / q) } else { 0.0 })
        .collect();
    for (g, row) in grad.iter_mut().zip(sub.rows()) {
        *g = -row.iter().zip(&scale).map(|(w, s)| w * s).sum::<f64>();
    }
}

fn fw_gap(grad: &[f64], weights: &[f64]) -> f64 {
    let at_c: f64 = grad.iter().zip(weights).map(|(g, c)| g * c).sum();
    at_c - grad.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Newton step on the face spanned by the current weights, with a ratio
/// test at the boundary. Dropping a vertex must lower the objective;
/// otherwise the step stops short of the boundary and backtracks until the
/// objective drops, or holds within rounding while the duality gap shrinks.
fn newton_step(sub: &Channel, target: &[f64], weights: &[f64], mix: &[f64], value: f64) -> Option<Vec<f64>> {
    let support: Vec<usize> = (0..weights.len()).filter(|&r| weights[r] > 0.0).collect();
    let m = support.len();
    if m < 2 {
        return None;
    }
    let mut grad = vec![0.0; weights.len()];
    gradient(sub, target, mix, &mut grad);
    let gap = fw_gap(&grad, weights);
    // Hessian: 2 Σ_y P(y)² W_r(y) W_s(y) / M(y)³
    let scale: Vec<f64> = target
        .iter()
        .zip(mix)
        .map(|(&p, &q)| if p > 0.0 { 2.0 * (p / q) * (p / q) / q } else { 0.0 })
        .collect();
    let h = gram(sub, &support, &scale);
    let g = DVector::from_iterator(m, support.iter().map(|&r| grad[r]));
    let dir = -face_direction(&h, &g)?;
    let mut alpha_max = f64::INFINITY;
    let mut blocking = None;
    for (i, &r) in support.iter().enumerate() {
        if dir[i] < 0.0 {
            let t = -weights[r] / dir[i];
            if t < alpha_max {
                (alpha_max, blocking) = (t, Some(r));
            }
        }
    }
    let noise = 4.0 * f64::EPSILON * value.max(1.0);
    let mut next_mix = vec![0.0; mix.len()];
    let mut next_grad = vec![0.0; weights.len()];
    let mut step = |alpha: f64, drop: Option<usize>| {
        let mut next = weights.to_vec();
        for (i, &r) in support.iter().enumerate() {
            next[r] = (weights[r] + alpha * dir[i]).max(0.0);
        }
        if let Some(r) = drop {
            next[r] = 0.0;
        }
        let z: f64 = next.iter().sum();
        next.iter_mut().for_each(|c| *c /= z);
        sub.push_forward_into(&next, &mut next_mix);
        let v = chi2_raw(target, &next_mix);
        let narrows = v <= value + noise && {
            gradient(sub, target, &next_mix, &mut next_grad);
            fw_gap(&next_grad, &next) < gap
        };
        (next, v, narrows)
    };
    let mut alpha = 1.0;
    if alpha_max <= 1.0 {
        let (next, v, _) = step(alpha_max, blocking);
        if v < value - noise {
            return Some(next);
        }
        alpha = BOUNDARY_FRACTION * alpha_max;
    }
    for _ in 0..60 {
        let (next, v, narrows) = step(alpha, None);
        if v < value - noise || narrows {
            return Some(next);
        }
        alpha *= 0.5;
    }
    None
}

fn finish(
    sub: &Channel,
    weights: Vec<f64>,
    mut mix: Vec<f64>,
    value: f64,
    gap: f64,
    iterations: usize,
    trace: Vec<f64>,
) -> HullProjection {
    sub.push_forward_into(&weights, &mut mix);
    let kappa = min_positive(&mix);
    HullProjection {
        distance_chi2: DivergenceValue::from_f64(value),
        weights: Distribution::from_vec_unchecked(weights),
        hull_point: Distribution::from_vec_unchecked(mix),
        kappa,
        gap,
        iterations,
        trace,
    }
}

/// Hull distance as a divergence value, mapping support infeasibility to
/// `Infinite`.
pub fn hull_distance(sub: &Channel, target: &[f64], opts: &HullOptions) -> Result<DivergenceValue> {
    match chi2_to_hull(sub, target, opts) {
        Ok(p) => Ok(p.distance_chi2),
        Err(Error::SupportInfeasible) => Ok(DivergenceValue::Infinite),
        Err(e) => Err(e),
    }
}

/// `true` iff the χ² distance to the hull is at most `membership_tol`.
pub fn is_in_hull(
    sub: &Channel,
    target: &[f64],
    membership_tol: f64,
    opts: &HullOptions,
) -> Result<bool> {
    Ok(hull_distance(sub, target, opts)?.value() <= membership_tol)
}

/// Row of `sub` closest to `target` in χ², ties to the smallest index.
pub fn nearest_neighbor(sub: &Channel, target: &[f64]) -> Result<(usize, DivergenceValue)> {
    check_dims(sub, target)?;
    let mut best = (0, f64::INFINITY);
    for (r, row) in sub.rows().enumerate() {
        let v = chi2_raw(target, row);
        if v < best.1 {
            best = (r, v);
        }
    }
    Ok((best.0, DivergenceValue::from_f64(best.1)))
}

/// Removed symbols split by whether they lie in the hull of the kept ones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HullPartition {
    pub in_hull: Vec<usize>,
    pub out_of_hull: Vec<usize>,
}

pub fn partition_removed(
    channel: &Channel,
    kept: &InputSubset,
    membership_tol: f64,
    opts: &HullOptions,
) -> Result<HullPartition> {
    let sub = channel.restrict(kept)?;
    let mut part = HullPartition {
        in_hull: Vec::new(),
        out_of_hull: Vec::new(),
    };
    for x in kept.complement(channel.num_inputs()) {
        if is_in_hull(&sub, channel.row(x), membership_tol, opts)? {
            part.in_hull.push(x);
        } else {
            part.out_of_hull.push(x);
        }
    }
    Ok(part)
}

/// Drops, in ascending index order, every row lying in the hull of the rows
/// still present. Dropping hull members never changes the capacity.
pub fn prune_redundant(
    channel: &Channel,
    membership_tol: f64,
    opts: &HullOptions,
) -> Result<InputSubset> {
    let n = channel.num_inputs();
    let mut alive = vec![true; n];
    let mut remaining = n;
    for x in 0..n {
        if remaining == 1 {
            break;
        }
        let others: Vec<usize> = (0..n).filter(|&r| r != x && alive[r]).collect();
        let sub = channel.restrict(&InputSubset::new(others)?)?;
        if is_in_hull(&sub, channel.row(x), membership_tol, opts)? {
            alive[x] = false;
            remaining -= 1;
        }
    }
    InputSubset::new((0..n).filter(|&x| alive[x]).collect())
}
