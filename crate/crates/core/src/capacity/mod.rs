//! Channel capacity with a certified primal/dual bracket.
//!
//! The Blahut–Arimoto iterate `p` gives a lower bound `I(p; W)` and the
//! induced output law `q = pW` gives an upper bound `max_x D(W_x‖q)` by the
//! minimax characterization of capacity. Iteration stops once the two meet
//! within the requested tolerance.

mod pseudo;

pub use pseudo::{pseudo_capacity, waterfill, PseudoCapacityResult, PseudoOptions};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::channel::Channel;
use crate::error::{Error, Result};
use crate::newton::face_direction;
use crate::prob::{kl_raw, Distribution};

pub const DEFAULT_TOL_NATS: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// Inputs with optimal mass above this are treated as support symbols by
/// [`verify_kkt`].
pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaOptions {
    pub tol_nats: f64,
    pub max_iter: usize,
    /// Keep the lower bracket of every iterate in [`CapacityResult::trace`].
    pub record_trace: bool,
}

impl Default for BaOptions {
    fn default() -> Self {
        Self {
            tol_nats: DEFAULT_TOL_NATS,
            max_iter: DEFAULT_MAX_ITER,
            record_trace: false,
        }
    }
}

impl BaOptions {
    pub fn new(tol_nats: f64, max_iter: usize) -> Self {
        Self {
            tol_nats,
            max_iter,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CapacityResult {
    pub capacity_nats: f64,
    pub input_dist: Distribution,
    /// Capacity-achieving output distribution. Outputs it would miss carry
    /// a negligible mass so that it certifies `upper_bracket`.
    pub output_dist: Distribution,
    pub lower_bracket: f64,
    pub upper_bracket: f64,
    pub iterations: usize,
    #[serde(skip)]
    pub trace: Vec<f64>,
}

impl CapacityResult {
    pub fn gap(&self) -> f64 {
        self.upper_bracket - self.lower_bracket
    }
}

/// Capacity of `channel` in nats.
pub fn capacity(channel: &Channel) -> Result<f64> {
    Ok(blahut_arimoto(channel, &BaOptions::default())?.capacity_nats)
}

pub fn blahut_arimoto(channel: &Channel, opts: &BaOptions) -> Result<CapacityResult> {
    if !(opts.tol_nats > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {}",
            opts.tol_nats
        )));
    }
    solve(channel, opts.tol_nats, opts.max_iter, opts.record_trace)
}

/// Blahut–Arimoto iterations before switching to Newton steps.
pub const NEWTON_START: usize = 64;
/// Classical iterations run whenever a Newton step fails to improve.
const FALLBACK_ITERS: usize = 10;
/// Share of the distance to the boundary taken when dropping an input is
/// rejected.
const BOUNDARY_FRACTION: f64 = 0.99;
/// Mass spread over outputs the current output law misses when forming the
/// upper bracket.
const UNCOVERED_MASS: f64 = 1e-12;

/// A concave objective on the input simplex whose gradient `d` also
/// certifies an upper bound `max_x d_x`.
pub(crate) trait Ascent {
    fn num_inputs(&self) -> usize;
    /// Caches the state at `p`; returns `(lower, upper)`.
    fn eval(&mut self, p: &[f64]) -> (f64, f64);
    /// `(lower, upper)` at `p` without touching the cache.
    fn probe(&self, p: &[f64]) -> (f64, f64);
    /// Gradient at the cached point.
    fn grad(&self) -> &[f64];
    /// Negated Hessian at the cached point, restricted to `support`.
    fn curvature(&self, support: &[usize]) -> DMatrix<f64>;
}

struct Evaluator<'a> {
    channel: &'a Channel,
    /// `Σ_y W log W` per row.
    neg_ent: Vec<f64>,
    q: Vec<f64>,
    d: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    fn new(channel: &'a Channel) -> Self {
        Self {
            channel,
            neg_ent: neg_entropies(channel),
            q: vec![0.0; channel.num_outputs()],
            d: vec![0.0; channel.num_inputs()],
        }
    }
}

impl Evaluator<'_> {
    /// Fills `d` for input law `p` with output law `q`; returns
    /// `(lower, upper)`.
    ///
    /// Outputs that `q` misses get mass `UNCOVERED_MASS` in the law used
    /// for the upper bracket and for inputs outside the support, so every
    /// divergence stays finite. Any output law certifies an upper bound.
    fn fill(&self, p: &[f64], q: &[f64], d: &mut [f64]) -> (f64, f64) {
        let log_q: Vec<f64> = q.iter().map(|&v| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY }).collect();
        let log_smooth: Vec<f64> = smoothed(q).iter().map(|&v| v.ln()).collect();
        let mut upper = 0.0f64;
        for (x, row) in self.channel.rows().enumerate() {
            let smooth = (self.neg_ent[x] - cross_term(row, &log_smooth, p[x])).max(0.0);
            upper = upper.max(smooth);
            d[x] = if p[x] > 0.0 {
                (self.neg_ent[x] - cross_term(row, &log_q, p[x])).max(0.0)
            } else {
                smooth
            };
        }
        (weighted(p, d), upper)
    }
}

impl Ascent for Evaluator<'_> {
    fn num_inputs(&self) -> usize {
        self.channel.num_inputs()
    }

    fn eval(&mut self, p: &[f64]) -> (f64, f64) {
        self.channel.push_forward_into(p, &mut self.q);
        let mut d = std::mem::take(&mut self.d);
        let bracket = self.fill(p, &self.q, &mut d);
        self.d = d;
        bracket
    }

    fn probe(&self, p: &[f64]) -> (f64, f64) {
        let mut q = vec![0.0; self.channel.num_outputs()];
        self.channel.push_forward_into(p, &mut q);
        self.fill(p, &q, &mut vec![0.0; p.len()])
    }

    fn grad(&self) -> &[f64] {
        &self.d
    }

    fn curvature(&self, support: &[usize]) -> DMatrix<f64> {
        let inv_q: Vec<f64> = self.q.iter().map(|&v| if v > 0.0 { 1.0 / v } else { 0.0 }).collect();
        gram(self.channel, support, &inv_q)
    }
}

/// `q` with `UNCOVERED_MASS` spread over the outputs it misses.
fn smoothed(q: &[f64]) -> Vec<f64> {
    let missed = q.iter().filter(|&&v| v <= 0.0).count();
    if missed == 0 {
        return q.to_vec();
    }
    let t = UNCOVERED_MASS;
    q.iter().map(|&v| if v > 0.0 { (1.0 - t) * v } else { t / missed as f64 }).collect()
}

pub(crate) fn neg_entropies(channel: &Channel) -> Vec<f64> {
    channel
        .rows()
        .map(|r| r.iter().filter(|&&w| w > 0.0).map(|&w| w * w.ln()).sum())
        .collect()
}

/// `Σ_y W_i(y) W_j(y) s(y)` over `support`.
pub(crate) fn gram(channel: &Channel, support: &[usize], s: &[f64]) -> DMatrix<f64> {
    let m = support.len();
    let rows: Vec<&[f64]> = support.iter().map(|&x| channel.row(x)).collect();
    let mut h = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v: f64 = rows[i].iter().zip(rows[j]).zip(s).map(|((a, b), c)| a * b * c).sum();
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

/// `Σ_x p(x) d(x)` over the support of `p`.
pub(crate) fn weighted(p: &[f64], d: &[f64]) -> f64 {
    p.iter().zip(d).filter(|(&px, _)| px > 0.0).map(|(a, b)| a * b).sum()
}

fn ba_step(p: &mut [f64], d: &[f64], upper: f64) {
    let mut z = 0.0;
    for (px, &dx) in p.iter_mut().zip(d) {
        *px *= (dx - upper).exp();
        z += *px;
    }
    p.iter_mut().for_each(|px| *px /= z);
}

pub(crate) struct Ascended {
    pub p: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
}

/// Multiplicative iterations followed by projected Newton steps on the
/// support. Plain iterations converge only linearly, and very slowly when
/// rows are nearly identical or an unused input is weakly active; Newton
/// steps drive such masses to zero exactly. Only the bracket decides when
/// to stop, so the switch never costs accuracy. On return the evaluator
/// holds the state of the returned point.
pub(crate) fn ascend<A: Ascent>(ev: &mut A, tol: f64, max_iter: usize, mut trace: Option<&mut Vec<f64>>) -> Result<Ascended> {
    let nx = ev.num_inputs();
    let mut p = vec![1.0 / nx as f64; nx];
    let (mut lower, mut upper) = (0.0, f64::INFINITY);
    let mut spent = 0usize;
    let mut fallback = NEWTON_START;
    let mut entering: Vec<usize> = Vec::new();

    while spent < max_iter {
        spent += 1;
        (lower, upper) = ev.eval(&p);
        if let Some(t) = trace.as_deref_mut() {
            t.push(lower);
        }
        if upper - lower <= tol {
            return Ok(Ascended {
                p,
                lower,
                upper,
                iterations: spent,
            });
        }
        let d = ev.grad();
        if fallback > 0 {
            fallback -= 1;
            ba_step(&mut p, d, upper);
            continue;
        }
        let upper_support = (0..nx).filter(|&x| p[x] > 0.0).map(|x| d[x]).fold(0.0, f64::max);
        if upper_support - lower <= 0.5 * tol {
            // Optimal on the current support: bring in the violators.
            entering = (0..nx).filter(|&x| p[x] == 0.0 && d[x] > upper_support).collect();
            p = admit(ev, &p, &entering, lower, &mut spent);
            continue;
        }
        let newton = newton_step(ev, &p, (lower, upper), &mut spent);
        // Dropping an input right after admitting it means the Newton model
        // is unreliable on this face; race it against a step towards the
        // steepest vertex.
        let entered = std::mem::take(&mut entering);
        let suspect = newton.as_ref().is_some_and(|next| entered.iter().any(|&x| next[x] == 0.0));
        let vertex = if suspect { vertex_step(ev, &p, lower, &mut spent) } else { None };
        match (newton, vertex) {
            (Some(a), Some((b, lo_b))) => {
                spent += 1;
                p = if ev.probe(&a).0 >= lo_b { a } else { b };
            }
            (Some(a), None) => p = a,
            (None, _) => {
                fallback = FALLBACK_ITERS;
                ba_step(&mut p, ev.grad(), upper);
            }
        }
    }
    Err(Error::NotConverged {
        iterations: spent,
        gap: upper - lower,
    })
}

/// Line search from `p` towards the vertex of largest gradient. Returns the
/// best point found and its objective if it improves on `lower`.
fn vertex_step<A: Ascent>(ev: &A, p: &[f64], lower: f64, spent: &mut usize) -> Option<(Vec<f64>, f64)> {
    let noise = 4.0 * f64::EPSILON * lower.abs().max(1.0);
    let d = ev.grad();
    let j = (0..p.len()).max_by(|&a, &b| d[a].total_cmp(&d[b]))?;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut alpha = 1.0;
    for _ in 0..50 {
        let mut next: Vec<f64> = p.iter().map(|&v| (1.0 - alpha) * v).collect();
        next[j] += alpha;
        *spent += 1;
        let lo = ev.probe(&next).0;
        match &best {
            Some((_, b)) if lo <= *b => break,
            _ if lo > lower + noise => best = Some((next, lo)),
            _ => {}
        }
        alpha *= 0.5;
    }
    best
}

/// `p` with a small mass moved onto `entering`, shrunk until the objective
/// increases. Falls back to the largest mass when no trial improves.
fn admit<A: Ascent>(ev: &A, p: &[f64], entering: &[usize], lower: f64, spent: &mut usize) -> Vec<f64> {
    let noise = 4.0 * f64::EPSILON * lower.abs().max(1.0);
    let seeded = |seed: f64| {
        let mut next = p.to_vec();
        entering.iter().for_each(|&x| next[x] = seed);
        let z: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= z);
        next
    };
    let first = 1e-3 * p.iter().copied().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
    let mut seed = first;
    for _ in 0..12 {
        let next = seeded(seed);
        *spent += 1;
        if ev.probe(&next).0 > lower + noise {
            return next;
        }
        seed *= 0.1;
    }
    seeded(first)
}

fn solve(channel: &Channel, tol: f64, max_iter: usize, record_trace: bool) -> Result<CapacityResult> {
    if channel.num_inputs() == 1 {
        let out = channel.row_distribution(0);
        return Ok(CapacityResult {
            capacity_nats: 0.0,
            input_dist: Distribution::degenerate(1, 0),
            output_dist: out,
            lower_bracket: 0.0,
            upper_bracket: 0.0,
            iterations: 0,
            trace: Vec::new(),
        });
    }
    let mut ev = Evaluator::new(channel);
    let mut trace = Vec::new();
    let run = ascend(&mut ev, tol, max_iter, record_trace.then_some(&mut trace))?;
    Ok(CapacityResult {
        capacity_nats: run.lower,
        input_dist: Distribution::from_vec_unchecked(run.p),
        output_dist: Distribution::from_vec_unchecked(smoothed(&ev.q)),
        lower_bracket: run.lower,
        upper_bracket: run.upper,
        iterations: run.iterations,
        trace,
    })
}

/// One Newton step over the face of the simplex spanned by the current
/// support, with a ratio test at the boundary and backtracking until the
/// objective increases, or holds within rounding while the bracket
/// narrows. `None` if no such step was found.
fn newton_step<A: Ascent>(ev: &A, p: &[f64], bracket: (f64, f64), spent: &mut usize) -> Option<Vec<f64>> {
    let (lower, upper) = bracket;
    let noise = 4.0 * f64::EPSILON * lower.abs().max(1.0);
    let support: Vec<usize> = (0..p.len()).filter(|&x| p[x] > 0.0).collect();
    let m = support.len();
    if m < 2 {
        return None;
    }
    let h = ev.curvature(&support);
    let g = DVector::from_iterator(m, support.iter().map(|&x| ev.grad()[x]));
    let dp = face_direction(&h, &g)?;
    let mut alpha_max = f64::INFINITY;
    let mut blocking = None;
    for (i, &x) in support.iter().enumerate() {
        if dp[i] < 0.0 {
            let r = -p[x] / dp[i];
            if r < alpha_max {
                (alpha_max, blocking) = (r, Some(x));
            }
        }
    }
    let step = |alpha: f64, drop: Option<usize>| {
        let mut next = p.to_vec();
        for (i, &x) in support.iter().enumerate() {
            next[x] = (p[x] + alpha * dp[i]).max(0.0);
        }
        if let Some(x) = drop {
            next[x] = 0.0;
        }
        let z: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= z);
        next
    };
    let mut alpha = 1.0;
    if alpha_max <= 1.0 {
        // Dropping an input must narrow the bracket; otherwise stop short of
        // the boundary.
        let next = step(alpha_max, blocking);
        *spent += 1;
        let (lo, up) = ev.probe(&next);
        if lo >= lower - noise && up - lo < upper - lower {
            return Some(next);
        }
        alpha = BOUNDARY_FRACTION * alpha_max;
    }
    for _ in 0..60 {
        let next = step(alpha, None);
        *spent += 1;
        let (lo, up) = ev.probe(&next);
        if lo > lower + noise || (lo >= lower - noise && up - lo < upper - lower) {
            return Some(next);
        }
        alpha *= 0.5;
    }
    None
}

/// `Σ_y W(y) ln q(y)` for a row with input mass `px`. A `q(y)` that
/// underflowed to zero while `px·W(y) > 0` is replaced by that product,
/// taken in log space.
fn cross_term(row: &[f64], log_q: &[f64], px: f64) -> f64 {
    let mut cross = 0.0;
    for (&w, &lq) in row.iter().zip(log_q) {
        if w > 0.0 {
            let lq = if lq == f64::NEG_INFINITY && px > 0.0 { px.ln() + w.ln() } else { lq };
            cross += w * lq;
        }
    }
    cross
}

/// `I(P; W) = Σ_x p(x) D(W_x ‖ pW)`.
pub fn mutual_information(channel: &Channel, input: &[f64]) -> Result<f64> {
    let q = channel.output_distribution(input)?;
    Ok(channel
        .rows()
        .zip(input)
        .filter(|(_, &px)| px > 0.0)
        .map(|(row, &px)| px * kl_raw(row, &q))
        .sum())
}

/// `D(W_x‖q)` for every input symbol; `f64::INFINITY` on support violation.
pub fn row_divergences(channel: &Channel, q: &[f64]) -> Vec<f64> {
    channel.rows().map(|r| kl_raw(r, q)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct KktReport {
    pub capacity_nats: f64,
    /// `D(W_x‖Q*)` per input.
    pub divergences: Vec<f64>,
    /// `C − D(W_x‖Q*)` per input; non-negative up to tolerance.
    pub slacks: Vec<f64>,
    /// Inputs treated as support symbols.
    pub support: Vec<usize>,
}

impl KktReport {
    pub fn min_slack(&self) -> f64 {
        self.slacks.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Checks the optimality conditions of a capacity solution:
/// `D(W_x‖Q*) ≤ C + tol` for every input and `|D(W_x‖Q*) − C| ≤ tol` for
/// inputs with optimal mass above `DEFAULT_SUPPORT_THRESHOLD`.
pub fn verify_kkt(channel: &Channel, result: &CapacityResult, tol: f64) -> Result<KktReport> {
    verify_kkt_with_threshold(channel, result, tol, DEFAULT_SUPPORT_THRESHOLD)
}

pub fn verify_kkt_with_threshold(
    channel: &Channel,
    result: &CapacityResult,
    tol: f64,
    support_threshold: f64,
) -> Result<KktReport> {
    if result.input_dist.len() != channel.num_inputs() {
        return Err(Error::DimensionMismatch {
            expected: channel.num_inputs(),
            found: result.input_dist.len(),
        });
    }
    let c = result.capacity_nats;
    let divergences = row_divergences(channel, &result.output_dist);
    let slacks: Vec<f64> = divergences.iter().map(|d| c - d).collect();
    let mut support = Vec::new();
    for (x, (&slack, &px)) in slacks.iter().zip(result.input_dist.iter()).enumerate() {
        if slack < -tol {
            return Err(Error::KktViolation { x, slack });
        }
        if px > support_threshold {
            if slack.abs() > tol {
                return Err(Error::KktViolation { x, slack });
            }
            support.push(x);
        }
    }
    Ok(KktReport {
        capacity_nats: c,
        divergences,
        slacks,
        support,
    })
}
