//! Certificate on the capacity lost by keeping only a subset of inputs.
//!
//! For a kept set `R`, floor `η ∈ (0, 1/(2|Y|)]` and a critical symbol `x`,
//!
//! ```text
//! C(W) − C(W_R) ≤ 4|Y|η + δ_R(x) + √(−ln η · (C(W_R) − ln κ_x)) · √δ_R(x)
//! ```
//!
//! where `δ_R(x)` is the χ² distance from `W_x` to the hull of `W_R` and
//! `κ_x` the smallest non-zero mass of the closest hull point. The critical
//! symbol should maximize `D(W_x‖Q_η)` for the pseudo capacity-achieving
//! output law of `W_R`; since `Q_η` needs `η` and `η` needs `x`, the
//! surrogate `D(W_x‖Q*)` with the ordinary capacity-achieving law picks the
//! symbol that sets `η`. The full channel's capacity is never needed.

use serde::{Deserialize, Serialize};

use crate::capacity::{blahut_arimoto, pseudo_capacity, row_divergences, BaOptions, PseudoOptions};
use crate::channel::{Channel, InputSubset};
use crate::error::{Error, Result};
use crate::hull::{chi2_to_hull, nearest_neighbor, HullOptions, DEFAULT_MEMBERSHIP_TOL};
use crate::prob::{chi2_raw, min_positive, nats_to_bits, DivergenceValue};

/// Offset in the closed-form choice of `η`.
pub const ETA_OFFSET: f64 = 0.07;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BoundMode {
    /// Critical symbol from the ordinary capacity-achieving output law.
    #[default]
    Surrogate,
    /// Critical symbol re-selected against the pseudo capacity-achieving
    /// output law at the chosen `η`.
    ExactPseudo,
}

impl std::str::FromStr for BoundMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "surrogate" => Ok(Self::Surrogate),
            "exact" | "exact_pseudo" | "exact-pseudo" => Ok(Self::ExactPseudo),
            _ => Err(Error::InvalidArgument(format!("unknown bound mode {s:?}"))),
        }
    }
}

/// How the distance of the critical symbol to the kept set is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DistanceKind {
    /// χ² distance to the convex hull of the kept rows.
    #[default]
    Hull,
    /// χ² distance to the nearest kept row: cheaper and looser.
    NearestNeighbor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundOptions {
    pub mode: BoundMode,
    pub distance: DistanceKind,
    pub ba: BaOptions,
    pub pseudo: PseudoOptions,
    pub hull: HullOptions,
    /// Hull distances at or below this count as zero.
    pub membership_tol: f64,
    /// Symbols within this of the maximal divergence are all considered.
    pub tie_tol: f64,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            mode: BoundMode::Surrogate,
            distance: DistanceKind::Hull,
            ba: BaOptions::default(),
            pseudo: PseudoOptions {
                tol_nats: 1e-8,
                ..PseudoOptions::default()
            },
            hull: HullOptions::default(),
            membership_tol: DEFAULT_MEMBERSHIP_TOL,
            tie_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub subset: InputSubset,
    pub mode: BoundMode,
    pub distance_kind: DistanceKind,
    pub num_outputs: usize,
    pub capacity_pruned_nats: f64,
    pub eta: f64,
    pub eta_valid: bool,
    /// Symbol that fixed `η` (maximizer of the surrogate divergence).
    pub eta_x: usize,
    pub critical_x: usize,
    pub delta: DivergenceValue,
    /// `None` when no hull point covers the critical row.
    pub kappa: Option<f64>,
    pub term_linear: f64,
    pub term_delta: f64,
    pub term_cross: f64,
    /// `None` when the certificate is unavailable.
    pub bound_nats: Option<f64>,
    pub unavailable_reason: Option<String>,
}

impl BoundReport {
    pub fn is_available(&self) -> bool {
        self.bound_nats.is_some()
    }

    pub fn bound_bits(&self) -> Option<f64> {
        self.bound_nats.map(nats_to_bits)
    }

    /// JSON object with every quantity in both nats and bits.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        let obj = v.as_object_mut().expect("report is an object");
        let bits = |x: f64| serde_json::json!(nats_to_bits(x));
        obj.insert("capacity_pruned_bits".into(), bits(self.capacity_pruned_nats));
        obj.insert("term_linear_bits".into(), bits(self.term_linear));
        obj.insert("term_delta_bits".into(), bits(self.term_delta));
        obj.insert("term_cross_bits".into(), bits(self.term_cross));
        obj.insert("bound_bits".into(), serde_json::json!(self.bound_bits()));
        v
    }
}

/// `η = (√(C − ln κ)·√δ / (4|Y|) + 0.07)²`.
pub fn choose_eta(capacity_pruned_nats: f64, kappa: f64, delta: f64, num_outputs: usize) -> Result<f64> {
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::InvalidKappa(kappa));
    }
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be non-negative, got {delta}")));
    }
    if num_outputs == 0 {
        return Err(Error::InvalidArgument("num_outputs must be positive".into()));
    }
    let c = capacity_pruned_nats.max(0.0);
    let root = ((c - kappa.ln()) * delta).sqrt() / (4.0 * num_outputs as f64);
    Ok((root + ETA_OFFSET).powi(2))
}

/// Largest floor for which the certificate holds.
pub fn eta_limit(num_outputs: usize) -> f64 {
    1.0 / (2.0 * num_outputs as f64)
}

/// The three terms of the certificate.
pub fn bound_terms(num_outputs: usize, eta: f64, capacity_pruned_nats: f64, kappa: f64, delta: f64) -> (f64, f64, f64) {
    let linear = 4.0 * num_outputs as f64 * eta;
    let cross = if delta == 0.0 {
        0.0
    } else {
        ((-eta.ln()) * (capacity_pruned_nats - kappa.ln())).max(0.0).sqrt() * delta.sqrt()
    };
    (linear, delta, cross)
}

#[derive(Debug, Clone)]
struct Proximity {
    delta: DivergenceValue,
    kappa: Option<f64>,
}

fn proximity(
    channel: &Channel,
    kept: &InputSubset,
    sub: &Channel,
    x: usize,
    opts: &BoundOptions,
) -> Result<Proximity> {
    let row = channel.row(x);
    if kept.contains(x) {
        return Ok(Proximity {
            delta: DivergenceValue::Finite(0.0),
            kappa: Some(min_positive(row)),
        });
    }
    match opts.distance {
        DistanceKind::Hull => match chi2_to_hull(sub, row, &opts.hull) {
            Ok(p) => {
                let d = p.distance_chi2.value();
                Ok(Proximity {
                    delta: DivergenceValue::Finite(if d <= opts.membership_tol { 0.0 } else { d }),
                    kappa: Some(p.kappa),
                })
            }
            Err(Error::SupportInfeasible) => Ok(Proximity {
                delta: DivergenceValue::Infinite,
                kappa: None,
            }),
            Err(e) => Err(e),
        },
        DistanceKind::NearestNeighbor => {
            let (r, v) = nearest_neighbor(sub, row)?;
            Ok(Proximity {
                delta: v,
                kappa: v.is_finite().then(|| min_positive(sub.row(r))),
            })
        }
    }
}

#[derive(Debug, Clone)]
struct Candidate {
    x: usize,
    prox: Proximity,
    eta: f64,
    terms: (f64, f64, f64),
    bound: Option<f64>,
    reason: Option<String>,
}

fn assemble(x: usize, prox: Proximity, eta: f64, c_pruned: f64, ny: usize) -> Candidate {
    let limit = eta_limit(ny);
    let (terms, reason) = match (prox.delta, prox.kappa) {
        (DivergenceValue::Finite(d), Some(k)) => {
            let terms = bound_terms(ny, eta, c_pruned, k, d);
            let reason = (!(eta > 0.0 && eta <= limit))
                .then(|| format!("eta {eta} exceeds the limit 1/(2|Y|) = {limit}"));
            (terms, reason)
        }
        _ => (
            (4.0 * ny as f64 * eta, f64::INFINITY, f64::INFINITY),
            Some("no hull point shares the support of the critical symbol".to_string()),
        ),
    };
    let bound = reason.is_none().then(|| terms.0 + terms.1 + terms.2);
    Candidate {
        x,
        prox,
        eta,
        terms,
        bound,
        reason,
    }
}

/// Prefers available certificates, then smaller bounds, then smaller index.
fn better(a: &Candidate, b: &Candidate) -> bool {
    match (a.bound, b.bound) {
        (Some(x), Some(y)) => x < y || (x == y && a.x < b.x),
        (Some(_), None) => true,
        (None, Some(_)) => false,
        (None, None) => a.x < b.x,
    }
}

fn maximizers(divs: &[f64], tie_tol: f64) -> Vec<usize> {
    let max = divs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    divs.iter()
        .enumerate()
        .filter(|(_, &d)| if max.is_infinite() { d.is_infinite() } else { d >= max - tie_tol })
        .map(|(x, _)| x)
        .collect()
}

/// Computes the capacity-loss certificate for keeping only `kept`.
pub fn capacity_loss_bound(channel: &Channel, kept: &InputSubset, opts: &BoundOptions) -> Result<BoundReport> {
    let sub = channel.restrict(kept)?;
    let ny = channel.num_outputs();
    let ba = blahut_arimoto(&sub, &opts.ba)?;
    let c_pruned = ba.capacity_nats;

    let surrogate = row_divergences(channel, &ba.output_dist);
    let mut best: Option<Candidate> = None;
    for x in maximizers(&surrogate, opts.tie_tol) {
        let prox = proximity(channel, kept, &sub, x, opts)?;
        let eta = match (prox.delta, prox.kappa) {
            (DivergenceValue::Finite(d), Some(k)) => choose_eta(c_pruned, k, d, ny)?,
            _ => f64::INFINITY,
        };
        let cand = assemble(x, prox, eta, c_pruned, ny);
        if best.as_ref().is_none_or(|b| better(&cand, b)) {
            best = Some(cand);
        }
    }
    let eta_choice = best.expect("at least one maximizer");
    let eta = eta_choice.eta;
    let eta_x = eta_choice.x;

    let chosen = match opts.mode {
        BoundMode::Surrogate => eta_choice,
        BoundMode::ExactPseudo if eta.is_finite() && eta <= 1.0 / ny as f64 => {
            let pseudo = pseudo_capacity(&sub, eta, &opts.pseudo)?;
            let divs = row_divergences(channel, &pseudo.output_dist);
            let mut best: Option<Candidate> = None;
            for x in maximizers(&divs, opts.tie_tol) {
                let prox = proximity(channel, kept, &sub, x, opts)?;
                let cand = assemble(x, prox, eta, c_pruned, ny);
                if best.as_ref().is_none_or(|b| better(&cand, b)) {
                    best = Some(cand);
                }
            }
            best.expect("at least one maximizer")
        }
        BoundMode::ExactPseudo => eta_choice,
    };

    Ok(BoundReport {
        subset: kept.clone(),
        mode: opts.mode,
        distance_kind: opts.distance,
        num_outputs: ny,
        capacity_pruned_nats: c_pruned,
        eta,
        eta_valid: eta > 0.0 && eta <= eta_limit(ny),
        eta_x,
        critical_x: chosen.x,
        delta: chosen.prox.delta,
        kappa: chosen.prox.kappa,
        term_linear: chosen.terms.0,
        term_delta: chosen.terms.1,
        term_cross: chosen.terms.2,
        bound_nats: chosen.bound,
        unavailable_reason: chosen.reason,
    })
}

/// `bound − (C(W) − C(W_R))`; non-negative whenever the certificate is
/// sound. Needs the full channel's capacity, so this is for validation only.
pub fn validate_bound(channel: &Channel, report: &BoundReport, ba: &BaOptions) -> Result<f64> {
    let bound = report.bound_nats.ok_or_else(|| {
        Error::InvalidArgument(format!(
            "bound unavailable: {}",
            report.unavailable_reason.as_deref().unwrap_or("unknown")
        ))
    })?;
    let full = blahut_arimoto(channel, ba)?.capacity_nats;
    Ok(bound - (full - report.capacity_pruned_nats))
}

/// Right-hand side of the pseudo-capacity comparison for a fixed floor:
/// `χ̂² + √χ̂² · √(C(W_R)·ln(κ/η) + ln(1/η)·ln(1/κ))`, with `χ̂²` the χ²
/// distance of the critical symbol to its nearest kept row and `κ` the
/// smallest non-zero mass of that row.
pub fn pseudo_gap_bound(chi2_nn: f64, capacity_pruned_nats: f64, kappa: f64, eta: f64) -> f64 {
    let inner = capacity_pruned_nats * (kappa / eta).ln() + (1.0 / eta).ln() * (1.0 / kappa).ln();
    chi2_nn + chi2_nn.sqrt() * inner.max(0.0).sqrt()
}

/// Critical symbol for a fixed floor: maximizer of `D(W_x‖Q_η(W_R))`
/// (smallest index on ties) with its nearest kept row, the χ² distance to
/// it and that row's smallest non-zero mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearestCritical {
    pub x: usize,
    pub neighbor: usize,
    pub chi2: f64,
    pub kappa: f64,
}

pub fn nearest_critical(channel: &Channel, kept: &InputSubset, q_eta: &[f64]) -> Result<NearestCritical> {
    let divs = row_divergences(channel, q_eta);
    let x = maximizers(&divs, 0.0)[0];
    let sub = channel.restrict(kept)?;
    let (r, _) = nearest_neighbor(&sub, channel.row(x))?;
    let neighbor = kept.indices()[r];
    Ok(NearestCritical {
        x,
        neighbor,
        chi2: chi2_raw(channel.row(x), channel.row(neighbor)),
        kappa: min_positive(channel.row(neighbor)),
    })
}

/// Both sides of the hull-substitution inequality
/// `C(W) − C(W_R) ≤ C(W_R ∪ S_out) − C(W_R ∪ {Q̄_s})`, where `S_out` are the
/// removed rows outside the hull and `Q̄_s` their closest hull points.
pub fn hull_substitution_sides(
    channel: &Channel,
    kept: &InputSubset,
    opts: &BoundOptions,
) -> Result<(f64, f64)> {
    let sub = channel.restrict(kept)?;
    let c_full = blahut_arimoto(channel, &opts.ba)?.capacity_nats;
    let c_kept = blahut_arimoto(&sub, &opts.ba)?.capacity_nats;
    let mut outside = Vec::new();
    let mut projections = Vec::new();
    for x in kept.complement(channel.num_inputs()) {
        let p = chi2_to_hull(&sub, channel.row(x), &opts.hull)?;
        if p.distance_chi2.value() > opts.membership_tol {
            outside.push(x);
            projections.push(p.hull_point.into_vec());
        }
    }
    let with_rows = sub.with_extra_rows(outside.iter().map(|&x| channel.row(x)))?;
    let with_points = sub.with_extra_rows(projections.iter().map(Vec::as_slice))?;
    let lhs = c_full - c_kept;
    let rhs = blahut_arimoto(&with_rows, &opts.ba)?.capacity_nats
        - blahut_arimoto(&with_points, &opts.ba)?.capacity_nats;
    Ok((lhs, rhs))
}
