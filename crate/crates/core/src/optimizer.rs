//! Exhaustive grid search with zoom refinement.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Condition, Error, Result};
use crate::keyrate::{Protocol, StatePortions};
use crate::model::{Analysis, Evaluation, RateParams, SystemModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub scale: Scale,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, points: usize, scale: Scale) -> Self {
        Axis { lo, hi, points, scale }
    }

    /// A single fixed value.
    pub fn fixed(value: f64) -> Self {
        Axis { lo: value, hi: value, points: 1, scale: Scale::Linear }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points == 1 && self.lo == self.hi && self.lo.is_finite() {
            return Ok(());
        }
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::Validation(format!("axis needs lo < hi, got [{}, {}]", self.lo, self.hi)));
        }
        if self.points < 2 {
            return Err(Error::Validation(format!("axis needs at least 2 points, got {}", self.points)));
        }
        if self.scale == Scale::Log && !(self.lo > 0.0) {
            return Err(Error::Validation(format!("log axis needs lo > 0, got {}", self.lo)));
        }
        Ok(())
    }

    fn to_unit(&self, x: f64) -> f64 {
        match self.scale {
            Scale::Linear => x,
            Scale::Log => x.ln(),
        }
    }

    fn from_unit(&self, u: f64) -> f64 {
        match self.scale {
            Scale::Linear => u,
            Scale::Log => u.exp(),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.lo];
        }
        let a = self.to_unit(self.lo);
        let b = self.to_unit(self.hi);
        let last = self.points - 1;
        (0..self.points)
            .map(|i| {
                if i == 0 {
                    self.lo
                } else if i == last {
                    self.hi
                } else {
                    self.from_unit(a + (b - a) * i as f64 / last as f64)
                }
            })
            .collect()
    }

    /// The axis with its span divided by 10 around `center`, kept inside `outer`.
    fn zoomed(&self, center: f64, outer: &Axis) -> Axis {
        if self.points == 1 {
            return self.clone();
        }
        let (olo, ohi) = (outer.to_unit(outer.lo), outer.to_unit(outer.hi));
        let half = (self.to_unit(self.hi) - self.to_unit(self.lo)) / 20.0;
        let c = self.to_unit(center);
        let mut lo = c - half;
        let mut hi = c + half;
        if lo < olo {
            hi += olo - lo;
            lo = olo;
        }
        if hi > ohi {
            lo -= hi - ohi;
            hi = ohi;
        }
        let lo = lo.max(olo);
        Axis { lo: self.from_unit(lo), hi: self.from_unit(hi), points: self.points, scale: self.scale }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub axes: Vec<Axis>,
    pub refinement_rounds: usize,
}

impl SearchGrid {
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::Validation("search grid has no axes".into()));
        }
        self.axes.iter().try_for_each(Axis::validate)
    }

    fn points(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::with_capacity(self.axes.len())];
        for axis in &self.axes {
            let vals = axis.values();
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    vals.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push(*v);
                        p
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    /// Best parameter tuple; `None` when every point scored 0.
    pub params: Option<Vec<f64>>,
    pub value: f64,
    pub evaluations: usize,
}

/// Higher value wins; ties go to the lexicographically smallest tuple.
fn better(a_val: f64, a: &[f64], b_val: f64, b: &[f64]) -> bool {
    match a_val.partial_cmp(&b_val) {
        Some(Ordering::Greater) => true,
        Some(Ordering::Less) => false,
        _ => a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()) == Some(Ordering::Less),
    }
}

/// Maximizes `f` over the grid. Non-finite or negative scores count as 0.
pub fn grid_search<F>(grid: &SearchGrid, f: F) -> Result<Optimum>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    grid.validate()?;
    let mut current = grid.clone();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut evaluations = 0;
    for round in 0..=grid.refinement_rounds {
        let points = current.points();
        let scores: Vec<f64> = points
            .par_iter()
            .map(|p| {
                let v = f(p);
                if v.is_finite() && v > 0.0 {
                    v
                } else {
                    0.0
                }
            })
            .collect();
        evaluations += points.len();
        for (p, v) in points.iter().zip(&scores) {
            let replace = match &best {
                None => true,
                Some((bv, bp)) => better(*v, p, *bv, bp),
            };
            if replace {
                best = Some((*v, p.clone()));
            }
        }
        if round < grid.refinement_rounds {
            let (bv, bp) = best.as_ref().expect("grid has at least one point");
            if *bv == 0.0 {
                break;
            }
            current.axes =
                current.axes.iter().zip(&grid.axes).zip(bp).map(|((ax, outer), c)| ax.zoomed(*c, outer)).collect();
        }
    }
    let (value, params) = best.expect("grid has at least one point");
    Ok(Optimum { params: (value > 0.0).then_some(params), value, evaluations })
}

/// Default search space for `analysis`. Untrusted axes are
/// `[μ_S, μ_D/μ_S (decoy protocols), δ, p_decoy, p_vacuum (finite data)]`;
/// trusted axes are `[μ_S, 1 − μ_D/μ_S (one-decoy)]`.
pub fn default_grid(model: &SystemModel, analysis: Analysis) -> SearchGrid {
    let decoys = model.protocol.uses_decoys();
    let mut axes = Vec::new();
    if analysis == Analysis::Trusted {
        let n = if model.protocol == Protocol::OneDecoy { 60 } else { 200 };
        axes.push(Axis::new(1e-3, 2.0, n, Scale::Log));
        if model.protocol == Protocol::OneDecoy {
            axes.push(Axis::new(1e-7, 0.9, 60, Scale::Log));
        }
        return SearchGrid { axes, refinement_rounds: 2 };
    }
    let portions = model.optimizes_portions();
    let n = if portions { 16 } else { 40 };
    axes.push(Axis::new(1e-3, 2.0, n, Scale::Log));
    if decoys {
        axes.push(Axis::new(1e-4, 0.999, n, Scale::Log));
    }
    axes.push(Axis::new(1e-6, 0.5, n, Scale::Log));
    if portions {
        axes.push(Axis::new(1e-3, 0.45, 6, Scale::Log));
        axes.push(Axis::new(1e-3, 0.45, 6, Scale::Log));
    }
    SearchGrid { axes, refinement_rounds: 2 }
}

/// Maps a grid point of [`default_grid`]'s layout to rate parameters.
pub fn decode_params(model: &SystemModel, analysis: Analysis, point: &[f64]) -> Option<RateParams> {
    let decoys = model.protocol.uses_decoys();
    let mu_signal = *point.first()?;
    let signal_only = StatePortions { signal: 1.0, decoy: 0.0, vacuum: 0.0 };
    if analysis == Analysis::Trusted {
        let mu_decoy = match model.protocol {
            Protocol::OneDecoy => mu_signal * (1.0 - *point.get(1)?),
            _ => 0.0,
        };
        return Some(RateParams { mu_signal, mu_decoy, delta: 0.0, portions: signal_only });
    }
    let mut i = 1;
    let mu_decoy = if decoys {
        i += 1;
        mu_signal * *point.get(1)?
    } else {
        0.0
    };
    let delta = *point.get(i)?;
    let portions = if model.optimizes_portions() {
        let (d, v) = (*point.get(i + 1)?, *point.get(i + 2)?);
        let s = 1.0 - d - v;
        if s <= 0.0 {
            return None;
        }
        StatePortions { signal: s, decoy: d, vacuum: v }
    } else {
        model.portions.unwrap_or(signal_only)
    };
    Some(RateParams { mu_signal, mu_decoy, delta, portions })
}

/// Best key rate of `model` at `distance_km` over `grid`.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyRateOptimum {
    pub params: Option<RateParams>,
    pub evaluation: Option<Evaluation>,
    pub rate: f64,
    pub evaluations: usize,
}

pub fn optimize_keyrate(
    model: &SystemModel,
    analysis: Analysis,
    distance_km: f64,
    grid: &SearchGrid,
) -> Result<KeyRateOptimum> {
    model.validate()?;
    let score = |p: &[f64]| -> f64 {
        decode_params(model, analysis, p)
            .and_then(|rp| model.evaluate(analysis, distance_km, &rp).ok())
            .map_or(0.0, |e| e.result.rate)
    };
    let opt = grid_search(grid, score)?;
    let params = opt.params.as_deref().and_then(|p| decode_params(model, analysis, p));
    let evaluation = match &params {
        Some(rp) => Some(model.evaluate(analysis, distance_km, rp)?),
        None => None,
    };
    Ok(KeyRateOptimum { params, evaluation, rate: opt.value, evaluations: opt.evaluations })
}

/// Most frequent failed condition over the outer grid; ties go to the one met first
/// in grid order. `None` when no point reports a failed condition.
pub fn dominant_failure(
    model: &SystemModel,
    analysis: Analysis,
    distance_km: f64,
    grid: &SearchGrid,
) -> Result<Option<Condition>> {
    grid.validate()?;
    let failures: Vec<Option<Condition>> = grid
        .points()
        .par_iter()
        .map(|p| {
            decode_params(model, analysis, p)
                .and_then(|rp| model.evaluate(analysis, distance_km, &rp).ok())
                .and_then(|e| e.result.failed_condition)
        })
        .collect();
    let mut tally: Vec<(Condition, usize)> = Vec::new();
    for c in failures.into_iter().flatten() {
        match tally.iter_mut().find(|(t, _)| *t == c) {
            Some((_, n)) => *n += 1,
            None => tally.push((c, 1)),
        }
    }
    let mut best: Option<(Condition, usize)> = None;
    for (c, n) in tally {
        if best.is_none_or(|(_, bn)| n > bn) {
            best = Some((c, n));
        }
    }
    Ok(best.map(|(c, _)| c))
}
