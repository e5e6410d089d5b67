//! Central finite-difference verification of [`grad`](super::train::grad).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Example, Model, Objective};
use super::train::grad;
use crate::error::{Error, Result};

/// Denominator floor for the relative error, so coordinates whose true
/// derivative is zero are judged on absolute agreement.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordCheck {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checks: Vec<CoordCheck>,
    pub max_rel_error: f64,
}

pub fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

fn batch_loss(model: &Model, batch: &[Example]) -> Result<f64> {
    let mut s = 0.0;
    for ex in batch {
        s += model.example_loss(ex)?.loss_total;
    }
    Ok(s / batch.len() as f64)
}

/// Compares analytic and numeric derivatives of the mean total loss on
/// `coords` coordinates drawn uniformly over all parameters.
pub fn gradient_check(model: &Model, batch: &[Example], coords: usize, h: f64, seed: u64) -> Result<GradCheckReport> {
    if !(h > 0.0) {
        return Err(Error::Config("step size must be positive".into()));
    }
    let (_, analytic) = grad(model, batch, Objective::Total)?;
    let names: Vec<(&String, usize)> = model.params.arrays.iter().map(|(k, v)| (k, v.len())).collect();
    let total: usize = names.iter().map(|(_, l)| l).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    let mut checks = Vec::with_capacity(coords);
    for _ in 0..coords {
        let mut flat = rng.random_range(0..total);
        let mut pick = None;
        for (name, len) in &names {
            if flat < *len {
                pick = Some(((*name).clone(), flat));
                break;
            }
            flat -= len;
        }
        let (name, index) = pick.expect("index within total");
        let orig = model.params.arrays[&name].data[index];
        probe.params.arrays.get_mut(&name).expect("name").data[index] = orig + h;
        let up = batch_loss(&probe, batch)?;
        probe.params.arrays.get_mut(&name).expect("name").data[index] = orig - h;
        let down = batch_loss(&probe, batch)?;
        probe.params.arrays.get_mut(&name).expect("name").data[index] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.arrays[&name].data[index];
        checks.push(CoordCheck {
            rel_error: rel_error(a, numeric),
            name,
            index,
            analytic: a,
            numeric,
        });
    }
    let max_rel_error = checks.iter().map(|c| c.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport { checks, max_rel_error })
}
