//! Polynomial throughput models over (cc, p, pp).

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::{EntryGroup, MIN_GROUP};
use crate::types::ParamTriple;

pub const MAX_DEGREE: u32 = 4;
pub const R2_GATE: f64 = 0.7;
pub const TRAIN_FRACTION: f64 = 0.7;
const RIDGE: f64 = 1e-9;

/// Exponent triples `(a, b, c)` with `a + b + c <= degree`, by total degree
/// then lexicographically descending in `cc`.
pub fn monomials(degree: u32) -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    for total in 0..=degree {
        for a in (0..=total).rev() {
            for b in (0..=total - a).rev() {
                out.push([a, b, total - a - b]);
            }
        }
    }
    out
}

fn design_row(x: &[f64; 3], terms: &[[u32; 3]]) -> Vec<f64> {
    terms
        .iter()
        .map(|e| x[0].powi(e[0] as i32) * x[1].powi(e[1] as i32) * x[2].powi(e[2] as i32))
        .collect()
}

/// A fitted `T = f(cc, p, pp)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputModel {
    pub group_id: String,
    pub degree: u32,
    /// Coefficients in [`monomials`] order.
    pub coefficients: Vec<f64>,
    pub r2_train: f64,
    pub r2_validation: f64,
    /// Probe residual, set by the optimizer.
    #[serde(default)]
    pub epsilon: f64,
    /// Cluster weight, set by the optimizer.
    #[serde(default)]
    pub weight: u64,
}

impl ThroughputModel {
    /// A model with given coefficients and no fit metadata.
    pub fn from_coefficients(group_id: impl Into<String>, degree: u32, coefficients: Vec<f64>) -> Result<Self> {
        if !(1..=MAX_DEGREE).contains(&degree) {
            return Err(Error::InvalidInput(format!("degree {degree} outside [1, {MAX_DEGREE}]")));
        }
        let n = monomials(degree).len();
        if coefficients.len() != n {
            return Err(Error::InvalidInput(format!(
                "degree {degree} needs {n} coefficients, got {}",
                coefficients.len()
            )));
        }
        Ok(Self {
            group_id: group_id.into(),
            degree,
            coefficients,
            r2_train: 1.0,
            r2_validation: 1.0,
            epsilon: 0.0,
            weight: 1,
        })
    }

    pub fn evaluate_at(&self, x: [f64; 3]) -> f64 {
        monomials(self.degree)
            .iter()
            .zip(&self.coefficients)
            .map(|(e, c)| c * x[0].powi(e[0] as i32) * x[1].powi(e[1] as i32) * x[2].powi(e[2] as i32))
            .sum()
    }

    pub fn evaluate(&self, params: ParamTriple) -> f64 {
        self.evaluate_at(params.as_f64())
    }

    pub fn gradient_at(&self, x: [f64; 3]) -> [f64; 3] {
        let mut g = [0.0; 3];
        for (e, c) in monomials(self.degree).iter().zip(&self.coefficients) {
            for (axis, gi) in g.iter_mut().enumerate() {
                if e[axis] == 0 {
                    continue;
                }
                let mut term = c * e[axis] as f64;
                for (k, xk) in x.iter().enumerate() {
                    let pow = if k == axis { e[k] - 1 } else { e[k] };
                    term *= xk.powi(pow as i32);
                }
                *gi += term;
            }
        }
        g
    }
}

/// R² with the zero-variance convention: 1 for an exact fit, else 0.
pub fn r_squared(actual: &[f64], predicted: &[f64]) -> f64 {
    let n = actual.len() as f64;
    if actual.is_empty() {
        return 0.0;
    }
    let mean = actual.iter().sum::<f64>() / n;
    let ss_tot: f64 = actual.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = actual.iter().zip(predicted).map(|(y, f)| (y - f).powi(2)).sum();
    let scale: f64 = actual.iter().map(|y| y * y).sum::<f64>().max(f64::MIN_POSITIVE);
    if ss_tot <= 1e-24 * scale {
        return if ss_res <= 1e-12 * scale { 1.0 } else { 0.0 };
    }
    1.0 - ss_res / ss_tot
}

/// Least squares over monomials up to `degree`. `None` if the system cannot be solved.
pub fn least_squares(xs: &[[f64; 3]], ys: &[f64], degree: u32) -> Option<Vec<f64>> {
    let terms = monomials(degree);
    let m = terms.len();
    if xs.len() < m {
        return None;
    }
    let rows: Vec<Vec<f64>> = xs.iter().map(|x| design_row(x, &terms)).collect();
    // Column equilibration keeps the normal matrix usable for raw powers of 32.
    let mut scale = vec![0.0; m];
    for r in &rows {
        for (s, v) in scale.iter_mut().zip(r) {
            *s += v * v;
        }
    }
    for s in &mut scale {
        *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
    }
    let a = DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j] / scale[j]);
    let y = DVector::from_column_slice(ys);
    let mut ata = a.transpose() * &a;
    for j in 0..m {
        ata[(j, j)] += RIDGE;
    }
    let aty = a.transpose() * y;
    let sol = ata.cholesky().map(|c| c.solve(&aty))?;
    let coef: Vec<f64> = sol.iter().zip(&scale).map(|(c, s)| c / s).collect();
    coef.iter().all(|c| c.is_finite()).then_some(coef)
}

/// Why a group produced no model.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub group_id: String,
    /// `(degree, r2_train, r2_validation)` for every degree that could be solved.
    pub attempts: Vec<(u32, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FitOutcome {
    Accepted(ThroughputModel),
    Rejected(Rejection),
}

impl FitOutcome {
    pub fn model(self) -> Option<ThroughputModel> {
        match self {
            FitOutcome::Accepted(m) => Some(m),
            FitOutcome::Rejected(_) => None,
        }
    }
}

/// Seeded 70/30 split, stratified by concurrency. Returns `(train, validation)` indices.
pub fn split_indices(ccs: &[u32], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut strata: std::collections::BTreeMap<u32, Vec<usize>> = Default::default();
    for (i, &cc) in ccs.iter().enumerate() {
        strata.entry(cc).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for idx in strata.values_mut() {
        idx.shuffle(&mut rng);
        let k = ((idx.len() as f64 * TRAIN_FRACTION).round() as usize).max(1);
        train.extend_from_slice(&idx[..k]);
        val.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Fits degrees 1 to 4 in turn and keeps the first with both R² above 0.7.
pub fn fit_points(group_id: &str, xs: &[[f64; 3]], ys: &[f64], split_seed: u64) -> FitOutcome {
    let ccs: Vec<u32> = xs.iter().map(|x| x[0] as u32).collect();
    let (train, val) = split_indices(&ccs, split_seed);
    let tx: Vec<[f64; 3]> = train.iter().map(|&i| xs[i]).collect();
    let ty: Vec<f64> = train.iter().map(|&i| ys[i]).collect();
    let mut attempts = Vec::new();
    for degree in 1..=MAX_DEGREE {
        let Some(coef) = least_squares(&tx, &ty, degree) else {
            continue;
        };
        let mut model = ThroughputModel::from_coefficients(group_id, degree, coef).expect("sized by degree");
        let fit: Vec<f64> = tx.iter().map(|x| model.evaluate_at(*x)).collect();
        let r2_train = r_squared(&ty, &fit);
        // An empty validation split falls back to the training fit.
        let r2_validation = if val.is_empty() {
            r2_train
        } else {
            let vy: Vec<f64> = val.iter().map(|&i| ys[i]).collect();
            let vf: Vec<f64> = val.iter().map(|&i| model.evaluate_at(xs[i])).collect();
            r_squared(&vy, &vf)
        };
        attempts.push((degree, r2_train, r2_validation));
        if r2_train > R2_GATE && r2_validation > R2_GATE {
            model.r2_train = r2_train.clamp(0.0, 1.0);
            model.r2_validation = r2_validation.clamp(0.0, 1.0);
            return FitOutcome::Accepted(model);
        }
    }
    FitOutcome::Rejected(Rejection {
        group_id: group_id.to_string(),
        attempts,
    })
}

pub fn fit_group(group: &EntryGroup, split_seed: u64) -> Result<FitOutcome> {
    if group.members.len() < MIN_GROUP {
        return Err(Error::InvalidInput(format!(
            "group {} has {} entries, need {MIN_GROUP}",
            group.session_id,
            group.members.len()
        )));
    }
    let xs: Vec<[f64; 3]> = group.members.iter().map(|e| e.params.as_f64()).collect();
    let ys: Vec<f64> = group.members.iter().map(|e| e.throughput).collect();
    Ok(fit_points(&group.session_id, &xs, &ys, split_seed))
}

/// Accepted models and rejections for many groups, plus total fit time.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub models: Vec<ThroughputModel>,
    pub rejected: Vec<Rejection>,
    pub seconds: f64,
}

pub fn fit_groups(groups: &[EntryGroup], split_seed: u64) -> Result<FitReport> {
    let t = Instant::now();
    let mut models = Vec::new();
    let mut rejected = Vec::new();
    for g in groups {
        match fit_group(g, split_seed)? {
            FitOutcome::Accepted(m) => models.push(m),
            FitOutcome::Rejected(r) => rejected.push(r),
        }
    }
    Ok(FitReport {
        models,
        rejected,
        seconds: t.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_counts() {
        let n: Vec<usize> = (1..=4).map(|d| monomials(d).len()).collect();
        assert_eq!(n, vec![4, 10, 20, 35]);
        assert_eq!(monomials(1), vec![[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]);
    }

    #[test]
    fn evaluate_simple_models() {
        let zero = ThroughputModel::from_coefficients("z", 2, vec![0.0; 10]).unwrap();
        assert_eq!(zero.evaluate(ParamTriple::new(5, 6, 7).unwrap()), 0.0);
        let lin = ThroughputModel::from_coefficients("l", 1, vec![0.0, 3.5, 0.0, 0.0]).unwrap();
        assert_eq!(lin.evaluate(ParamTriple::new(8, 2, 2).unwrap()), 28.0);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let coef: Vec<f64> = (0..20).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.1).collect();
        let m = ThroughputModel::from_coefficients("g", 3, coef).unwrap();
        let x = [3.0, 7.0, 11.0];
        let g = m.gradient_at(x);
        for k in 0..3 {
            let h = 1e-5;
            let mut a = x;
            let mut b = x;
            a[k] += h;
            b[k] -= h;
            let fd = (m.evaluate_at(a) - m.evaluate_at(b)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-4 * (1.0 + fd.abs()), "{k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn r2_conventions() {
        assert_eq!(r_squared(&[5.0, 5.0], &[5.0, 5.0]), 1.0);
        assert_eq!(r_squared(&[5.0, 5.0], &[4.0, 6.0]), 0.0);
        assert!((r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_target_accepts_degree_one() {
        let xs: Vec<[f64; 3]> = (1..=30).map(|i| [(i % 5 + 1) as f64, (i % 3 + 1) as f64, (i % 7 + 1) as f64]).collect();
        let ys = vec![4e9; xs.len()];
        let m = fit_points("c", &xs, &ys, 1).model().unwrap();
        assert_eq!(m.degree, 1);
        assert_eq!(m.r2_train, 1.0);
    }

    #[test]
    fn split_is_stratified_and_seeded() {
        let ccs: Vec<u32> = (0..216).map(|i| [1, 2, 4, 8, 16, 32][i / 36]).collect();
        let (tr, va) = split_indices(&ccs, 3);
        assert_eq!(tr.len() + va.len(), 216);
        for cc in [1, 2, 4, 8, 16, 32] {
            assert_eq!(tr.iter().filter(|&&i| ccs[i] == cc).count(), 25);
        }
        assert_eq!(split_indices(&ccs, 3), (tr, va));
    }
}
