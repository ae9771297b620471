//! Turns fitted models and one probe measurement into a parameter choice.
//!
//! Each model is scored by how well it predicts the probe, models are
//! clustered by that error and weighted by cluster rank, every model is
//! maximized over the parameter box and relaxed toward cheaper settings, and
//! the relaxed optima are averaged by weight.

use crate::error::{Error, Result};
use crate::modeling::ThroughputModel;
use crate::types::{ParamBounds, ParamTriple};

/// Fraction of the maximum each parameter may give up while being lowered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Relaxation {
    pub cc: f64,
    pub p: f64,
    pub pp: f64,
}

impl Default for Relaxation {
    fn default() -> Self {
        Self {
            cc: 0.7,
            p: 0.7,
            pp: 0.99,
        }
    }
}

impl Relaxation {
    pub fn as_array(&self) -> [f64; 3] {
        [self.cc, self.p, self.pp]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("cc", self.cc), ("p", self.p), ("pp", self.pp)] {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::InvalidInput(format!("relaxation for {name} must be in (0, 1], got {r}")));
            }
        }
        Ok(())
    }
}

/// `T_act - f(probe)` per model; positive when the model underestimates.
pub fn residuals(models: &[ThroughputModel], probe: ParamTriple, actual: f64) -> Vec<f64> {
    models.iter().map(|m| actual - m.evaluate(probe)).collect()
}

/// One-dimensional DBSCAN. Returns a cluster label per point, `None` for noise.
/// Labels are numbered in ascending order of value.
pub fn dbscan_1d(values: &[f64], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    // Neighbours of a sorted position form a contiguous window.
    let mut lo = 0;
    let mut hi = 0;
    let mut window = vec![(0usize, 0usize); n];
    for (k, &v) in sorted.iter().enumerate() {
        while sorted[lo] < v - eps {
            lo += 1;
        }
        if hi < k {
            hi = k;
        }
        while hi + 1 < n && sorted[hi + 1] <= v + eps {
            hi += 1;
        }
        window[k] = (lo, hi);
    }
    let core: Vec<bool> = window.iter().map(|&(l, h)| h - l + 1 >= min_pts.max(1)).collect();
    let mut label_sorted: Vec<Option<usize>> = vec![None; n];
    let mut next = 0;
    let mut k = 0;
    while k < n {
        if !core[k] || label_sorted[k].is_some() {
            k += 1;
            continue;
        }
        // Grow a cluster through chained core points.
        let id = next;
        next += 1;
        let mut reach = window[k].1;
        let mut j = k;
        label_sorted[window[k].0..=window[k].1]
            .iter_mut()
            .filter(|l| l.is_none())
            .for_each(|l| *l = Some(id));
        while j < reach {
            j += 1;
            if label_sorted[j].is_none() {
                label_sorted[j] = Some(id);
            }
            if core[j] {
                for l in label_sorted[window[j].0..=window[j].1].iter_mut() {
                    if l.is_none() {
                        *l = Some(id);
                    }
                }
                reach = reach.max(window[j].1);
            }
        }
        k = reach + 1;
    }
    let mut labels = vec![None; n];
    for (k, &i) in order.iter().enumerate() {
        labels[i] = label_sorted[k];
    }
    labels
}

/// Clusters `|eps_i|` and gives rank-`j` cluster (worst first) weight `2^j`.
///
/// Noise points, possible only with `min_pts > 1`, form singleton clusters.
pub fn cluster_weights(abs_residuals: &[f64], eps: f64, min_pts: usize) -> Vec<u64> {
    let labels = dbscan_1d(abs_residuals, eps, min_pts);
    let mut next = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let labels: Vec<usize> = labels
        .into_iter()
        .map(|l| {
            l.unwrap_or_else(|| {
                next += 1;
                next - 1
            })
        })
        .collect();
    let mut sums = vec![(0.0, 0usize); next];
    for (&l, &v) in labels.iter().zip(abs_residuals) {
        sums[l].0 += v;
        sums[l].1 += 1;
    }
    let mut ranked: Vec<(usize, f64)> = sums
        .iter()
        .enumerate()
        .map(|(l, &(s, c))| (l, s / c as f64))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut weight_of = vec![0u64; next];
    for (rank, &(l, _)) in ranked.iter().enumerate() {
        weight_of[l] = 1u64 << rank.min(62);
    }
    labels.iter().map(|&l| weight_of[l]).collect()
}

/// Fills `epsilon` and `weight` on every model from one probe.
pub fn weight_models(models: &mut [ThroughputModel], probe: ParamTriple, actual: f64) {
    let eps = residuals(models, probe, actual);
    let abs: Vec<f64> = eps.iter().map(|e| e.abs()).collect();
    let w = cluster_weights(&abs, 0.1 * actual.abs(), 1);
    for ((m, e), w) in models.iter_mut().zip(eps).zip(w) {
        m.epsilon = e;
        m.weight = w;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub throughput: f64,
    /// Best integer point.
    pub params: ParamTriple,
    /// Continuous maximizer the integer point was taken from.
    pub continuous: [f64; 3],
}

fn project(x: [f64; 3], hi: [f64; 3]) -> [f64; 3] {
    [x[0].clamp(1.0, hi[0]), x[1].clamp(1.0, hi[1]), x[2].clamp(1.0, hi[2])]
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Projected BFGS descent on `-f` from one start.
fn ascend(model: &ThroughputModel, start: [f64; 3], hi: [f64; 3]) -> Option<[f64; 3]> {
    let neg = |x: [f64; 3]| -model.evaluate_at(x);
    let grad = |x: [f64; 3]| {
        let g = model.gradient_at(x);
        [-g[0], -g[1], -g[2]]
    };
    let mut x = project(start, hi);
    let mut fx = neg(x);
    let mut g = grad(x);
    let mut h = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let mut first = true;
    for _ in 0..200 {
        if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return None;
        }
        // Stationarity of the projected gradient.
        let pg = project([x[0] - g[0], x[1] - g[1], x[2] - g[2]], hi);
        let pg_norm = ((pg[0] - x[0]).powi(2) + (pg[1] - x[1]).powi(2) + (pg[2] - x[2]).powi(2)).sqrt();
        if pg_norm < 1e-9 {
            break;
        }
        // Coordinates pinned at a bound with the gradient pushing outward stay fixed.
        let free: [bool; 3] = std::array::from_fn(|i| {
            !((x[i] <= 1.0 && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0))
        });
        let mut d = [0.0; 3];
        for i in 0..3 {
            if free[i] {
                d[i] = -(0..3).filter(|&j| free[j]).map(|j| h[i][j] * g[j]).sum::<f64>();
            }
        }
        if dot(&d, &g) >= 0.0 {
            d = std::array::from_fn(|i| if free[i] { -g[i] } else { 0.0 });
        }
        if first {
            let n = dot(&d, &d).sqrt();
            if n > 0.0 {
                d = d.map(|v| v * 8.0 / n);
            }
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let xn = project([x[0] + alpha * d[0], x[1] + alpha * d[1], x[2] + alpha * d[2]], hi);
            let fnew = neg(xn);
            let step = [xn[0] - x[0], xn[1] - x[1], xn[2] - x[2]];
            if fnew.is_finite() && fnew <= fx + 1e-4 * dot(&g, &step) {
                accepted = Some((xn, fnew));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew)) = accepted else { break };
        let gn = grad(xn);
        let s = [xn[0] - x[0], xn[1] - x[1], xn[2] - x[2]];
        let y = [gn[0] - g[0], gn[1] - g[1], gn[2] - g[2]];
        let sy = dot(&s, &y);
        let converged = (fx - fnew).abs() <= 1e-12 * fx.abs().max(1.0) && dot(&s, &s) < 1e-18;
        x = xn;
        fx = fnew;
        g = gn;
        if converged {
            break;
        }
        if sy > 1e-12 {
            if first {
                let scale = sy / dot(&y, &y);
                h = [[scale, 0.0, 0.0], [0.0, scale, 0.0], [0.0, 0.0, scale]];
            }
            let rho = 1.0 / sy;
            let hy: [f64; 3] = std::array::from_fn(|i| dot(&h[i], &y));
            let yhy = dot(&y, &hy);
            for i in 0..3 {
                for j in 0..3 {
                    h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
            first = false;
        }
    }
    Some(x)
}

/// Best integer point by exhaustive search.
pub fn grid_maximum(model: &ThroughputModel, bounds: &ParamBounds) -> Maximum {
    let mut best = (f64::NEG_INFINITY, ParamTriple { cc: 1, p: 1, pp: 1 });
    for cc in 1..=bounds.cc_max {
        for p in 1..=bounds.p_max {
            for pp in 1..=bounds.pp_max {
                let t = ParamTriple { cc, p, pp };
                let v = model.evaluate(t);
                if v > best.0 {
                    best = (v, t);
                }
            }
        }
    }
    Maximum {
        throughput: best.0,
        params: best.1,
        continuous: best.1.as_f64(),
    }
}

/// Maximizes `model` over the parameter box.
///
/// Starts from the eight corners, the centre and `probe`; the best integer
/// point among the neighbours of every local optimum and the starts wins.
/// Falls back to [`grid_maximum`] if the model is not finite somewhere.
pub fn maximize(model: &ThroughputModel, bounds: &ParamBounds, probe: Option<ParamTriple>) -> Maximum {
    let hi = bounds.as_array().map(|v| v as f64);
    let mut starts: Vec<[f64; 3]> = Vec::with_capacity(10);
    for mask in 0..8 {
        starts.push(std::array::from_fn(|i| if mask >> i & 1 == 1 { hi[i] } else { 1.0 }));
    }
    starts.push(std::array::from_fn(|i| (1.0 + hi[i]) / 2.0));
    if let Some(p) = probe {
        starts.push(p.as_f64());
    }
    let mut best: Option<(f64, ParamTriple, [f64; 3])> = None;
    let mut consider = |x: [f64; 3], origin: [f64; 3]| -> bool {
        let lo = x.map(f64::floor);
        for mask in 0..8 {
            let c: [f64; 3] = std::array::from_fn(|i| {
                let v = if mask >> i & 1 == 1 { lo[i] + 1.0 } else { lo[i] };
                v.clamp(1.0, hi[i])
            });
            let v = model.evaluate_at(c);
            if !v.is_finite() {
                return false;
            }
            let t = ParamTriple {
                cc: c[0] as u32,
                p: c[1] as u32,
                pp: c[2] as u32,
            };
            if best.is_none_or(|b| v > b.0) {
                best = Some((v, t, origin));
            }
        }
        true
    };
    for s in &starts {
        let Some(x) = ascend(model, *s, hi) else {
            return grid_maximum(model, bounds);
        };
        if !consider(x, x) || !consider(*s, x) {
            return grid_maximum(model, bounds);
        }
    }
    let (throughput, params, continuous) = best.expect("at least one start");
    Maximum {
        throughput,
        params,
        continuous,
    }
}

/// Lowers each parameter alone, holding the others at the optimum, while the
/// model keeps at least `rho` of `tmax`.
pub fn relax(model: &ThroughputModel, optimum: ParamTriple, tmax: f64, rho: &Relaxation) -> ParamTriple {
    let r = rho.as_array();
    let opt = optimum.as_array();
    let mut out = opt;
    for axis in 0..3 {
        let mut v = opt[axis];
        while v > 1 {
            let mut x = opt;
            x[axis] = v - 1;
            let t = ParamTriple {
                cc: x[0],
                p: x[1],
                pp: x[2],
            };
            if model.evaluate(t) >= r[axis] * tmax {
                v -= 1;
            } else {
                break;
            }
        }
        out[axis] = v;
    }
    ParamTriple {
        cc: out[0],
        p: out[1],
        pp: out[2],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerModel {
    pub group_id: String,
    pub tmax: f64,
    pub optimum: ParamTriple,
    pub relaxed: ParamTriple,
    pub weight: u64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerResult {
    pub params: ParamTriple,
    pub estimated_throughput: f64,
    pub unit_throughput: f64,
    pub per_model: Vec<PerModel>,
}

fn round_half_up(x: f64, max: u32) -> u32 {
    ((x + 0.5).floor().max(1.0) as u32).min(max)
}

/// Weighted average of relaxed parameters and maxima.
///
/// UT is the weighted model estimate at concurrency 1 with the averaged
/// parallelism and pipelining. When that is not positive it falls back to the
/// estimate divided by the averaged concurrency.
pub fn combine(models: &[ThroughputModel], per_model: Vec<PerModel>, bounds: &ParamBounds) -> Result<OptimizerResult> {
    let w_total: f64 = per_model.iter().map(|m| m.weight as f64).sum();
    if !(w_total > 0.0) {
        return Err(Error::Optimizer("total weight is zero".into()));
    }
    let avg = |f: &dyn Fn(&PerModel) -> f64| per_model.iter().map(|m| f(m) * m.weight as f64).sum::<f64>() / w_total;
    let params = ParamTriple {
        cc: round_half_up(avg(&|m| m.relaxed.cc as f64), bounds.cc_max),
        p: round_half_up(avg(&|m| m.relaxed.p as f64), bounds.p_max),
        pp: round_half_up(avg(&|m| m.relaxed.pp as f64), bounds.pp_max),
    };
    let estimated_throughput = avg(&|m| m.tmax);
    let unit = ParamTriple { cc: 1, ..params };
    let mut unit_throughput =
        models.iter().zip(&per_model).map(|(f, m)| f.evaluate(unit) * m.weight as f64).sum::<f64>() / w_total;
    if !(unit_throughput.is_finite() && unit_throughput > 0.0) {
        unit_throughput = estimated_throughput / params.cc as f64;
    }
    Ok(OptimizerResult {
        params,
        estimated_throughput,
        unit_throughput,
        per_model,
    })
}

#[derive(Debug, Clone)]
pub struct OptimizerRequest {
    pub probe_params: ParamTriple,
    pub probe_throughput: f64,
    pub models: Vec<ThroughputModel>,
    pub bounds: ParamBounds,
    pub relaxation: Relaxation,
}

impl OptimizerRequest {
    pub fn new(probe_params: ParamTriple, probe_throughput: f64, models: Vec<ThroughputModel>) -> Self {
        Self {
            probe_params,
            probe_throughput,
            models,
            bounds: ParamBounds::default(),
            relaxation: Relaxation::default(),
        }
    }
}

/// Residuals, weights, per-model maximization and relaxation, then combination.
pub fn optimize(req: &OptimizerRequest) -> Result<OptimizerResult> {
    if req.models.is_empty() {
        return Err(Error::Optimizer("no models".into()));
    }
    if !(req.probe_throughput.is_finite() && req.probe_throughput > 0.0) {
        return Err(Error::Optimizer(format!("probe throughput must be positive, got {}", req.probe_throughput)));
    }
    req.relaxation.validate()?;
    if !req.bounds.contains(req.probe_params) {
        return Err(Error::Optimizer(format!("probe {} outside bounds", req.probe_params)));
    }
    let mut models = req.models.clone();
    weight_models(&mut models, req.probe_params, req.probe_throughput);
    let per_model = models
        .iter()
        .map(|m| {
            let best = maximize(m, &req.bounds, Some(req.probe_params));
            PerModel {
                group_id: m.group_id.clone(),
                tmax: best.throughput,
                optimum: best.params,
                relaxed: relax(m, best.params, best.throughput, &req.relaxation),
                weight: m.weight,
                epsilon: m.epsilon,
            }
        })
        .collect();
    combine(&models, per_model, &req.bounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modeling::monomials;

    fn quad(a: [f64; 3], k: [f64; 3], c: f64) -> ThroughputModel {
        // c - sum k_i (x_i - a_i)^2 expanded into monomials.
        let terms = monomials(2);
        let mut coef = vec![0.0; terms.len()];
        for (idx, e) in terms.iter().enumerate() {
            match e {
                [0, 0, 0] => coef[idx] = c - (0..3).map(|i| k[i] * a[i] * a[i]).sum::<f64>(),
                [1, 0, 0] => coef[idx] = 2.0 * k[0] * a[0],
                [0, 1, 0] => coef[idx] = 2.0 * k[1] * a[1],
                [0, 0, 1] => coef[idx] = 2.0 * k[2] * a[2],
                [2, 0, 0] => coef[idx] = -k[0],
                [0, 2, 0] => coef[idx] = -k[1],
                [0, 0, 2] => coef[idx] = -k[2],
                _ => {}
            }
        }
        ThroughputModel::from_coefficients("q", 2, coef).unwrap()
    }

    #[test]
    fn separable_concave_optimum() {
        let m = quad([10.0, 5.0, 2.0], [1.0, 1.0, 1.0], 100.0);
        let best = maximize(&m, &ParamBounds::default(), None);
        assert_eq!(best.params, ParamTriple::new(10, 5, 2).unwrap());
        assert!((best.throughput - 100.0).abs() < 1e-9);
    }

    #[test]
    fn linear_goes_to_corner() {
        let m = ThroughputModel::from_coefficients("l", 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let best = maximize(&m, &ParamBounds::default(), None);
        assert_eq!(best.params, ParamTriple::new(32, 32, 32).unwrap());
    }

    #[test]
    fn relax_walk() {
        // f(cc_opt - 3) = 0.71 Tmax, f(cc_opt - 4) = 0.55 Tmax is not a
        // parabola; use the parabola that meets the first and check the second fails.
        let tmax = 100.0;
        let k = 29.0 / 9.0;
        let m = quad([20.0, 1.0, 1.0], [k, 0.0, 0.0], tmax);
        let opt = ParamTriple::new(20, 1, 1).unwrap();
        assert!((m.evaluate(ParamTriple::new(17, 1, 1).unwrap()) - 71.0).abs() < 1e-9);
        assert!(m.evaluate(ParamTriple::new(16, 1, 1).unwrap()) < 70.0);
        let r = relax(&m, opt, tmax, &Relaxation::default());
        assert_eq!(r.cc, 17);
    }

    #[test]
    fn flat_model_relaxes_to_ones() {
        let m = ThroughputModel::from_coefficients("f", 1, vec![5e9, 0.0, 0.0, 0.0]).unwrap();
        let best = maximize(&m, &ParamBounds::default(), None);
        let r = relax(&m, best.params, best.throughput, &Relaxation::default());
        assert_eq!(r, ParamTriple::new(1, 1, 1).unwrap());
    }

    #[test]
    fn dbscan_chains_within_eps() {
        let labels = dbscan_1d(&[0.0, 0.05, 0.1, 1.0, 1.08, 5.0], 0.1, 1);
        assert_eq!(labels[0], labels[1]);
        assert_eq!(labels[1], labels[2]);
        assert_eq!(labels[3], labels[4]);
        assert_ne!(labels[2], labels[3]);
        assert_ne!(labels[4], labels[5]);
        let noisy = dbscan_1d(&[0.0, 0.01, 0.02, 3.0], 0.1, 3);
        assert_eq!(noisy[3], None);
        assert!(noisy[0].is_some());
    }

    #[test]
    fn weights_favour_accurate_cluster() {
        assert_eq!(cluster_weights(&[0.5, 0.5, 0.5], 0.1, 1), vec![1, 1, 1]);
        assert_eq!(cluster_weights(&[0.01, 0.98, 0.0, 1.0], 0.1, 1), vec![2, 1, 2, 1]);
    }

    #[test]
    fn combine_rounds_half_up() {
        let m = ThroughputModel::from_coefficients("a", 1, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let pm = |cc, w| PerModel {
            group_id: "a".into(),
            tmax: 1.0,
            optimum: ParamTriple::new(cc, 1, 1).unwrap(),
            relaxed: ParamTriple::new(cc, 1, 1).unwrap(),
            weight: w,
            epsilon: 0.0,
        };
        let r = combine(&[m.clone(), m], vec![pm(10, 3), pm(20, 1)], &ParamBounds::default()).unwrap();
        assert_eq!(r.params.cc, 13);
    }
}
