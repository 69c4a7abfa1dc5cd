//! Brute-force references for the exact and convex ERM solvers.

#![allow(dead_code)]

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use oraclepriv::oracle::{erm, LossKind, ObjectiveSpec};
use oraclepriv::seed;
use oraclepriv::{anchor_augment, FeaturePoint, FunctionClassDesc, GpPath, LabeledDataset, Predictor, PublicSample, Task};
use rand::Rng;

/// Whether the labeling of `points` is induced by some closed halfspace, by LP feasibility.
pub fn separable(points: &[Vec<f64>], labels: &[bool]) -> bool {
    let d = points[0].len();
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = (0..=d).map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY))).collect();
    for (x, &y) in points.iter().zip(labels) {
        let mut expr: Vec<(minilp::Variable, f64)> = x.iter().zip(&vars).map(|(c, v)| (*v, *c)).collect();
        expr.push((vars[d], 1.0));
        if y {
            lp.add_constraint(&expr[..], ComparisonOp::Ge, 1.0);
        } else {
            lp.add_constraint(&expr[..], ComparisonOp::Le, -1.0);
        }
    }
    lp.solve().is_ok()
}

/// Objective of a labeling of the distinct non-anchor points, by direct evaluation of every term.
pub fn labeling_value(obj: &ObjectiveSpec, distinct: &[Vec<f64>], labels: &[bool]) -> f64 {
    let val = |p: &FeaturePoint| -> f64 {
        if p.is_anchor() {
            return 1.0;
        }
        let i = distinct.iter().position(|q| q.as_slice() == p.coords()).unwrap();
        if labels[i] {
            1.0
        } else {
            0.0
        }
    };
    let mut total = 0.0;
    for t in &obj.loss_terms {
        total += t.weight * t.kind.eval(val(t.point), t.label);
    }
    if let Some(g) = &obj.gp_term {
        let s: f64 = g.path.xi.iter().zip(g.public.points()).map(|(x, z)| x * val(z)).sum();
        total += g.eta * s / (g.public.len() as f64).sqrt();
    }
    if let Some(r) = &obj.ridge_term {
        let s: f64 = r.public.points().iter().map(|z| val(z).powi(2)).sum();
        total += r.eta * s / r.public.len() as f64;
    }
    if let Some(dt) = &obj.distance_term {
        let s: f64 = dt.target.iter().zip(dt.public.points()).map(|(t, z)| (val(z) - t).powi(2)).sum();
        total += dt.weight * s / dt.public.len() as f64;
    }
    total
}

pub struct Instance {
    pub data: LabeledDataset,
    pub public: PublicSample,
    pub path: GpPath,
    pub ytilde: Vec<bool>,
    pub xi: Vec<f64>,
    pub target: Vec<f64>,
    pub eta: (f64, f64),
}

pub fn random_point<R: Rng>(dim: usize, grid: bool, rng: &mut R) -> FeaturePoint {
    let c = (0..dim)
        .map(|_| {
            if grid {
                rng.random_range(0..5) as f64 / 4.0
            } else {
                rng.random::<f64>()
            }
        })
        .collect();
    FeaturePoint::new(c).unwrap()
}

pub fn instance(dim: usize, s: u64) -> Instance {
    let mut rng = seed::stream(s);
    // Coarse grids in 1-d produce duplicate points and exact ties.
    let grid = dim == 1 && rng.random::<bool>();
    let n = rng.random_range(1..=7);
    let m = rng.random_range(1..=12 - n);
    let data = LabeledDataset::new(
        (0..n)
            .map(|_| (random_point(dim, grid, &mut rng), f64::from(u8::from(rng.random::<bool>()))))
            .collect(),
        Task::Classification,
    )
    .unwrap();
    let mut public = PublicSample::new((0..m).map(|_| random_point(dim, grid, &mut rng)).collect()).unwrap();
    if rng.random::<f64>() < 0.3 {
        public = anchor_augment(&public, 0.4).unwrap();
    }
    let ml = public.len();
    Instance {
        path: GpPath::sample(ml, rng.random()),
        ytilde: (0..ml).map(|_| rng.random()).collect(),
        xi: (0..ml).map(|_| rng.random_range(-3.0..3.0)).collect(),
        target: (0..ml).map(|_| rng.random_range(-0.5..1.5)).collect(),
        eta: (rng.random_range(-1.0..1.0), rng.random_range(0.0..1.0)),
        data,
        public,
    }
}

pub fn objective<'a>(inst: &'a Instance, variant: u64) -> ObjectiveSpec<'a> {
    let mut obj = ObjectiveSpec::new().with_dataset(&inst.data, LossKind::ZeroOne, 1.0);
    match variant % 3 {
        // Pseudo-labeled public points with signed weights.
        0 => {
            for ((z, y), w) in inst.public.points().iter().zip(&inst.ytilde).zip(&inst.xi) {
                obj = obj.with_loss(z, f64::from(u8::from(*y)), *w, LossKind::ZeroOne);
            }
        }
        1 => obj = obj.with_gp(&inst.path, &inst.public, inst.eta.0).with_ridge(&inst.public, inst.eta.1),
        _ => obj = obj.with_distance(&inst.public, inst.target.clone()),
    }
    obj
}

pub fn distinct_points(obj: &ObjectiveSpec) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut push = |p: &FeaturePoint| {
        if !p.is_anchor() && !out.iter().any(|q| q.as_slice() == p.coords()) {
            out.push(p.coords().to_vec());
        }
    };
    obj.loss_terms.iter().for_each(|t| push(t.point));
    if let Some(g) = &obj.gp_term {
        g.public.points().iter().for_each(&mut push);
    }
    if let Some(r) = &obj.ridge_term {
        r.public.points().iter().for_each(&mut push);
    }
    if let Some(d) = &obj.distance_term {
        d.public.points().iter().for_each(&mut push);
    }
    out
}


/// Threshold ERM on instance `s` against every threshold at -inf, +inf and the data points.
pub fn check_threshold(s: u64) -> Result<(), String> {
    let class = FunctionClassDesc::threshold1d();
    let inst = instance(1, s);
    let obj = objective(&inst, s);
    let res = erm(&class, &obj).map_err(|e| e.to_string())?;
    // Every labeling a threshold induces is induced by t = -inf, +inf, or some point.
    let mut brute = f64::INFINITY;
    let mut ts = vec![f64::NEG_INFINITY, f64::INFINITY];
    ts.extend(distinct_points(&obj).iter().map(|p| p[0]));
    for t in ts {
        brute = brute.min(obj.value(&Predictor::threshold(t)).map_err(|e| e.to_string())?);
    }
    if (res.objective_value - brute).abs() > 1e-12 * (1.0 + brute.abs()) || res.tolerance != 0.0 {
        return Err(format!("threshold instance {s}: {} vs {brute}", res.objective_value));
    }
    Ok(())
}

/// Halfspace ERM on instance `s` against every LP-separable dichotomy of the distinct points.
pub fn check_halfspace(s: u64) -> Result<(), String> {
    let dim = [1, 2, 2, 3][s as usize % 4];
    let class = FunctionClassDesc::halfspace(dim).map_err(|e| e.to_string())?;
    let inst = instance(dim, 1000 + s);
    let obj = objective(&inst, s);
    let res = erm(&class, &obj).map_err(|e| e.to_string())?;
    let pts = distinct_points(&obj);
    let mut brute = f64::INFINITY;
    for mask in 0u32..(1 << pts.len()) {
        let labels: Vec<bool> = (0..pts.len()).map(|i| mask >> i & 1 == 1).collect();
        if separable(&pts, &labels) {
            brute = brute.min(labeling_value(&obj, &pts, &labels));
        }
    }
    if (res.objective_value - brute).abs() > 1e-9 * (1.0 + brute.abs()) {
        return Err(format!("halfspace instance {s} (dim {dim}): {} vs {brute}", res.objective_value));
    }
    Ok(())
}

pub fn ball_point<R: Rng>(rng: &mut R) -> FeaturePoint {
    loop {
        let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        if x[0] * x[0] + x[1] * x[1] <= 1.0 {
            return FeaturePoint::new(x.to_vec()).unwrap();
        }
    }
}

pub fn grid_min(obj: &ObjectiveSpec, class: &FunctionClassDesc) -> f64 {
    let mut best = f64::INFINITY;
    for i in -100..=100 {
        for j in -100..=100 {
            let w = [i as f64 * 0.01, j as f64 * 0.01];
            if w[0] * w[0] + w[1] * w[1] <= 1.0 {
                let f = Predictor { class: *class, params: w.to_vec() };
                best = best.min(obj.value(&f).unwrap());
            }
        }
    }
    best
}


/// Convex solver on instance `s` against a 0.01 grid over the unit disc.
pub fn check_convex(s: u64) -> Result<(), String> {
    let class = FunctionClassDesc::linear_ball(2).map_err(|e| e.to_string())?;
    let kinds = [LossKind::Absolute, LossKind::Squared, LossKind::HingeClipped];
    let mut rng = seed::stream(9000 + s);
    let n = rng.random_range(2..12);
    let kind = kinds[s as usize % 3];
    let data = LabeledDataset::new(
        (0..n)
            .map(|_| {
                let y: f64 = if kind == LossKind::HingeClipped {
                    if rng.random::<bool>() { 1.0 } else { -1.0 }
                } else {
                    rng.random_range(-1.0..1.0)
                };
                (ball_point(&mut rng), y)
            })
            .collect(),
        Task::Regression,
    )
    .map_err(|e| e.to_string())?;
    let public = anchor_augment(&PublicSample::new((0..6).map(|_| ball_point(&mut rng)).collect()).unwrap(), 0.25).unwrap();
    let path = GpPath::sample(public.len(), rng.random());
    let target: Vec<f64> = (0..public.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut obj = ObjectiveSpec::new().with_dataset(&data, kind, 1.0 / n as f64);
    match s % 3 {
        0 => obj = obj.with_gp(&path, &public, rng.random_range(0.0..2.0)),
        1 => obj = obj.with_ridge(&public, rng.random_range(0.0..2.0)),
        _ => obj = obj.with_distance(&public, target),
    }
    let res = erm(&class, &obj).map_err(|e| e.to_string())?;
    let g = grid_min(&obj, &class);
    if res.objective_value > g + res.tolerance + 1e-12 || (res.objective_value - g).abs() > res.tolerance + 0.02 {
        return Err(format!("convex instance {s}: {} vs grid {g} (tolerance {})", res.objective_value, res.tolerance));
    }
    Ok(())
}
