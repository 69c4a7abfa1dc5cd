//! Exact ERM for the binary classes.

use std::collections::{HashMap, HashSet};

use super::{LossKind, ObjectiveSpec, SolverOptions};
use crate::domain::{dot, ClassKind, FeaturePoint, FunctionClassDesc, LabeledDataset, Predictor, PublicSample};
use crate::error::{Error, Result};

/// Distinct points with the objective's cost of labeling each one 0 or 1.
struct Atoms<'a> {
    points: Vec<&'a FeaturePoint>,
    c0: Vec<f64>,
    c1: Vec<f64>,
    constant: f64,
}

fn key(p: &FeaturePoint) -> Vec<u64> {
    // Adding 0.0 folds -0.0 into 0.0.
    p.coords().iter().map(|c| (c + 0.0).to_bits()).collect()
}

impl<'a> Atoms<'a> {
    fn collect(obj: &ObjectiveSpec<'a>) -> Self {
        let mut atoms = Atoms {
            points: Vec::new(),
            c0: Vec::new(),
            c1: Vec::new(),
            constant: 0.0,
        };
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut add = |atoms: &mut Atoms<'a>, p: &'a FeaturePoint, c0: f64, c1: f64| {
            if p.is_anchor() {
                atoms.constant += c1;
                return;
            }
            let i = *index.entry(key(p)).or_insert_with(|| {
                atoms.points.push(p);
                atoms.c0.push(0.0);
                atoms.c1.push(0.0);
                atoms.points.len() - 1
            });
            atoms.c0[i] += c0;
            atoms.c1[i] += c1;
        };
        for t in &obj.loss_terms {
            add(
                &mut atoms,
                t.point,
                t.weight * t.kind.eval(0.0, t.label),
                t.weight * t.kind.eval(1.0, t.label),
            );
        }
        if let Some(g) = &obj.gp_term {
            let scale = g.eta / (g.public.len() as f64).sqrt();
            for (xi, z) in g.path.xi.iter().zip(g.public.points()) {
                add(&mut atoms, z, 0.0, scale * xi);
            }
        }
        if let Some(r) = &obj.ridge_term {
            let w = r.eta / r.public.len() as f64;
            for z in r.public.points() {
                add(&mut atoms, z, 0.0, w);
            }
        }
        if let Some(d) = &obj.distance_term {
            let w = d.weight / d.public.len() as f64;
            for (t, z) in d.target.iter().zip(d.public.points()) {
                add(&mut atoms, z, w * t * t, w * (1.0 - t) * (1.0 - t));
            }
        }
        atoms
    }
}

/// Sorted distinct coordinates and the thresholds -inf, the midpoints, +inf.
fn threshold_grid(points: &[&FeaturePoint]) -> (Vec<usize>, Vec<f64>) {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].coords()[0].total_cmp(&points[b].coords()[0]));
    let xs: Vec<f64> = order.iter().map(|&i| points[i].coords()[0]).collect();
    let mut ts = Vec::with_capacity(xs.len() + 1);
    ts.push(f64::NEG_INFINITY);
    for w in xs.windows(2) {
        ts.push(0.5 * (w[0] + w[1]));
    }
    if !xs.is_empty() {
        ts.push(f64::INFINITY);
    }
    (order, ts)
}

pub(crate) fn threshold_erm(obj: &ObjectiveSpec) -> Predictor {
    let atoms = Atoms::collect(obj);
    let (order, ts) = threshold_grid(&atoms.points);
    // Candidate k labels the k smallest atoms 0 and the rest 1.
    let mut value: f64 = atoms.c1.iter().sum();
    let mut best = (value, 0);
    for (k, &i) in order.iter().enumerate() {
        value += atoms.c0[i] - atoms.c1[i];
        if value < best.0 {
            best = (value, k + 1);
        }
    }
    Predictor::threshold(ts[best.1])
}

pub(crate) fn halfspace_erm(class: &FunctionClassDesc, obj: &ObjectiveSpec, opts: &SolverOptions) -> Result<Predictor> {
    let atoms = Atoms::collect(obj);
    let cands = halfspace_candidates(&atoms.points, class.dim, opts.max_halfspace_points)?;
    let mut best: Option<(f64, usize)> = None;
    for (j, (mask, _)) in cands.iter().enumerate() {
        let mut v = 0.0;
        for i in 0..atoms.points.len() {
            v += if mask >> i & 1 == 1 { atoms.c1[i] } else { atoms.c0[i] };
        }
        if best.is_none_or(|(b, _)| v < b) {
            best = Some((v, j));
        }
    }
    let (_, j) = best.expect("constant candidates are always present");
    Ok(Predictor {
        class: *class,
        params: cands[j].1.clone(),
    })
}

fn halfspace_labels(params: &[f64], x: &[f64]) -> bool {
    let d = x.len();
    dot(&params[..d], x) + params[d] >= 0.0
}

/// Halfspace parameters realizing every dichotomy of `points`, with their labeling masks.
fn halfspace_candidates(points: &[&FeaturePoint], dim: usize, limit: usize) -> Result<Vec<(u64, Vec<f64>)>> {
    let limit = limit.min(64);
    if points.len() > limit {
        return Err(Error::InstanceTooLarge {
            points: points.len(),
            limit,
        });
    }
    let coords: Vec<Vec<f64>> = points.iter().map(|p| p.coords().to_vec()).collect();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (w, b) in affine_dichotomies(&coords, dim) {
        let mut params = w;
        params.push(b);
        let mut mask = 0u64;
        for (i, x) in coords.iter().enumerate() {
            if halfspace_labels(&params, x) {
                mask |= 1 << i;
            }
        }
        if seen.insert(mask) {
            out.push((mask, params));
        }
    }
    Ok(out)
}

const ON_PLANE: f64 = 1e-9;

/// Orthonormalize `vs`; returns the basis found.
fn orthonormal(vs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vs {
        let mut r = v.clone();
        let scale = dot(v, v).sqrt();
        for b in &basis {
            let c = dot(&r, b);
            r.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let n = dot(&r, &r).sqrt();
        if n > 1e-10 * scale.max(1e-300) && n > 1e-14 {
            basis.push(r.iter().map(|x| x / n).collect());
        }
    }
    basis
}

/// Orthonormal basis of the orthogonal complement of an orthonormal `basis` in R^k.
fn complement(basis: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    let mut all = basis.to_vec();
    let start = all.len();
    for e in 0..k {
        if all.len() == k {
            break;
        }
        let mut v = vec![0.0; k];
        v[e] = 1.0;
        for b in &all {
            let c = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-6 {
            all.push(v.iter().map(|x| x / n).collect());
        }
    }
    all.split_off(start)
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Affine maps `g(x) = w.x + b`, nonzero on every point, whose sign patterns
/// cover every dichotomy of `points` that a halfspace in R^k can induce.
///
/// Any such dichotomy is realized by a hyperplane through k affinely
/// independent points, tilted slightly; the on-plane points are handled by
/// recursing into the hyperplane.
fn affine_dichotomies(points: &[Vec<f64>], k: usize) -> Vec<(Vec<f64>, f64)> {
    let mut out = vec![(vec![0.0; k], 1.0), (vec![0.0; k], -1.0)];
    if points.is_empty() || k == 0 {
        return out;
    }
    let diffs: Vec<Vec<f64>> = points[1..].iter().map(|p| sub(p, &points[0])).collect();
    let span = orthonormal(&diffs);
    if span.len() < k {
        // Every point lies in one hyperplane, so its affine maps suffice.
        let normal = complement(&span, k).swap_remove(0);
        let inner = complement(&[normal], k);
        let origin = &points[0];
        let proj: Vec<Vec<f64>> = points.iter().map(|p| project(&inner, origin, p)).collect();
        for (w, b) in affine_dichotomies(&proj, k - 1) {
            out.push(lift(&inner, origin, &w, b));
        }
        return out;
    }
    for subset in Combinations::new(points.len(), k) {
        let origin = &points[subset[0]];
        let vs: Vec<Vec<f64>> = subset[1..].iter().map(|&i| sub(&points[i], origin)).collect();
        let basis = orthonormal(&vs);
        if basis.len() < k - 1 {
            continue;
        }
        let normal = complement(&basis, k).swap_remove(0);
        let offset = -dot(&normal, origin);
        let h0: Vec<f64> = points.iter().map(|p| dot(&normal, p) + offset).collect();
        let inner = complement(std::slice::from_ref(&normal), k);
        let on: Vec<usize> = (0..points.len()).filter(|&i| h0[i].abs() <= ON_PLANE).collect();
        let proj: Vec<Vec<f64>> = on.iter().map(|&i| project(&inner, origin, &points[i])).collect();
        let subs: Vec<(Vec<f64>, f64)> = affine_dichotomies(&proj, k - 1)
            .into_iter()
            .map(|(w, b)| lift(&inner, origin, &w, b))
            .collect();
        for o in [1.0, -1.0] {
            for (gw, gb) in &subs {
                let mut eps = 1.0f64;
                for (i, p) in points.iter().enumerate() {
                    if h0[i].abs() > ON_PLANE {
                        let g = dot(gw, p) + gb;
                        if g != 0.0 {
                            eps = eps.min(0.5 * h0[i].abs() / g.abs());
                        }
                    }
                }
                let w: Vec<f64> = normal.iter().zip(gw).map(|(n, g)| o * n + eps * g).collect();
                let b = o * offset + eps * gb;
                out.push((w, b));
            }
        }
    }
    out
}

fn project(inner: &[Vec<f64>], origin: &[f64], p: &[f64]) -> Vec<f64> {
    let d = sub(p, origin);
    inner.iter().map(|b| dot(b, &d)).collect()
}

/// Pull an affine map on hyperplane coordinates back to R^k.
fn lift(inner: &[Vec<f64>], origin: &[f64], w: &[f64], b: f64) -> (Vec<f64>, f64) {
    let k = origin.len();
    let mut full = vec![0.0; k];
    for (wi, basis) in w.iter().zip(inner) {
        full.iter_mut().zip(basis).for_each(|(f, e)| *f += wi * e);
    }
    let b = b - dot(&full, origin);
    (full, b)
}

/// Lexicographic k-subsets of 0..n.
struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            idx: (0..k).collect(),
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

fn distinct<'p>(points: &[&'p FeaturePoint]) -> Vec<&'p FeaturePoint> {
    let mut seen = HashSet::new();
    points
        .iter()
        .filter(|p| !p.is_anchor() && seen.insert(key(p)))
        .copied()
        .collect()
}

/// Canonical candidate predictors inducing every labeling of `points`.
pub fn enumerate_candidates(class: &FunctionClassDesc, points: &[FeaturePoint]) -> Result<Vec<Predictor>> {
    enumerate_refs(class, &points.iter().collect::<Vec<_>>(), &SolverOptions::default())
}

fn enumerate_refs(class: &FunctionClassDesc, points: &[&FeaturePoint], opts: &SolverOptions) -> Result<Vec<Predictor>> {
    for p in points {
        if !p.is_anchor() && p.dim() != class.dim {
            return Err(Error::DimensionMismatch {
                expected: class.dim,
                found: p.dim(),
            });
        }
    }
    let uniq = distinct(points);
    match class.kind {
        ClassKind::Threshold1d => {
            let (_, ts) = threshold_grid(&uniq);
            Ok(ts.into_iter().map(Predictor::threshold).collect())
        }
        ClassKind::Halfspace => Ok(halfspace_candidates(&uniq, class.dim, opts.max_halfspace_points)?
            .into_iter()
            .map(|(_, params)| Predictor { class: *class, params })
            .collect()),
        ClassKind::LinearBall => Err(Error::Unsupported("linear_ball has no finite candidate set".into())),
    }
}

/// A labeling of the public points and the least private 0-1 error among class members inducing it.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedLabeling {
    pub labeling: Vec<bool>,
    pub private_cost: f64,
    pub representative: Predictor,
}

/// Every labeling the class induces on `public`, with its constrained ERM value on `data`.
pub fn projection_costs(
    class: &FunctionClassDesc,
    data: &LabeledDataset,
    public: &PublicSample,
) -> Result<Vec<ProjectedLabeling>> {
    let mut all: Vec<&FeaturePoint> = data.iter().map(|(x, _)| x).collect();
    all.extend(public.points());
    let cands = enumerate_refs(class, &all, &SolverOptions::default())?;
    let mut index: HashMap<Vec<bool>, usize> = HashMap::new();
    let mut out: Vec<ProjectedLabeling> = Vec::new();
    for f in cands {
        let labeling: Vec<bool> = public.points().iter().map(|z| f.value(z) == 1.0).collect();
        let cost: f64 = data
            .iter()
            .map(|(x, y)| LossKind::ZeroOne.eval(f.value(x), *y))
            .sum();
        match index.get(&labeling) {
            Some(&i) => {
                if cost < out[i].private_cost {
                    out[i].private_cost = cost;
                    out[i].representative = f;
                }
            }
            None => {
                index.insert(labeling.clone(), out.len());
                out.push(ProjectedLabeling {
                    labeling,
                    private_cost: cost,
                    representative: f,
                });
            }
        }
    }
    Ok(out)
}
