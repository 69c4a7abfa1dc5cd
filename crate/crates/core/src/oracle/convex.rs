//! Accelerated projected gradient solver over the linear ball.
//!
//! The objective is folded into `t'Qt + b't + c + sum_j w_j |a_j't - y_j|`.
//! Absolute values are Huber-smoothed with a decreasing smoothing width, and
//! the iteration stops once the Frank-Wolfe gap of the smoothed problem plus
//! the smoothing error is below the requested tolerance.

use nalgebra::{DMatrix, SymmetricEigen};

use super::{ErmResult, LossKind, ObjectiveSpec, SolverOptions};
use crate::domain::{dot, norm2, FeaturePoint, FunctionClassDesc, Predictor};
use crate::error::{invalid, Error, Result};

struct Composite {
    d: usize,
    q: Vec<f64>,
    b: Vec<f64>,
    abs_terms: Vec<(Vec<f64>, f64, f64)>,
}

impl Composite {
    fn add_outer(&mut self, a: &[f64], w: f64) {
        let d = self.d;
        for i in 0..d {
            for j in 0..d {
                self.q[i * d + j] += w * a[i] * a[j];
            }
        }
    }

    fn add_linear(&mut self, a: &[f64], w: f64) {
        self.b.iter_mut().zip(a).for_each(|(b, x)| *b += w * x);
    }

    fn build(d: usize, obj: &ObjectiveSpec) -> Result<Self> {
        let mut c = Composite {
            d,
            q: vec![0.0; d * d],
            b: vec![0.0; d],
            abs_terms: Vec::new(),
        };
        let check = |p: &FeaturePoint| {
            if !p.is_anchor() && norm2(p.coords()) > 1.0 + 1e-9 {
                Err(invalid("point", "linear_ball inputs must lie in the unit ball"))
            } else {
                Ok(())
            }
        };
        for t in &obj.loss_terms {
            check(t.point)?;
            if t.kind == LossKind::ZeroOne {
                return Err(Error::NonConvex("zero_one loss".into()));
            }
            if t.weight < 0.0 && t.kind != LossKind::HingeClipped {
                return Err(Error::NonConvex(format!("negative weight on {:?} loss", t.kind)));
            }
            if t.kind == LossKind::HingeClipped && t.label.abs() > 1.0 {
                return Err(invalid("label", "hinge_clipped labels must lie in [-1, 1]"));
            }
            if t.point.is_anchor() {
                continue;
            }
            let a = t.point.coords();
            let (w, y) = (t.weight, t.label);
            match t.kind {
                LossKind::Squared => {
                    c.add_outer(a, 0.5 * w);
                    c.add_linear(a, -w * y);
                }
                // Linear on the ball since |y f(x)| <= 1 there.
                LossKind::HingeClipped => c.add_linear(a, -0.5 * w * y),
                LossKind::Absolute => c.abs_terms.push((a.to_vec(), y, w)),
                LossKind::ZeroOne => unreachable!(),
            }
        }
        if let Some(g) = &obj.gp_term {
            let scale = g.eta / (g.public.len() as f64).sqrt();
            for (xi, z) in g.path.xi.iter().zip(g.public.points()) {
                check(z)?;
                if !z.is_anchor() {
                    c.add_linear(z.coords(), scale * xi);
                }
            }
        }
        if let Some(r) = &obj.ridge_term {
            if r.eta < 0.0 {
                return Err(Error::NonConvex("negative ridge weight".into()));
            }
            let w = r.eta / r.public.len() as f64;
            for z in r.public.points() {
                check(z)?;
                if !z.is_anchor() {
                    c.add_outer(z.coords(), w);
                }
            }
        }
        if let Some(dt) = &obj.distance_term {
            if dt.weight < 0.0 {
                return Err(Error::NonConvex("negative distance weight".into()));
            }
            let w = dt.weight / dt.public.len() as f64;
            for (t, z) in dt.target.iter().zip(dt.public.points()) {
                check(z)?;
                if !z.is_anchor() {
                    c.add_outer(z.coords(), w);
                    c.add_linear(z.coords(), -2.0 * w * t);
                }
            }
        }
        Ok(c)
    }

    fn grad(&self, x: &[f64], mu: f64, out: &mut [f64]) {
        let d = self.d;
        for i in 0..d {
            out[i] = self.b[i] + 2.0 * dot(&self.q[i * d..(i + 1) * d], x);
        }
        for (a, y, w) in &self.abs_terms {
            let r = dot(a, x) - y;
            let s = w * (r / mu).clamp(-1.0, 1.0);
            out.iter_mut().zip(a).for_each(|(o, ai)| *o += s * ai);
        }
    }

    fn lambda_max(&self) -> f64 {
        let m = DMatrix::from_row_slice(self.d, self.d, &self.q);
        SymmetricEigen::new(m).eigenvalues.iter().cloned().fold(0.0, f64::max)
    }
}

fn project(x: &mut [f64]) {
    let n = norm2(x);
    if n > 1.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
}

/// `max_{|s| <= 1} g'(x - s)`, which bounds the suboptimality of `x`.
fn fw_gap(g: &[f64], x: &[f64]) -> f64 {
    (dot(g, x) + norm2(g)).max(0.0)
}

pub(crate) fn solve(class: &FunctionClassDesc, obj: &ObjectiveSpec, opts: &SolverOptions) -> Result<ErmResult> {
    let tol = opts.tolerance;
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(invalid("tolerance", "must be positive and finite"));
    }
    let comp = Composite::build(class.dim, obj)?;
    let d = class.dim;
    let total_w: f64 = comp.abs_terms.iter().map(|t| t.2).sum();
    let sum_wa2: f64 = comp.abs_terms.iter().map(|(a, _, w)| w * dot(a, a)).sum();
    let lq = 2.0 * comp.lambda_max();
    let cap = 10 * (1.0 / tol).ceil() as usize;

    // Smoothing schedule; the last width keeps the smoothing error at tol/4.
    let mut stages = Vec::new();
    if total_w > 0.0 {
        let final_mu = tol / (2.0 * total_w);
        let mut mu = 0.1f64.max(final_mu);
        while mu > final_mu {
            stages.push((mu, (total_w * mu).max(tol / 2.0)));
            mu *= 0.1;
        }
        stages.push((final_mu, tol / 2.0));
    } else {
        stages.push((1.0, tol));
    }

    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut x_new = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut iters = 0usize;
    let mut certified = f64::INFINITY;
    for &(mu, target) in &stages {
        let l = (lq + sum_wa2 / mu).max(1e-12);
        let mut t = 1.0f64;
        y.copy_from_slice(&x);
        let mut since_check = 0usize;
        loop {
            if since_check == 0 {
                comp.grad(&x, mu, &mut g);
                let gap = fw_gap(&g, &x);
                certified = gap + 0.5 * total_w * mu;
                if gap <= target {
                    break;
                }
                since_check = 10;
            }
            if iters >= cap {
                return Err(Error::SolverFailure {
                    iterations: iters,
                    achieved: certified,
                    requested: tol,
                });
            }
            comp.grad(&y, mu, &mut g);
            for i in 0..d {
                x_new[i] = y[i] - g[i] / l;
            }
            project(&mut x_new);
            let mut restart = 0.0;
            for i in 0..d {
                restart += (y[i] - x_new[i]) * (x_new[i] - x[i]);
            }
            if restart > 0.0 {
                t = 1.0;
                y.copy_from_slice(&x_new);
            } else {
                let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                let c = (t - 1.0) / t_next;
                for i in 0..d {
                    y[i] = x_new[i] + c * (x_new[i] - x[i]);
                }
                t = t_next;
            }
            std::mem::swap(&mut x, &mut x_new);
            iters += 1;
            since_check -= 1;
        }
    }
    let minimizer = Predictor {
        class: *class,
        params: x,
    };
    let objective_value = obj.value(&minimizer)?;
    Ok(ErmResult {
        minimizer,
        objective_value,
        tolerance: certified,
        oracle_calls: 1,
    })
}
