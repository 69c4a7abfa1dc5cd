//! ERM oracle over composite objectives.
//!
//! Threshold and halfspace classes are solved exactly by enumeration; the
//! linear ball is solved by an accelerated projected gradient method whose
//! reported tolerance is a certified bound on the objective gap.

mod convex;
mod enumerate;

use serde::{Deserialize, Serialize};

use crate::domain::{ClassKind, FeaturePoint, FunctionClassDesc, GpPath, LabeledDataset, Predictor, PublicSample};
use crate::error::{invalid, Error, Result};

pub use enumerate::{enumerate_candidates, projection_costs, ProjectedLabeling};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    ZeroOne,
    Absolute,
    Squared,
    HingeClipped,
}

impl LossKind {
    pub fn eval(self, prediction: f64, label: f64) -> f64 {
        match self {
            LossKind::ZeroOne => {
                if prediction != label {
                    1.0
                } else {
                    0.0
                }
            }
            LossKind::Absolute => (prediction - label).abs(),
            LossKind::Squared => 0.5 * (prediction - label).powi(2),
            LossKind::HingeClipped => ((1.0 - label * prediction).max(0.0) / 2.0).min(1.0),
        }
    }

    pub fn is_convex(self) -> bool {
        self != LossKind::ZeroOne
    }

    /// Lipschitz constant in the prediction over [-1, 1].
    pub fn lipschitz(self) -> Option<f64> {
        match self {
            LossKind::ZeroOne => None,
            LossKind::Absolute | LossKind::HingeClipped => Some(1.0),
            LossKind::Squared => Some(2.0),
        }
    }

    /// Largest change of one loss value when a single example is replaced.
    pub fn range(self) -> f64 {
        match self {
            LossKind::ZeroOne | LossKind::HingeClipped => 1.0,
            LossKind::Absolute | LossKind::Squared => 2.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LossTerm<'a> {
    pub point: &'a FeaturePoint,
    pub label: f64,
    pub weight: f64,
    pub kind: LossKind,
}

/// `eta * omega(f)` for a Gaussian process path.
#[derive(Debug, Clone)]
pub struct GpTerm<'a> {
    pub path: &'a GpPath,
    pub public: &'a PublicSample,
    pub eta: f64,
}

/// `eta * |f|_m^2`.
#[derive(Debug, Clone)]
pub struct RidgeTerm<'a> {
    pub public: &'a PublicSample,
    pub eta: f64,
}

/// `weight * |f - target|_m^2`.
#[derive(Debug, Clone)]
pub struct DistanceTerm<'a> {
    pub public: &'a PublicSample,
    pub target: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ObjectiveSpec<'a> {
    pub loss_terms: Vec<LossTerm<'a>>,
    pub gp_term: Option<GpTerm<'a>>,
    pub ridge_term: Option<RidgeTerm<'a>>,
    pub distance_term: Option<DistanceTerm<'a>>,
}

impl<'a> ObjectiveSpec<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_loss(mut self, point: &'a FeaturePoint, label: f64, weight: f64, kind: LossKind) -> Self {
        self.loss_terms.push(LossTerm {
            point,
            label,
            weight,
            kind,
        });
        self
    }

    /// One loss term per example, all with the same weight.
    pub fn with_dataset(mut self, data: &'a LabeledDataset, kind: LossKind, weight: f64) -> Self {
        for (x, y) in data.iter() {
            self.loss_terms.push(LossTerm {
                point: x,
                label: *y,
                weight,
                kind,
            });
        }
        self
    }

    pub fn with_gp(mut self, path: &'a GpPath, public: &'a PublicSample, eta: f64) -> Self {
        self.gp_term = Some(GpTerm { path, public, eta });
        self
    }

    pub fn with_ridge(mut self, public: &'a PublicSample, eta: f64) -> Self {
        self.ridge_term = Some(RidgeTerm { public, eta });
        self
    }

    pub fn with_distance(mut self, public: &'a PublicSample, target: Vec<f64>) -> Self {
        self.distance_term = Some(DistanceTerm {
            public,
            target,
            weight: 1.0,
        });
        self
    }

    /// Every term multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for t in &mut out.loss_terms {
            t.weight *= c;
        }
        if let Some(g) = &mut out.gp_term {
            g.eta *= c;
        }
        if let Some(r) = &mut out.ridge_term {
            r.eta *= c;
        }
        if let Some(d) = &mut out.distance_term {
            d.weight *= c;
        }
        out
    }

    /// Objective value of `f`, evaluated term by term.
    pub fn value(&self, f: &Predictor) -> Result<f64> {
        let mut total = 0.0;
        for t in &self.loss_terms {
            total += t.weight * t.kind.eval(f.eval(t.point)?, t.label);
        }
        if let Some(g) = &self.gp_term {
            let m = g.public.len() as f64;
            let mut s = 0.0;
            for (xi, z) in g.path.xi.iter().zip(g.public.points()) {
                s += xi * f.eval(z)?;
            }
            total += g.eta * s / m.sqrt();
        }
        if let Some(r) = &self.ridge_term {
            let m = r.public.len() as f64;
            let mut s = 0.0;
            for z in r.public.points() {
                s += f.eval(z)?.powi(2);
            }
            total += r.eta * s / m;
        }
        if let Some(d) = &self.distance_term {
            let m = d.public.len() as f64;
            let mut s = 0.0;
            for (t, z) in d.target.iter().zip(d.public.points()) {
                s += (f.eval(z)? - t).powi(2);
            }
            total += d.weight * s / m;
        }
        Ok(total)
    }

    fn validate(&self, class: &FunctionClassDesc) -> Result<()> {
        let check_dim = |p: &FeaturePoint| {
            if !p.is_anchor() && p.dim() != class.dim {
                Err(Error::DimensionMismatch {
                    expected: class.dim,
                    found: p.dim(),
                })
            } else {
                Ok(())
            }
        };
        for t in &self.loss_terms {
            check_dim(t.point)?;
            if !t.weight.is_finite() || !t.label.is_finite() {
                return Err(invalid("loss_terms", "weights and labels must be finite"));
            }
        }
        if let Some(g) = &self.gp_term {
            if g.path.len() != g.public.len() {
                return Err(Error::LengthMismatch {
                    expected: g.public.len(),
                    found: g.path.len(),
                });
            }
            if !g.eta.is_finite() {
                return Err(invalid("gp_term.eta", "must be finite"));
            }
            g.public.points().iter().try_for_each(check_dim)?;
        }
        if let Some(r) = &self.ridge_term {
            if !r.eta.is_finite() {
                return Err(invalid("ridge_term.eta", "must be finite"));
            }
            r.public.points().iter().try_for_each(check_dim)?;
        }
        if let Some(d) = &self.distance_term {
            if d.target.len() != d.public.len() {
                return Err(Error::LengthMismatch {
                    expected: d.public.len(),
                    found: d.target.len(),
                });
            }
            if !d.weight.is_finite() || d.target.iter().any(|t| !t.is_finite()) {
                return Err(invalid("distance_term", "target and weight must be finite"));
            }
            d.public.points().iter().try_for_each(check_dim)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErmResult {
    pub minimizer: Predictor,
    pub objective_value: f64,
    /// Certified objective gap; 0 for the exact solvers.
    pub tolerance: f64,
    pub oracle_calls: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Requested objective gap for the convex solver.
    pub tolerance: f64,
    /// Largest number of distinct points accepted by the halfspace enumerator.
    pub max_halfspace_points: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_halfspace_points: 40,
        }
    }
}

pub fn erm(class: &FunctionClassDesc, obj: &ObjectiveSpec) -> Result<ErmResult> {
    erm_with(class, obj, &SolverOptions::default())
}

pub fn erm_with(class: &FunctionClassDesc, obj: &ObjectiveSpec, opts: &SolverOptions) -> Result<ErmResult> {
    obj.validate(class)?;
    let minimizer = match class.kind {
        ClassKind::Threshold1d => enumerate::threshold_erm(obj),
        ClassKind::Halfspace => enumerate::halfspace_erm(class, obj, opts)?,
        ClassKind::LinearBall => return convex::solve(class, obj, opts),
    };
    let objective_value = obj.value(&minimizer)?;
    Ok(ErmResult {
        minimizer,
        objective_value,
        tolerance: 0.0,
        oracle_calls: 1,
    })
}

/// `sup_f omega(f)` for one path.
pub fn erm_maximize_gp(class: &FunctionClassDesc, path: &GpPath, public: &PublicSample) -> Result<f64> {
    erm_maximize_gp_with(class, path, public, &SolverOptions::default())
}

pub fn erm_maximize_gp_with(
    class: &FunctionClassDesc,
    path: &GpPath,
    public: &PublicSample,
    opts: &SolverOptions,
) -> Result<f64> {
    let obj = ObjectiveSpec::new().with_gp(path, public, -1.0);
    Ok(-erm_with(class, &obj, opts)?.objective_value)
}
