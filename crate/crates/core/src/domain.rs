//! Feature points, datasets, function classes, predictors and Gaussian process paths.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::seed;

/// A point of the feature space. Anchor points evaluate to 1 under every predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePoint {
    coords: Vec<f64>,
    #[serde(default)]
    is_anchor: bool,
}

impl FeaturePoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(invalid("coords", "feature points need at least one coordinate"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(invalid("coords", "coordinates must be finite"));
        }
        Ok(Self {
            coords,
            is_anchor: false,
        })
    }

    /// One-dimensional point. Panics on a non-finite value.
    pub fn scalar(x: f64) -> Self {
        assert!(x.is_finite(), "non-finite coordinate {x}");
        Self {
            coords: vec![x],
            is_anchor: false,
        }
    }

    /// Anchor of the given dimension. Its coordinates are zero and never read.
    pub fn anchor(dim: usize) -> Self {
        Self {
            coords: vec![0.0; dim.max(1)],
            is_anchor: true,
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn is_anchor(&self) -> bool {
        self.is_anchor
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Labels in [-1, 1].
    Regression,
    /// Labels in {0, 1}.
    Classification,
}

impl Task {
    pub fn admits(self, label: f64) -> bool {
        match self {
            Task::Regression => (-1.0..=1.0).contains(&label),
            Task::Classification => label == 0.0 || label == 1.0,
        }
    }
}

/// The private sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    points: Vec<(FeaturePoint, f64)>,
    task: Task,
}

impl LabeledDataset {
    pub fn new(points: Vec<(FeaturePoint, f64)>, task: Task) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("points", "a labeled dataset needs n >= 1"));
        }
        let dim = points[0].0.dim();
        for (x, y) in &points {
            if x.is_anchor() {
                return Err(invalid("points", "anchor points cannot be private data"));
            }
            if x.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: x.dim(),
                });
            }
            if !task.admits(*y) {
                return Err(invalid("label", format!("{y} is outside the {task:?} range")));
            }
        }
        Ok(Self { points, task })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn dim(&self) -> usize {
        self.points[0].0.dim()
    }

    pub fn points(&self) -> &[(FeaturePoint, f64)] {
        &self.points
    }

    pub fn iter(&self) -> impl Iterator<Item = &(FeaturePoint, f64)> {
        self.points.iter()
    }

    /// Copy with element `index` replaced.
    pub fn replace(&self, index: usize, point: FeaturePoint, label: f64) -> Result<Self> {
        if index >= self.len() {
            return Err(invalid("index", format!("{index} out of range for n = {}", self.len())));
        }
        let mut points = self.points.clone();
        points[index] = (point, label);
        Self::new(points, self.task)
    }
}

/// Public unlabeled points, real points first and anchors last.
#[derive(Debug, Clone, PartialEq)]
pub struct PublicSample {
    points: Vec<FeaturePoint>,
    m_real: usize,
}

impl PublicSample {
    pub fn new(points: Vec<FeaturePoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyPublicSample);
        }
        let m_real = points.iter().take_while(|p| !p.is_anchor()).count();
        if points[m_real..].iter().any(|p| !p.is_anchor()) {
            return Err(invalid("points", "anchor points must appear last"));
        }
        let dim = points[0].dim();
        if let Some(p) = points.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.dim(),
            });
        }
        Ok(Self { points, m_real })
    }

    pub fn from_scalars(xs: &[f64]) -> Result<Self> {
        Self::new(xs.iter().map(|&x| FeaturePoint::scalar(x)).collect())
    }

    pub fn points(&self) -> &[FeaturePoint] {
        &self.points
    }

    /// Total size including anchors.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn m_real(&self) -> usize {
        self.m_real
    }

    pub fn m_anchor(&self) -> usize {
        self.points.len() - self.m_real
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn real_points(&self) -> &[FeaturePoint] {
        &self.points[..self.m_real]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassKind {
    Threshold1d,
    Halfspace,
    LinearBall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputRange {
    Binary,
    SignedUnit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawClass")]
pub struct FunctionClassDesc {
    pub kind: ClassKind,
    pub dim: usize,
    pub output_range: OutputRange,
}

#[derive(Deserialize)]
struct RawClass {
    kind: ClassKind,
    #[serde(default = "one")]
    dim: usize,
    #[serde(default)]
    output_range: Option<OutputRange>,
}

fn one() -> usize {
    1
}

impl TryFrom<RawClass> for FunctionClassDesc {
    type Error = Error;

    fn try_from(raw: RawClass) -> Result<Self> {
        let class = match raw.kind {
            ClassKind::Threshold1d => Self::threshold1d(),
            ClassKind::Halfspace => Self::halfspace(raw.dim)?,
            ClassKind::LinearBall => Self::linear_ball(raw.dim)?,
        };
        if raw.kind == ClassKind::Threshold1d && raw.dim != 1 {
            return Err(invalid("dim", "threshold1d has dim = 1"));
        }
        if let Some(r) = raw.output_range {
            if r != class.output_range {
                return Err(invalid("output_range", format!("{:?} does not produce {r:?}", raw.kind)));
            }
        }
        Ok(class)
    }
}

impl FunctionClassDesc {
    pub fn threshold1d() -> Self {
        Self {
            kind: ClassKind::Threshold1d,
            dim: 1,
            output_range: OutputRange::Binary,
        }
    }

    pub fn halfspace(dim: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(invalid("dim", "halfspaces are supported for 1 <= dim <= 3"));
        }
        Ok(Self {
            kind: ClassKind::Halfspace,
            dim,
            output_range: OutputRange::Binary,
        })
    }

    pub fn linear_ball(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "linear_ball needs dim >= 1"));
        }
        Ok(Self {
            kind: ClassKind::LinearBall,
            dim,
            output_range: OutputRange::SignedUnit,
        })
    }

    pub fn is_binary(&self) -> bool {
        self.output_range == OutputRange::Binary
    }

    pub fn is_convex(&self) -> bool {
        self.kind == ClassKind::LinearBall
    }

    /// Number of parameters of a predictor in this class.
    pub fn param_len(&self) -> usize {
        match self.kind {
            ClassKind::Threshold1d => 1,
            ClassKind::Halfspace => self.dim + 1,
            ClassKind::LinearBall => self.dim,
        }
    }

    /// VC dimension of the class (as metadata for the binary classes).
    pub fn vc_dimension(&self) -> usize {
        match self.kind {
            ClassKind::Threshold1d => 1,
            ClassKind::Halfspace => self.dim + 1,
            ClassKind::LinearBall => self.dim,
        }
    }
}

/// Member of a function class.
///
/// * threshold1d: `params = [t]`, `f(x) = 1{x >= t}`; `t` may be infinite.
/// * halfspace: `params = [w.., b]`, `f(x) = 1{w.x + b >= 0}`.
/// * linear_ball: `params = w` with `|w| <= 1`, `f(x) = w.x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    pub class: FunctionClassDesc,
    pub params: Vec<f64>,
}

const BALL_SLACK: f64 = 1e-9;

impl Predictor {
    pub fn new(class: FunctionClassDesc, params: Vec<f64>) -> Result<Self> {
        if params.len() != class.param_len() {
            return Err(Error::LengthMismatch {
                expected: class.param_len(),
                found: params.len(),
            });
        }
        match class.kind {
            ClassKind::Threshold1d => {
                if params[0].is_nan() {
                    return Err(invalid("params", "threshold is NaN"));
                }
            }
            ClassKind::Halfspace | ClassKind::LinearBall => {
                if params.iter().any(|p| !p.is_finite()) {
                    return Err(invalid("params", "parameters must be finite"));
                }
            }
        }
        if class.kind == ClassKind::LinearBall && norm2(&params) > 1.0 + BALL_SLACK {
            return Err(invalid("params", "linear_ball weights must lie in the unit ball"));
        }
        Ok(Self { class, params })
    }

    pub fn threshold(t: f64) -> Self {
        Self {
            class: FunctionClassDesc::threshold1d(),
            params: vec![t],
        }
    }

    pub fn halfspace(w: &[f64], b: f64) -> Result<Self> {
        let class = FunctionClassDesc::halfspace(w.len())?;
        let mut params = w.to_vec();
        params.push(b);
        Self::new(class, params)
    }

    pub fn linear(w: &[f64]) -> Result<Self> {
        Self::new(FunctionClassDesc::linear_ball(w.len())?, w.to_vec())
    }

    /// Evaluate on a point of the right dimension.
    pub fn eval(&self, x: &FeaturePoint) -> Result<f64> {
        if x.is_anchor() {
            return Ok(1.0);
        }
        if x.dim() != self.class.dim {
            return Err(Error::DimensionMismatch {
                expected: self.class.dim,
                found: x.dim(),
            });
        }
        if self.class.kind == ClassKind::LinearBall && norm2(x.coords()) > 1.0 + BALL_SLACK {
            return Err(invalid("point", "linear_ball inputs must lie in the unit ball"));
        }
        Ok(self.value(x))
    }

    /// Evaluation without dimension checks.
    pub(crate) fn value(&self, x: &FeaturePoint) -> f64 {
        if x.is_anchor() {
            return 1.0;
        }
        let c = x.coords();
        match self.class.kind {
            ClassKind::Threshold1d => indicator(c[0] >= self.params[0]),
            ClassKind::Halfspace => {
                let d = self.class.dim;
                indicator(dot(&self.params[..d], c) + self.params[d] >= 0.0)
            }
            ClassKind::LinearBall => dot(&self.params, c).clamp(-1.0, 1.0),
        }
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Values of `f` on each point.
pub fn evaluate_on(f: &Predictor, pts: &[FeaturePoint]) -> Result<Vec<f64>> {
    pts.iter().map(|x| f.eval(x)).collect()
}

/// Root mean square of `values`, computed in one scaled pass.
pub fn empirical_norm(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyPublicSample);
    }
    let mut scale = 0.0f64;
    let mut ssq = 1.0f64;
    for &v in values {
        if !v.is_finite() {
            return Err(invalid("values", "non-finite value"));
        }
        let a = v.abs();
        if a == 0.0 {
            continue;
        }
        if scale < a {
            ssq = 1.0 + ssq * (scale / a) * (scale / a);
            scale = a;
        } else {
            ssq += (a / scale) * (a / scale);
        }
    }
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok(scale * (ssq / values.len() as f64).sqrt())
}

/// Empirical distance between two value vectors.
pub fn empirical_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    empirical_norm(&diff)
}

/// Standard normal draws on the public points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpPath {
    pub xi: Vec<f64>,
    pub seed: u64,
}

impl GpPath {
    pub fn sample(m: usize, seed: u64) -> Self {
        let mut rng = seed::stream(seed);
        let xi = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        Self { xi, seed }
    }

    pub fn from_values(xi: Vec<f64>) -> Self {
        Self { xi, seed: 0 }
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }
}

/// `(1/sqrt(m)) <xi, values>`.
pub fn gp_functional(path: &GpPath, values: &[f64]) -> Result<f64> {
    if path.len() != values.len() {
        return Err(Error::LengthMismatch {
            expected: path.len(),
            found: values.len(),
        });
    }
    if values.is_empty() {
        return Err(Error::EmptyPublicSample);
    }
    Ok(dot(&path.xi, values) / (values.len() as f64).sqrt())
}

/// Append anchors so that they make up at least `fraction` of the sample.
pub fn anchor_augment(public: &PublicSample, fraction: f64) -> Result<PublicSample> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(invalid("fraction", "anchor fraction must lie in [0, 1)"));
    }
    let m_real = public.m_real() as f64;
    // Guard against 2/3 * 1 / (1/3) landing just above an integer.
    let wanted = (fraction * m_real / (1.0 - fraction) - 1e-9).ceil().max(0.0) as usize;
    let mut points = public.points().to_vec();
    for _ in public.m_anchor()..wanted {
        points.push(FeaturePoint::anchor(public.dim()));
    }
    PublicSample::new(points)
}

/// Default anchor fraction, a 1:2 weighting of real points and anchors.
pub const DEFAULT_ANCHOR_FRACTION: f64 = 2.0 / 3.0;
