//! Base distributions, smooth reweightings of them, and label models.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{dot, norm2, FeaturePoint, FunctionClassDesc, LabeledDataset, OutputRange, Predictor, PublicSample, Task};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseDist {
    /// Uniform on [0, 1].
    UniformInterval,
    /// Uniform on the atoms (i + 1/2) / k, i < k.
    UniformGrid { k: usize },
    /// Uniform on the Euclidean unit ball.
    UniformBall { dim: usize },
}

impl BaseDist {
    pub fn dim(&self) -> usize {
        match self {
            BaseDist::UniformInterval | BaseDist::UniformGrid { .. } => 1,
            BaseDist::UniformBall { dim } => *dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BaseDist::UniformGrid { k: 0 } => Err(invalid("k", "grid needs at least one atom")),
            BaseDist::UniformBall { dim: 0 } => Err(invalid("dim", "ball needs dim >= 1")),
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FeaturePoint {
        match self {
            BaseDist::UniformInterval => FeaturePoint::scalar(rng.random::<f64>()),
            BaseDist::UniformGrid { k } => {
                let i = rng.random_range(0..*k);
                FeaturePoint::scalar((i as f64 + 0.5) / *k as f64)
            }
            BaseDist::UniformBall { dim } => {
                let g: Vec<f64> = (0..*dim).map(|_| rng.sample(StandardNormal)).collect();
                let n = norm2(&g);
                let r = rng.random::<f64>().powf(1.0 / *dim as f64);
                let x = g.iter().map(|v| v * r / n).collect();
                FeaturePoint::new(x).expect("finite ball sample")
            }
        }
    }

    /// The coordinate on which piecewise weights act: the first coordinate
    /// on [0, 1], or the radius on the ball.
    pub fn piece_coordinate(&self, x: &FeaturePoint) -> f64 {
        match self {
            BaseDist::UniformBall { .. } => norm2(x.coords()),
            _ => x.coords()[0],
        }
    }

    /// Base measure of the piece `[a, b)` of the piece coordinate.
    pub fn piece_mass(&self, a: f64, b: f64) -> f64 {
        match self {
            BaseDist::UniformInterval => b - a,
            BaseDist::UniformGrid { k } => {
                let kf = *k as f64;
                (0..*k)
                    .filter(|&i| {
                        let x = (i as f64 + 0.5) / kf;
                        x >= a && (x < b || (b >= 1.0 && x <= b))
                    })
                    .count() as f64
                    / kf
            }
            BaseDist::UniformBall { dim } => {
                let d = *dim as i32;
                b.powi(d) - a.powi(d)
            }
        }
    }

    /// Atoms and their masses, for bases with finite support.
    pub fn atoms(&self) -> Option<Vec<(FeaturePoint, f64)>> {
        match self {
            BaseDist::UniformGrid { k } => Some(
                (0..*k)
                    .map(|i| (FeaturePoint::scalar((i as f64 + 0.5) / *k as f64), 1.0 / *k as f64))
                    .collect(),
            ),
            _ => None,
        }
    }
}

/// Piecewise-constant reweighting of a base distribution.
///
/// Pieces are `[breakpoints[i], breakpoints[i + 1])` of the base's piece
/// coordinate and carry unnormalized weight `weights[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SmoothTargetSpec", into = "SmoothTargetSpec")]
pub struct SmoothTarget {
    base: BaseDist,
    breakpoints: Vec<f64>,
    weights: Vec<f64>,
    sigma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmoothTargetSpec {
    pub base: BaseDist,
    #[serde(default)]
    pub breakpoints: Option<Vec<f64>>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    pub sigma: f64,
}

impl TryFrom<SmoothTargetSpec> for SmoothTarget {
    type Error = Error;

    fn try_from(s: SmoothTargetSpec) -> Result<Self> {
        let breakpoints = s.breakpoints.unwrap_or_else(|| vec![0.0, 1.0]);
        let weights = s.weights.unwrap_or_else(|| vec![1.0]);
        SmoothTarget::new(s.base, breakpoints, weights, s.sigma)
    }
}

impl From<SmoothTarget> for SmoothTargetSpec {
    fn from(t: SmoothTarget) -> Self {
        SmoothTargetSpec {
            base: t.base,
            breakpoints: Some(t.breakpoints),
            weights: Some(t.weights),
            sigma: t.sigma,
        }
    }
}

impl SmoothTarget {
    pub fn new(base: BaseDist, breakpoints: Vec<f64>, weights: Vec<f64>, sigma: f64) -> Result<Self> {
        base.validate()?;
        if !(sigma > 0.0 && sigma <= 1.0) {
            return Err(invalid("sigma", "must lie in (0, 1]"));
        }
        if weights.is_empty() || breakpoints.len() != weights.len() + 1 {
            return Err(invalid("breakpoints", "need one more breakpoint than weights"));
        }
        if breakpoints[0] != 0.0 || *breakpoints.last().unwrap() != 1.0 {
            return Err(invalid("breakpoints", "must start at 0 and end at 1"));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(invalid("breakpoints", "must be strictly increasing"));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(invalid("weights", "must be finite and nonnegative"));
        }
        let t = Self {
            base,
            breakpoints,
            weights,
            sigma,
        };
        let total = t.normalizer();
        if !(total > 0.0) {
            return Err(invalid("weights", "carry no base mass"));
        }
        let ratio = density_ratio_bound(&t);
        if ratio > 1.0 / sigma + 1e-12 {
            return Err(invalid(
                "sigma",
                format!("density ratio {ratio} exceeds 1/sigma = {}", 1.0 / sigma),
            ));
        }
        Ok(t)
    }

    /// The base distribution itself.
    pub fn uniform(base: BaseDist) -> Result<Self> {
        Self::new(base, vec![0.0, 1.0], vec![1.0], 1.0)
    }

    pub fn base(&self) -> &BaseDist {
        &self.base
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn normalizer(&self) -> f64 {
        self.pieces().map(|(w, mass)| w * mass).sum()
    }

    fn pieces(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.weights
            .iter()
            .zip(self.breakpoints.windows(2))
            .map(|(w, ab)| (*w, self.base.piece_mass(ab[0], ab[1])))
    }

    fn piece_of(&self, x: &FeaturePoint) -> usize {
        let c = self.base.piece_coordinate(x);
        let k = self.weights.len();
        self.breakpoints[1..k].iter().take_while(|b| c >= **b).count()
    }

    /// Density of the target relative to the base at `x`.
    pub fn density_ratio(&self, x: &FeaturePoint) -> f64 {
        self.weights[self.piece_of(x)] / self.normalizer()
    }

    /// Base and target mass of each piece.
    pub fn piece_masses(&self) -> Vec<(f64, f64)> {
        let z = self.normalizer();
        self.pieces().map(|(w, mass)| (mass, w * mass / z)).collect()
    }

    /// Piece index of a point.
    pub fn piece_index(&self, x: &FeaturePoint) -> usize {
        self.piece_of(x)
    }

    /// A feature draw by rejection from the base.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FeaturePoint {
        let wmax = self.weights.iter().cloned().fold(0.0, f64::max);
        loop {
            let x = self.base.sample(rng);
            let w = self.weights[self.piece_of(&x)];
            if w >= wmax || rng.random::<f64>() * wmax < w {
                return x;
            }
        }
    }
}

/// Exact supremum of the target density relative to the base.
pub fn density_ratio_bound(target: &SmoothTarget) -> f64 {
    let z = target.normalizer();
    target
        .pieces()
        .filter(|(_, mass)| *mass > 0.0)
        .map(|(w, _)| w / z)
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelModel {
    /// Labels from a fixed predictor, flipped with probability `flip_rate`.
    Realizable {
        target: Predictor,
        #[serde(default)]
        flip_rate: f64,
    },
    /// `y = clamp(w.x + N(0, noise_sd^2), -1, 1)`.
    AgnosticLinear { weights: Vec<f64>, noise_sd: f64 },
}

impl LabelModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            LabelModel::Realizable { flip_rate, .. } => {
                if !(0.0..0.5).contains(flip_rate) {
                    return Err(invalid("flip_rate", "must lie in [0, 0.5)"));
                }
            }
            LabelModel::AgnosticLinear { weights, noise_sd } => {
                if !(*noise_sd >= 0.0 && noise_sd.is_finite()) {
                    return Err(invalid("noise_sd", "must be finite and nonnegative"));
                }
                if weights.iter().any(|w| !w.is_finite()) {
                    return Err(invalid("weights", "must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn task(&self) -> Task {
        match self {
            LabelModel::Realizable { target, .. } if target.class.output_range == OutputRange::Binary => {
                Task::Classification
            }
            _ => Task::Regression,
        }
    }

    pub fn label<R: Rng + ?Sized>(&self, x: &FeaturePoint, rng: &mut R) -> Result<f64> {
        match self {
            LabelModel::Realizable { target, flip_rate } => {
                let y = target.eval(x)?;
                let flip = *flip_rate > 0.0 && rng.random::<f64>() < *flip_rate;
                Ok(match (flip, target.class.output_range) {
                    (false, _) => y,
                    (true, OutputRange::Binary) => 1.0 - y,
                    (true, OutputRange::SignedUnit) => -y,
                })
            }
            LabelModel::AgnosticLinear { weights, noise_sd } => {
                if weights.len() != x.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: weights.len(),
                        found: x.dim(),
                    });
                }
                let e: f64 = rng.sample(StandardNormal);
                Ok((dot(weights, x.coords()) + noise_sd * e).clamp(-1.0, 1.0))
            }
        }
    }

    /// Class whose members are scored against these labels.
    pub fn compatible_with(&self, class: &FunctionClassDesc) -> bool {
        match self.task() {
            Task::Classification => class.is_binary(),
            Task::Regression => !class.is_binary(),
        }
    }
}

pub fn draw_public<R: Rng + ?Sized>(base: &BaseDist, m: usize, rng: &mut R) -> Result<PublicSample> {
    base.validate()?;
    if m == 0 {
        return Err(Error::EmptyPublicSample);
    }
    PublicSample::new((0..m).map(|_| base.sample(rng)).collect())
}

pub fn draw_private<R: Rng + ?Sized>(
    target: &SmoothTarget,
    labels: &LabelModel,
    n: usize,
    rng: &mut R,
) -> Result<LabeledDataset> {
    labels.validate()?;
    if n == 0 {
        return Err(invalid("n", "need at least one private example"));
    }
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let x = target.sample(rng);
        let y = labels.label(&x, rng)?;
        points.push((x, y));
    }
    LabeledDataset::new(points, labels.task())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn two_piece() -> SmoothTarget {
        SmoothTarget::new(BaseDist::UniformInterval, vec![0.0, 0.5, 1.0], vec![2.0, 1.0], 0.5).unwrap()
    }

    #[test]
    fn public_draws() {
        let mut rng = seed::stream(4);
        let p = draw_public(&BaseDist::UniformInterval, 100_000, &mut rng).unwrap();
        let mean = p.points().iter().map(|x| x.coords()[0]).sum::<f64>() / 1e5;
        assert!((0.497..=0.503).contains(&mean));

        let g = draw_public(&BaseDist::UniformGrid { k: 4 }, 100_000, &mut rng).unwrap();
        for i in 0..4 {
            let atom = (i as f64 + 0.5) / 4.0;
            let f = g.points().iter().filter(|x| x.coords()[0] == atom).count() as f64 / 1e5;
            assert!((f - 0.25).abs() < 0.01);
        }
        let a = draw_public(&BaseDist::UniformBall { dim: 3 }, 5, &mut seed::stream(8)).unwrap();
        let b = draw_public(&BaseDist::UniformBall { dim: 3 }, 5, &mut seed::stream(8)).unwrap();
        assert_eq!(a, b);
        assert!(a.points().iter().all(|x| norm2(x.coords()) <= 1.0));
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(density_ratio_bound(&SmoothTarget::uniform(BaseDist::UniformInterval).unwrap()), 1.0);
        assert!((density_ratio_bound(&two_piece()) - 4.0 / 3.0).abs() < 1e-15);
        let three =
            SmoothTarget::new(BaseDist::UniformInterval, vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0], vec![3.0, 1.0, 1.0], 0.5)
                .unwrap();
        assert!((density_ratio_bound(&three) - 1.8).abs() < 1e-12);
        let too_rough = SmoothTarget::new(BaseDist::UniformInterval, vec![0.0, 0.1, 1.0], vec![9.0, 1.0], 0.5);
        assert!(too_rough.is_err());
    }

    #[test]
    fn rejection_sampler_masses() {
        let t = two_piece();
        let labels = LabelModel::Realizable {
            target: Predictor::threshold(0.5),
            flip_rate: 0.0,
        };
        let d = draw_private(&t, &labels, 100_000, &mut seed::stream(6)).unwrap();
        let low = d.iter().filter(|(x, _)| x.coords()[0] < 0.5).count() as f64 / 1e5;
        let se = (2.0f64 / 9.0 / 1e5).sqrt();
        assert!((low - 2.0 / 3.0).abs() < 0.01);
        assert!((low - 2.0 / 3.0).abs() < 3.0 * se);
        assert!(d.iter().all(|(x, y)| *y == f64::from(u8::from(x.coords()[0] >= 0.5))));
    }

    #[test]
    fn ball_shells() {
        let base = BaseDist::UniformBall { dim: 2 };
        let t = SmoothTarget::new(base.clone(), vec![0.0, 0.5, 1.0], vec![1.0, 2.0], 0.5).unwrap();
        // Shell masses 1/4 and 3/4; normalizer 1/4 + 3/2.
        assert!((density_ratio_bound(&t) - 2.0 / 1.75).abs() < 1e-12);
        let mut rng = seed::stream(12);
        let n = 50_000;
        let inner = (0..n).filter(|_| norm2(t.sample(&mut rng).coords()) < 0.5).count() as f64 / n as f64;
        let expect = 0.25 / 1.75;
        assert!((inner - expect).abs() < 4.0 * (expect * (1.0 - expect) / n as f64).sqrt());
    }

    #[test]
    fn uniform_accepts_everything() {
        let t = SmoothTarget::uniform(BaseDist::UniformInterval).unwrap();
        // With a single piece, each sample consumes exactly one base draw.
        let mut a = seed::stream(3);
        let mut b = seed::stream(3);
        for _ in 0..100 {
            assert_eq!(t.sample(&mut a), BaseDist::UniformInterval.sample(&mut b));
        }
    }

    #[test]
    fn grid_masses() {
        let g = BaseDist::UniformGrid { k: 4 };
        assert_eq!(g.piece_mass(0.0, 0.5), 0.5);
        assert_eq!(g.piece_mass(0.5, 1.0), 0.5);
        let t = SmoothTarget::new(g, vec![0.0, 0.3, 1.0], vec![1.0, 1.0], 1.0).unwrap();
        let masses = t.piece_masses();
        assert_eq!(masses[0].0, 0.25);
    }

    #[test]
    fn serde_roundtrip() {
        let t = two_piece();
        let s = serde_json::to_string(&t).unwrap();
        let back: SmoothTarget = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        let bad = r#"{"base":{"kind":"uniform_interval"},"breakpoints":[0,0.1,1],"weights":[9,1],"sigma":0.5}"#;
        assert!(serde_json::from_str::<SmoothTarget>(bad).is_err());
        let lm: LabelModel = serde_json::from_str(
            r#"{"kind":"realizable","target":{"class":{"kind":"threshold1d"},"params":[0.5]}}"#,
        )
        .unwrap();
        assert_eq!(lm.task(), Task::Classification);
    }
}
