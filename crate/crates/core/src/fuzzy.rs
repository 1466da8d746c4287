//! Fuzzy risk inference over (laxity acceleration, predicted laxity).
//!
//! Mamdani style: min for rule conjunction, max for aggregation, centroid
//! defuzzification on a 101-point grid.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::Error;

/// Piecewise-linear membership function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", content = "points", rename_all = "lowercase")]
pub enum MembershipFunction {
    Trapezoid([f64; 4]),
    Triangle([f64; 3]),
}

impl MembershipFunction {
    pub fn trapezoid(a: f64, b: f64, c: f64, d: f64) -> Result<Self, Error> {
        let mf = MembershipFunction::Trapezoid([a, b, c, d]);
        mf.check()?;
        Ok(mf)
    }

    pub fn triangle(a: f64, b: f64, c: f64) -> Result<Self, Error> {
        let mf = MembershipFunction::Triangle([a, b, c]);
        mf.check()?;
        Ok(mf)
    }

    fn corners(&self) -> [f64; 4] {
        match *self {
            MembershipFunction::Trapezoid(p) => p,
            MembershipFunction::Triangle([a, b, c]) => [a, b, b, c],
        }
    }

    pub fn check(&self) -> Result<(), Error> {
        let [a, b, c, d] = self.corners();
        if ![a, b, c, d].iter().all(|v| v.is_finite()) {
            return Err(Error::Membership("non-finite breakpoint"));
        }
        if !(a <= b && b <= c && c <= d) {
            return Err(Error::Membership("breakpoints must be nondecreasing"));
        }
        if a == d {
            return Err(Error::Membership("zero-width support"));
        }
        Ok(())
    }

    /// Degree of membership of `x`. Coincident breakpoints act as steps.
    pub fn degree(&self, x: f64) -> f64 {
        let [a, b, c, d] = self.corners();
        if x < a || x > d {
            0.0
        } else if x < b {
            (x - a) / (b - a)
        } else if x <= c {
            1.0
        } else if x < d {
            (d - x) / (d - c)
        } else {
            // x == d with c < d.
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Acceleration {
    Fast,
    Medium,
    Slow,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Prediction {
    Ultra,
    Short,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Risk {
    Low,
    High,
}

impl Acceleration {
    pub const ALL: [Acceleration; 4] =
        [Acceleration::Fast, Acceleration::Medium, Acceleration::Slow, Acceleration::Negative];
}

impl Prediction {
    pub const ALL: [Prediction; 3] = [Prediction::Ultra, Prediction::Short, Prediction::Normal];
}

/// The rule table: consequent for every (acceleration, prediction) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleBase {
    /// Rows follow [`Acceleration::ALL`], columns [`Prediction::ALL`].
    pub table: [[Risk; 3]; 4],
}

impl Default for RuleBase {
    fn default() -> Self {
        use Risk::{High as H, Low as L};
        RuleBase { table: [[H, H, L], [H, L, L], [H, L, L], [H, L, L]] }
    }
}

impl RuleBase {
    pub fn consequent(&self, a: Acceleration, p: Prediction) -> Risk {
        self.table[a as usize][p as usize]
    }
}

fn default_threshold() -> f64 {
    0.5
}

/// Membership sets, rules and decision threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyConfig {
    /// Fast, Medium, Slow, Negative.
    pub acceleration: [MembershipFunction; 4],
    /// Ultra, Short, Normal.
    pub prediction: [MembershipFunction; 3],
    /// Low, High.
    pub output: [MembershipFunction; 2],
    #[serde(default)]
    pub rules: RuleBase,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

impl Default for FuzzyConfig {
    fn default() -> Self {
        use MembershipFunction::{Trapezoid, Triangle};
        FuzzyConfig {
            acceleration: [
                Trapezoid([-1.0, -1.0, -0.6, -0.4]),
                Triangle([-0.7, -0.4, -0.1]),
                Triangle([-0.4, -0.1, 0.2]),
                Trapezoid([-0.1, 0.1, 1.0, 1.0]),
            ],
            prediction: [
                Trapezoid([-1.0, -1.0, 0.0, 0.2]),
                Triangle([0.0, 0.2, 0.4]),
                Trapezoid([0.2, 0.4, 1.0, 1.0]),
            ],
            output: [Trapezoid([0.0, 0.0, 0.4, 0.6]), Trapezoid([0.4, 0.6, 1.0, 1.0])],
            rules: RuleBase::default(),
            threshold: default_threshold(),
        }
    }
}

impl FuzzyConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let families: [(&str, &[MembershipFunction]); 3] =
            [("acceleration", &self.acceleration), ("prediction", &self.prediction), ("output", &self.output)];
        for (name, sets) in families {
            for (i, mf) in sets.iter().enumerate() {
                if let Err(e) = mf.check() {
                    out.push(format!("{name}[{i}]: {e}"));
                }
            }
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            out.push(format!("threshold must lie in (0, 1), got {}", self.threshold));
        }
        out
    }
}

/// Number of grid points used for centroid defuzzification.
pub const CENTROID_POINTS: usize = 101;

/// Everything computed for one input pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub acceleration: f64,
    pub prediction: f64,
    pub acceleration_degrees: [f64; 4],
    pub prediction_degrees: [f64; 3],
    /// Firing strength per rule, same layout as [`RuleBase::table`].
    pub firing: [[f64; 3]; 4],
    /// Aggregated strength per output label (Low, High).
    pub output_strength: [f64; 2],
    pub risk: f64,
}

/// Fuzzify, fire the rules and defuzzify. Inputs are clamped to `[−1, 1]`.
pub fn infer(acceleration: f64, prediction: f64, config: &FuzzyConfig) -> Inference {
    let acceleration = clamp_input(acceleration);
    let prediction = clamp_input(prediction);
    let acceleration_degrees = config.acceleration.map(|mf| mf.degree(acceleration));
    let prediction_degrees = config.prediction.map(|mf| mf.degree(prediction));
    let mut firing = [[0.0; 3]; 4];
    let mut output_strength = [0.0f64; 2];
    for a in Acceleration::ALL {
        for p in Prediction::ALL {
            let s = acceleration_degrees[a as usize].min(prediction_degrees[p as usize]);
            firing[a as usize][p as usize] = s;
            let o = config.rules.consequent(a, p) as usize;
            output_strength[o] = output_strength[o].max(s);
        }
    }
    let risk = centroid(&config.output, &output_strength, CENTROID_POINTS);
    Inference {
        acceleration,
        prediction,
        acceleration_degrees,
        prediction_degrees,
        firing,
        output_strength,
        risk,
    }
}

fn clamp_input(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(-1.0, 1.0)
    }
}

/// Centroid over `[0, 1]` of the clipped and max-aggregated output sets,
/// integrated with the trapezoidal rule on `points` equally spaced
/// samples. Returns 0 when nothing fires.
pub fn centroid(sets: &[MembershipFunction], strengths: &[f64], points: usize) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..points {
        let y = k as f64 / (points - 1) as f64;
        let weight = if k == 0 || k == points - 1 { 0.5 } else { 1.0 };
        let mu = sets
            .iter()
            .zip(strengths)
            .map(|(mf, s)| mf.degree(y).min(*s))
            .fold(0.0, f64::max);
        num += weight * y * mu;
        den += weight * mu;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Trigger iff `risk > threshold`.
pub fn decide(risk: f64, threshold: f64) -> bool {
    risk > threshold
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> FuzzyConfig {
        FuzzyConfig::default()
    }

    #[test]
    fn membership_examples() {
        let fast = MembershipFunction::trapezoid(-1.0, -1.0, -0.6, -0.4).unwrap();
        assert_eq!(fast.degree(-1.0), 1.0);
        assert!((fast.degree(-0.5) - 0.5).abs() < 1e-12);
        let short = MembershipFunction::triangle(0.0, 0.2, 0.4).unwrap();
        assert_eq!(short.degree(0.2), 1.0);
        assert_eq!(short.degree(0.4), 0.0);
        let normal = MembershipFunction::trapezoid(0.2, 0.4, 1.0, 1.0).unwrap();
        assert_eq!(normal.degree(1.0), 1.0);
    }

    #[test]
    fn malformed_rejected() {
        assert!(MembershipFunction::trapezoid(0.0, 0.5, 0.4, 1.0).is_err());
        assert!(MembershipFunction::triangle(0.3, 0.3, 0.3).is_err());
        assert!(MembershipFunction::triangle(f64::NAN, 0.0, 1.0).is_err());
        let mut c = cfg();
        c.threshold = 1.0;
        c.prediction[1] = MembershipFunction::Triangle([0.4, 0.2, 0.0]);
        assert_eq!(c.problems().len(), 2);
        assert!(cfg().problems().is_empty());
    }

    #[test]
    fn corners() {
        let hi = infer(-1.0, -0.5, &cfg());
        assert_eq!(hi.firing[Acceleration::Fast as usize][Prediction::Ultra as usize], 1.0);
        assert!(hi.risk > 0.5);
        let lo = infer(0.5, 0.8, &cfg());
        assert_eq!(lo.firing[Acceleration::Negative as usize][Prediction::Normal as usize], 1.0);
        assert!(lo.risk < 0.5);
        assert!(hi.risk > lo.risk);
    }

    #[test]
    fn rule_table_sweep() {
        use Risk::*;
        let expect = [
            (Acceleration::Fast, [High, High, Low]),
            (Acceleration::Medium, [High, Low, Low]),
            (Acceleration::Slow, [High, Low, Low]),
            (Acceleration::Negative, [High, Low, Low]),
        ];
        // Points where exactly one label of each family has degree 1.
        let acc_at = [-1.0, -0.4, -0.1, 0.5];
        let pred_at = [-0.5, 0.2, 0.8];
        let c = cfg();
        for (a, row) in expect {
            for p in Prediction::ALL {
                assert_eq!(c.rules.consequent(a, p), row[p as usize]);
                let inf = infer(acc_at[a as usize], pred_at[p as usize], &c);
                assert_eq!(inf.firing[a as usize][p as usize], 1.0);
                assert_eq!(decide(inf.risk, c.threshold), row[p as usize] == High, "{a:?}/{p:?}");
            }
        }
    }

    fn dense_centroid(set: MembershipFunction, s: f64) -> f64 {
        let n = 10_000;
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..=n {
            let y = k as f64 / n as f64;
            let mu = set.degree(y).min(s);
            num += y * mu;
            den += mu;
        }
        num / den
    }

    #[test]
    fn centroid_matches_dense_integration() {
        let c = cfg();
        // Each output set alone, clipped at s.
        for s in [0.1, 0.25, 0.5, 0.75, 1.0] {
            for (label, set) in [(0usize, c.output[0]), (1, c.output[1])] {
                let mut strengths = [0.0; 2];
                strengths[label] = s;
                let got = centroid(&c.output, &strengths, CENTROID_POINTS);
                let want = dense_centroid(set, s);
                assert!((got - want).abs() < 1e-3, "label {label} s {s}: {got} vs {want}");
            }
        }
        // Negative/Short and Negative/Normal both fire, both Low.
        let inf = infer(0.5, 0.3, &c);
        let fired: Vec<f64> = inf.firing.iter().flatten().copied().filter(|v| *v > 0.0).collect();
        assert_eq!(fired.len(), 2);
        assert_eq!(inf.output_strength[1], 0.0);
        let want = dense_centroid(c.output[0], inf.output_strength[0]);
        assert!((inf.risk - want).abs() < 1e-3);
    }

    #[test]
    fn decide_boundary() {
        assert!(decide(0.9, 0.5));
        assert!(!decide(0.5, 0.5));
        assert!(!decide(0.1, 0.5));
    }

    #[test]
    fn nothing_fires_gives_zero() {
        assert_eq!(centroid(&cfg().output, &[0.0, 0.0], CENTROID_POINTS), 0.0);
    }

    proptest! {
        #[test]
        fn degrees_and_risk_in_range(a in -2.0f64..2.0, p in -2.0f64..2.0) {
            let c = cfg();
            let inf = infer(a, p, &c);
            for d in inf.acceleration_degrees.iter().chain(&inf.prediction_degrees) {
                prop_assert!((0.0..=1.0).contains(d));
            }
            prop_assert!((0.0..=1.0).contains(&inf.risk));
        }
    }
}
