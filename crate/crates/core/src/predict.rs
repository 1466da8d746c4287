//! Local-linear-trend Kalman filter over the worst-laxity series, n-step
//! forecasts and forecast error bookkeeping.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Time};

/// Forecast horizons tracked by every run, in ticks.
pub const HORIZONS: [usize; 3] = [1, 3, 5];

/// Noise parameters of the filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorParams {
    /// Process noise scale (`Q = q·I`).
    #[serde(default = "default_q")]
    pub q: f64,
    /// Measurement noise variance.
    #[serde(default = "default_r")]
    pub r: f64,
}

fn default_q() -> f64 {
    1e-4
}
fn default_r() -> f64 {
    1e-2
}

impl Default for PredictorParams {
    fn default() -> Self {
        PredictorParams { q: default_q(), r: default_r() }
    }
}

impl PredictorParams {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.q > 0.0 && self.q.is_finite()) {
            out.push(format!("q must be positive, got {}", self.q));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            out.push(format!("r must be positive, got {}", self.r));
        }
        out
    }
}

/// Filter state: `[level, trend]` with its covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictorState {
    pub level: f64,
    /// Change of level per tick.
    pub trend: f64,
    pub p: [[f64; 2]; 2],
    pub params: PredictorParams,
    pub observations: u64,
    last: f64,
}

/// Initial trend variance before the second observation fixes the trend.
const INITIAL_TREND_VARIANCE: f64 = 1.0;

impl PredictorState {
    pub fn new(params: PredictorParams) -> Self {
        PredictorState {
            level: 0.0,
            trend: 0.0,
            p: [[0.0; 2]; 2],
            params,
            observations: 0,
            last: 0.0,
        }
    }

    /// One predict/update cycle. A non-finite observation is rejected and
    /// leaves the state untouched.
    pub fn kalman_step(&self, observation: f64) -> Result<PredictorState, Error> {
        if !observation.is_finite() {
            return Err(Error::NonFiniteObservation);
        }
        let r = self.params.r;
        let q = self.params.q;
        let mut next = *self;
        next.observations += 1;
        next.last = observation;
        match self.observations {
            0 => {
                next.level = observation;
                next.trend = 0.0;
                next.p = [[r, 0.0], [0.0, INITIAL_TREND_VARIANCE]];
            }
            1 => {
                next.level = observation;
                next.trend = observation - self.last;
                next.p = [[r, r], [r, 2.0 * r]];
            }
            _ => {
                let [[p00, p01], [p10, p11]] = self.p;
                // Predict with F = [[1, 1], [0, 1]].
                let level = self.level + self.trend;
                let trend = self.trend;
                let a00 = p00 + p01 + p10 + p11 + q;
                let a01 = p01 + p11;
                let a10 = p10 + p11;
                let a11 = p11 + q;
                // Update with H = [1, 0].
                let s = a00 + r;
                let k0 = a00 / s;
                let k1 = a10 / s;
                let innovation = observation - level;
                next.level = level + k0 * innovation;
                next.trend = trend + k1 * innovation;
                let n00 = a00 - k0 * a00;
                let n01 = a01 - k0 * a01;
                let n10 = a10 - k1 * a00;
                let n11 = a11 - k1 * a01;
                let off = 0.5 * (n01 + n10);
                next.p = [[n00, off], [off, n11]];
            }
        }
        Ok(next)
    }

    /// `level + n·trend`.
    pub fn forecast(&self, n: usize) -> Result<Forecast, Error> {
        if self.observations == 0 {
            return Err(Error::NoObservations);
        }
        let raw = self.level + n as f64 * self.trend;
        Ok(Forecast { raw, clamped: raw.clamp(-1.0, 1.0) })
    }
}

/// An n-step forecast; `clamped` is what the fuzzy engine sees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Forecast {
    pub raw: f64,
    pub clamped: f64,
}

/// One forecast matched against the later observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    /// Time the forecast was issued.
    pub tick: Time,
    /// Time of the observation it was matched with.
    pub target: Time,
    pub horizon: usize,
    pub predicted: f64,
    pub raw: f64,
    pub observed: f64,
    pub squared_error: f64,
}

/// Running sums of squared errors per horizon.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorStats {
    pub sum_squared: f64,
    pub count: u64,
}

impl ErrorStats {
    pub fn add(&mut self, squared_error: f64) {
        self.sum_squared += squared_error;
        self.count += 1;
    }

    pub fn merge(&mut self, other: &ErrorStats) {
        self.sum_squared += other.sum_squared;
        self.count += other.count;
    }

    pub fn summary(&self) -> Option<ErrorSummary> {
        if self.count == 0 {
            return None;
        }
        let mse = self.sum_squared / self.count as f64;
        Some(ErrorSummary { mse, rmse: libm::sqrt(mse), count: self.count })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub mse: f64,
    pub rmse: f64,
    pub count: u64,
}

/// RMSE over the records of one horizon; `None` when there are none.
pub fn rmse(records: &[ForecastRecord], horizon: usize) -> Option<ErrorSummary> {
    let mut stats = ErrorStats::default();
    for r in records.iter().filter(|r| r.horizon == horizon) {
        stats.add(r.squared_error);
    }
    stats.summary()
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    tick: Time,
    due: u64,
    horizon: usize,
    forecast: Forecast,
}

/// Feeds a uniformly sampled series to the filter, issues forecasts for
/// every horizon in [`HORIZONS`] and matches them with the observation
/// `n` samples later.
#[derive(Debug, Clone)]
pub struct ForecastTracker {
    state: PredictorState,
    samples: u64,
    pending: VecDeque<Pending>,
    pub stats: [ErrorStats; HORIZONS.len()],
    /// Matched records, when `keep_records` is set.
    pub records: Vec<ForecastRecord>,
    keep_records: bool,
}

impl ForecastTracker {
    pub fn new(params: PredictorParams, keep_records: bool) -> Self {
        ForecastTracker {
            state: PredictorState::new(params),
            samples: 0,
            pending: VecDeque::new(),
            stats: [ErrorStats::default(); HORIZONS.len()],
            records: Vec::new(),
            keep_records,
        }
    }

    pub fn state(&self) -> &PredictorState {
        &self.state
    }

    /// Add the observation taken at `tick`. Non-finite values are rejected.
    pub fn observe(&mut self, tick: Time, observation: f64) -> Result<(), Error> {
        let next = self.state.kalman_step(observation)?;
        let index = self.samples;
        while let Some(p) = self.pending.front() {
            if p.due > index {
                break;
            }
            let p = self.pending.pop_front().unwrap_or_else(|| unreachable!());
            if p.due == index {
                let err = p.forecast.clamped - observation;
                let sq = err * err;
                let slot = HORIZONS.iter().position(|h| *h == p.horizon).unwrap_or(0);
                self.stats[slot].add(sq);
                if self.keep_records {
                    self.records.push(ForecastRecord {
                        tick: p.tick,
                        target: tick,
                        horizon: p.horizon,
                        predicted: p.forecast.clamped,
                        raw: p.forecast.raw,
                        observed: observation,
                        squared_error: sq,
                    });
                }
            }
        }
        self.state = next;
        self.samples += 1;
        for &h in &HORIZONS {
            let forecast = self.state.forecast(h)?;
            let due = index + h as u64;
            let pos = self.pending.partition_point(|p| p.due <= due);
            self.pending.insert(pos, Pending { tick, due, horizon: h, forecast });
        }
        Ok(())
    }

    pub fn forecast(&self, n: usize) -> Result<Forecast, Error> {
        self.state.forecast(n)
    }

    pub fn summary(&self, horizon: usize) -> Option<ErrorSummary> {
        let slot = HORIZONS.iter().position(|h| *h == horizon)?;
        self.stats[slot].summary()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix1x2, Matrix2, Vector2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Textbook filter written directly with matrices.
    struct Oracle {
        x: Vector2<f64>,
        p: Matrix2<f64>,
        q: f64,
        r: f64,
        n: usize,
        prev: f64,
    }

    impl Oracle {
        fn new(q: f64, r: f64) -> Self {
            Oracle { x: Vector2::zeros(), p: Matrix2::zeros(), q, r, n: 0, prev: 0.0 }
        }

        fn step(&mut self, z: f64) {
            match self.n {
                0 => {
                    self.x = Vector2::new(z, 0.0);
                    self.p = Matrix2::new(self.r, 0.0, 0.0, 1.0);
                }
                1 => {
                    self.x = Vector2::new(z, z - self.prev);
                    self.p = Matrix2::new(self.r, self.r, self.r, 2.0 * self.r);
                }
                _ => {
                    let f = Matrix2::new(1.0, 1.0, 0.0, 1.0);
                    let h = Matrix1x2::new(1.0, 0.0);
                    let x = f * self.x;
                    let p = f * self.p * f.transpose() + Matrix2::identity() * self.q;
                    let s = (h * p * h.transpose())[(0, 0)] + self.r;
                    let k = p * h.transpose() / s;
                    self.x = x + k * (z - (h * x)[(0, 0)]);
                    self.p = (Matrix2::identity() - k * h) * p;
                }
            }
            self.prev = z;
            self.n += 1;
        }
    }

    #[test]
    fn first_observation_initializes() {
        let s = PredictorState::new(PredictorParams::default()).kalman_step(0.9).unwrap();
        assert_eq!((s.level, s.trend), (0.9, 0.0));
    }

    #[test]
    fn non_finite_rejected() {
        let s = PredictorState::new(PredictorParams::default()).kalman_step(0.5).unwrap();
        assert_eq!(s.kalman_step(f64::NAN), Err(Error::NonFiniteObservation));
        assert_eq!(s.kalman_step(f64::INFINITY), Err(Error::NonFiniteObservation));
    }

    #[test]
    fn constant_series_converges() {
        let mut s = PredictorState::new(PredictorParams::default());
        for _ in 0..40 {
            s = s.kalman_step(0.37).unwrap();
        }
        assert!((s.level - 0.37).abs() < 1e-6);
        assert!(s.trend.abs() < 1e-6);
        for n in HORIZONS {
            assert!((s.forecast(n).unwrap().clamped - 0.37).abs() < 1e-6);
        }
    }

    #[test]
    fn ramp_trend() {
        let mut s = PredictorState::new(PredictorParams::default());
        let mut o = Oracle::new(1e-4, 1e-2);
        for k in 0..60 {
            let z = 1.0 - 0.02 * k as f64;
            s = s.kalman_step(z).unwrap();
            o.step(z);
        }
        assert!((s.trend + 0.02).abs() < 1e-6);
        assert!((o.x[1] + 0.02).abs() < 1e-6);
    }

    #[test]
    fn forecast_examples() {
        let mut s = PredictorState::new(PredictorParams::default());
        assert_eq!(s.forecast(1), Err(Error::NoObservations));
        s.level = 0.5;
        s.trend = -0.01;
        s.observations = 3;
        assert_eq!(s.forecast(0).unwrap().raw, 0.5);
        assert!((s.forecast(5).unwrap().raw - 0.45).abs() < 1e-12);
        s.trend = 0.0;
        assert_eq!(s.forecast(7).unwrap().raw, 0.5);
        s.trend = -0.5;
        let f = s.forecast(5).unwrap();
        assert_eq!(f.clamped, -1.0);
        assert!((f.raw + 2.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_equivalence_on_random_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let params = PredictorParams { q: 1e-4, r: 1e-2 };
            let mut s = PredictorState::new(params);
            let mut o = Oracle::new(params.q, params.r);
            let len = rng.random_range(2..200);
            for _ in 0..len {
                let z: f64 = rng.random_range(-1.0..1.0);
                s = s.kalman_step(z).unwrap();
                o.step(z);
                worst = worst.max((s.level - o.x[0]).abs()).max((s.trend - o.x[1]).abs());
                for i in 0..2 {
                    for j in 0..2 {
                        worst = worst.max((s.p[i][j] - o.p[(i, j)]).abs());
                    }
                }
            }
        }
        assert!(worst < 1e-9, "max deviation {worst}");
    }

    #[test]
    fn rmse_examples() {
        let rec = |h, e: f64| ForecastRecord {
            tick: 0,
            target: 0,
            horizon: h,
            predicted: e,
            raw: e,
            observed: 0.0,
            squared_error: e * e,
        };
        assert_eq!(rmse(&[rec(1, 0.0), rec(1, 0.0)], 1).unwrap().rmse, 0.0);
        let r = rmse(&[rec(3, 0.1), rec(3, 0.1), rec(3, 0.1)], 3).unwrap();
        assert!((r.rmse - 0.1).abs() < 1e-12);
        assert!((r.mse - 0.01).abs() < 1e-12);
        assert!(rmse(&[rec(1, 0.1)], 5).is_none());
    }

    #[test]
    fn tracker_matches_after_n_samples() {
        let mut t = ForecastTracker::new(PredictorParams::default(), true);
        for k in 0..10u64 {
            t.observe(k * 10, 0.5).unwrap();
        }
        // Forecasts issued at samples 0..=8 (h=1), 0..=6 (h=3), 0..=4 (h=5).
        assert_eq!(t.summary(1).unwrap().count, 9);
        assert_eq!(t.summary(3).unwrap().count, 7);
        assert_eq!(t.summary(5).unwrap().count, 5);
        assert!(t.summary(1).unwrap().rmse < 1e-12);
        let r = t.records.iter().find(|r| r.horizon == 3).unwrap();
        assert_eq!((r.tick, r.target), (0, 30));
        let pooled = rmse(&t.records, 3).unwrap();
        assert!((pooled.rmse - t.summary(3).unwrap().rmse).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn covariance_stays_symmetric_psd(series in prop::collection::vec(-1.0f64..1.0, 1..150)) {
            let mut s = PredictorState::new(PredictorParams::default());
            for z in series {
                s = s.kalman_step(z).unwrap();
                let p = s.p;
                prop_assert!((p[0][1] - p[1][0]).abs() < 1e-9);
                prop_assert!(p[0][0] >= -1e-9 && p[1][1] >= -1e-9);
                prop_assert!(p[0][0] * p[1][1] - p[0][1] * p[1][0] >= -1e-9);
            }
        }
    }
}
