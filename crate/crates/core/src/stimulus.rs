//! Seeded Bernoulli-per-millisecond Poisson stimulus.
//!
//! Every train is drawn from a ChaCha8 stream selected by `(seed, stream)`, so
//! parallel trials get independent, reproducible sequences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CpgError, Result};

/// Sorted spike steps over a fixed number of 1 ms steps.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SpikeTrain {
    spikes: Vec<u32>,
    n_steps: usize,
}

impl SpikeTrain {
    /// Builds a train from arbitrary steps; they are sorted and deduplicated.
    pub fn new(mut spikes: Vec<u32>, n_steps: usize) -> Self {
        spikes.sort_unstable();
        spikes.dedup();
        Self { spikes, n_steps }
    }

    pub fn spikes(&self) -> &[u32] {
        &self.spikes
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn len(&self) -> usize {
        self.spikes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spikes.is_empty()
    }

    /// Spikes falling in `[from, to)`.
    pub fn count_between(&self, from: u32, to: u32) -> usize {
        let lo = self.spikes.partition_point(|&s| s < from);
        let hi = self.spikes.partition_point(|&s| s < to);
        hi - lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSegment {
    pub duration_ms: u32,
    pub rate_hz: f64,
}

/// Piecewise-constant input rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateProfile {
    pub segments: Vec<RateSegment>,
    pub seed: u64,
}

impl RateProfile {
    pub fn new(segments: &[(u32, f64)], seed: u64) -> Self {
        Self {
            segments: segments
                .iter()
                .map(|&(duration_ms, rate_hz)| RateSegment { duration_ms, rate_hz })
                .collect(),
            seed,
        }
    }

    pub fn constant(rate_hz: f64, duration_ms: u32, seed: u64) -> Self {
        Self::new(&[(duration_ms, rate_hz)], seed)
    }

    pub fn total_steps(&self) -> usize {
        self.segments.iter().map(|s| s.duration_ms as usize).sum()
    }

    /// Rate in effect at `step`, or 0 past the end.
    pub fn rate_at(&self, step: usize) -> f64 {
        let mut start = 0usize;
        for s in &self.segments {
            let end = start + s.duration_ms as usize;
            if step < end {
                return s.rate_hz;
            }
            start = end;
        }
        0.0
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.segments {
            if s.duration_ms == 0 {
                return Err(CpgError::InvalidParameter("segment duration must be > 0".into()));
            }
            if !(s.rate_hz >= 0.0) {
                return Err(CpgError::InvalidParameter(format!("negative rate {}", s.rate_hz)));
            }
            probability(s.rate_hz)?;
        }
        Ok(())
    }
}

fn probability(rate_hz: f64) -> Result<f64> {
    if !(rate_hz >= 0.0) {
        return Err(CpgError::InvalidParameter(format!("negative rate {rate_hz}")));
    }
    let p = rate_hz / 1000.0;
    if p > 1.0 {
        return Err(CpgError::RateTooHigh(rate_hz));
    }
    Ok(p)
}

/// RNG for one `(seed, stream)` pair.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw(rng: &mut ChaCha8Rng, p: f64, offset: usize, n_steps: usize, out: &mut Vec<u32>) {
    for t in 0..n_steps {
        // Both ends are exact: no draw can make p=0 fire or p=1 stay silent.
        if rng.gen_bool(p) {
            out.push((offset + t) as u32);
        }
    }
}

/// Independent Bernoulli draw per 1 ms step with `p = rate / 1000`.
pub fn poisson_train(rate_hz: f64, n_steps: usize, seed: u64) -> Result<SpikeTrain> {
    poisson_train_stream(rate_hz, n_steps, seed, 0)
}

pub fn poisson_train_stream(rate_hz: f64, n_steps: usize, seed: u64, stream: u64) -> Result<SpikeTrain> {
    let p = probability(rate_hz)?;
    let mut rng = stream_rng(seed, stream);
    let mut spikes = Vec::new();
    draw(&mut rng, p, 0, n_steps, &mut spikes);
    Ok(SpikeTrain { spikes, n_steps })
}

/// Concatenated per-segment trains sharing one continuous RNG stream.
pub fn profile_train(profile: &RateProfile) -> Result<SpikeTrain> {
    profile_train_stream(profile, 0)
}

pub fn profile_train_stream(profile: &RateProfile, stream: u64) -> Result<SpikeTrain> {
    profile.validate()?;
    let mut rng = stream_rng(profile.seed, stream);
    let mut spikes = Vec::new();
    let mut offset = 0usize;
    for seg in &profile.segments {
        let p = probability(seg.rate_hz)?;
        draw(&mut rng, p, offset, seg.duration_ms as usize, &mut spikes);
        offset += seg.duration_ms as usize;
    }
    Ok(SpikeTrain { spikes, n_steps: offset })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_is_silent() {
        assert!(poisson_train(0.0, 10_000, 3).unwrap().is_empty());
    }

    #[test]
    fn saturated_rate_fires_every_step() {
        let t = poisson_train(1000.0, 500, 3).unwrap();
        assert_eq!(t.len(), 500);
        assert_eq!(t.spikes()[499], 499);
    }

    #[test]
    fn rate_above_one_per_step_is_rejected() {
        assert_eq!(poisson_train(1000.5, 10, 1).unwrap_err(), CpgError::RateTooHigh(1000.5));
        assert!(poisson_train(-1.0, 10, 1).is_err());
    }

    #[test]
    fn forty_hz_count_within_three_sigma() {
        // n p = 4000, sigma = sqrt(n p (1 - p)) = sqrt(3840) ~ 61.97
        let n = 100_000;
        let sigma = (n as f64 * 0.04 * 0.96).sqrt();
        for seed in [1u64, 2, 3, 42] {
            let c = poisson_train(40.0, n, seed).unwrap().len() as f64;
            assert!((c - 4000.0).abs() <= 3.0 * sigma, "seed {seed}: {c}");
        }
    }

    #[test]
    fn single_segment_matches_poisson_train() {
        let a = profile_train(&RateProfile::constant(25.0, 3000, 9)).unwrap();
        let b = poisson_train(25.0, 3000, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn profile_segments_have_their_rates() {
        let p = RateProfile::new(&[(20_000, 20.0), (20_000, 30.0), (20_000, 45.0)], 5);
        let t = profile_train(&p).unwrap();
        assert_eq!(t.n_steps(), 60_000);
        let c: Vec<usize> = (0..3).map(|k| t.count_between(k * 20_000, (k + 1) * 20_000)).collect();
        for (c, rate) in c.iter().zip([20.0, 30.0, 45.0]) {
            let n = 20_000.0;
            let p: f64 = rate / 1000.0;
            let sigma = (n * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - n * p).abs() <= 3.0 * sigma, "{c} at {rate}");
        }
        assert_eq!(p.rate_at(0), 20.0);
        assert_eq!(p.rate_at(20_000), 30.0);
        assert_eq!(p.rate_at(59_999), 45.0);
        assert_eq!(p.rate_at(60_000), 0.0);
    }

    #[test]
    fn streams_are_independent_and_reproducible() {
        let a = poisson_train_stream(40.0, 5000, 7, 0).unwrap();
        let b = poisson_train_stream(40.0, 5000, 7, 1).unwrap();
        assert_ne!(a, b);
        assert_eq!(b, poisson_train_stream(40.0, 5000, 7, 1).unwrap());
    }

    #[test]
    fn zero_duration_segment_rejected() {
        assert!(profile_train(&RateProfile::new(&[(0, 5.0)], 1)).is_err());
    }
}
