//! Seeded, reproducible sampling of states inside a box, rejection-filtered
//! against domain predicates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fields::State;

/// Default half-width of the sampling box in every coordinate.
pub const DEFAULT_HALF_WIDTH: f64 = 2.0;

const MAX_REJECTIONS_PER_SAMPLE: usize = 10_000;

/// Axis-aligned box of coordinates together with a time interval.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub ranges: Vec<(f64, f64)>,
    pub t: (f64, f64),
}

impl Region {
    /// `[-h, h]^dim` at `t = 0`.
    pub fn cube(dim: usize, half_width: f64) -> Self {
        Self {
            ranges: vec![(-half_width, half_width); dim],
            t: (0.0, 0.0),
        }
    }

    pub fn with_range(mut self, i: usize, lo: f64, hi: f64) -> Self {
        self.ranges[i] = (lo, hi);
        self
    }

    pub fn with_time(mut self, lo: f64, hi: f64) -> Self {
        self.t = (lo, hi);
        self
    }

    pub fn dim(&self) -> usize {
        self.ranges.len()
    }
}

#[derive(Debug, Clone)]
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if hi > lo {
            self.rng.random_range(lo..hi)
        } else {
            lo
        }
    }

    pub fn point(&mut self, region: &Region) -> State {
        let coords = region
            .ranges
            .iter()
            .map(|&(lo, hi)| self.uniform(lo, hi))
            .collect::<Vec<_>>();
        let t = self.uniform(region.t.0, region.t.1);
        State::new(coords, t)
    }

    /// `n` states drawn uniformly from `region` and kept when `accept` holds.
    pub fn states(
        &mut self,
        region: &Region,
        n: usize,
        accept: impl Fn(&State) -> bool,
    ) -> Result<Vec<State>> {
        let mut out = Vec::with_capacity(n);
        let mut rejected = 0usize;
        while out.len() < n {
            let s = self.point(region);
            if accept(&s) {
                out.push(s);
            } else {
                rejected += 1;
                if rejected > MAX_REJECTIONS_PER_SAMPLE * n.max(1) {
                    return Err(Error::InvalidConfig(format!(
                        "sampling region {region:?} is almost entirely outside the domain"
                    )));
                }
            }
        }
        Ok(out)
    }
}
