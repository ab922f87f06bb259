use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mining::miner::{Triplet, TripletSource};

/// Consecutive rejections tolerated from one source before the stream fails.
pub const MAX_CONSECUTIVE_REJECTIONS: usize = 1000;

/// Unbounded, seeded mixture of triplet sources. Each draw picks a source by
/// weight, then asks it for triplets until one is accepted.
pub struct TripletStream {
    sources: Vec<Box<dyn TripletSource + Send>>,
    choice: WeightedIndex<f64>,
    rng: ChaCha8Rng,
    failed: bool,
}

impl TripletStream {
    pub fn new(sources: Vec<(Box<dyn TripletSource + Send>, f64)>, seed: u64) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::config("triplet stream needs at least one source"));
        }
        if let Some((s, w)) = sources.iter().find(|(_, w)| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::config(format!(
                "source `{}` has invalid weight {w}",
                s.name()
            )));
        }
        let weights: Vec<f64> = sources.iter().map(|(_, w)| *w).collect();
        let choice = WeightedIndex::new(&weights)
            .map_err(|_| Error::config("triplet source weights are all zero"))?;
        Ok(TripletStream {
            sources: sources.into_iter().map(|(s, _)| s).collect(),
            choice,
            rng: ChaCha8Rng::seed_from_u64(seed),
            failed: false,
        })
    }

    /// Draws one triplet, reporting which source produced it.
    pub fn draw(&mut self) -> Result<(usize, Triplet)> {
        let idx = self.choice.sample(&mut self.rng);
        let source = &mut self.sources[idx];
        for _ in 0..=MAX_CONSECUTIVE_REJECTIONS {
            if let Some(t) = source.try_draw() {
                return Ok((idx, t));
            }
        }
        Err(Error::Stream {
            source_name: source.name().to_string(),
            attempts: MAX_CONSECUTIVE_REJECTIONS + 1,
        })
    }
}

impl Iterator for TripletStream {
    type Item = Result<Triplet>;

    /// Yields the error once, then ends.
    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.draw() {
            Ok((_, t)) => Some(Ok(t)),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}
