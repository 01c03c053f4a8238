use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::TransitionSample;

/// Fixed-capacity FIFO replay storage.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    data: Vec<TransitionSample>,
    next: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            data: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
            inserted: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, sample: TransitionSample) {
        if self.data.len() < self.capacity {
            self.data.push(sample);
        } else {
            self.data[self.next] = sample;
        }
        self.next = (self.next + 1) % self.capacity;
        self.inserted += 1;
    }

    pub fn extend<I: IntoIterator<Item = TransitionSample>>(&mut self, samples: I) {
        for s in samples {
            self.push(s);
        }
    }

    /// Stored samples, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &TransitionSample> {
        let split = if self.data.len() < self.capacity { 0 } else { self.next };
        self.data[split..].iter().chain(self.data[..split].iter())
    }

    /// Uniform draws with replacement.
    pub fn sample(&self, batch: usize, rng: &mut dyn RngCore) -> Result<Vec<&TransitionSample>> {
        if self.data.is_empty() {
            return Err(Error::Empty("replay buffer"));
        }
        Ok((0..batch).map(|_| &self.data[rng.random_range(0..self.data.len())]).collect())
    }
}
