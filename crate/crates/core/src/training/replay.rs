//! Replay tuples and the ring replay buffer the learner samples from.

use nalgebra::{DVector, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{GeneralizedTime, Mode, RelativeState, WalkerInput, WalkerState, NUM_MODES};
use crate::training::TrainError;

/// One training sample: the policy inputs, the solver's local value model
/// and multipliers at the sampled state, and the mode data used by guided
/// losses plus the MPC action used by the behavioral-cloning baseline.
#[derive(Clone, Debug)]
pub struct ReplayTuple {
    pub gt: GeneralizedTime,
    pub xr: RelativeState,
    pub x_abs: WalkerState,
    pub t_abs: f64,
    pub dvdx: Vector6<f64>,
    pub dvdt: f64,
    pub nu: DVector<f64>,
    pub mode: Mode,
    pub mode_probs: [f64; NUM_MODES],
    pub u_mpc: WalkerInput,
}

/// Fixed-capacity ring buffer with uniform with-replacement sampling.
#[derive(Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<ReplayTuple>,
    next: usize,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, seed: u64) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        Self {
            capacity,
            storage: Vec::with_capacity(capacity.min(1 << 20)),
            next: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends a tuple, evicting the oldest once the buffer is full.
    pub fn push(&mut self, tuple: ReplayTuple) {
        if self.storage.len() < self.capacity {
            self.storage.push(tuple);
        } else {
            self.storage[self.next] = tuple;
            self.next = (self.next + 1) % self.capacity;
        }
    }

    pub fn push_all<I: IntoIterator<Item = ReplayTuple>>(&mut self, tuples: I) {
        for t in tuples {
            self.push(t);
        }
    }

    /// Draws `count` tuples uniformly with replacement.
    pub fn sample(&mut self, count: usize) -> Result<Vec<ReplayTuple>, TrainError> {
        if self.storage.is_empty() {
            return Err(TrainError::EmptyBuffer);
        }
        Ok((0..count)
            .map(|_| self.storage[self.rng.random_range(0..self.storage.len())].clone())
            .collect())
    }

    /// Iterates the current contents oldest-first.
    pub fn iter_in_order(&self) -> impl Iterator<Item = &ReplayTuple> {
        let split = if self.storage.len() < self.capacity { 0 } else { self.next };
        self.storage[split..].iter().chain(self.storage[..split].iter())
    }
}

#[cfg(test)]
pub(crate) fn dummy_tuple(tag: f64) -> ReplayTuple {
    use nalgebra::Vector2;
    ReplayTuple {
        gt: GeneralizedTime { phases: [0.0; 2], phase_rates: [0.0; 2], bumps: [0.0; 2] },
        xr: RelativeState { values: Vector6::from_element(tag) },
        x_abs: WalkerState::new(Vector2::new(tag, 0.5), Vector2::zeros(), Vector2::zeros())
            .unwrap(),
        t_abs: tag,
        dvdx: Vector6::zeros(),
        dvdt: 0.0,
        nu: DVector::zeros(2),
        mode: Mode::Stance,
        mode_probs: [1.0, 0.0, 0.0],
        u_mpc: WalkerInput::zeros(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_eviction_keeps_newest() {
        let mut buf = ReplayBuffer::new(3, 0);
        for i in 0..4 {
            buf.push(dummy_tuple(i as f64));
        }
        let tags: Vec<f64> = buf.iter_in_order().map(|t| t.t_abs).collect();
        assert_eq!(tags, vec![1.0, 2.0, 3.0]);
        assert_eq!(buf.len(), 3);
    }

    #[test]
    fn insertion_order_preserved_until_eviction() {
        let mut buf = ReplayBuffer::new(5, 0);
        for i in 0..4 {
            buf.push(dummy_tuple(i as f64));
        }
        let tags: Vec<f64> = buf.iter_in_order().map(|t| t.t_abs).collect();
        assert_eq!(tags, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn sampling_with_replacement() {
        let mut buf = ReplayBuffer::new(16, 7);
        for i in 0..10 {
            buf.push(dummy_tuple(i as f64));
        }
        let batch = buf.sample(32).unwrap();
        assert_eq!(batch.len(), 32);
        assert!(batch.iter().all(|t| t.t_abs >= 0.0 && t.t_abs < 10.0));
    }

    #[test]
    fn empty_buffer_sampling_fails() {
        let mut buf = ReplayBuffer::new(4, 0);
        assert!(buf.sample(1).is_err());
    }
}
