use super::world::Cell;
use alloc::vec::Vec;
use rand::Rng;

/// Fixed-capacity ring buffer of visited states, sampled uniformly.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    states: Vec<Cell>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer capacity must be positive");
        ReplayBuffer { capacity, states: Vec::with_capacity(capacity.min(4096)), next: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn push(&mut self, state: Cell) {
        if self.states.len() < self.capacity {
            self.states.push(state);
        } else {
            self.states[self.next] = state;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn extend(&mut self, states: impl IntoIterator<Item = Cell>) {
        for s in states {
            self.push(s);
        }
    }

    /// `n` draws with replacement; empty when the buffer is empty.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Cell> {
        if self.states.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| self.states[rng.random_range(0..self.states.len())]).collect()
    }

    pub fn contents(&self) -> &[Cell] {
        &self.states
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn ring_overwrites_oldest() {
        let mut b = ReplayBuffer::new(3);
        b.extend([(0, 0), (0, 1), (0, 2), (0, 3)]);
        assert_eq!(b.len(), 3);
        assert_eq!(b.contents(), &[(0, 3), (0, 1), (0, 2)]);
    }

    #[test]
    fn sampling_is_uniform() {
        let mut b = ReplayBuffer::new(5);
        b.extend((0..5).map(|i| (0, i)));
        let mut rng = stream(8, "buffer");
        let n = 100_000;
        let mut counts = [0usize; 5];
        for s in b.sample(n, &mut rng) {
            counts[s.1] += 1;
        }
        let se = libm::sqrt(0.2 * 0.8 / n as f64);
        for c in counts {
            assert!((c as f64 / n as f64 - 0.2).abs() < 3.0 * se, "{counts:?}");
        }
    }
}
