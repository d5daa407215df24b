//! FIFO experience replay.

use std::collections::VecDeque;

use rand::Rng;

use super::state::Action;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Action,
    pub next_state: Vec<f64>,
    pub reward: f64,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends, evicting the oldest transition when full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// `m` distinct transitions drawn uniformly; `None` when fewer are stored.
    pub fn sample(&self, m: usize, rng: &mut impl Rng) -> Option<Vec<&Transition>> {
        if self.items.len() < m {
            return None;
        }
        Some(
            rand::seq::index::sample(rng, self.items.len(), m)
                .into_iter()
                .map(|i| &self.items[i])
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(r: f64) -> Transition {
        Transition {
            state: vec![r],
            action: Action::Up,
            next_state: vec![r],
            reward: r,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..5 {
            b.push(t(i as f64));
        }
        assert_eq!(b.len(), 3);
        assert_eq!(b.get(0).reward, 2.0);
        assert_eq!(b.get(2).reward, 4.0);
    }

    #[test]
    fn underfull_sample_is_none() {
        let mut b = ReplayBuffer::new(10);
        b.push(t(0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(b.sample(2, &mut rng).is_none());
        b.push(t(1.0));
        let s = b.sample(2, &mut rng).unwrap();
        assert_ne!(s[0].reward, s[1].reward);
    }
}
