use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// One joint step: all agents' observations, actions, rewards and costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub x: Vec<f64>,
    pub a: Vec<f64>,
    pub r: Vec<f64>,
    pub r_c: Vec<f64>,
    pub x_next: Vec<f64>,
    /// True terminal. Time-limit ends keep `false` so targets bootstrap.
    pub done: bool,
}

/// Column-stacked transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Array2<f64>,
    pub a: Array2<f64>,
    pub r: Array2<f64>,
    pub r_c: Array2<f64>,
    pub x_next: Array2<f64>,
    /// 1.0 for terminal rows.
    pub done: Array1<f64>,
}

impl Batch {
    pub fn from_transitions(items: &[&Transition]) -> Self {
        let n = items.len();
        let rows = |f: &dyn Fn(&Transition) -> &Vec<f64>| {
            let w = items.first().map_or(0, |t| f(t).len());
            let mut m = Array2::zeros((n, w));
            for (k, t) in items.iter().enumerate() {
                m.row_mut(k)
                    .iter_mut()
                    .zip(f(t))
                    .for_each(|(dst, &v)| *dst = v);
            }
            m
        };
        Batch {
            x: rows(&|t| &t.x),
            a: rows(&|t| &t.a),
            r: rows(&|t| &t.r),
            r_c: rows(&|t| &t.r_c),
            x_next: rows(&|t| &t.x_next),
            done: items.iter().map(|t| if t.done { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Fixed-capacity ring of transitions, sampled uniformly with
/// replacement from a caller-supplied generator.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
    pushed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            items: Vec::new(),
            next: 0,
            pushed: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Transitions ever appended, including overwritten ones.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
        self.pushed += 1;
    }

    pub fn items(&self) -> &[Transition] {
        &self.items
    }

    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        (0..n).map(|_| rng.gen_range(0..self.items.len())).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Batch {
        let idx = self.sample_indices(n, rng);
        let items: Vec<&Transition> = idx.iter().map(|&k| &self.items[k]).collect();
        Batch::from_transitions(&items)
    }
}
