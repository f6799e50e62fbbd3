use rand::Rng;

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: Vec<f32>,
    pub action: usize,
    pub reward: f32,
    pub next_state: Vec<f32>,
    pub terminal: bool,
    /// Slots elapsed between `state` and `next_state`; the bootstrap is discounted by γ^span.
    pub span: u32,
}

/// Fixed-capacity ring of transitions; the oldest is overwritten first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    width: usize,
    states: Vec<f32>,
    next_states: Vec<f32>,
    actions: Vec<usize>,
    rewards: Vec<f32>,
    terminals: Vec<bool>,
    spans: Vec<u32>,
    len: usize,
    head: usize,
}

/// Column-major copy of sampled transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Vec<f32>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f32>,
    pub next_states: Vec<f32>,
    pub terminals: Vec<bool>,
    pub spans: Vec<u32>,
    pub indices: Vec<usize>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, width: usize) -> Result<Self> {
        if capacity == 0 || width == 0 {
            return Err(Error::Config("replay capacity and observation width must be positive".into()));
        }
        Ok(Self {
            capacity,
            width,
            states: Vec::new(),
            next_states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            terminals: Vec::new(),
            spans: Vec::new(),
            len: 0,
            head: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, e: &Experience) -> Result<()> {
        check_dim("replay state", self.width, e.state.len())?;
        check_dim("replay next state", self.width, e.next_state.len())?;
        if self.len < self.capacity {
            self.states.extend_from_slice(&e.state);
            self.next_states.extend_from_slice(&e.next_state);
            self.actions.push(e.action);
            self.rewards.push(e.reward);
            self.terminals.push(e.terminal);
            self.spans.push(e.span);
            self.len += 1;
        } else {
            let w = self.width;
            let h = self.head;
            self.states[h * w..(h + 1) * w].copy_from_slice(&e.state);
            self.next_states[h * w..(h + 1) * w].copy_from_slice(&e.next_state);
            self.actions[h] = e.action;
            self.rewards[h] = e.reward;
            self.terminals[h] = e.terminal;
            self.spans[h] = e.span;
        }
        self.head = (self.head + 1) % self.capacity;
        Ok(())
    }

    /// The `i`-th stored transition in storage order.
    pub fn get(&self, i: usize) -> Option<Experience> {
        (i < self.len).then(|| {
            let w = self.width;
            Experience {
                state: self.states[i * w..(i + 1) * w].to_vec(),
                action: self.actions[i],
                reward: self.rewards[i],
                next_state: self.next_states[i * w..(i + 1) * w].to_vec(),
                terminal: self.terminals[i],
                span: self.spans[i],
            }
        })
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Result<Batch> {
        if self.len == 0 {
            return Err(Error::Empty("cannot sample an empty replay buffer"));
        }
        let w = self.width;
        let indices: Vec<usize> = (0..size).map(|_| rng.random_range(0..self.len)).collect();
        let mut b = Batch {
            states: Vec::with_capacity(size * w),
            actions: Vec::with_capacity(size),
            rewards: Vec::with_capacity(size),
            next_states: Vec::with_capacity(size * w),
            terminals: Vec::with_capacity(size),
            spans: Vec::with_capacity(size),
            indices: Vec::new(),
        };
        for &i in &indices {
            b.states.extend_from_slice(&self.states[i * w..(i + 1) * w]);
            b.next_states.extend_from_slice(&self.next_states[i * w..(i + 1) * w]);
            b.actions.push(self.actions[i]);
            b.rewards.push(self.rewards[i]);
            b.terminals.push(self.terminals[i]);
            b.spans.push(self.spans[i]);
        }
        b.indices = indices;
        Ok(b)
    }
}
