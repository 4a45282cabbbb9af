//! Ring-buffer replay memory and its `buf-v1` dump.
//!
//! ```text
//! magic    b"buf-v1\n\0"
//! u64 LE   capacity, obs_dim, act_dim, len, cursor
//! f64 LE   obs [len x obs_dim], actions [len x act_dim], rewards [len],
//!          next_obs [len x obs_dim]
//! u8       dones [len]
//! ```

use std::io::{self, Read, Write};

use ndarray::Array2;
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    /// Normalized to [-1, 1].
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// True only for terminal states; time-limit truncation is not terminal.
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array2<f64>,
    pub next_obs: Array2<f64>,
    pub dones: Array2<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.obs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn from_transitions(ts: &[Transition]) -> Self {
        let od = ts.first().map_or(0, |t| t.obs.len());
        let ad = ts.first().map_or(0, |t| t.action.len());
        let b = ts.len();
        Self {
            obs: Array2::from_shape_fn((b, od), |(i, j)| ts[i].obs[j]),
            actions: Array2::from_shape_fn((b, ad), |(i, j)| ts[i].action[j]),
            rewards: Array2::from_shape_fn((b, 1), |(i, _)| ts[i].reward),
            next_obs: Array2::from_shape_fn((b, od), |(i, j)| ts[i].next_obs[j]),
            dones: Array2::from_shape_fn((b, 1), |(i, _)| f64::from(u8::from(ts[i].done))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    len: usize,
    cursor: usize,
    obs: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_obs: Vec<f64>,
    dones: Vec<bool>,
}

const MAGIC: &[u8; 8] = b"buf-v1\n\0";

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            obs_dim,
            act_dim,
            len: 0,
            cursor: 0,
            obs: vec![0.0; capacity * obs_dim],
            actions: vec![0.0; capacity * act_dim],
            rewards: vec![0.0; capacity],
            next_obs: vec![0.0; capacity * obs_dim],
            dones: vec![false; capacity],
        }
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

    pub fn clear(&mut self) {
        self.len = 0;
        self.cursor = 0;
    }

    pub fn push(&mut self, t: &Transition) {
        assert_eq!(t.obs.len(), self.obs_dim, "observation width");
        assert_eq!(t.action.len(), self.act_dim, "action width");
        let i = self.cursor;
        self.obs[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(&t.obs);
        self.actions[i * self.act_dim..(i + 1) * self.act_dim].copy_from_slice(&t.action);
        self.rewards[i] = t.reward;
        self.next_obs[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(&t.next_obs);
        self.dones[i] = t.done;
        self.cursor = (self.cursor + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
    }

    pub fn get(&self, i: usize) -> Transition {
        assert!(i < self.len);
        Transition {
            obs: self.obs[i * self.obs_dim..(i + 1) * self.obs_dim].to_vec(),
            action: self.actions[i * self.act_dim..(i + 1) * self.act_dim].to_vec(),
            reward: self.rewards[i],
            next_obs: self.next_obs[i * self.obs_dim..(i + 1) * self.obs_dim].to_vec(),
            done: self.dones[i],
        }
    }

    /// Distinct indices drawn uniformly; `size` is capped at `len`.
    pub fn sample_indices<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Vec<usize> {
        rand::seq::index::sample(rng, self.len, size.min(self.len)).into_vec()
    }

    pub fn batch(&self, idx: &[usize]) -> Batch {
        let (od, ad) = (self.obs_dim, self.act_dim);
        let b = idx.len();
        Batch {
            obs: Array2::from_shape_fn((b, od), |(r, c)| self.obs[idx[r] * od + c]),
            actions: Array2::from_shape_fn((b, ad), |(r, c)| self.actions[idx[r] * ad + c]),
            rewards: Array2::from_shape_fn((b, 1), |(r, _)| self.rewards[idx[r]]),
            next_obs: Array2::from_shape_fn((b, od), |(r, c)| self.next_obs[idx[r] * od + c]),
            dones: Array2::from_shape_fn((b, 1), |(r, _)| f64::from(u8::from(self.dones[idx[r]]))),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Batch {
        let idx = self.sample_indices(size, rng);
        self.batch(&idx)
    }

    pub fn write<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(MAGIC)?;
        for v in [self.capacity, self.obs_dim, self.act_dim, self.len, self.cursor] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        let mut buf = Vec::new();
        let f = |buf: &mut Vec<u8>, xs: &[f64]| xs.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes()));
        f(&mut buf, &self.obs[..self.len * self.obs_dim]);
        f(&mut buf, &self.actions[..self.len * self.act_dim]);
        f(&mut buf, &self.rewards[..self.len]);
        f(&mut buf, &self.next_obs[..self.len * self.obs_dim]);
        buf.extend(self.dones[..self.len].iter().map(|&d| u8::from(d)));
        w.write_all(&buf)
    }

    pub fn read<R: Read>(r: &mut R) -> io::Result<Self> {
        let bad = |m: &str| io::Error::new(io::ErrorKind::InvalidData, m.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not a buf-v1 file"));
        }
        let mut head = [0usize; 5];
        for h in &mut head {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *h = u64::from_le_bytes(b) as usize;
        }
        let [capacity, obs_dim, act_dim, len, cursor] = head;
        if capacity == 0 || len > capacity || cursor >= capacity || capacity > 1 << 32 {
            return Err(bad("inconsistent buffer header"));
        }
        let mut read_f = |n: usize| -> io::Result<Vec<f64>> {
            let mut b = vec![0u8; n * 8];
            r.read_exact(&mut b)?;
            Ok(b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
        };
        let mut out = Self::new(capacity, obs_dim, act_dim);
        out.obs[..len * obs_dim].copy_from_slice(&read_f(len * obs_dim)?);
        out.actions[..len * act_dim].copy_from_slice(&read_f(len * act_dim)?);
        out.rewards[..len].copy_from_slice(&read_f(len)?);
        out.next_obs[..len * obs_dim].copy_from_slice(&read_f(len * obs_dim)?);
        let mut d = vec![0u8; len];
        r.read_exact(&mut d)?;
        for (slot, v) in out.dones.iter_mut().zip(d) {
            *slot = v != 0;
        }
        out.len = len;
        out.cursor = cursor;
        Ok(out)
    }
}
