use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetDims {
    /// State length, `2 * K`.
    pub input: usize,
    /// Encoder width and LSTM hidden size.
    pub hidden: usize,
    /// One logit per candidate SBS.
    pub actions: usize,
}

impl Default for NetDims {
    fn default() -> Self {
        Self {
            input: 12,
            hidden: 8,
            actions: 6,
        }
    }
}

impl NetDims {
    pub fn for_sbs(sbs: usize, hidden: usize) -> Self {
        Self {
            input: 2 * sbs,
            hidden,
            actions: sbs,
        }
    }

    pub fn shape(&self, p: Param) -> (usize, usize) {
        let h = self.hidden;
        match p {
            Param::Encoder => (h, self.input),
            Param::Forget | Param::Input | Param::Cell | Param::Output => (h, 2 * h),
            Param::Policy => (self.actions, h),
            Param::Value => (1, h),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Param {
    Encoder,
    Forget,
    Input,
    Cell,
    Output,
    Policy,
    Value,
}

impl Param {
    pub const ALL: [Param; 7] = [
        Param::Encoder,
        Param::Forget,
        Param::Input,
        Param::Cell,
        Param::Output,
        Param::Policy,
        Param::Value,
    ];

    pub const LSTM: [Param; 4] = [Param::Forget, Param::Input, Param::Cell, Param::Output];

    pub fn name(self) -> &'static str {
        match self {
            Param::Encoder => "u_en",
            Param::Forget => "u_fg",
            Param::Input => "u_ig",
            Param::Cell => "u_cg",
            Param::Output => "u_og",
            Param::Policy => "u_po",
            Param::Value => "u_vo",
        }
    }

    pub fn from_name(name: &str) -> Option<Param> {
        Param::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which head a parameter subset serves. The encoder and LSTM tensors belong
/// to both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partition {
    /// `theta = [u_en, u_lstm, u_po]`
    Actor,
    /// `w = [u_en, u_lstm, u_vo]`
    Critic,
}

impl Partition {
    pub fn params(self) -> &'static [Param] {
        match self {
            Partition::Actor => &[
                Param::Encoder,
                Param::Forget,
                Param::Input,
                Param::Cell,
                Param::Output,
                Param::Policy,
            ],
            Partition::Critic => &[
                Param::Encoder,
                Param::Forget,
                Param::Input,
                Param::Cell,
                Param::Output,
                Param::Value,
            ],
        }
    }

    pub fn contains(self, p: Param) -> bool {
        self.params().contains(&p)
    }
}

/// All network tensors. Also used, zero-initialized, as a gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCriticWeights {
    dims: NetDims,
    tensors: [Tensor; 7],
}

impl ActorCriticWeights {
    pub fn zeros(dims: NetDims) -> Self {
        Self {
            dims,
            tensors: std::array::from_fn(|i| {
                let (r, c) = dims.shape(Param::ALL[i]);
                Tensor::zeros(r, c)
            }),
        }
    }

    /// Uniform in `+-1/sqrt(fan_in)` per tensor.
    pub fn random<R: Rng + ?Sized>(dims: NetDims, rng: &mut R) -> Self {
        let mut w = Self::zeros(dims);
        for t in w.tensors.iter_mut() {
            let bound = 1.0 / (t.cols() as f64).sqrt();
            for v in t.as_mut_slice() {
                *v = rng.random_range(-bound..=bound);
            }
        }
        w
    }

    pub fn from_tensors(dims: NetDims, tensors: Vec<(Param, Tensor)>) -> Result<Self> {
        let mut w = Self::zeros(dims);
        let mut seen = [false; 7];
        for (p, t) in tensors {
            let (r, c) = dims.shape(p);
            if t.shape() != [r, c] {
                return Err(Error::invalid(format!(
                    "{p}: shape {:?} does not match {:?}",
                    t.shape(),
                    [r, c]
                )));
            }
            seen[p.index()] = true;
            w.tensors[p.index()] = t;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!("missing tensor {}", Param::ALL[i])));
        }
        Ok(w)
    }

    pub fn dims(&self) -> NetDims {
        self.dims
    }

    pub fn get(&self, p: Param) -> &Tensor {
        &self.tensors[p.index()]
    }

    pub fn get_mut(&mut self, p: Param) -> &mut Tensor {
        &mut self.tensors[p.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Param, &Tensor)> {
        Param::ALL.into_iter().zip(self.tensors.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (Param, &mut Tensor)> {
        Param::ALL.into_iter().zip(self.tensors.iter_mut())
    }

    pub fn view(&self, partition: Partition) -> ParamView<'_> {
        ParamView {
            weights: self,
            partition,
        }
    }

    pub fn view_mut(&mut self, partition: Partition) -> ParamViewMut<'_> {
        ParamViewMut {
            weights: self,
            partition,
        }
    }

    /// Actor parameters.
    pub fn theta(&self) -> ParamView<'_> {
        self.view(Partition::Actor)
    }

    pub fn theta_mut(&mut self) -> ParamViewMut<'_> {
        self.view_mut(Partition::Actor)
    }

    /// Critic parameters.
    pub fn critic(&self) -> ParamView<'_> {
        self.view(Partition::Critic)
    }

    pub fn critic_mut(&mut self) -> ParamViewMut<'_> {
        self.view_mut(Partition::Critic)
    }

    pub fn shape_matches(&self, other: &ActorCriticWeights) -> bool {
        self.dims == other.dims
    }

    pub fn add_assign(&mut self, other: &ActorCriticWeights) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.tensors.iter_mut().for_each(|t| t.scale(s));
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors.iter().map(Tensor::sum_sq).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Rescales to at most `max_norm`; returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }
}

/// Read access restricted to one partition.
pub struct ParamView<'a> {
    weights: &'a ActorCriticWeights,
    partition: Partition,
}

impl<'a> ParamView<'a> {
    pub fn get(&self, p: Param) -> Option<&'a Tensor> {
        self.partition.contains(p).then(|| self.weights.get(p))
    }

    pub fn params(&self) -> &'static [Param] {
        self.partition.params()
    }

    pub fn len(&self) -> usize {
        self.params().iter().map(|p| self.weights.get(*p).len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Concatenated values in partition order.
    pub fn flatten(&self) -> Vec<f64> {
        self.params()
            .iter()
            .flat_map(|p| self.weights.get(*p).as_slice().iter().copied())
            .collect()
    }
}

/// Write access restricted to one partition.
pub struct ParamViewMut<'a> {
    weights: &'a mut ActorCriticWeights,
    partition: Partition,
}

impl ParamViewMut<'_> {
    pub fn get_mut(&mut self, p: Param) -> Option<&mut Tensor> {
        if self.partition.contains(p) {
            Some(self.weights.get_mut(p))
        } else {
            None
        }
    }

    pub fn params(&self) -> &'static [Param] {
        self.partition.params()
    }

    /// Mutable reference to the `i`-th scalar in partition order.
    pub fn coord_mut(&mut self, mut i: usize) -> Option<&mut f64> {
        for p in self.partition.params() {
            let len = self.weights.get(*p).len();
            if i < len {
                return self.weights.get_mut(*p).as_mut_slice().get_mut(i);
            }
            i -= len;
        }
        None
    }
}
