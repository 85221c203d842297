use crate::error::{Error, Result};

/// Append-only store of `(state, action, next_state)` transitions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransitionDataset {
    state_dim: usize,
    action_dim: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    next_states: Vec<f64>,
}

impl TransitionDataset {
    pub fn new(state_dim: usize, action_dim: usize) -> Self {
        Self {
            state_dim,
            action_dim,
            ..Default::default()
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.state_dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn push(&mut self, state: &[f64], action: &[f64], next_state: &[f64]) -> Result<()> {
        if state.len() != self.state_dim || next_state.len() != self.state_dim || action.len() != self.action_dim {
            return Err(Error::invalid("transition dimensions do not match the dataset"));
        }
        if state.iter().chain(action).chain(next_state).any(|v| !v.is_finite()) {
            return Err(Error::invalid("transition contains non-finite values"));
        }
        self.states.extend_from_slice(state);
        self.actions.extend_from_slice(action);
        self.next_states.extend_from_slice(next_state);
        Ok(())
    }

    pub fn extend(&mut self, other: &TransitionDataset) -> Result<()> {
        if other.state_dim != self.state_dim || other.action_dim != self.action_dim {
            return Err(Error::invalid("cannot merge datasets of different dimensions"));
        }
        self.states.extend_from_slice(&other.states);
        self.actions.extend_from_slice(&other.actions);
        self.next_states.extend_from_slice(&other.next_states);
        Ok(())
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    pub fn action(&self, i: usize) -> &[f64] {
        &self.actions[i * self.action_dim..(i + 1) * self.action_dim]
    }

    pub fn next_state(&self, i: usize) -> &[f64] {
        &self.next_states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    /// Concatenated `(state, action)` rows.
    pub fn inputs(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * (self.state_dim + self.action_dim));
        for i in 0..self.len() {
            out.extend_from_slice(self.state(i));
            out.extend_from_slice(self.action(i));
        }
        out
    }

    /// States, actions and target deltas (`next - state`) of the given rows.
    pub(crate) fn gather(&self, rows: &[usize]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut s = Vec::with_capacity(rows.len() * self.state_dim);
        let mut a = Vec::with_capacity(rows.len() * self.action_dim);
        let mut t = Vec::with_capacity(rows.len() * self.state_dim);
        for &i in rows {
            s.extend_from_slice(self.state(i));
            a.extend_from_slice(self.action(i));
            t.extend(self.next_state(i).iter().zip(self.state(i)).map(|(n, x)| n - x));
        }
        (s, a, t)
    }
}
