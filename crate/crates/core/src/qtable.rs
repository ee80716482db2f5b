use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Dense `|S| x |A|` table stored row-major (state-major).
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self::constant(n_states, n_actions, 0.0)
    }

    pub fn constant(n_states: usize, n_actions: usize, c: f64) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![c; n_states * n_actions],
        }
    }

    pub fn from_vec(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_states * n_actions {
            return Err(Error::DimensionMismatch {
                expected: n_states * n_actions,
                found: values.len(),
            });
        }
        Ok(Self {
            n_states,
            n_actions,
            values,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_states, self.n_actions)
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Flattened view, index `s * n_actions + a`.
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    /// `max_a Q(s, a)`.
    pub fn state_value(&self, s: usize) -> f64 {
        self.row(s)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn state_values(&self) -> Vec<f64> {
        (0..self.n_states).map(|s| self.state_value(s)).collect()
    }

    pub fn linf_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn ensure_shape(&self, other: &QTable) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                found: other.shape(),
            });
        }
        Ok(())
    }

    /// `||self - other||_inf`.
    pub fn linf_distance(&self, other: &QTable) -> Result<f64> {
        self.ensure_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// `self - other` as a flat vector.
    pub fn difference(&self, other: &QTable) -> Result<Vec<f64>> {
        self.ensure_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect())
    }

    /// CSV with header `state,action,q`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("state,action,q\n");
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                writeln!(out, "{s},{a},{}", self.get(s, a)).unwrap();
            }
        }
        out
    }

    pub fn from_csv(text: &str, n_states: usize, n_actions: usize) -> Result<Self> {
        let bad = |msg: String| Error::InvalidConfig(format!("Q-table CSV: {msg}"));
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("state,action,q") {
            return Err(bad("missing header".into()));
        }
        let mut q = QTable::constant(n_states, n_actions, f64::NAN);
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let mut parts = line.split(',');
            let mut field = || {
                parts
                    .next()
                    .map(str::trim)
                    .ok_or_else(|| bad(format!("short row {line:?}")))
            };
            let s: usize = field()?
                .parse()
                .map_err(|_| bad(format!("bad state in {line:?}")))?;
            let a: usize = field()?
                .parse()
                .map_err(|_| bad(format!("bad action in {line:?}")))?;
            let v: f64 = field()?
                .parse()
                .map_err(|_| bad(format!("bad value in {line:?}")))?;
            if s >= n_states || a >= n_actions {
                return Err(bad(format!("entry ({s},{a}) out of range")));
            }
            q.set(s, a, v);
        }
        if q.values.iter().any(|v| v.is_nan()) {
            return Err(bad("missing entries".into()));
        }
        Ok(q)
    }
}

/// Deterministic policy: one action per state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    actions: Vec<usize>,
}

impl Policy {
    pub fn new(actions: Vec<usize>) -> Self {
        Self { actions }
    }

    pub fn action(&self, s: usize) -> usize {
        self.actions[s]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    /// CSV with header `state,action`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("state,action\n");
        for (s, a) in self.actions.iter().enumerate() {
            writeln!(out, "{s},{a}").unwrap();
        }
        out
    }
}
