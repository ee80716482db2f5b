//! Exact and sampled Bellman optimality operators, the value-iteration
//! oracle for `Q*`, greedy policies and the RMSE metric.

use crate::error::{Error, Result};
use crate::mdp::{SampleTables, TabularMdp};
use crate::qtable::{Policy, QTable};

fn check_mdp_shape(mdp: &TabularMdp, q: &QTable) -> Result<()> {
    if q.shape() != (mdp.n_states(), mdp.n_actions()) {
        return Err(Error::ShapeMismatch {
            expected: (mdp.n_states(), mdp.n_actions()),
            found: q.shape(),
        });
    }
    Ok(())
}

/// `T(Q)(s,a) = r(s,a) + gamma * sum_s' P(s'|s,a) max_a' Q(s',a')` with mean rewards.
pub fn exact_bellman(mdp: &TabularMdp, q: &QTable) -> Result<QTable> {
    check_mdp_shape(mdp, q)?;
    let v = q.state_values();
    let gamma = mdp.gamma();
    let mut out = QTable::zeros(mdp.n_states(), mdp.n_actions());
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            let expected: f64 = mdp.transition(s, a).iter().map(|&(n, p)| p * v[n]).sum();
            out.set(s, a, mdp.reward_mean(s, a) + gamma * expected);
        }
    }
    Ok(out)
}

/// Single-sample operator `r_k(s,a) + gamma * max_a' Q(s_k(s,a), a')`.
pub fn empirical_bellman(q: &QTable, samples: &SampleTables, gamma: f64) -> Result<QTable> {
    if q.shape() != (samples.n_states, samples.n_actions)
        || samples.next_states.len() != q.as_slice().len()
        || samples.rewards.len() != q.as_slice().len()
    {
        return Err(Error::ShapeMismatch {
            expected: q.shape(),
            found: (samples.n_states, samples.n_actions),
        });
    }
    let v = q.state_values();
    let values = samples
        .next_states
        .iter()
        .zip(&samples.rewards)
        .map(|(&n, &r)| r + gamma * v[n])
        .collect();
    QTable::from_vec(q.n_states(), q.n_actions(), values)
}

/// Iterates `Q <- T(Q)` from zero until `||T(Q) - Q||_inf <= tol` holds for the
/// returned table. The fixed-point error is then at most `tol * gamma / (1 - gamma)`.
pub fn value_iteration(mdp: &TabularMdp, tol: f64, max_iter: usize) -> Result<QTable> {
    if !(tol > 0.0) {
        return Err(Error::InvalidTolerance(tol));
    }
    let mut q = QTable::zeros(mdp.n_states(), mdp.n_actions());
    for _ in 0..max_iter {
        let next = exact_bellman(mdp, &q)?;
        let step = next.linf_distance(&q)?;
        q = next;
        // ||T(q') - q'|| <= gamma * ||q' - q|| by contraction.
        if step * mdp.gamma() <= tol {
            return Ok(q);
        }
    }
    Err(Error::NotConverged(max_iter))
}

/// `argmax_a Q(s,a)` per state, ties to the lowest action index.
pub fn greedy_policy(q: &QTable) -> Policy {
    let actions = (0..q.n_states())
        .map(|s| {
            let row = q.row(s);
            let mut best = 0;
            for (a, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = a;
                }
            }
            best
        })
        .collect();
    Policy::new(actions)
}

/// Root mean square of `Q - Q*` over all `|S||A|` entries.
pub fn rmse(q: &QTable, q_star: &QTable) -> Result<f64> {
    q.ensure_shape(q_star)?;
    let n = q.as_slice().len() as f64;
    let sq: f64 = q
        .as_slice()
        .iter()
        .zip(q_star.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sq / n).sqrt())
}
