//! `Q*` precomputation with an on-disk cache keyed by map contents, discount
//! and tolerance.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::bellman::{greedy_policy, value_iteration};
use crate::error::{Error, Result};
use crate::grid::{build_gridworld, parse_map, Action, GridSpec};
use crate::mdp::NoiseSpec;
use crate::qtable::{Policy, QTable};

pub const MAX_VALUE_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone)]
pub struct QStar {
    pub q: QTable,
    pub policy: Policy,
    /// Cache file backing this result.
    pub cache_file: PathBuf,
    /// True when the table was read from the cache instead of recomputed.
    pub from_cache: bool,
}

pub fn cache_key(map_text: &str, gamma: f64, tol: f64) -> String {
    let mut h = Sha256::new();
    h.update(map_text.as_bytes());
    h.update(gamma.to_le_bytes());
    h.update(tol.to_le_bytes());
    hex::encode(&h.finalize()[..12])
}

/// Solves the noiseless mean-reward maze to `tol`, reusing `cache_dir` when a
/// table for the same `(map, gamma, tol)` exists. New cache files are created
/// atomically and never overwritten.
pub fn compute_qstar(map_text: &str, gamma: f64, tol: f64, cache_dir: &Path) -> Result<QStar> {
    if !(tol > 0.0) {
        return Err(Error::InvalidTolerance(tol));
    }
    let grid = parse_map(map_text)?;
    let mdp = build_gridworld(&grid, NoiseSpec::noiseless(), gamma)?;
    let cache_file = cache_dir.join(format!("qstar_{}.csv", cache_key(map_text, gamma, tol)));

    if let Ok(text) = fs::read_to_string(&cache_file) {
        if let Ok(q) = QTable::from_csv(&text, mdp.n_states(), mdp.n_actions()) {
            return Ok(QStar {
                policy: greedy_policy(&q),
                q,
                cache_file,
                from_cache: true,
            });
        }
        log::warn!("ignoring unreadable cache file {}", cache_file.display());
    }

    let q = value_iteration(&mdp, tol, MAX_VALUE_ITERATIONS)?;
    fs::create_dir_all(cache_dir).map_err(|e| Error::io(cache_dir, e))?;
    let mut tmp =
        tempfile::NamedTempFile::new_in(cache_dir).map_err(|e| Error::io(cache_dir, e))?;
    tmp.write_all(q.to_csv().as_bytes())
        .map_err(|e| Error::io(tmp.path(), e))?;
    if let Err(e) = tmp.persist_noclobber(&cache_file) {
        // Another writer got there first; its contents are identical.
        if e.error.kind() != std::io::ErrorKind::AlreadyExists {
            return Err(Error::io(&cache_file, e.error));
        }
    }
    Ok(QStar {
        policy: greedy_policy(&q),
        q,
        cache_file,
        from_cache: false,
    })
}

/// Draws the greedy policy as arrows; walls `#`, goal `G`.
pub fn render_policy(grid: &GridSpec, policy: &Policy) -> String {
    let mut out = String::new();
    for r in 0..grid.rows() {
        for c in 0..grid.cols() {
            let ch = match grid.state_at(r, c) {
                None => '#',
                Some(s) if s == grid.goal_index() => 'G',
                Some(s) => Action::from_index(policy.action(s)).map_or('?', Action::arrow),
            };
            out.push(ch);
        }
        out.push('\n');
    }
    out
}
