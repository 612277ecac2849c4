//! Row scoring rules for greedy selection.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::observability::RANK_TOL;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Under-sampling: residual energy orthogonal to the current row space.
    Qrcp,
    /// Over-sampling: lower bound on the smallest eigenvalue after a rank-one row update.
    GappyE,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scores {
    pub values: Vec<f64>,
    pub mode: ScoreMode,
    /// Rows where the over-sampling bound was numerically invalid and the
    /// weakest-direction energy was used instead.
    pub fallback_rows: Vec<usize>,
}

impl Scores {
    /// Highest-scoring index among `candidates`; ties go to the lowest index.
    pub fn best_of(&self, candidates: &[usize]) -> Option<usize> {
        let mut best: Option<usize> = None;
        for &i in candidates {
            best = match best {
                None => Some(i),
                Some(b) => {
                    let (si, sb) = (self.values[i], self.values[b]);
                    if si > sb || (si == sb && i < b) {
                        Some(i)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        best
    }
}

/// Mode the planner uses for the current stack: QRcp while the stack does not yet
/// span all `m` directions, GappyPOD+E afterwards.
pub fn mode_for(current: &DMatrix<f64>) -> ScoreMode {
    let m = current.ncols();
    if current.nrows() < m {
        return ScoreMode::Qrcp;
    }
    let s = linalg::singular_values(current);
    if linalg::numerical_rank(&s, RANK_TOL) < m {
        ScoreMode::Qrcp
    } else {
        ScoreMode::GappyE
    }
}

/// Scores every row of `x` (n x m) against the current stacked rows (p x m).
/// Larger is better in both modes.
pub fn selection_score(x: &DMatrix<f64>, current: &DMatrix<f64>, mode: ScoreMode) -> Result<Scores> {
    let m = x.ncols();
    if current.ncols() != m {
        return Err(Error::arg(format!(
            "column mismatch: target has {m}, stack has {}",
            current.ncols()
        )));
    }
    match mode {
        ScoreMode::Qrcp => qrcp_scores(x, current),
        ScoreMode::GappyE => gappy_scores(x, current),
    }
}

fn qrcp_scores(x: &DMatrix<f64>, current: &DMatrix<f64>) -> Result<Scores> {
    let m = x.ncols();
    let (s, v) = linalg::right_singular(current);
    let r = if current.nrows() == 0 {
        0
    } else {
        linalg::numerical_rank(&s, RANK_TOL)
    };
    if r >= m {
        return Err(Error::arg(
            "QRcp rule needs a stack that does not span all directions",
        ));
    }
    let basis = v.columns(0, r);
    let mut values = Vec::with_capacity(x.nrows());
    for i in 0..x.nrows() {
        let row = x.row(i).transpose();
        let resid = if r == 0 {
            row
        } else {
            let coeff = basis.transpose() * &row;
            &row - basis * coeff
        };
        values.push(resid.norm_squared());
    }
    Ok(Scores {
        values,
        mode: ScoreMode::Qrcp,
        fallback_rows: Vec::new(),
    })
}

fn gappy_scores(x: &DMatrix<f64>, current: &DMatrix<f64>) -> Result<Scores> {
    let m = x.ncols();
    if current.nrows() < m {
        return Err(Error::DegenerateRank {
            requested: m,
            achievable: current.nrows(),
        });
    }
    let (s, v) = linalg::right_singular(current);
    let rank = linalg::numerical_rank(&s, RANK_TOL);
    if rank < m {
        return Err(Error::DegenerateRank {
            requested: m,
            achievable: rank,
        });
    }
    // Gap between the two smallest squared singular values, nonnegative.
    let gap = if m >= 2 {
        s[m - 2] * s[m - 2] - s[m - 1] * s[m - 1]
    } else {
        f64::INFINITY
    };
    let proj: DMatrix<f64> = v.transpose() * x.transpose();
    let mut values = Vec::with_capacity(x.nrows());
    let mut fallback_rows = Vec::new();
    for i in 0..x.nrows() {
        let u: DVector<f64> = proj.column(i).into_owned();
        let weakest = u[m - 1] * u[m - 1];
        if gap.is_infinite() {
            values.push(weakest);
            continue;
        }
        let r = gap + u.norm_squared();
        let radicand = r * r - 4.0 * gap * weakest;
        if radicand < 0.0 {
            log::warn!("negative GappyPOD+E radicand {radicand:.3e} at row {i}; using weakest-direction energy");
            fallback_rows.push(i);
            values.push(weakest);
        } else {
            values.push(r - radicand.sqrt());
        }
    }
    Ok(Scores {
        values,
        mode: ScoreMode::GappyE,
        fallback_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_empty_stack() {
        let x = DMatrix::identity(4, 4);
        let s = selection_score(&x, &DMatrix::zeros(0, 4), ScoreMode::Qrcp).unwrap();
        assert_eq!(s.values, vec![1.0; 4]);
        assert_eq!(s.best_of(&[0, 1, 2, 3]), Some(0));
    }

    #[test]
    fn identity_with_first_row() {
        let x = DMatrix::identity(4, 4);
        let cur = x.rows(0, 1).into_owned();
        let s = selection_score(&x, &cur, ScoreMode::Qrcp).unwrap();
        assert!(s.values[0].abs() < 1e-15);
        for v in &s.values[1..] {
            assert!((v - 1.0).abs() < 1e-15);
        }
        assert_eq!(s.best_of(&[0, 1, 2, 3]), Some(1));
    }

    #[test]
    fn gappy_requires_full_rank() {
        let x = DMatrix::identity(3, 3);
        let cur = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!(matches!(
            selection_score(&x, &cur, ScoreMode::GappyE),
            Err(Error::DegenerateRank { .. })
        ));
    }

    #[test]
    fn gappy_prefers_weak_direction() {
        // Stack strong in e0, e1 and weak in e2: adding e2 should win.
        let cur = DMatrix::from_row_slice(3, 3, &[3.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.1]);
        let x = DMatrix::identity(3, 3);
        let s = selection_score(&x, &cur, ScoreMode::GappyE).unwrap();
        assert_eq!(s.best_of(&[0, 1, 2]), Some(2));
        assert!(s.fallback_rows.is_empty());
    }

    #[test]
    fn qrcp_rejects_spanning_stack() {
        let x = DMatrix::identity(2, 2);
        assert!(selection_score(&x, &x, ScoreMode::Qrcp).is_err());
    }

    #[test]
    fn mode_switch() {
        assert_eq!(mode_for(&DMatrix::zeros(0, 2)), ScoreMode::Qrcp);
        assert_eq!(mode_for(&DMatrix::identity(2, 2)), ScoreMode::GappyE);
        assert_eq!(mode_for(&DMatrix::from_element(3, 2, 1.0)), ScoreMode::Qrcp);
    }
}
