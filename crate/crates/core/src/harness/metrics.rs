//! Evaluation metrics over a labelled test set.

use crate::data::GsSample;
use crate::error::{Error, Result};
use crate::router::Choice;

/// Total efficiency: the sum of `r_i` over queries sent to the primary
/// model, accumulated in index order.
pub fn total_efficiency(assignments: &[Choice], test: &[GsSample]) -> Result<f64> {
    if assignments.len() != test.len() {
        return Err(Error::LengthMismatch(format!(
            "{} assignments for {} test samples",
            assignments.len(),
            test.len()
        )));
    }
    Ok(assignments
        .iter()
        .zip(test)
        .filter(|(a, _)| **a == Choice::Primary)
        .fold(0.0, |acc, (_, g)| acc + g.r))
}

/// Per-query TE improvement over the random router.
pub fn efficiency_gain(te_router: f64, te_random: f64, n_test: usize) -> f64 {
    assert!(n_test > 0, "efficiency gain needs a nonempty test set");
    (te_router - te_random) / n_test as f64
}

/// Primary-model usage ratio.
pub fn pmur(assignments: &[Choice]) -> Result<f64> {
    if assignments.is_empty() {
        return Err(Error::Empty("PMUR of an empty assignment".into()));
    }
    let used = assignments.iter().filter(|a| **a == Choice::Primary).count();
    Ok(used as f64 / assignments.len() as f64)
}
