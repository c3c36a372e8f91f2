//! The two configuration-specific training losses.
//!
//! `many-to-one` averages absolute error over the batch:
//! `l = (1/n) Σ_j |A^j − F^j|`. `many-to-many` additionally averages over the
//! steps of each record: `l = (1/(s·n)) Σ_j Σ_t |A_t^j − F_t^j|`.
//! Both are mean absolute errors, so the loss surface is piecewise linear;
//! at a zero residual the subgradient is taken to be 0.

use super::Mode;
use crate::error::{Error, Result};

/// Subgradient of `|r|` with the convention `d|r|/dr = 0` at `r = 0`.
pub(crate) fn abs_subgradient(residual: f64) -> f64 {
    if residual > 0.0 {
        1.0
    } else if residual < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Batch loss for one configuration. Each record carries 1 value
/// (`many-to-one`) or one value per step (`many-to-many`); actual and
/// forecast lists must agree record by record.
pub fn sequence_loss(mode: Mode, actuals: &[Vec<f64>], forecasts: &[Vec<f64>]) -> Result<f64> {
    if actuals.is_empty() {
        return Err(Error::domain("sequence loss needs a nonempty batch"));
    }
    if actuals.len() != forecasts.len() {
        return Err(Error::shape(format!(
            "batch has {} actual records but {} forecast records",
            actuals.len(),
            forecasts.len()
        )));
    }
    let per_record = match mode {
        Mode::ManyToOne => 1,
        Mode::ManyToMany => {
            let s = actuals[0].len();
            if s == 0 {
                return Err(Error::shape("many-to-many records need at least one step value"));
            }
            s
        }
    };
    let mut total = 0.0;
    for (j, (a, f)) in actuals.iter().zip(forecasts).enumerate() {
        if a.len() != per_record || f.len() != per_record {
            return Err(Error::shape(format!(
                "record {} has {} actuals / {} forecasts, expected {} each",
                j,
                a.len(),
                f.len(),
                per_record
            )));
        }
        for (av, fv) in a.iter().zip(f) {
            total += (av - fv).abs();
        }
    }
    Ok(total / (per_record as f64 * actuals.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn many_to_one_hand_value() {
        let a = vec![vec![550.0], vec![331.0]];
        let f = vec![vec![540.0], vec![334.0]];
        assert_abs_diff_eq!(sequence_loss(Mode::ManyToOne, &a, &f).unwrap(), 6.5, epsilon = 1e-12);
    }

    #[test]
    fn many_to_many_hand_value() {
        let a = vec![vec![502.0, 554.0, 550.0]];
        let f = vec![vec![500.0, 550.0, 560.0]];
        assert_abs_diff_eq!(
            sequence_loss(Mode::ManyToMany, &a, &f).unwrap(),
            16.0 / 3.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn zero_residual_means_zero_loss() {
        let a = vec![vec![1.5, -2.0, 0.0], vec![4.0, 4.0, 4.0]];
        assert_eq!(sequence_loss(Mode::ManyToMany, &a, &a.clone()).unwrap(), 0.0);
        let b = vec![vec![7.0]];
        assert_eq!(sequence_loss(Mode::ManyToOne, &b, &b.clone()).unwrap(), 0.0);
    }

    #[test]
    fn empty_batch_is_a_domain_error() {
        assert!(matches!(
            sequence_loss(Mode::ManyToOne, &[], &[]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn mismatched_arity_is_a_shape_error() {
        let a = vec![vec![1.0, 2.0]];
        let f = vec![vec![1.0]];
        assert!(matches!(
            sequence_loss(Mode::ManyToMany, &a, &f),
            Err(Error::Shape(_))
        ));
        // many-to-one records must carry exactly one value
        let a = vec![vec![1.0, 2.0]];
        let f = vec![vec![1.0, 2.0]];
        assert!(matches!(
            sequence_loss(Mode::ManyToOne, &a, &f),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn final_step_only_residuals_relate_the_two_losses() {
        // when only the last step has residual, the many-to-many loss is the
        // many-to-one loss of those final values divided by the step count
        let a = vec![vec![1.0, 2.0, 10.0], vec![3.0, 4.0, 20.0]];
        let f = vec![vec![1.0, 2.0, 16.0], vec![3.0, 4.0, 11.0]];
        let l2 = sequence_loss(Mode::ManyToMany, &a, &f).unwrap();
        let a1 = vec![vec![10.0], vec![20.0]];
        let f1 = vec![vec![16.0], vec![11.0]];
        let l1 = sequence_loss(Mode::ManyToOne, &a1, &f1).unwrap();
        assert_abs_diff_eq!(l2, l1 / 3.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn loss_is_symmetric(records in prop::collection::vec(
            prop::collection::vec(-1e3..1e3f64, 3), 1..8),
            other in prop::collection::vec(prop::collection::vec(-1e3..1e3f64, 3), 1..8))
        {
            let n = records.len().min(other.len());
            let a = &records[..n];
            let f = &other[..n];
            let ab = sequence_loss(Mode::ManyToMany, a, f).unwrap();
            let ba = sequence_loss(Mode::ManyToMany, f, a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ab >= 0.0);
        }
    }
}
