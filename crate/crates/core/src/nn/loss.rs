use crate::{Error, Result};

/// Added under the square root so the gradient stays finite at a perfect fit.
pub const RMSE_EPS: f64 = 1e-12;

/// Root mean squared error and its gradient w.r.t. `pred`.
pub fn rmse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.is_empty() || pred.len() != target.len() {
        return Err(Error::Argument(format!(
            "rmse over {} predictions and {} targets",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len() as f64;
    let mse = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n;
    let loss = (mse + RMSE_EPS).sqrt();
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) / (n * loss))
        .collect();
    Ok((loss, grad))
}

/// Plain RMSE, used for reporting.
pub fn rmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.is_empty() || pred.len() != target.len() {
        return Err(Error::Argument("rmse over mismatched or empty vectors".into()));
    }
    let mse = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64;
    Ok(mse.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_fit_is_near_zero() {
        let (l, g) = rmse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert!((l - 1e-6).abs() < 1e-12);
        assert!(g.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn single_element_is_abs_diff() {
        let (l, _) = rmse_loss(&[0.0], &[2.0]).unwrap();
        assert!((l - 2.0).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_pair() {
        let (l, _) = rmse_loss(&[1.0, 3.0], &[0.0, 0.0]).unwrap();
        assert!((l - 5f64.sqrt()).abs() < 1e-12);
        assert!((l - 2.23607).abs() < 1e-5);
    }

    #[test]
    fn empty_is_argument_error() {
        assert!(matches!(rmse_loss(&[], &[]), Err(Error::Argument(_))));
        assert!(rmse_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn gradient_matches_finite_difference(
            pairs in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..=10)
        ) {
            let pred: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let target: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let (loss, grad) = rmse_loss(&pred, &target).unwrap();
            prop_assume!(loss > 1e-3);
            let h = 1e-6;
            for i in 0..pred.len() {
                let mut up = pred.clone();
                up[i] += h;
                let mut dn = pred.clone();
                dn[i] -= h;
                let fd = (rmse_loss(&up, &target).unwrap().0 - rmse_loss(&dn, &target).unwrap().0) / (2.0 * h);
                prop_assert!((fd - grad[i]).abs() < 1e-6, "i={} fd={} an={}", i, fd, grad[i]);
            }
        }
    }
}
