//! Agreement statistics between two score series.

use crate::error::{Error, Result};

fn check_pair(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::shape("paired series", xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(Error::validation("need at least two pairs"));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::validation("series contain non-finite values"));
    }
    Ok(())
}

/// Pearson correlation. Zero variance in either series is an error.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("correlation with a zero-variance series".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn mse(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    Ok(xs.iter().zip(ys).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / xs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn analytic_cases() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let doubled: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        assert_eq!(pearson(&xs, &doubled).unwrap(), 1.0);
        let rev: Vec<f64> = xs.iter().rev().copied().collect();
        assert_eq!(pearson(&xs, &rev).unwrap(), -1.0);
        // sxy = 3, sxx = 2, syy = 14/3
        let want = 3.0 / (2.0f64 * 14.0 / 3.0).sqrt();
        let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert!((r - want).abs() < 1e-15);
        assert!((r - 0.98198).abs() < 1e-5);
        assert!((mse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::Undefined(_))));
        assert!(pearson(&[1.0], &[2.0]).is_err());
        assert!(mse(&[1.0, 2.0], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn bounded_and_affine_invariant(
            pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40),
            a in 0.1f64..10.0,
            b in -50.0f64..50.0,
        ) {
            let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            if let Ok(r) = pearson(&xs, &ys) {
                prop_assert!(r.abs() <= 1.0 + 1e-12);
                let scaled: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
                let r2 = pearson(&scaled, &ys).unwrap();
                prop_assert!((r - r2).abs() < 1e-9);
            }
        }
    }
}
