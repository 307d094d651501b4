//! Least-squares line fits used by the decay and crossing statistics.

#[derive(Debug, Clone, Copy)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let p = intercept + slope * x;
            (y - p) * (y - p)
        })
        .sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    LinearFit {
        slope,
        intercept,
        r2,
    }
}

/// Fits y_k ~ a * ratio^k by regressing log y on k. Requires positive data.
pub fn geometric_fit(ys: &[f64]) -> Option<(f64, LinearFit)> {
    if ys.iter().any(|&y| y <= 0.0) || ys.len() < 3 {
        return None;
    }
    let ks: Vec<f64> = (0..ys.len()).map(|k| k as f64).collect();
    let logs: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let fit = linear_fit(&ks, &logs);
    Some((fit.slope.exp(), fit))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let f = linear_fit(&xs, &ys);
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_geometric_sequence() {
        let ys = [8.0, 4.0, 2.0, 1.0, 0.5];
        let (ratio, fit) = geometric_fit(&ys).unwrap();
        assert!((ratio - 0.5).abs() < 1e-12);
        assert!(fit.r2 > 0.999999);
    }
}
