/// Least-squares line `y ≈ intercept + slope · x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    /// Residual sum of squares, weighted when the fit is.
    pub sse: f64,
    /// Coefficient of determination; 0 when `y` is constant.
    pub r2: f64,
}

pub(crate) fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    fit_weighted(xs, ys, &vec![1.0; xs.len()])
}

/// Weighted least squares with non-negative weights `ws`.
pub(crate) fn fit_weighted(xs: &[f64], ys: &[f64], ws: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || n != ys.len() || n != ws.len() {
        return None;
    }
    let sw: f64 = ws.iter().sum();
    if sw.is_nan() || sw <= 0.0 {
        return None;
    }
    let mx = xs.iter().zip(ws).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = ys.iter().zip(ws).map(|(y, w)| y * w).sum::<f64>() / sw;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for ((&x, &y), &w) in xs.iter().zip(ys).zip(ws) {
        let (dx, dy) = (x - mx, y - my);
        sxx += w * dx * dx;
        sxy += w * dx * dy;
        syy += w * dy * dy;
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .zip(ws)
        .map(|((&x, &y), &w)| {
            let r = y - intercept - slope * x;
            w * r * r
        })
        .sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 0.0 };
    Some(LineFit {
        intercept,
        slope,
        sse,
        r2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.5 * x).collect();
        let f = fit_line(&xs, &ys).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14);
        assert!((f.intercept - 3.0).abs() < 1e-14);
        assert!(f.sse < 1e-25);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(fit_line(&[1.0], &[2.0]).is_none());
        assert!(fit_line(&[1.0, 1.0], &[2.0, 3.0]).is_none());
        assert_eq!(fit_line(&[1.0, 2.0], &[5.0, 5.0]).unwrap().r2, 0.0);
        assert!(fit_weighted(&[1.0, 2.0], &[1.0, 2.0], &[0.0, 0.0]).is_none());
    }

    #[test]
    fn weights_pull_towards_heavy_points() {
        // heavy points on y = x, one light outlier
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [0.0, 1.0, 2.0, 10.0];
        let f = fit_weighted(&xs, &ys, &[1e6, 1e6, 1e6, 1e-6]).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-6);
        let g = fit_weighted(&xs, &ys, &[1.0; 4]).unwrap();
        assert_eq!(g, fit_line(&xs, &ys).unwrap());
    }
}
