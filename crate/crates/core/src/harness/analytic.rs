use super::config::AnalyticParams;

/// Which analytic output drives refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalyticQoi {
    /// Smooth sum of Gaussians on `[-2, 2]^2`.
    G1,
    /// Indicator of an annulus complement on `[0, 1]^2`.
    G2,
}

/// Evaluate `G1` or `G2` at a point of its native box.
pub fn analytic_qoi(which: AnalyticQoi, y: &[f64], params: &AnalyticParams) -> f64 {
    let (y1, y2) = (y[0], y[1]);
    match which {
        AnalyticQoi::G1 => {
            -(-(y1 - 1.0).powi(2)).exp()
                + (-0.8 * (y1 + 1.0).powi(2)).exp() * (-(y2 - 1.0).powi(2)).exp()
                + (-0.8 * (y2 + 1.0)).exp()
        }
        AnalyticQoi::G2 => {
            let rr = y1 * y1 + y2 * y2;
            if rr < params.r1 || rr > params.r2 {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Synthetic iteration count `exp(-a1^2 (y1-u1)^2 - a2^2 (y2-u2)^2) + 1`.
pub fn analytic_iters(y: &[f64], params: &AnalyticParams) -> f64 {
    let d1 = params.a1 * (y[0] - params.u1);
    let d2 = params.a2 * (y[1] - params.u2);
    (-d1 * d1 - d2 * d2).exp() + 1.0
}
