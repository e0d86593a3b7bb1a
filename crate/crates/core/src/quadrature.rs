//! Composite Gauss–Legendre quadrature on panels split at breakpoints.

/// 8-point Gauss–Legendre abscissae on [-1, 1].
pub const GL8_NODES: [f64; 8] = [
    -0.9602898564975362,
    -0.7966664774136267,
    -0.525532409916329,
    -0.18343464249564978,
    0.18343464249564978,
    0.525532409916329,
    0.7966664774136267,
    0.9602898564975362,
];

/// Matching 8-point weights (sum to 2).
pub const GL8_WEIGHTS: [f64; 8] = [
    0.10122853629037669,
    0.22238103445337434,
    0.31370664587788705,
    0.36268378337836177,
    0.36268378337836177,
    0.31370664587788705,
    0.22238103445337434,
    0.10122853629037669,
];

/// Sorted panel boundaries covering `[start, end]`: the given breakpoints
/// inside the interval, with wide gaps split evenly so that no panel exceeds
/// `max_width`.
pub fn panel_bounds(breakpoints: impl IntoIterator<Item = f64>, start: f64, end: f64, max_width: f64) -> Vec<f64> {
    let mut pts: Vec<f64> = breakpoints.into_iter().filter(|&t| t > start && t < end).collect();
    pts.push(start);
    pts.push(end);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut out = Vec::with_capacity(pts.len());
    out.push(pts[0]);
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let pieces = ((b - a) / max_width).ceil().max(1.0) as usize;
        for i in 1..pieces {
            out.push(a + (b - a) * i as f64 / pieces as f64);
        }
        out.push(b);
    }
    out
}

/// Offsets from the panel start and weights of the 8 nodes on a panel of width `h`.
#[inline]
pub fn panel_nodes(h: f64) -> impl Iterator<Item = (f64, f64)> {
    GL8_NODES
        .iter()
        .zip(GL8_WEIGHTS.iter())
        .map(move |(&x, &w)| (0.5 * h * (x + 1.0), 0.5 * h * w))
}

/// Integrates `f` over `[a, b]` on panels no wider than `max_width`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, max_width: f64) -> f64 {
    let bounds = panel_bounds(std::iter::empty(), a, b, max_width);
    bounds
        .windows(2)
        .map(|w| panel_nodes(w[1] - w[0]).map(|(s, wt)| wt * f(w[0] + s)).sum::<f64>())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        let s: f64 = GL8_WEIGHTS.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn exact_for_degree_15() {
        let f = |x: f64| x.powi(15) + 3.0 * x.powi(14) - x;
        let got = integrate(f, 0.0, 1.0, 10.0);
        let want = 1.0 / 16.0 + 3.0 / 15.0 - 0.5;
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn bounds_split_wide_gaps() {
        let b = panel_bounds([0.5, 3.0, 7.0], 0.0, 4.0, 1.0);
        assert_eq!(b.first(), Some(&0.0));
        assert_eq!(b.last(), Some(&4.0));
        assert!(b.contains(&0.5) && b.contains(&3.0) && !b.contains(&7.0));
        assert!(b.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] <= 1.0 + 1e-12));
    }

    #[test]
    fn exponential_panel_accuracy() {
        let got = integrate(|t| (-t).exp(), 0.0, 30.0, 1.0);
        let want = 1.0 - (-30.0f64).exp();
        assert!((got - want).abs() < 1e-14);
    }
}
