use crate::error::{Error, Result};

/// Minimum number of equispaced points in the coarse scan.
pub const MIN_SCAN_POINTS: usize = 1001;
const GOLDEN_TOL: f64 = 1e-6;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Location and value of a maximum found on a closed interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
    /// Set when the scan saw more than one local maximum or exact ties.
    pub multimodal: bool,
}

/// Maximize `f` on `[lo, hi]` with a 1001-point scan plus golden-section refinement.
///
/// NaN evaluations are treated as `-inf`. Boundary maxima are returned as exactly
/// `lo` or `hi`; among tied scan maxima the smallest abscissa wins.
pub fn argmax_on_interval(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<Maximum> {
    argmax_with_scan(f, lo, hi, MIN_SCAN_POINTS)
}

pub fn argmax_with_scan(f: impl Fn(f64) -> f64, lo: f64, hi: f64, scan_points: usize) -> Result<Maximum> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::domain(format!("argmax requires lo < hi, got [{lo}, {hi}]")));
    }
    let eval = |x: f64| {
        let v = f(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let n = scan_points.max(MIN_SCAN_POINTS);
    let step = (hi - lo) / (n - 1) as f64;
    let xs: Vec<f64> = (0..n).map(|i| if i == n - 1 { hi } else { lo + step * i as f64 }).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| eval(x)).collect();

    let mut best = 0;
    for i in 1..n {
        if ys[i] > ys[best] {
            best = i;
        }
    }
    if ys[best] == f64::NEG_INFINITY {
        return Err(Error::Evaluation { node: lo, reason: "function is -inf or NaN on the whole scan".into() });
    }
    let tied: Vec<usize> = (0..n).filter(|&i| ys[i] == ys[best]).collect();
    let ties = tied.len();
    // two adjacent equal points straddle a smooth peak; anything else is a genuine tie
    let adjacent_pair = ties == 2 && tied[1] == tied[0] + 1;
    let local_maxima = (0..n)
        .filter(|&i| {
            let left = i == 0 || ys[i] > ys[i - 1];
            let right = i == n - 1 || ys[i] > ys[i + 1];
            left && right && ys[i] > f64::NEG_INFINITY
        })
        .count();
    let multimodal = (ties > 1 && !adjacent_pair) || local_maxima > 1;
    if ties > 1 && !adjacent_pair {
        return Ok(Maximum { x: xs[best], value: ys[best], multimodal });
    }

    let a = xs[best.saturating_sub(1)];
    let b = xs[(best + if adjacent_pair { 2 } else { 1 }).min(n - 1)];
    let (x_ref, y_ref) = golden_section(&eval, a, b);
    let mut out = if y_ref > ys[best] { (x_ref, y_ref) } else { (xs[best], ys[best]) };
    if best == 0 || best == n - 1 {
        // boundary candidate: snap to the endpoint unless refinement found a strictly better interior point
        let edge = xs[best];
        let y_edge = ys[best];
        if y_edge >= out.1 || (out.0 - edge).abs() <= GOLDEN_TOL {
            out = (edge, y_edge);
        }
    }
    Ok(Maximum { x: out.0, value: out.1, multimodal })
}

fn golden_section(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > GOLDEN_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    [(x, fx), (c, fc), (d, fd)].into_iter().fold((x, fx), |acc, p| if p.1 > acc.1 { p } else { acc })
}
