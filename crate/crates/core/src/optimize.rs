//! One-dimensional search: golden-section minimization and monotone bisection.

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Minimizes a unimodal `f` on `[a, b]`; stops when the bracket is narrower
/// than `tol · max(1, |x|)`. Returns `(x_min, f_min)`.
pub fn golden_section_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..500 {
        if (b - a).abs() <= tol * x1.abs().max(x2.abs()).max(1.0) {
            break;
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Maximizes `f` on `[lo, hi]`: a fixed `scan` point sweep followed by
/// golden-section refinement between the neighbours of the best sample.
pub fn scan_then_refine_max(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    scan: usize,
    tol: f64,
) -> (f64, f64) {
    assert!(scan >= 3);
    let h = (hi - lo) / (scan - 1) as f64;
    let mut best = (lo, f(lo));
    let mut best_i = 0;
    for i in 1..scan {
        let x = lo + h * i as f64;
        let v = f(x);
        if v > best.1 {
            best = (x, v);
            best_i = i;
        }
    }
    let a = lo + h * best_i.saturating_sub(1) as f64;
    let b = lo + h * (best_i + 1).min(scan - 1) as f64;
    let (x, neg) = golden_section_min(|x| -f(x), a, b, tol);
    if -neg >= best.1 {
        (x, -neg)
    } else {
        best
    }
}

/// Solves `f(x) = target` for a decreasing `f` on `[lo, hi]` by bisection,
/// with `f(lo) ≥ target ≥ f(hi)`. Iterates until `|f(x) − target| ≤
/// rel_tol · target` or the bracket stops shrinking.
pub fn bisect_decreasing(
    f: impl Fn(f64) -> f64,
    target: f64,
    mut lo: f64,
    mut hi: f64,
    rel_tol: f64,
) -> f64 {
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..400 {
        mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if (v - target).abs() <= rel_tol * target.abs() {
            break;
        }
        if v > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    mid
}
