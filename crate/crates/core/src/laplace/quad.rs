/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub(crate) fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    refine(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn refine(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Cumulative integrals `∫_0^{s_i} f` at increasing points `s`, by composite
/// Simpson on each gap (including `[0, s_0]`) with `f` evaluated at the gap
/// midpoints. `f_at(x)` is called `2 len + 1` times.
pub(crate) fn cumulative_simpson(points: &[f64], f_at: &(dyn Fn(f64) -> f64 + Sync)) -> Vec<f64> {
    use rayon::prelude::*;
    let mut nodes = Vec::with_capacity(2 * points.len() + 1);
    nodes.push(0.0);
    let mut prev = 0.0;
    for &s in points {
        nodes.push(0.5 * (prev + s));
        nodes.push(s);
        prev = s;
    }
    let values: Vec<f64> = nodes.par_iter().map(|&x| f_at(x)).collect();
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(points.len());
    for i in 0..points.len() {
        let (a, b) = (nodes[2 * i], nodes[2 * i + 2]);
        acc += (b - a) / 6.0 * (values[2 * i] + 4.0 * values[2 * i + 1] + values[2 * i + 2]);
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_integrates_smooth_functions() {
        let v = adaptive_simpson(&|x: f64| x.exp(), 0.0, 1.0, 1e-12);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-11);
        let v = adaptive_simpson(&|x: f64| 1.0 / (1.0 + x / 2.0).powi(2), 0.0, 1000.0, 1e-10);
        assert!((v - 2.0 * (1.0 - 1.0 / 501.0)).abs() < 1e-8);
    }

    #[test]
    fn cumulative_simpson_matches_antiderivative() {
        let pts: Vec<f64> = (1..=50).map(|i| 0.1 * 1.1f64.powi(i)).collect();
        let out = cumulative_simpson(&pts, &|x: f64| (-x).exp());
        for (s, v) in pts.iter().zip(out) {
            assert!((v - (1.0 - (-s).exp())).abs() < 1e-6);
        }
    }
}
