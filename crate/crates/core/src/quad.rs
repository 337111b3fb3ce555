//! Composite Simpson quadrature for the smooth one-dimensional integrals
//! (radial mollifier moments, similarity-profile normalizations).

pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals.max(2) + intervals % 2;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_cubics() {
        let v = simpson(|x| x * x * x - 2.0 * x, 0.0, 2.0, 2);
        assert!((v - 0.0).abs() < 1e-14);
    }

    #[test]
    fn converges_on_smooth_integrand() {
        let v = simpson(f64::sin, 0.0, std::f64::consts::PI, 4000);
        assert!((v - 2.0).abs() < 1e-12);
    }
}
