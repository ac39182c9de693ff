use super::params::Parameters;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Central-difference gradient of `f`, one entry at a time.
pub fn finite_diff_gradient<P, F>(f: F, params: &P, h: f64) -> P
where
    P: Parameters,
    F: Fn(&P) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut grad = params.zeros_like();
    let mut probe = params.clone();
    let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    for (ti, &len) in shapes.iter().enumerate() {
        for i in 0..len {
            let orig = probe.tensors()[ti][i];
            probe.tensors_mut()[ti][i] = orig + h;
            let up = f(&probe);
            probe.tensors_mut()[ti][i] = orig - h;
            let down = f(&probe);
            probe.tensors_mut()[ti][i] = orig;
            grad.tensors_mut()[ti][i] = (up - down) / (2.0 * h);
        }
    }
    grad
}

/// `|a − b| / max(|a|, |b|, floor)`. With `floor = abs_tol / rel_tol` a value
/// `≤ rel_tol` means "within `rel_tol` relative or `abs_tol` absolute".
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Largest [`relative_error`] over all entries of two parameter sets.
pub fn max_relative_error<P: Parameters>(a: &P, b: &P, floor: f64) -> f64 {
    a.tensors()
        .iter()
        .zip(b.tensors())
        .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| relative_error(*u, *v, floor)))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heads::HeadKind;
    use crate::nn::params::ModelParams;

    #[test]
    fn sum_of_squares_gradient() {
        let mut p = ModelParams::zeros(2, 3, HeadKind::Exponential).unwrap();
        for t in p.tensors_mut() {
            t.fill(1.0);
        }
        let f = |q: &ModelParams| -> f64 {
            q.tensors().iter().flat_map(|t| t.iter()).map(|v| v * v).sum()
        };
        let g = finite_diff_gradient(f, &p, DEFAULT_STEP);
        for v in g.tensors().iter().flat_map(|t| t.iter()) {
            assert!((v - 2.0).abs() < 1e-8, "{v}");
        }
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let p = ModelParams::init(2, 2, HeadKind::Hazard, 3).unwrap();
        let g = finite_diff_gradient(|_: &ModelParams| 4.2, &p, DEFAULT_STEP);
        assert!(g.tensors().iter().flat_map(|t| t.iter()).all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0, 1e-3), 0.0);
        assert!((relative_error(2.0, 1.0, 1e-3) - 0.5).abs() < 1e-15);
        // below the floor the comparison is absolute
        assert!((relative_error(1e-9, 2e-9, 1e-3) - 1e-6).abs() < 1e-18);
    }
}
