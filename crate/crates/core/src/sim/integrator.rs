//! Classical fixed-step fourth-order Runge–Kutta.

use thiserror::Error;

/// A stage derivative contained a NaN or infinity.
#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("non-finite derivative component {index} at t = {t}")]
pub struct NonFiniteDerivative {
    pub t: f64,
    pub index: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError<E> {
    #[error(transparent)]
    NonFinite(NonFiniteDerivative),
    #[error(transparent)]
    Derivative(E),
}

/// Advances `x` from `t` to `t + dt`.
///
/// Every stage derivative is checked for finiteness before use.
pub fn rk4_step<E, F>(mut f: F, x: &[f64], t: f64, dt: f64) -> Result<Vec<f64>, StepError<E>>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>, E>,
{
    let mut eval = |t: f64, x: &[f64]| -> Result<Vec<f64>, StepError<E>> {
        let d = f(t, x).map_err(StepError::Derivative)?;
        if let Some(index) = d.iter().position(|v| !v.is_finite()) {
            return Err(StepError::NonFinite(NonFiniteDerivative { t, index }));
        }
        Ok(d)
    };
    let offset =
        |k: &[f64], h: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + h * b).collect() };
    let half = 0.5 * dt;
    let k1 = eval(t, x)?;
    let k2 = eval(t + half, &offset(&k1, half))?;
    let k3 = eval(t + half, &offset(&k2, half))?;
    let k4 = eval(t + dt, &offset(&k3, dt))?;
    Ok((0..x.len())
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn run<F>(mut f: F, x0: f64, t_end: f64, steps: usize) -> f64
    where
        F: FnMut(f64, &[f64]) -> Vec<f64>,
    {
        let dt = t_end / steps as f64;
        let mut x = vec![x0];
        for k in 0..steps {
            x = rk4_step::<Infallible, _>(|t, x| Ok(f(t, x)), &x, k as f64 * dt, dt).unwrap();
        }
        x[0]
    }

    #[test]
    fn zero_field_is_identity() {
        let x =
            rk4_step::<Infallible, _>(|_, x| Ok(vec![0.0; x.len()]), &[1.0, -2.0, 3.5], 0.0, 0.1)
                .unwrap();
        assert_eq!(x, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn exponential_decay_single_step() {
        let x = rk4_step::<Infallible, _>(|_, x| Ok(vec![-x[0]]), &[1.0], 0.0, 0.01).unwrap();
        // Local error is dt⁵/120 ≈ 8.3e-13.
        assert!((x[0] - (-0.01f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn cosine_quadrature() {
        let x = run(|t, _| vec![t.cos()], 0.0, std::f64::consts::PI, 1000);
        assert!(x.abs() < 1e-8, "x(π) = {x}");
    }

    #[test]
    fn fourth_order_convergence() {
        let err = |steps| (run(|_, x| vec![-x[0]], 1.0, 1.0, steps) - (-1f64).exp()).abs();
        let ratio = err(10) / err(20);
        assert!((14.0..18.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn non_finite_derivative_is_reported() {
        let r = rk4_step::<Infallible, _>(
            |t, _| Ok(vec![0.0, if t > 0.0 { f64::NAN } else { 1.0 }]),
            &[0.0, 0.0],
            0.0,
            0.1,
        );
        assert_eq!(
            r,
            Err(StepError::NonFinite(NonFiniteDerivative {
                t: 0.05,
                index: 1
            }))
        );
    }

    #[test]
    fn derivative_errors_propagate() {
        let r = rk4_step(|_, _| Err::<Vec<f64>, _>("boom"), &[0.0], 0.0, 0.1);
        assert_eq!(r, Err(StepError::Derivative("boom")));
    }
}
