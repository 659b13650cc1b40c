//! Baseline cooperative tracking law, UDE disturbance estimation and the
//! modal stability diagnostics of the closed loop.
//!
//! Tracking errors are taken against the filtered virtual leader:
//! `e_p = p − r̂`, `e_v = v − v̂`.

use nalgebra::{Complex, DMatrix, Matrix2, Matrix4, SymmetricEigen, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{coupled_gain, FormationGraph};
use crate::planner::{check_positive, neighbor_sum, second_order_matrix, PlannerError};
use crate::Vec3;

type Complex64 = Complex<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error(transparent)]
    Gain(#[from] PlannerError),
    #[error("UDE time constant on axis {axis} must be positive, got {value}")]
    TimeConstant { axis: char, value: f64 },
    #[error("mode λ = {lambda} on axis {axis} is not Hurwitz (eigenvalues {eigenvalues:?})")]
    NotHurwitz {
        lambda: f64,
        axis: char,
        eigenvalues: [Complex64; 2],
    },
    #[error("modal analysis needs a connected graph")]
    Disconnected,
}

/// Diagonal gains of the baseline law, shared by every vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    pub kp: Vec3,
    pub kv: Vec3,
    pub cp: Vec3,
    pub cv: Vec3,
    /// When false the neighbor coupling terms are dropped.
    pub cooperative: bool,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            kp: Vec3::new(0.25, 0.4, 0.3),
            kv: Vec3::new(1.5, 1.75, 1.75),
            cp: Vec3::repeat(0.15),
            cv: Vec3::repeat(0.55),
            cooperative: true,
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<(), ControllerError> {
        check_positive(&[
            ("Kp", self.kp),
            ("Kv", self.kv),
            ("Cp", self.cp),
            ("Cv", self.cv),
        ])?;
        Ok(())
    }

    /// Coupling gains actually in effect.
    pub fn effective_coupling(&self) -> (Vec3, Vec3) {
        if self.cooperative {
            (self.cp, self.cv)
        } else {
            (Vec3::zeros(), Vec3::zeros())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrackingErrors {
    pub e_p: Vec3,
    pub e_v: Vec3,
}

/// `u₀ᵢ = r̈ᵢ − K_p e_pᵢ − K_v e_vᵢ − Σⱼ [C_p (e_pᵢ − e_pⱼ) + C_v (e_vᵢ − e_vⱼ)]`.
pub fn baseline_control(
    i: usize,
    errors: &[TrackingErrors],
    ref_accel: &Vec3,
    g: &FormationGraph,
    gains: &ControllerGains,
) -> Vec3 {
    let own = &errors[i];
    let mut u = ref_accel - gains.kp.component_mul(&own.e_p) - gains.kv.component_mul(&own.e_v);
    if gains.cooperative {
        let ep: Vec<Vec3> = errors.iter().map(|e| e.e_p).collect();
        let ev: Vec<Vec3> = errors.iter().map(|e| e.e_v).collect();
        u -= gains.cp.component_mul(&neighbor_sum(g, i, &ep))
            + gains.cv.component_mul(&neighbor_sum(g, i, &ev));
    }
    u
}

/// `u = u₀ − d̂`.
pub fn composite_control(u0: &Vec3, d_hat: &Vec3) -> Vec3 {
    u0 - d_hat
}

/// Integral-form uncertainty and disturbance estimator of one vehicle.
///
/// `d̂ = (v(t) − v(0) − ∫₀ᵗ u₀ dτ) / 𝒯`, so `d̂(0) = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UdeState {
    pub time_constants: Vec3,
    pub u0_integral: Vec3,
    pub v0: Vec3,
}

impl UdeState {
    pub fn new(time_constants: Vec3, v0: Vec3) -> Result<Self, ControllerError> {
        validate_time_constants(&time_constants)?;
        Ok(Self {
            time_constants,
            u0_integral: Vec3::zeros(),
            v0,
        })
    }

    pub fn estimate(&self, v_now: &Vec3) -> Vec3 {
        (v_now - self.v0 - self.u0_integral).component_div(&self.time_constants)
    }

    /// Advances the integral over one step with Simpson's rule, the
    /// quadrature RK4 reduces to for a time-only integrand.
    pub fn update(&mut self, u0_start: &Vec3, u0_mid: &Vec3, u0_end: &Vec3, dt: f64) {
        self.u0_integral += (u0_start + 4.0 * u0_mid + u0_end) * (dt / 6.0);
    }
}

pub fn validate_time_constants(t: &Vec3) -> Result<(), ControllerError> {
    for (axis, value) in ['x', 'y', 'z'].into_iter().zip(t.iter().copied()) {
        if !(value > 0.0) || !value.is_finite() {
            return Err(ControllerError::TimeConstant { axis, value });
        }
    }
    Ok(())
}

/// Stacked closed-loop matrix of `[e_p; e_v]` without disturbance (6n × 6n).
pub fn closed_loop_matrix(g: &FormationGraph, gains: &ControllerGains) -> DMatrix<f64> {
    let (cp, cv) = gains.effective_coupling();
    second_order_matrix(
        &coupled_gain(g, &gains.kp, &cp),
        &coupled_gain(g, &gains.kv, &cv),
    )
}

/// One decoupled 2 × 2 error subsystem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisMode {
    /// `[[0, 1], [−K_p − λC_p, −K_v − λC_v]]`
    pub a: Matrix2<f64>,
    pub eigenvalues: [Complex64; 2],
    /// Position DC gain as printed in the transfer function: `1/(K_v + λC_v)`.
    pub dc_gain_printed: f64,
    /// Position DC gain implied by `a`: `1/(K_p + λC_p)`.
    pub dc_gain_consistent: f64,
    /// Solution of `P A + Aᵀ P = −I`.
    pub lyapunov: Matrix2<f64>,
    /// Ultimate-bound coefficient `2 λ_max(P)² / λ_min(P)`.
    pub bound_coefficient: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMode {
    pub lambda: f64,
    /// Unit eigenvector of `L`; the first mode is `1ₙ/√n`.
    pub eigenvector: Vec<f64>,
    /// Modes for the x, y and z axes.
    pub axes: [AxisMode; 3],
}

/// Diagonalises the closed loop by the Laplacian eigenbasis.
pub fn modal_decomposition(
    g: &FormationGraph,
    gains: &ControllerGains,
) -> Result<Vec<LaplacianMode>, ControllerError> {
    if !g.is_connected() {
        return Err(ControllerError::Disconnected);
    }
    let n = g.len();
    let eig = SymmetricEigen::new(g.laplacian());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (cp, cv) = gains.effective_coupling();
    let mut modes = Vec::with_capacity(n);
    for (k, &col) in order.iter().enumerate() {
        let lambda = if k == 0 { 0.0 } else { eig.eigenvalues[col] };
        let eigenvector = if k == 0 {
            vec![1.0 / (n as f64).sqrt(); n]
        } else {
            eig.eigenvectors.column(col).iter().copied().collect()
        };
        let mut axes = Vec::with_capacity(3);
        for (axis_idx, axis) in ['x', 'y', 'z'].into_iter().enumerate() {
            let p = gains.kp[axis_idx] + lambda * cp[axis_idx];
            let v = gains.kv[axis_idx] + lambda * cv[axis_idx];
            let mode = axis_mode(p, v);
            if !(mode.eigenvalues.iter().all(|e| e.re < 0.0)) {
                return Err(ControllerError::NotHurwitz {
                    lambda,
                    axis,
                    eigenvalues: mode.eigenvalues,
                });
            }
            axes.push(mode);
        }
        modes.push(LaplacianMode {
            lambda,
            eigenvector,
            axes: [axes[0], axes[1], axes[2]],
        });
    }
    Ok(modes)
}

fn axis_mode(p: f64, v: f64) -> AxisMode {
    let a = Matrix2::new(0.0, 1.0, -p, -v);
    // Roots of s² + v s + p.
    let disc = Complex64::new(v * v - 4.0 * p, 0.0).sqrt();
    let eigenvalues = [(-v - disc) / 2.0, (-v + disc) / 2.0];
    let lyapunov = solve_lyapunov(&a);
    let pe = lyapunov.symmetric_eigenvalues();
    let (lo, hi) = (pe.min(), pe.max());
    AxisMode {
        a,
        eigenvalues,
        dc_gain_printed: 1.0 / v,
        dc_gain_consistent: 1.0 / p,
        lyapunov,
        bound_coefficient: 2.0 * hi * hi / lo,
    }
}

/// Solves `P A + Aᵀ P = −I` through the vectorised 4 × 4 system.
pub fn solve_lyapunov(a: &Matrix2<f64>) -> Matrix2<f64> {
    let at = a.transpose();
    // vec(Aᵀ P + P A) = (I ⊗ Aᵀ + Aᵀ ⊗ I) vec(P) with column-major vec.
    let mut m = Matrix4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                // (I ⊗ Aᵀ): block (i, i) holds Aᵀ.
                m[(2 * i + j, 2 * i + k)] += at[(j, k)];
                // (Aᵀ ⊗ I): block (i, k) holds Aᵀ[i, k]·I.
                m[(2 * i + j, 2 * k + j)] += at[(i, k)];
            }
        }
    }
    let rhs = Vector4::new(-1.0, 0.0, 0.0, -1.0);
    let x = m.lu().solve(&rhs).unwrap_or_else(Vector4::zeros);
    let p = Matrix2::new(x[0], x[2], x[1], x[3]);
    (p + p.transpose()) * 0.5
}
