//! Runnable property suites.
//!
//! Each suite draws its cases from a fixed seed, so a pass or failure
//! reproduces exactly. Results carry a short measured detail for the report.

use std::convert::Infallible;
use std::str::FromStr;

use nalgebra::{Complex, DMatrix, Schur};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controller::{closed_loop_matrix, modal_decomposition, ControllerGains, UdeState};
use crate::graph::{lemma2_min_eigenvalue, FormationGraph, PinningMatrix};
use crate::planner::{filter_error_matrix, FilterGains};
use crate::sim::integrator::rk4_step;
use crate::vehicle::{
    actuators_to_polar, cartesian_to_polar, polar_to_actuators, polar_to_cartesian, PolarControls,
    ThrustLimit, UavParams, UavState,
};
use crate::Vec3;

const SEED: u64 = 0x5eed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Graph,
    Filter,
    Ude,
    Conversions,
    ClosedLoop,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 6] =
        ["graph", "filter", "ude", "conversions", "closedloop", "all"];
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "graph" => Suite::Graph,
            "filter" => Suite::Filter,
            "ude" => Suite::Ude,
            "conversions" => Suite::Conversions,
            "closedloop" => Suite::ClosedLoop,
            "all" => Suite::All,
            other => {
                return Err(format!(
                    "unknown suite `{other}`; expected one of {}",
                    Suite::NAMES.join(", ")
                ))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl PropertyResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

pub fn run_suite(suite: Suite) -> Vec<PropertyResult> {
    match suite {
        Suite::Graph => graph_suite(),
        Suite::Filter => filter_suite(),
        Suite::Ude => ude_suite(),
        Suite::Conversions => conversion_suite(),
        Suite::ClosedLoop => closed_loop_suite(),
        Suite::All => [
            graph_suite(),
            filter_suite(),
            ude_suite(),
            conversion_suite(),
            closed_loop_suite(),
        ]
        .concat(),
    }
}

/// Connected graph on `n` vertices: a random spanning tree plus random extra edges.
pub fn random_connected_graph(rng: &mut impl Rng, n: usize) -> FormationGraph {
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.gen_range(0..v), v));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.3) {
                edges.push((i, j));
            }
        }
    }
    FormationGraph::new(n, &edges).expect("indices in range")
}

fn random_positive(rng: &mut impl Rng, lo: f64, hi: f64) -> Vec3 {
    Vec3::from_fn(|_, _| rng.gen_range(lo..hi))
}

/// The five-aircraft topology used by the shipped preset.
pub fn vshape5_graph() -> FormationGraph {
    FormationGraph::from_one_based(5, &[(1, 2), (1, 3), (2, 3), (2, 4), (3, 4), (3, 5), (4, 5)])
        .expect("valid topology")
}

/// Largest real part of the eigenvalues of a general square matrix, or NaN
/// when the Schur iteration does not converge.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    let eps = 1e-14 * m.norm().max(1.0);
    match Schur::try_new(m.clone(), eps, 100_000) {
        Some(schur) => schur
            .complex_eigenvalues()
            .iter()
            .map(|c: &Complex<f64>| c.re)
            .fold(f64::NEG_INFINITY, f64::max),
        None => f64::NAN,
    }
}

fn graph_suite() -> Vec<PropertyResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let cases = 1000;
    let (mut worst_zero, mut min_lambda2, mut min_lemma2) = (0.0f64, f64::INFINITY, f64::INFINITY);
    for _ in 0..cases {
        let n = rng.gen_range(2..=8);
        let g = random_connected_graph(&mut rng, n);
        let spectrum = g.laplacian_spectrum();
        worst_zero = worst_zero.max(spectrum[0].abs());
        min_lambda2 = min_lambda2.min(spectrum[1]);
        let mut pins: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen_bool(0.4) {
                    rng.gen_range(0.1..3.0)
                } else {
                    0.0
                }
            })
            .collect();
        if pins.iter().all(|&b| b == 0.0) {
            pins[rng.gen_range(0..n)] = rng.gen_range(0.1..3.0);
        }
        let b = PinningMatrix::new(pins).expect("nonnegative pins");
        let c1 = random_positive(&mut rng, 0.05, 5.0);
        let c2 = random_positive(&mut rng, 0.05, 5.0);
        let value = lemma2_min_eigenvalue(&g, &b, &c1, &c2).expect("connected");
        min_lemma2 = min_lemma2.min(value);
    }
    vec![
        PropertyResult::new(
            "laplacian has a zero eigenvalue",
            worst_zero <= 1e-9,
            format!("max |λ_min(L)| = {worst_zero:.3e} over {cases} graphs"),
        ),
        PropertyResult::new(
            "connected graphs have positive algebraic connectivity",
            min_lambda2 > 0.0,
            format!("min λ₂ = {min_lambda2:.4}"),
        ),
        PropertyResult::new(
            "pinned coupling is positive definite",
            min_lemma2 > 1e-9,
            format!("min λ_min(L⊗C₁ + B⊗C₂) = {min_lemma2:.3e}"),
        ),
    ]
}

fn filter_suite() -> Vec<PropertyResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let preset = spectral_abscissa(&filter_error_matrix(
        &vshape5_graph(),
        &FilterGains::default(),
    ));
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..100 {
        let n = rng.gen_range(2..=8);
        let g = random_connected_graph(&mut rng, n);
        let gains = FilterGains {
            kappa_p: random_positive(&mut rng, 0.05, 5.0),
            kappa_v: random_positive(&mut rng, 0.05, 5.0),
            c_p: random_positive(&mut rng, 0.05, 5.0),
            c_v: random_positive(&mut rng, 0.05, 5.0),
        };
        worst = worst.max(spectral_abscissa(&filter_error_matrix(&g, &gains)));
    }
    vec![
        PropertyResult::new(
            "preset filter error system is Hurwitz",
            preset < 0.0,
            format!("max Re λ = {preset:.4}"),
        ),
        PropertyResult::new(
            "random filter error systems are Hurwitz",
            worst < 0.0,
            format!("max Re λ over 100 draws = {worst:.3e}"),
        ),
    ]
}

/// Peak `|d̃|` for a scalar double integrator `v̇ = u₀ − d̂ + d(t)` with
/// `u₀ = −v`, integrated with RK4 alongside the UDE integral.
///
/// Returns `(max |d̃|, |d̃(t_end)|)`.
pub fn scalar_ude_response(d: impl Fn(f64) -> f64, tau: f64, t_end: f64, dt: f64) -> (f64, f64) {
    let ude = |x: &[f64]| {
        UdeState {
            time_constants: Vec3::repeat(tau),
            u0_integral: Vec3::new(x[1], 0.0, 0.0),
            v0: Vec3::zeros(),
        }
        .estimate(&Vec3::new(x[0], 0.0, 0.0))
        .x
    };
    let f = |t: f64, x: &[f64]| -> Result<Vec<f64>, Infallible> {
        let u0 = -x[0];
        Ok(vec![u0 - ude(x) + d(t), u0])
    };
    let steps = (t_end / dt).round() as usize;
    let mut x = vec![0.0, 0.0];
    let mut peak = (ude(&x) - d(0.0)).abs();
    let mut last = peak;
    for k in 0..steps {
        let t = k as f64 * dt;
        x = rk4_step(f, &x, t, dt).expect("smooth scalar system");
        last = (ude(&x) - d(t + dt)).abs();
        peak = peak.max(last);
    }
    (peak, last)
}

fn ude_suite() -> Vec<PropertyResult> {
    let tau = 0.2;
    let mut out = Vec::new();
    for amplitude in [0.1, 1.0] {
        for omega in [0.5, 2.0] {
            let (peak, _) = scalar_ude_response(|t| amplitude * (omega * t).sin(), tau, 20.0, 1e-3);
            let bound = (tau * amplitude * omega).max(0.0) + 1e-3;
            out.push(PropertyResult::new(
                &format!("sinusoid A={amplitude} ω={omega} stays within 𝒯Aω"),
                peak <= bound,
                format!("max |d̃| = {peak:.5}, bound {bound:.5}"),
            ));
        }
    }
    for value in [0.5, -2.0] {
        let (peak, last) = scalar_ude_response(|_| value, tau, 8.0, 1e-3);
        out.push(PropertyResult::new(
            &format!("constant d={value} is recovered"),
            last < 1e-4 && peak <= value.abs() + 1e-9,
            format!("|d̃(8 s)| = {last:.3e}, max {peak:.4}"),
        ));
    }
    out
}

pub fn random_envelope_state(rng: &mut impl Rng) -> UavState {
    UavState {
        position: random_positive(rng, -1e3, 1e3),
        total_speed: rng.gen_range(60.0..200.0),
        path_angle: rng.gen_range(-1.2..1.2),
        course_angle: rng.gen_range(-3.1..3.1),
    }
}

/// Worst relative errors of the Cartesian/polar roundtrip and of the
/// polar → actuator → polar reconstruction over `cases` random states.
pub fn conversion_errors(cases: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = UavParams::baseline(UavParams::DEFAULT_AIR_DENSITY, 120.0);
    let (mut cart, mut act) = (0.0f64, 0.0f64);
    for _ in 0..cases {
        let s = random_envelope_state(&mut rng);
        let u = random_positive(&mut rng, -20.0, 20.0);
        let polar = cartesian_to_polar(&u, &s).expect("inside envelope");
        let back = polar_to_cartesian(&polar, &s);
        cart = cart.max((back - u).norm() / u.norm().max(1.0));

        let p = PolarControls {
            u_v: rng.gen_range(-5.0..5.0),
            u_gamma: rng.gen_range(-0.2..0.2),
            u_psi: rng.gen_range(-0.2..0.2),
        };
        let sol =
            polar_to_actuators(&p, &s, &params, ThrustLimit::Unlimited).expect("inside envelope");
        let q = actuators_to_polar(&sol.commands, &s, &params).expect("inside envelope");
        let err = Vec3::new(q.u_v - p.u_v, q.u_gamma - p.u_gamma, q.u_psi - p.u_psi).norm();
        act = act.max(err / Vec3::new(p.u_v, p.u_gamma, p.u_psi).norm().max(1.0));
    }
    (cart, act)
}

fn conversion_suite() -> Vec<PropertyResult> {
    let (cart, act) = conversion_errors(10_000, SEED + 2);
    vec![
        PropertyResult::new(
            "cartesian ↔ polar roundtrip",
            cart < 1e-9,
            format!("max relative error {cart:.3e}"),
        ),
        PropertyResult::new(
            "polar → actuators → polar reconstruction",
            act < 1e-9,
            format!("max relative error {act:.3e}"),
        ),
    ]
}

fn closed_loop_suite() -> Vec<PropertyResult> {
    let g = vshape5_graph();
    let coop = ControllerGains::default();
    let solo = ControllerGains {
        cooperative: false,
        ..coop
    };
    let abscissa = spectral_abscissa(&closed_loop_matrix(&g, &coop));
    let modes = modal_decomposition(&g, &coop);
    let solo_modes = modal_decomposition(&g, &solo);
    let mut reduced = true;
    let mut lyap_residual = 0.0f64;
    if let (Ok(m), Ok(s)) = (&modes, &solo_modes) {
        for (mc, ms) in m.iter().zip(s).skip(1) {
            for a in 0..3 {
                reduced &= mc.axes[a].dc_gain_printed < ms.axes[a].dc_gain_printed
                    && mc.axes[a].dc_gain_consistent < ms.axes[a].dc_gain_consistent;
            }
        }
        for mode in m {
            for ax in &mode.axes {
                let r = ax.lyapunov * ax.a
                    + ax.a.transpose() * ax.lyapunov
                    + nalgebra::Matrix2::identity();
                lyap_residual = lyap_residual.max(r.norm());
            }
        }
    }
    vec![
        PropertyResult::new(
            "closed-loop tracking error system is Hurwitz",
            abscissa < 0.0,
            format!("max Re λ = {abscissa:.4}"),
        ),
        PropertyResult::new(
            "every Laplacian mode is Hurwitz",
            modes.is_ok(),
            modes
                .as_ref()
                .err()
                .map_or("all modes stable".into(), |e| e.to_string()),
        ),
        PropertyResult::new(
            "coupling lowers the DC gain of every λ > 0 mode",
            reduced && solo_modes.is_ok(),
            "both transfer-function orderings compared".into(),
        ),
        PropertyResult::new(
            "modal Lyapunov equations are solved",
            lyap_residual < 1e-10,
            format!("max residual {lyap_residual:.3e}"),
        ),
    ]
}
