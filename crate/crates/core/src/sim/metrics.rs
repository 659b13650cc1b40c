//! Scalar summaries of a [`SimLog`].

use serde::Serialize;
use thiserror::Error;

use super::scenario::MetricsConfig;
use super::SimLog;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("log is empty")]
    Empty,
    #[error("window [{start}, {end}] s lies outside the log range [0, {t_end}] s")]
    Window { start: f64, end: f64, t_end: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VehicleMetrics {
    /// 1-based.
    pub vehicle: usize,
    /// Peak `‖p − r‖` [m].
    pub max_position_error: f64,
    pub terminal_position_error: f64,
    /// Peak `‖v − ṙ‖` [m/s].
    pub max_velocity_error: f64,
    pub terminal_velocity_error: f64,
    /// Peak `‖p − r̂‖`, tracking of the filtered reference.
    pub max_tracking_error: f64,
    pub terminal_tracking_error: f64,
    pub terminal_tracking_velocity_error: f64,
    /// Peak and RMS of `‖p − r‖` inside the window.
    pub window_max_position_error: f64,
    pub window_rms_position_error: f64,
    /// Time after which `‖p − r‖` stays below the threshold; `None` if it
    /// is above at the end.
    pub convergence_time: Option<f64>,
    /// Mean applied thrust inside the window [N].
    pub mean_thrust: f64,
    /// `100 (T̄₁ − T̄ᵢ) / T̄₁`.
    pub thrust_reduction_percent: f64,
    /// Peak `|d̃|` per axis over the run [m/s²].
    pub max_abs_d_tilde: [f64; 3],
    /// Steps where the thrust demand was clamped.
    pub saturation_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub t_end: f64,
    pub window: [f64; 2],
    pub threshold: f64,
    pub vehicles: Vec<VehicleMetrics>,
}

impl Summary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

impl MetricsConfig {
    /// Checks that the window is non-empty and inside `[0, t_end]`.
    pub fn check_window(&self, t_end: f64, dt: f64) -> Result<(), MetricsError> {
        let [start, end] = self.window;
        let tol = 1e-9 * dt;
        if start >= -tol && start < end && end <= t_end + tol {
            Ok(())
        } else {
            Err(MetricsError::Window { start, end, t_end })
        }
    }
}

pub fn summarize(log: &SimLog, cfg: &MetricsConfig) -> Result<Summary, MetricsError> {
    let last = log.last().ok_or(MetricsError::Empty)?;
    let t_end = last.t;
    cfg.check_window(t_end, log.dt)?;
    let [start, end] = cfg.window;
    let tol = 1e-9 * log.dt;
    let in_window: Vec<usize> = (0..log.records.len())
        .filter(|&k| {
            let t = log.records[k].t;
            t >= start - tol && t <= end + tol
        })
        .collect();

    let mut vehicles: Vec<VehicleMetrics> = (0..log.n)
        .map(|i| {
            let at = |k: usize| &log.records[k].vehicles[i];
            let pos: Vec<f64> = (0..log.records.len())
                .map(|k| at(k).position_error().norm())
                .collect();
            let peak = |f: &dyn Fn(usize) -> f64| (0..log.records.len()).map(f).fold(0.0, f64::max);
            let term = at(log.records.len() - 1);
            let convergence_time = match pos.iter().rposition(|&e| e >= cfg.threshold) {
                None => Some(0.0),
                Some(k) if k + 1 < pos.len() => Some(log.records[k + 1].t),
                Some(_) => None,
            };
            let window_sq: f64 = in_window.iter().map(|&k| pos[k] * pos[k]).sum();
            let mut max_abs_d_tilde = [0.0f64; 3];
            for r in &log.records {
                let d = r.vehicles[i].d_tilde;
                for a in 0..3 {
                    max_abs_d_tilde[a] = max_abs_d_tilde[a].max(d[a].abs());
                }
            }
            VehicleMetrics {
                vehicle: i + 1,
                max_position_error: pos.iter().copied().fold(0.0, f64::max),
                terminal_position_error: term.position_error().norm(),
                max_velocity_error: peak(&|k| at(k).velocity_error().norm()),
                terminal_velocity_error: term.velocity_error().norm(),
                max_tracking_error: peak(&|k| at(k).e_p.norm()),
                terminal_tracking_error: term.e_p.norm(),
                terminal_tracking_velocity_error: term.e_v.norm(),
                window_max_position_error: in_window.iter().map(|&k| pos[k]).fold(0.0, f64::max),
                window_rms_position_error: (window_sq / in_window.len() as f64).sqrt(),
                convergence_time,
                mean_thrust: in_window
                    .iter()
                    .map(|&k| at(k).actuators.thrust)
                    .sum::<f64>()
                    / in_window.len() as f64,
                thrust_reduction_percent: 0.0,
                max_abs_d_tilde,
                saturation_count: log
                    .records
                    .iter()
                    .filter(|r| r.vehicles[i].saturated)
                    .count(),
            }
        })
        .collect();
    if let Some(reference) = vehicles.first().map(|v| v.mean_thrust) {
        for v in vehicles.iter_mut().skip(1) {
            v.thrust_reduction_percent = 100.0 * (reference - v.mean_thrust) / reference;
        }
    }
    Ok(Summary {
        t_end,
        window: cfg.window,
        threshold: cfg.threshold,
        vehicles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run, Scenario};

    fn short() -> SimLog {
        let mut sc = Scenario::vshape5();
        sc.duration = 1.0;
        run(&sc).unwrap()
    }

    #[test]
    fn window_outside_log_is_rejected() {
        let log = short();
        let bad = MetricsConfig {
            window: [0.5, 2.0],
            threshold: 0.1,
        };
        assert!(matches!(
            summarize(&log, &bad),
            Err(MetricsError::Window { .. })
        ));
        let empty = MetricsConfig {
            window: [0.5, 0.5],
            threshold: 0.1,
        };
        assert!(summarize(&log, &empty).is_err());
    }

    #[test]
    fn first_vehicle_has_no_reduction() {
        let log = short();
        let cfg = MetricsConfig {
            window: [0.0, 1.0],
            threshold: 0.1,
        };
        let s = summarize(&log, &cfg).unwrap();
        assert!(s
            .vehicles
            .iter()
            .all(|v| v.thrust_reduction_percent.is_finite()));
        assert_eq!(s.vehicles[0].thrust_reduction_percent, 0.0);
        assert_eq!(s.vehicles.len(), 5);
        // Vehicles start roughly 100 m from their references.
        assert!(s.vehicles.iter().all(|v| v.convergence_time.is_none()));
        assert!(s.to_json().contains("\"mean_thrust\""));
    }

    #[test]
    fn empty_log() {
        let log = SimLog {
            dt: 0.01,
            n: 0,
            records: vec![],
        };
        assert_eq!(
            summarize(&log, &MetricsConfig::default()),
            Err(MetricsError::Empty)
        );
    }
}
