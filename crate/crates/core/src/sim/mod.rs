//! Fixed-step simulation of the whole formation.
//!
//! The formation center, every cooperative filter, every vehicle and every
//! UDE integral share one state vector advanced by [`integrator::rk4_step`]:
//!
//! ```text
//! [ center (6) | filters (6n) | vehicles (6n) | UDE integrals (3n) ]
//! ```
//!
//! Scheduled center rates are sampled at each step's midpoint and held for
//! all four stages, so a breakpoint on the step grid never falls inside a
//! step. The UDE integrand is evaluated at the same stages as the plant,
//! which keeps `d̂` consistent with the integrated velocity.

pub mod csv;
pub mod integrator;
pub mod metrics;
pub mod scenario;

use serde::Serialize;
use thiserror::Error;

use crate::controller::{baseline_control, composite_control, TrackingErrors, UdeState};
use crate::graph::FormationGraph;
use crate::planner::{
    center_derivative, filter_step_derivative, leader_refs, CenterRates, FilterState,
    FormationCenterState, VirtualLeaderRef,
};
use crate::vehicle::{
    cartesian_to_polar, disturbance_to_cartesian, polar_to_actuators, state_derivative,
    ActuatorCommands, UavState, VehicleError,
};
use crate::wake::{DisturbanceModel, PolarDisturbance};
use crate::Vec3;

use integrator::{rk4_step, StepError};
pub use scenario::{Override, Scenario, ScenarioError};

const CENTER_FIELDS: [&str; 6] = ["x", "y", "z", "speed", "path_angle", "heading"];
const FILTER_FIELDS: [&str; 6] = [
    "r_hat_x", "r_hat_y", "r_hat_z", "v_hat_x", "v_hat_y", "v_hat_z",
];
const VEHICLE_FIELDS: [&str; 6] = ["x", "y", "z", "speed", "path_angle", "course_angle"];
const UDE_FIELDS: [&str; 3] = ["u0_integral_x", "u0_integral_y", "u0_integral_z"];

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("t = {t} s, vehicle {vehicle}: {source}")]
    Vehicle {
        t: f64,
        /// 1-based.
        vehicle: usize,
        source: VehicleError,
    },
    #[error("t = {t} s: non-finite derivative of {owner} field `{field}`")]
    NonFinite {
        t: f64,
        owner: String,
        field: &'static str,
    },
}

/// Where a component of the concatenated state lives.
fn describe_index(index: usize, n: usize) -> (String, &'static str) {
    let block = 6 * n;
    if index < 6 {
        ("center".into(), CENTER_FIELDS[index])
    } else if index < 6 + block {
        let k = index - 6;
        (format!("filter {}", k / 6 + 1), FILTER_FIELDS[k % 6])
    } else if index < 6 + 2 * block {
        let k = index - 6 - block;
        (format!("vehicle {}", k / 6 + 1), VEHICLE_FIELDS[k % 6])
    } else {
        let k = index - 6 - 2 * block;
        (format!("UDE {}", k / 3 + 1), UDE_FIELDS[k % 3])
    }
}

/// Everything logged for one vehicle at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VehicleRecord {
    pub state: UavState,
    #[serde(skip)]
    pub reference: VirtualLeaderRef,
    #[serde(skip)]
    pub filter: FilterState,
    /// `p − r̂`
    pub e_p: Vec3,
    /// `v − v̂`
    pub e_v: Vec3,
    /// `r̂ − r`
    pub e_hat_p: Vec3,
    /// `v̂ − ṙ`
    pub e_hat_v: Vec3,
    pub d_polar: PolarDisturbance,
    pub d_cart: Vec3,
    pub d_hat: Vec3,
    /// `d̂ − d`
    pub d_tilde: Vec3,
    pub u0: Vec3,
    pub u: Vec3,
    #[serde(skip)]
    pub actuators: ActuatorCommands,
    pub commanded_thrust: f64,
    pub saturated: bool,
}

impl VehicleRecord {
    /// `p − r`, which equals `ê_p + e_p`.
    pub fn position_error(&self) -> Vec3 {
        self.state.position - self.reference.r
    }

    /// `v − ṙ`
    pub fn velocity_error(&self) -> Vec3 {
        self.state.velocity() - self.reference.r_dot
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub center: FormationCenterState,
    pub rates: CenterRates,
    pub vehicles: Vec<VehicleRecord>,
}

/// One record per grid point `t_k = k dt`, `k = 0..=steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub dt: f64,
    pub n: usize,
    pub records: Vec<StepRecord>,
}

impl SimLog {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&StepRecord> {
        self.records.last()
    }

    /// Index of the grid point nearest to `t`.
    pub fn index_at(&self, t: f64) -> usize {
        let k = (t / self.dt).round().max(0.0) as usize;
        k.min(self.records.len().saturating_sub(1))
    }
}

/// Resolved scenario plus the objects built from it.
pub struct Simulation {
    sc: Scenario,
    graph: FormationGraph,
    model: DisturbanceModel,
    v0: Vec<Vec3>,
}

struct Evaluation {
    derivative: Vec<f64>,
    vehicles: Vec<VehicleRecord>,
}

impl Simulation {
    pub fn new(sc: Scenario) -> Result<Self, SimError> {
        sc.validate()?;
        let graph = sc.graph().map_err(ScenarioError::from)?;
        let model = sc.disturbance_model().map_err(ScenarioError::from)?;
        let v0 = sc.initial.iter().map(UavState::velocity).collect();
        Ok(Self {
            sc,
            graph,
            model,
            v0,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.sc
    }

    pub fn graph(&self) -> &FormationGraph {
        &self.graph
    }

    fn n(&self) -> usize {
        self.sc.n()
    }

    /// Concatenated state at `t = 0`; UDE integrals start at zero.
    pub fn initial_state(&self) -> Vec<f64> {
        let n = self.n();
        let mut x = vec![0.0; 6 + 15 * n];
        self.sc.center.write_to(&mut x[..6]);
        for i in 0..n {
            self.sc.filter_initial[i].write_to(&mut x[6 + 6 * i..12 + 6 * i]);
            self.sc.initial[i].write_to(&mut x[6 + 6 * n + 6 * i..12 + 6 * n + 6 * i]);
        }
        x
    }

    fn evaluate(&self, t: f64, x: &[f64], rates: &CenterRates) -> Result<Evaluation, SimError> {
        let n = self.n();
        let (fo, vo, uo) = (6, 6 + 6 * n, 6 + 12 * n);
        let center = FormationCenterState::from_slice(&x[..6]);
        let filters: Vec<FilterState> = (0..n)
            .map(|i| FilterState::from_slice(&x[fo + 6 * i..]))
            .collect();
        let states: Vec<UavState> = (0..n)
            .map(|i| UavState::from_slice(&x[vo + 6 * i..]))
            .collect();
        let integrals: Vec<Vec3> = (0..n)
            .map(|i| Vec3::from_column_slice(&x[uo + 3 * i..uo + 3 * i + 3]))
            .collect();

        let refs = leader_refs(&center, rates, &self.sc.layout);
        let filter_rates =
            filter_step_derivative(&filters, &refs, &self.graph, &self.sc.filter_gains);
        let errors: Vec<TrackingErrors> = (0..n)
            .map(|i| TrackingErrors {
                e_p: states[i].position - filters[i].r_hat,
                e_v: states[i].velocity() - filters[i].v_hat,
            })
            .collect();

        let mut dx = vec![0.0; x.len()];
        dx[..6].copy_from_slice(&center_derivative(&center, rates));
        let mut vehicles = Vec::with_capacity(n);
        for i in 0..n {
            let s = &states[i];
            let fail = |source| SimError::Vehicle {
                t,
                vehicle: i + 1,
                source,
            };
            let u0 = baseline_control(
                i,
                &errors,
                &refs[i].r_ddot,
                &self.graph,
                &self.sc.controller,
            );
            let ude = UdeState {
                time_constants: self.sc.ude_time_constants,
                u0_integral: integrals[i],
                v0: self.v0[i],
            };
            let d_hat = ude.estimate(&s.velocity());
            let u = composite_control(&u0, &d_hat);
            let polar = cartesian_to_polar(&u, s).map_err(fail)?;
            let solution = polar_to_actuators(&polar, s, &self.sc.airframe, self.sc.thrust_limit)
                .map_err(fail)?;
            let d_polar = self.model.disturbance_at(i, &states, t);
            let rate = state_derivative(s, &solution.commands, &d_polar, &self.sc.airframe)
                .map_err(fail)?;

            let mut integrand = u0;
            if self.sc.anti_windup {
                let deficit = solution.commands.thrust - solution.commanded_thrust;
                integrand += s.forward() * (deficit / self.sc.airframe.mass);
            }

            filter_rates[i].write_to(&mut dx[fo + 6 * i..fo + 6 * i + 6]);
            dx[vo + 6 * i..vo + 6 * i + 6].copy_from_slice(&rate.to_array());
            dx[uo + 3 * i..uo + 3 * i + 3].copy_from_slice(integrand.as_slice());

            let d_cart = disturbance_to_cartesian(&d_polar, s);
            let (e_hat_p, e_hat_v) = filters[i].errors(&refs[i]);
            vehicles.push(VehicleRecord {
                state: *s,
                reference: refs[i],
                filter: filters[i],
                e_p: errors[i].e_p,
                e_v: errors[i].e_v,
                e_hat_p,
                e_hat_v,
                d_polar,
                d_cart,
                d_hat,
                d_tilde: d_hat - d_cart,
                u0,
                u,
                actuators: solution.commands,
                commanded_thrust: solution.commanded_thrust,
                saturated: solution.saturated(),
            });
        }
        Ok(Evaluation {
            derivative: dx,
            vehicles,
        })
    }

    fn record(&self, t: f64, x: &[f64], rates: CenterRates) -> Result<StepRecord, SimError> {
        let eval = self.evaluate(t, x, &rates)?;
        Ok(StepRecord {
            t,
            center: FormationCenterState::from_slice(&x[..6]),
            rates,
            vehicles: eval.vehicles,
        })
    }

    /// Integrates the full horizon, logging every grid point.
    pub fn run(&self) -> Result<SimLog, SimError> {
        let n = self.n();
        let dt = self.sc.dt;
        let steps = self.sc.steps();
        let mut x = self.initial_state();
        let mut records = Vec::with_capacity(steps + 1);
        for k in 0..steps {
            let t = k as f64 * dt;
            let rates = self.sc.command.rates_at(t + 0.5 * dt);
            records.push(self.record(t, &x, rates)?);
            x = rk4_step(
                |tau, y| self.evaluate(tau, y, &rates).map(|e| e.derivative),
                &x,
                t,
                dt,
            )
            .map_err(|e| match e {
                StepError::Derivative(e) => e,
                StepError::NonFinite(nf) => {
                    let (owner, field) = describe_index(nf.index, n);
                    SimError::NonFinite {
                        t: nf.t,
                        owner,
                        field,
                    }
                }
            })?;
        }
        let t_end = steps as f64 * dt;
        let rates = self.sc.command.rates_at(t_end + 0.5 * dt);
        records.push(self.record(t_end, &x, rates)?);
        Ok(SimLog { dt, n, records })
    }
}

/// Builds and runs `sc`.
pub fn run(sc: &Scenario) -> Result<SimLog, SimError> {
    Simulation::new(sc.clone())?.run()
}
