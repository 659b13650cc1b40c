//! End-to-end properties of the simulator on the shipped preset.

use formation_core::sim::{csv, run, Override, Scenario, SimLog};
use formation_core::wake::{DisturbanceKind, DisturbanceSpec, PolarDisturbance};
use proptest::prelude::*;

fn short(duration: f64, dt: f64) -> Scenario {
    let mut sc = Scenario::vshape5();
    sc.duration = duration;
    sc.dt = dt;
    sc
}

/// Stacked vehicle positions and velocities at `t`.
fn states_at(log: &SimLog, t: f64) -> Vec<f64> {
    let r = &log.records[log.index_at(t)];
    assert!((r.t - t).abs() < 1e-9, "{t} is not on the grid");
    r.vehicles
        .iter()
        .flat_map(|v| {
            let (p, w) = (v.state.position, v.state.velocity());
            [p.x, p.y, p.z, w.x, w.y, w.z]
        })
        .collect()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[test]
fn halving_the_step_converges() {
    // Crosses the first breakpoint at 10 s, which lies on every grid.
    let t = 12.0;
    let logs: Vec<SimLog> = [0.02, 0.01, 0.005]
        .into_iter()
        .map(|dt| run(&short(t, dt)).unwrap())
        .collect();
    let x: Vec<Vec<f64>> = logs.iter().map(|l| states_at(l, t)).collect();
    let coarse = distance(&x[0], &x[2]);
    let fine = distance(&x[1], &x[2]);
    assert!(fine < coarse / 2.0, "coarse {coarse:.3e}, fine {fine:.3e}");
    assert!(fine < 1e-2, "fine {fine:.3e}");
}

#[test]
fn runs_are_bit_identical() {
    let mut sc = short(3.0, 0.01);
    sc.disturbance = DisturbanceSpec::with_model(DisturbanceKind::Sinusoid {
        amplitude: PolarDisturbance::new(1.0, 0.01, 0.01),
        frequency: PolarDisturbance::splat(0.5),
        phase: PolarDisturbance::default(),
        phase_step: 0.0,
        random_phase: true,
    });
    let write = |log: &SimLog| {
        let mut buf = Vec::new();
        csv::write_log(log, 1, &mut buf).unwrap();
        buf
    };
    let a = write(&run(&sc).unwrap());
    let b = write(&run(&sc).unwrap());
    assert_eq!(a, b);

    sc.seed += 1;
    assert_ne!(
        write(&run(&sc).unwrap()),
        a,
        "the seed drives the random phases"
    );
}

#[test]
fn csv_rows_match_header() {
    let log = run(&short(0.5, 0.01)).unwrap();
    let mut buf = Vec::new();
    csv::write_log(&log, 7, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header, csv::header(5));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert!(rows.iter().all(|r| r.len() == header.len()));
    // Every 7th step plus the final one.
    assert_eq!(rows.len(), 50 / 7 + 2);
    assert_eq!(rows.last().unwrap()[0], 0.5);
}

#[test]
fn echoed_scenario_reproduces_the_run() {
    let sc = short(1.0, 0.01);
    let echoed = Scenario::from_toml_str(&sc.to_toml_string(), &[]).unwrap();
    assert_eq!(run(&sc).unwrap(), run(&echoed).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gain_overrides_survive_the_echo(kp in 0.05f64..2.0, kv in 0.5f64..4.0, tau in 0.05f64..1.0) {
        let overrides = [
            Override::parse(&format!("controller.Kp.y={kp}")).unwrap(),
            Override::parse(&format!("controller.Kv.z={kv}")).unwrap(),
            Override::parse(&format!("controller.ude_time_constant.x={tau}")).unwrap(),
            Override::parse(&format!("controller.ude_time_constant.y={tau}")).unwrap(),
            Override::parse(&format!("controller.ude_time_constant.z={tau}")).unwrap(),
        ];
        let text = Scenario::vshape5().to_toml_string();
        let sc = Scenario::from_toml_str(&text, &overrides).unwrap();
        prop_assert_eq!(sc.controller.kp.y, kp);
        prop_assert_eq!(sc.controller.kv.z, kv);
        prop_assert!(sc.ude_time_constants.iter().all(|&t| t == tau));
        let again = Scenario::from_toml_str(&sc.to_toml_string(), &[]).unwrap();
        prop_assert_eq!(again.to_toml_string(), sc.to_toml_string());
    }

    #[test]
    fn references_stay_rigid(scale in 0.2f64..3.0) {
        let mut sc = short(2.0, 0.01);
        for o in sc.layout.offsets.iter_mut() {
            *o *= scale;
        }
        let log = run(&sc).unwrap();
        let r0: Vec<_> = log.records[0].vehicles.iter().map(|v| v.reference.r).collect();
        for rec in &log.records {
            for i in 0..5 {
                for j in i + 1..5 {
                    let d = (rec.vehicles[i].reference.r - rec.vehicles[j].reference.r).norm();
                    prop_assert!((d - (r0[i] - r0[j]).norm()).abs() < 1e-9);
                }
            }
        }
    }
}
