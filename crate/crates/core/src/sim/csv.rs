//! CSV export of a [`SimLog`].
//!
//! One header row, then one row per logged step. Floats use 17 significant
//! digits so every value parses back to the same `f64`. Columns are `t`, the
//! center block, then one block per vehicle prefixed `v{i}_` with `i`
//! starting at 1. The full list is produced by [`header`].

use std::io::{self, Write};

use super::{SimLog, StepRecord, VehicleRecord};

const CENTER_COLUMNS: [&str; 9] = [
    "center_x",
    "center_y",
    "center_z",
    "center_speed",
    "center_path_angle",
    "center_heading",
    "center_accel",
    "center_path_rate",
    "center_heading_rate",
];

const XYZ: [&str; 3] = ["x", "y", "z"];

/// Per-vehicle column stems, in order. Vector stems expand to `_x, _y, _z`.
const VEHICLE_VECTORS: [&str; 15] = [
    "pos", "vel", "ref", "ref_vel", "ref_acc", "r_hat", "v_hat", "e_p", "e_v", "e_hat_p",
    "e_hat_v", "d", "d_hat", "d_tilde", "u",
];
const VEHICLE_SCALARS: [&str; 13] = [
    "speed",
    "path_angle",
    "course_angle",
    "d_v",
    "d_gamma",
    "d_psi",
    "thrust",
    "thrust_cmd",
    "lift",
    "bank",
    "alpha",
    "u0_norm",
    "saturated",
];

pub fn header(n: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend(CENTER_COLUMNS.iter().map(|c| c.to_string()));
    for i in 1..=n {
        for stem in VEHICLE_VECTORS {
            cols.extend(XYZ.iter().map(|a| format!("v{i}_{stem}_{a}")));
        }
        cols.extend(VEHICLE_SCALARS.iter().map(|s| format!("v{i}_{s}")));
    }
    cols
}

fn vehicle_values(v: &VehicleRecord, out: &mut Vec<f64>) {
    let vectors = [
        v.state.position,
        v.state.velocity(),
        v.reference.r,
        v.reference.r_dot,
        v.reference.r_ddot,
        v.filter.r_hat,
        v.filter.v_hat,
        v.e_p,
        v.e_v,
        v.e_hat_p,
        v.e_hat_v,
        v.d_cart,
        v.d_hat,
        v.d_tilde,
        v.u,
    ];
    for x in vectors {
        out.extend(x.iter());
    }
    out.extend([
        v.state.total_speed,
        v.state.path_angle,
        v.state.course_angle,
        v.d_polar.d_v,
        v.d_polar.d_gamma,
        v.d_polar.d_psi,
        v.actuators.thrust,
        v.commanded_thrust,
        v.actuators.lift,
        v.actuators.bank,
        v.actuators.alpha,
        v.u0.norm(),
        if v.saturated { 1.0 } else { 0.0 },
    ]);
}

/// Row values in [`header`] order.
pub fn row(r: &StepRecord) -> Vec<f64> {
    let c = &r.center;
    let mut out = vec![
        r.t,
        c.position.x,
        c.position.y,
        c.position.z,
        c.speed,
        c.path_angle,
        c.heading,
        r.rates.accel,
        r.rates.path_rate,
        r.rates.heading_rate,
    ];
    for v in &r.vehicles {
        vehicle_values(v, &mut out);
    }
    out
}

/// Writes every `decimate`-th record, always including the last one.
pub fn write_log<W: Write>(log: &SimLog, decimate: usize, mut w: W) -> io::Result<()> {
    assert!(decimate >= 1, "decimation factor must be at least 1");
    writeln!(w, "{}", header(log.n).join(","))?;
    let last = log.records.len().saturating_sub(1);
    let mut line = String::new();
    for (k, r) in log.records.iter().enumerate() {
        if k % decimate != 0 && k != last {
            continue;
        }
        line.clear();
        for (j, x) in row(r).into_iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format!("{x:.16e}"));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{run, Scenario};

    fn log() -> SimLog {
        let mut sc = Scenario::vshape5();
        sc.duration = 0.1;
        run(&sc).unwrap()
    }

    #[test]
    fn header_matches_row_width() {
        let log = log();
        let h = header(log.n);
        assert_eq!(h.len(), 10 + 5 * (45 + 13));
        assert_eq!(row(&log.records[0]).len(), h.len());
        assert_eq!(h[10], "v1_pos_x");
        assert!(h.contains(&"v5_thrust".to_string()));
    }

    #[test]
    fn values_roundtrip_bit_exactly() {
        let log = log();
        let mut buf = Vec::new();
        write_log(&log, 1, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), header(5).join(","));
        for (line, rec) in lines.zip(&log.records) {
            let parsed: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
            let expected = row(rec);
            assert_eq!(parsed.len(), expected.len());
            for (a, b) in parsed.iter().zip(&expected) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn decimation_keeps_last_row() {
        let log = log();
        let mut buf = Vec::new();
        write_log(&log, 3, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let times: Vec<f64> = text
            .lines()
            .skip(1)
            .map(|l| l.split(',').next().unwrap().parse().unwrap())
            .collect();
        assert_eq!(times.len(), 5);
        assert_eq!(*times.last().unwrap(), log.records.last().unwrap().t);
    }
}
