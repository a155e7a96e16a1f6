//! Fixed-schema CSV tables and plain-text summaries.
//!
//! Every number is written with six significant digits in scientific
//! notation, so identical inputs always give byte-identical files.

use std::fs;
use std::path::Path;

use crate::circuit::{EnergyLedger, SimResult};
use crate::device::DeviceModel;
use crate::energy::HarvestSummary;
use crate::error::Result;
use crate::mech::{MotionTrace, ResponsePoint};
use crate::sweep::{SweepMap, SweepResult};

/// Six significant digits.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.5e}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        let bytes = w.into_inner().expect("in-memory flush");
        String::from_utf8(bytes).expect("csv of utf-8 fields")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

pub const ENERGY_COLUMNS: [&str; 7] = [
    "v_in_V",
    "c_max_F",
    "c_min_F",
    "f_Hz",
    "E_J",
    "P_W",
    "density_uW_per_cm3",
];

pub fn energy_table(rows: &[HarvestSummary]) -> Table {
    let mut t = Table::new(ENERGY_COLUMNS);
    for s in rows {
        t.push(
            [s.op.v_in, s.op.c_max, s.op.c_min, s.op.frequency, s.energy, s.power, s.density]
                .map(num)
                .to_vec(),
        );
    }
    t
}

pub fn energy_text(s: &HarvestSummary) -> String {
    format!(
        "Harvest operating point\n\
         \x20 V_in         {:.3} V\n\
         \x20 C_max        {:.2} pF\n\
         \x20 C_min        {:.2} pF\n\
         \x20 frequency    {:.2} Hz\n\
         \x20 volume       {:.2} mm^3\n\
         Results\n\
         \x20 energy/cycle {:.4} nJ\n\
         \x20 power        {:.4} uW\n\
         \x20 density      {:.2} uW/cm^3\n",
        s.op.v_in,
        s.op.c_max * 1e12,
        s.op.c_min * 1e12,
        s.op.frequency,
        s.op.device_volume * 1e9,
        s.energy * 1e9,
        s.power * 1e6,
        s.density,
    )
}

pub const TRAJECTORY_COLUMNS: [&str; 7] =
    ["t_s", "c_var_F", "v_var_V", "v_store_V", "v_out_V", "i_fly_A", "flags"];

pub fn trajectory_table(run: &SimResult) -> Table {
    let mut t = Table::new(TRAJECTORY_COLUMNS);
    for s in &run.samples {
        let mut row: Vec<String> =
            [s.t, s.c_var, s.v_var, s.v_store, s.v_out, s.i_fly].map(num).to_vec();
        row.push(s.conduction.label());
        t.push(row);
    }
    t
}

pub fn ledger_table(l: &EnergyLedger) -> Table {
    let mut t = Table::new(["term", "value_J"]);
    for (k, v) in [
        ("e_mech_in", l.e_mech_in),
        ("e_source", l.e_source),
        ("e_load", l.e_load),
        ("e_dissipated", l.e_dissipated),
        ("e_stored_delta", l.e_stored_delta),
        ("net_converted", l.net_converted),
        ("e_flyback_to_res", l.e_flyback_to_res),
        ("residual", l.residual()),
        ("relative_residual", l.relative_residual()),
    ] {
        t.push(vec![k.into(), num(v)]);
    }
    t
}

pub fn sweep_table(r: &SweepResult) -> Table {
    let mut t = Table::new(["axis", "value", "metric", "flag"]);
    for p in &r.points {
        t.push(vec![
            r.axis.name().into(),
            num(p.value),
            p.metric.map_or_else(String::new, num),
            p.flag().into(),
        ]);
    }
    t
}

/// Metric grid with the row axis values down the first column.
pub fn map_table(m: &SweepMap) -> Table {
    let corner = format!("{}\\{}", m.row_axis.name(), m.col_axis.name());
    let mut t = Table::new(std::iter::once(corner).chain(m.cols.iter().map(|&c| num(c))));
    for (i, &r) in m.rows.iter().enumerate() {
        let mut row = vec![num(r)];
        row.extend((0..m.cols.len()).map(|j| m.cell(i, j).metric.map_or_else(String::new, num)));
        t.push(row);
    }
    t
}

/// Long format of a 2-D map.
pub fn map_long_table(m: &SweepMap) -> Table {
    let mut t = Table::new([m.row_axis.name(), m.col_axis.name(), "metric", "flag"]);
    for (i, &r) in m.rows.iter().enumerate() {
        for (j, &c) in m.cols.iter().enumerate() {
            let p = m.cell(i, j);
            t.push(vec![
                num(r),
                num(c),
                p.metric.map_or_else(String::new, num),
                p.flag().into(),
            ]);
        }
    }
    t
}

pub fn motion_table(trace: &MotionTrace) -> Table {
    let mut t = Table::new(["time_s", "x_m"]);
    for (ti, x) in trace.time.iter().zip(&trace.displacement) {
        t.push(vec![num(*ti), num(*x)]);
    }
    t
}

pub fn response_table(resp: &[ResponsePoint]) -> Table {
    let mut t = Table::new(["f_Hz", "peak_x_m"]);
    for p in resp {
        t.push(vec![num(p.frequency), num(p.peak_displacement)]);
    }
    t
}

/// Capacitance over the travel range on `n` evenly spaced points.
pub fn device_table(dev: &DeviceModel, n: usize) -> Result<Table> {
    let mut t = Table::new(["x_m", "c_F"]);
    let lim = dev.geometry.stopper_limit;
    for i in 0..n {
        let x = if n == 1 { 0.0 } else { -lim + 2.0 * lim * i as f64 / (n - 1) as f64 };
        t.push(vec![num(x), num(dev.capacitance(x)?)]);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(num(3.74e-6), "3.74000e-6");
        assert_eq!(num(-0.0012345678), "-1.23457e-3");
        assert_eq!(num(f64::INFINITY), "inf");
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = energy_table(&[]);
        assert_eq!(t.to_csv(), format!("{}\n", ENERGY_COLUMNS.join(",")));
    }

    #[test]
    fn commas_are_quoted() {
        let mut t = Table::new(["a"]);
        t.push(vec!["x, y".into()]);
        assert_eq!(t.to_csv(), "a\n\"x, y\"\n");
    }
}
