//! CSV and JSON serialization of grids, point clouds and observable reports.
//!
//! Floats are written in scientific notation with 17 significant digits so
//! that files round-trip exactly.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::coherent::PhasePoint;
use crate::dynamics::ensemble::TrajectoryEnsemble;
use crate::error::{Error, Result};
use crate::expectation::{Estimator, ObservableReport};
use crate::grid::{GridGeometry, PhaseGrid2};

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("i/o: {e}"))
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse(s: &str) -> Result<f64> {
    s.trim().parse().map_err(|e| io_err(format!("bad number {s:?}: {e}")))
}

/// Writes a two-site grid as rows `p2,q2,value`, p-major.
pub fn write_grid_csv<W: Write>(grid: &PhaseGrid2, out: W) -> Result<()> {
    let g = grid.geometry();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["p2", "q2", "value"]).map_err(io_err)?;
    for i in 0..g.n_p {
        for j in 0..g.n_q {
            w.write_record([fmt(g.p(i)), fmt(g.q(j)), fmt(grid.get(i, j))]).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

/// Reads a grid written by [`write_grid_csv`] with the given geometry.
pub fn read_grid_csv<R: Read>(geometry: GridGeometry, input: R) -> Result<PhaseGrid2> {
    let mut r = csv::Reader::from_reader(input);
    let mut values = Vec::with_capacity(geometry.len());
    for rec in r.records() {
        let rec = rec.map_err(io_err)?;
        let v = rec.get(2).ok_or_else(|| io_err("missing value column"))?;
        values.push(parse(v)?);
    }
    PhaseGrid2::new(geometry, values)
}

/// Sidecar metadata for a grid file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridHeader {
    pub n_p: usize,
    pub n_q: usize,
    pub sites: usize,
    pub particles: usize,
    pub time: f64,
    pub kind: String,
}

impl GridHeader {
    pub fn geometry(&self) -> Result<GridGeometry> {
        GridGeometry::new(self.n_p, self.n_q)
    }
}

/// Writes points as rows `weight,p1..pM,q1..qM`.
pub fn write_cloud_csv<W: Write>(points: &[PhasePoint], weights: &[f64], out: W) -> Result<()> {
    if points.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            found: weights.len(),
        });
    }
    let m = points.first().map_or(0, PhasePoint::sites);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["weight".to_string()];
    header.extend((1..=m).map(|k| format!("p{k}")));
    header.extend((1..=m).map(|k| format!("q{k}")));
    w.write_record(&header).map_err(io_err)?;
    for (pt, wt) in points.iter().zip(weights) {
        let row = std::iter::once(*wt).chain(pt.p().iter().copied()).chain(pt.q().iter().copied()).map(fmt);
        w.write_record(row).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn write_ensemble_csv<W: Write>(ens: &TrajectoryEnsemble, out: W) -> Result<()> {
    write_cloud_csv(ens.points(), ens.weights(), out)
}

/// Reads an ensemble written by [`write_ensemble_csv`], stamping it with `time`.
pub fn read_ensemble_csv<R: Read>(input: R, time: f64) -> Result<TrajectoryEnsemble> {
    let mut r = csv::Reader::from_reader(input);
    let cols = r.headers().map_err(io_err)?.len();
    if cols < 3 || cols % 2 == 0 {
        return Err(io_err(format!("unexpected column count {cols}")));
    }
    let m = (cols - 1) / 2;
    let (mut points, mut weights) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec.map_err(io_err)?;
        let vals = rec.iter().map(parse).collect::<Result<Vec<f64>>>()?;
        weights.push(vals[0]);
        points.push(PhasePoint::new(vals[1..=m].to_vec(), vals[m + 1..].to_vec())?);
    }
    TrajectoryEnsemble::new(points, weights, time)
}

/// One serialized observable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub jk: [usize; 2],
    pub re: f64,
    pub im: f64,
    pub stderr: f64,
    pub estimator: Estimator,
    #[serde(rename = "N")]
    pub particles: usize,
    #[serde(rename = "M")]
    pub sites: usize,
    pub t: f64,
}

impl ReportRow {
    pub fn new(report: &ObservableReport, particles: usize, sites: usize, t: f64) -> Self {
        Self {
            jk: [report.pair.j, report.pair.k],
            re: report.value.re,
            im: report.value.im,
            stderr: report.mc_stderr,
            estimator: report.estimator,
            particles,
            sites,
            t,
        }
    }
}

/// Writes rows as `t,j,k,re,im,stderr,estimator,N,M`.
pub fn write_reports_csv<W: Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "j", "k", "re", "im", "stderr", "estimator", "N", "M"]).map_err(io_err)?;
    for r in rows {
        let est = serde_json::to_value(r.estimator).map_err(io_err)?;
        w.write_record([
            fmt(r.t),
            r.jk[0].to_string(),
            r.jk[1].to_string(),
            fmt(r.re),
            fmt(r.im),
            fmt(r.stderr),
            est.as_str().unwrap_or_default().to_string(),
            r.particles.to_string(),
            r.sites.to_string(),
        ])
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn write_reports_json<W: Write>(rows: &[ReportRow], out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, rows).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherent::AmplitudeParams;
    use crate::fock::SitePair;
    use num_complex::Complex64;

    #[test]
    fn grid_round_trip_is_exact() {
        let g = GridGeometry::new(12, 8).unwrap();
        let grid = PhaseGrid2::from_fn(g, |p, q| (p * 3.1).exp() * q.sin() / 7.0);
        let mut buf = Vec::new();
        write_grid_csv(&grid, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("p2,q2,value\n"));
        assert_eq!(text.lines().count(), 1 + 96);
        assert_eq!(read_grid_csv(g, buf.as_slice()).unwrap(), grid);
    }

    #[test]
    fn ensemble_round_trip_is_exact() {
        let x0 = AmplitudeParams::from_unnormalized(vec![Complex64::new(0.4, 0.1), Complex64::new(0.2, -0.9), Complex64::new(0.3, 0.3)]).unwrap();
        let ens = TrajectoryEnsemble::from_husimi_coherent(&x0, 5, 30, 1).unwrap();
        let mut buf = Vec::new();
        write_ensemble_csv(&ens, &mut buf).unwrap();
        let back = read_ensemble_csv(buf.as_slice(), ens.time()).unwrap();
        assert_eq!(back, ens);
    }

    #[test]
    fn report_rows_use_documented_keys() {
        let r = ObservableReport {
            pair: SitePair::new(0, 1),
            value: Complex64::new(1.5, -0.25),
            estimator: Estimator::QIntegral,
            mc_stderr: 0.01,
        };
        let v = serde_json::to_value(ReportRow::new(&r, 4, 2, 0.0)).unwrap();
        for key in ["jk", "re", "im", "stderr", "estimator", "N", "M", "t"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["estimator"], "q_integral");
    }

    #[test]
    fn report_csv_has_one_line_per_row() {
        let r = ObservableReport {
            pair: SitePair::new(1, 0),
            value: Complex64::new(0.5, 2.0),
            estimator: Estimator::Fock,
            mc_stderr: 0.0,
        };
        let rows = vec![ReportRow::new(&r, 3, 2, 0.0), ReportRow::new(&r, 3, 2, 0.5)];
        let mut buf = Vec::new();
        write_reports_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,j,k,re,im,stderr,estimator,N,M");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("5.0000000000000000e-1,1,0,"));
        assert!(lines[2].ends_with(",fock,3,2"));
    }
}
