//! CSV artifact writers and the control reader used by replay.
//!
//! Floating-point columns are written with 17 significant digits so every
//! value round-trips bit-exactly.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::analysis::WignerMap;
use crate::error::{Error, Result};
use crate::noise::NoiseScanCell;
use crate::optimize::SweepCell;
use crate::propagate::ObservableRecord;

pub fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

/// Controls sampled on the propagator's midpoint times, one position/depth
/// pair per well.
pub fn write_controls_csv(
    w: &mut (impl Write + ?Sized),
    times: &[f64],
    wells: &[(Vec<f64>, Vec<f64>)],
) -> Result<()> {
    let mut header = String::from("t");
    for i in 1..=wells.len() {
        if wells.len() == 1 {
            header.push_str(",u,beta");
        } else {
            header.push_str(&format!(",u{i},beta{i}"));
        }
    }
    writeln!(w, "{header}")?;
    for (k, &t) in times.iter().enumerate() {
        let mut row = fmt(t);
        for (u, beta) in wells {
            row.push(',');
            row.push_str(&fmt(u[k]));
            row.push(',');
            row.push_str(&fmt(beta[k]));
        }
        writeln!(w, "{row}")?;
    }
    Ok(())
}

/// Parsed contents of a controls CSV: times plus (u, beta) per well.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedControls {
    pub times: Vec<f64>,
    pub wells: Vec<(Vec<f64>, Vec<f64>)>,
}

pub fn read_controls_csv(r: &mut impl BufRead, path: &str) -> Result<LoadedControls> {
    let err = |msg: String| Error::Parse { path: path.to_string(), msg };
    let mut lines = r.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| err("empty controls file".into()))?;
    let n_cols = header.trim().split(',').count();
    if n_cols < 3 || (n_cols - 1) % 2 != 0 {
        return Err(err(format!("expected t,u,beta column groups, found: {header}")));
    }
    let n_wells = (n_cols - 1) / 2;
    let mut times = Vec::new();
    let mut wells: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); n_wells];
    for (i, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| err(format!("line {}: {e}", i + 2)))?;
        if vals.len() != n_cols {
            return Err(err(format!("line {}: expected {n_cols} columns", i + 2)));
        }
        times.push(vals[0]);
        for (well, chunk) in wells.iter_mut().zip(vals[1..].chunks_exact(2)) {
            well.0.push(chunk[0]);
            well.1.push(chunk[1]);
        }
    }
    if times.is_empty() {
        return Err(err("controls file has no samples".into()));
    }
    Ok(LoadedControls { times, wells })
}

/// Time series of the recorded observables: `t, x, p, norm, P0..P3`.
pub fn write_trajectory_csv(w: &mut (impl Write + ?Sized), rec: &ObservableRecord) -> Result<()> {
    let n_occ = rec.occupations.first().map_or(0, |p| p.len().min(4));
    let mut header = String::from("t,x_mean,p_mean,norm");
    for i in 0..n_occ {
        header.push_str(&format!(",p{i}"));
    }
    writeln!(w, "{header}")?;
    for k in 0..rec.times.len() {
        let mut row = format!(
            "{},{},{},{}",
            fmt(rec.times[k]),
            fmt(rec.x_mean[k]),
            fmt(rec.p_mean[k]),
            fmt(rec.norm[k])
        );
        if n_occ > 0 {
            for i in 0..n_occ {
                row.push(',');
                row.push_str(&fmt(rec.occupations[k][i]));
            }
        }
        writeln!(w, "{row}")?;
    }
    Ok(())
}

/// Long-form density history: `t, x, density`.
pub fn write_density_csv(
    w: &mut (impl Write + ?Sized),
    times: &[f64],
    xs: &[f64],
    rows: &[Vec<f64>],
) -> Result<()> {
    writeln!(w, "t,x,density")?;
    for (&t, row) in times.iter().zip(rows) {
        for (&x, &d) in xs.iter().zip(row) {
            writeln!(w, "{},{},{}", fmt(t), fmt(x), fmt(d))?;
        }
    }
    Ok(())
}

/// Long-form Wigner map: `x, p, w`.
pub fn write_wigner_csv(w: &mut (impl Write + ?Sized), map: &WignerMap) -> Result<()> {
    writeln!(w, "x,p,w")?;
    for (i, &x) in map.xs.iter().enumerate() {
        for (k, &p) in map.ps.iter().enumerate() {
            writeln!(w, "{},{},{}", fmt(x), fmt(p), fmt(map.values[i][k]))?;
        }
    }
    Ok(())
}

pub fn write_spectrum_csv(
    w: &mut (impl Write + ?Sized),
    energies: &[f64],
    splitting: Option<(f64, f64, f64)>,
) -> Result<()> {
    writeln!(w, "n,energy")?;
    for (n, &e) in energies.iter().enumerate() {
        writeln!(w, "{n},{}", fmt(e))?;
    }
    if let Some((w10, w21, split)) = splitting {
        writeln!(w, "# omega_10={} omega_21={} splitting={}", fmt(w10), fmt(w21), fmt(split))?;
    }
    Ok(())
}

pub fn write_sweep_csv(w: &mut (impl Write + ?Sized), cells: &[SweepCell]) -> Result<()> {
    writeln!(w, "alpha,T_over_2pi,best_infidelity,avg_excitation,evals")?;
    for c in cells {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt(c.alpha),
            fmt(c.t_over_2pi),
            fmt(c.best_infidelity),
            fmt(c.avg_excitation),
            c.n_evals
        )?;
    }
    Ok(())
}

pub fn write_noise_scan_csv(w: &mut (impl Write + ?Sized), cells: &[NoiseScanCell]) -> Result<()> {
    writeln!(w, "gamma1,gamma2,alpha,mean_infidelity,stderr,n_failed")?;
    for c in cells {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt(c.gamma1),
            fmt(c.gamma2),
            fmt(c.alpha),
            fmt(c.mean_infidelity),
            fmt(c.std_error),
            c.n_failed
        )?;
    }
    Ok(())
}
