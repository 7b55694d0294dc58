//! Dimensionless unit system, spatial/momentum grids, and wavefunction storage.
//!
//! Everything downstream works in oscillator units: energies in units of the
//! harmonic quantum, lengths in units of the canonical length, time in units
//! of the inverse trap frequency. Physical inputs enter only through the
//! conversion helpers in [`crate::potential`].

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Oscillator units of one well: angular frequency, canonical length, and the
/// nonharmonicity comparing the two length scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    /// Angular frequency omega in rad/s (informational; dynamics are dimensionless).
    pub omega: f64,
    /// Canonical length in meters, or 1.0 when working purely dimensionless.
    pub length_scale: f64,
    /// Nonharmonicity alpha.
    pub alpha: f64,
}

impl UnitSystem {
    pub fn dimensionless(alpha: f64) -> Result<Self> {
        Self::new(1.0, 1.0, alpha)
    }

    pub fn new(omega: f64, length_scale: f64, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::NonPositive { what: "alpha", value: alpha });
        }
        if alpha > 1.0 {
            return Err(Error::Config(format!(
                "alpha = {alpha} is outside the supported range (0, 1]"
            )));
        }
        if alpha > 0.5 {
            // Soft regime bound; everything still works, but the quartic
            // truncation statements degrade quickly beyond this.
            eprintln!("warning: alpha = {alpha} exceeds the weakly nonharmonic regime (<= 0.5)");
        }
        Ok(Self { omega, length_scale, alpha })
    }

    /// Relative anharmonicity of the level ladder per excitation.
    pub fn splitting(&self) -> f64 {
        -self.alpha * self.alpha / 2.0
    }
}

/// Which representation a set of amplitudes lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Space {
    Position,
    Momentum,
}

/// Uniform symmetric position grid with its FFT-ordered momentum companion.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    pub n_points: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub dx: f64,
    pub dp: f64,
    xs: Vec<f64>,
    ps: Vec<f64>,
}

/// Build a symmetric grid on `[-half_width, half_width)`.
pub fn make_grid(n_points: usize, half_width: f64) -> Result<Arc<SpatialGrid>> {
    if n_points < 64 || !n_points.is_power_of_two() {
        return Err(Error::GridSize(n_points));
    }
    if !(half_width > 0.0) || !half_width.is_finite() {
        return Err(Error::GridWidth(half_width));
    }
    let n = n_points;
    let dx = 2.0 * half_width / n as f64;
    let dp = 2.0 * PI / (n as f64 * dx);
    let xs: Vec<f64> = (0..n).map(|j| -half_width + j as f64 * dx).collect();
    let ps: Vec<f64> = (0..n)
        .map(|k| if k < n / 2 { k as f64 * dp } else { (k as f64 - n as f64) * dp })
        .collect();
    Ok(Arc::new(SpatialGrid {
        n_points: n,
        x_min: -half_width,
        x_max: half_width,
        dx,
        dp,
        xs,
        ps,
    }))
}

impl SpatialGrid {
    pub fn half_width(&self) -> f64 {
        self.x_max
    }

    /// Position samples, ascending.
    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    /// Momentum samples in FFT order (0, dp, ..., -dp). All p-dependent code
    /// goes through this array rather than recomputing the layout.
    pub fn ps(&self) -> &[f64] {
        &self.ps
    }

    /// Largest resolvable |p|.
    pub fn p_max(&self) -> f64 {
        PI / self.dx
    }
}

/// The state psi on a grid, in either representation.
#[derive(Debug, Clone)]
pub struct WaveFunction {
    pub grid: Arc<SpatialGrid>,
    pub space: Space,
    pub amps: Vec<Complex64>,
}

impl WaveFunction {
    pub fn zeros(grid: &Arc<SpatialGrid>) -> Self {
        Self {
            grid: Arc::clone(grid),
            space: Space::Position,
            amps: vec![Complex64::ZERO; grid.n_points],
        }
    }

    /// Build from a complex-valued function of x and normalize.
    pub fn from_fn(grid: &Arc<SpatialGrid>, f: impl Fn(f64) -> Complex64) -> Self {
        let amps = grid.xs().iter().map(|&x| f(x)).collect();
        let mut psi = Self { grid: Arc::clone(grid), space: Space::Position, amps };
        psi.normalize();
        psi
    }

    fn measure(&self) -> f64 {
        match self.space {
            Space::Position => self.grid.dx,
            Space::Momentum => self.grid.dp,
        }
    }

    /// Continuum-normalized squared norm (includes the grid measure).
    pub fn norm_sq(&self) -> f64 {
        let m = self.measure();
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>() * m
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sq().sqrt();
        if n > 0.0 {
            let inv = 1.0 / n;
            for a in &mut self.amps {
                *a *= inv;
            }
        }
    }

    pub fn same_grid(&self, other: &WaveFunction) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    /// Pointwise probability density.
    pub fn density(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }
}

/// `<psi|phi>` with the grid measure. Conjugate-symmetric.
pub fn inner_product(psi: &WaveFunction, phi: &WaveFunction) -> Result<Complex64> {
    if !psi.same_grid(phi) {
        return Err(Error::GridMismatch);
    }
    if psi.space != phi.space {
        return Err(Error::SpaceMismatch { expected: "matching" });
    }
    let m = psi.measure();
    let sum: Complex64 = psi
        .amps
        .iter()
        .zip(&phi.amps)
        .map(|(a, b)| a.conj() * b)
        .sum();
    Ok(sum * m)
}

/// `|<psi|phi>|^2`.
pub fn fidelity(psi: &WaveFunction, phi: &WaveFunction) -> Result<f64> {
    Ok(inner_product(psi, phi)?.norm_sqr())
}

/// Continuum Fourier transform psi(x) -> psi(p), sampled on the FFT-ordered
/// momentum grid. Unitary together with [`from_momentum`].
pub fn to_momentum(psi: &WaveFunction) -> Result<WaveFunction> {
    if psi.space != Space::Position {
        return Err(Error::SpaceMismatch { expected: "position" });
    }
    let grid = &psi.grid;
    let n = grid.n_points;
    let mut buf = psi.amps.clone();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    // dx/sqrt(2 pi) puts samples on the continuum convention; the x_min phase
    // anchors the transform to the physical origin rather than the first bin.
    let scale = grid.dx / (2.0 * PI).sqrt();
    for (b, &p) in buf.iter_mut().zip(grid.ps()) {
        *b *= scale * Complex64::cis(-p * grid.x_min);
    }
    Ok(WaveFunction { grid: Arc::clone(grid), space: Space::Momentum, amps: buf })
}

/// Inverse of [`to_momentum`].
pub fn from_momentum(phi: &WaveFunction) -> Result<WaveFunction> {
    if phi.space != Space::Momentum {
        return Err(Error::SpaceMismatch { expected: "momentum" });
    }
    let grid = &phi.grid;
    let n = grid.n_points;
    let scale = (2.0 * PI).sqrt() / grid.dx;
    let mut buf: Vec<Complex64> = phi
        .amps
        .iter()
        .zip(grid.ps())
        .map(|(a, &p)| a * scale * Complex64::cis(p * grid.x_min))
        .collect();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let inv_n = 1.0 / n as f64;
    for b in &mut buf {
        *b *= inv_n;
    }
    Ok(WaveFunction { grid: Arc::clone(grid), space: Space::Position, amps: buf })
}

/// Multiply by `exp(i k x)`: displaces `<p>` by exactly `k`, leaves |psi| alone.
pub fn apply_phase(psi: &WaveFunction, k: f64) -> Result<WaveFunction> {
    if !k.is_finite() {
        return Err(Error::NonPositive { what: "finite kick", value: k });
    }
    if psi.space != Space::Position {
        return Err(Error::SpaceMismatch { expected: "position" });
    }
    let amps = psi
        .amps
        .iter()
        .zip(psi.grid.xs())
        .map(|(a, &x)| a * Complex64::cis(k * x))
        .collect();
    Ok(WaveFunction { grid: Arc::clone(&psi.grid), space: Space::Position, amps })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    X,
    P,
    X2,
    P2,
}

/// Expectation value of a quadrature observable on a normalized state.
pub fn expectation(psi: &WaveFunction, observable: Observable) -> Result<f64> {
    let nsq = psi.norm_sq();
    if (nsq - 1.0).abs() > 1e-8 {
        return Err(Error::Unnormalized(nsq));
    }
    match observable {
        Observable::X | Observable::X2 => {
            let psi_x = match psi.space {
                Space::Position => None,
                Space::Momentum => Some(from_momentum(psi)?),
            };
            let target = psi_x.as_ref().unwrap_or(psi);
            Ok(weighted_density_sum(target, observable == Observable::X2))
        }
        Observable::P | Observable::P2 => {
            let psi_p = match psi.space {
                Space::Momentum => None,
                Space::Position => Some(to_momentum(psi)?),
            };
            let target = psi_p.as_ref().unwrap_or(psi);
            let m = target.measure();
            let mut acc = 0.0;
            for (a, &p) in target.amps.iter().zip(target.grid.ps()) {
                let w = if observable == Observable::P2 { p * p } else { p };
                acc += a.norm_sqr() * w;
            }
            Ok(acc * m)
        }
    }
}

fn weighted_density_sum(psi: &WaveFunction, squared: bool) -> f64 {
    let mut acc = 0.0;
    for (a, &x) in psi.amps.iter().zip(psi.grid.xs()) {
        let w = if squared { x * x } else { x };
        acc += a.norm_sqr() * w;
    }
    acc * psi.grid.dx
}

/// Write a position-space state as CSV: header carries the grid, then rows of
/// x, Re psi, Im psi.
pub fn dump_wavefunction(psi: &WaveFunction, w: &mut impl Write) -> Result<()> {
    if psi.space != Space::Position {
        return Err(Error::SpaceMismatch { expected: "position" });
    }
    writeln!(
        w,
        "# n_points={} half_width={:.17e}",
        psi.grid.n_points,
        psi.grid.half_width()
    )?;
    writeln!(w, "x,re_psi,im_psi")?;
    for (a, &x) in psi.amps.iter().zip(psi.grid.xs()) {
        writeln!(w, "{:.17e},{:.17e},{:.17e}", x, a.re, a.im)?;
    }
    Ok(())
}

/// Read a state written by [`dump_wavefunction`].
pub fn load_wavefunction(r: &mut impl BufRead, path: &str) -> Result<WaveFunction> {
    let err = |msg: String| Error::Parse { path: path.to_string(), msg };
    let mut header = String::new();
    r.read_line(&mut header)?;
    let header = header.trim();
    let mut n_points = None;
    let mut half_width = None;
    for token in header.trim_start_matches('#').split_whitespace() {
        if let Some(v) = token.strip_prefix("n_points=") {
            n_points = v.parse::<usize>().ok();
        } else if let Some(v) = token.strip_prefix("half_width=") {
            half_width = v.parse::<f64>().ok();
        }
    }
    let n = n_points.ok_or_else(|| err("missing n_points in header".into()))?;
    let hw = half_width.ok_or_else(|| err("missing half_width in header".into()))?;
    let grid = make_grid(n, hw)?;
    let mut amps = Vec::with_capacity(n);
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with("x,") {
            continue;
        }
        let mut parts = line.split(',');
        let _x: f64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(format!("bad row at line {}", i + 2)))?;
        let re: f64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(format!("bad row at line {}", i + 2)))?;
        let im: f64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(format!("bad row at line {}", i + 2)))?;
        amps.push(Complex64::new(re, im));
    }
    if amps.len() != n {
        return Err(err(format!("expected {n} rows, found {}", amps.len())));
    }
    Ok(WaveFunction { grid, space: Space::Position, amps })
}
