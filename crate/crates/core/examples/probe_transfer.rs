use std::f64::consts::PI;
use wellshake::crab::{Control, SampledControl};
use wellshake::grid::make_grid;
use wellshake::optimize::{gate_infidelity, TargetUnitary};
use wellshake::potential::{PotentialFamily, PotentialLandscape, Well};
use wellshake::propagate::{evolve, RecordSpec, TimeGrid};
use wellshake::protocols::lone_well;
use wellshake::spectrum::diagonalize;

fn main() {
    let alpha = 0.25;
    let d: f64 = std::env::args().nth(1).map(|v| v.parse().unwrap()).unwrap_or(10.0);
    let d_min: f64 = std::env::args().nth(2).map(|v| v.parse().unwrap()).unwrap_or(7.0);
    let tp: f64 = std::env::args().nth(3).map(|v| v.parse().unwrap()).unwrap_or(8.0);
    let grid = make_grid(512, d / 2.0 + 8.0).unwrap();
    let time = TimeGrid::periods(tp, 200).unwrap();
    let left = diagonalize(&lone_well(PotentialFamily::GaussianWell, alpha, -d / 2.0).unwrap(), &grid, 2).unwrap().states;
    let right = diagonalize(&lone_well(PotentialFamily::GaussianWell, alpha, d / 2.0).unwrap(), &grid, 2).unwrap().states;

    println!("A | gate_inf");
    for i in 0..=12 {
        let a_amp = (d - d_min) / 2.0 * i as f64 / 10.0;
        let ts: Vec<f64> = (0..=4096).map(|k| time.duration * k as f64 / 4096.0).collect();
        let vals: Vec<f64> = ts.iter().map(|&t| -a_amp * (PI * t / time.duration).sin().powi(2)).collect();
        let shake = Control::Samples(SampledControl::new(ts, vals).unwrap());
        let mk = |sign: f64| {
            Well::new(
                PotentialFamily::GaussianWell,
                alpha,
                Control::PairPosition {
                    shake: Box::new(shake.clone()),
                    half_separation: d / 2.0,
                    min_half: d_min / 2.0,
                    sign,
                },
                Control::Zero,
            )
            .unwrap()
        };
        let pair = PotentialLandscape::pair(mk(-1.0), mk(1.0), d_min).unwrap();
        let finals: Vec<_> = left
            .iter()
            .map(|b| evolve(b, &pair, &time, RecordSpec::default(), None, None).unwrap().final_state)
            .collect();
        let inf = gate_infidelity(&finals, &right, &TargetUnitary::identity()).unwrap();
        println!("{a_amp:.2} | {inf:.4}");
    }
}
