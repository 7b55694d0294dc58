use std::f64::consts::{FRAC_PI_2, PI};
use wellshake::crab::{Control, SampledControl};
use wellshake::grid::{fidelity, make_grid};
use wellshake::potential::{PotentialFamily, PotentialLandscape, Well};
use wellshake::propagate::{evolve, RecordSpec, TimeGrid};
use wellshake::protocols::lone_well;
use wellshake::spectrum::diagonalize;
use wellshake::states::double_well_cat;
use num_complex::Complex64;

fn main() {
    let alpha = 0.25;
    let d: f64 = std::env::args().nth(1).map(|v| v.parse().unwrap()).unwrap_or(10.0);
    let d_min: f64 = std::env::args().nth(2).map(|v| v.parse().unwrap()).unwrap_or(7.2);
    let grid = make_grid(512, 14.0).unwrap();
    let tp: f64 = std::env::args().nth(3).map(|v| v.parse().unwrap()).unwrap_or(6.0);
    let time = TimeGrid::periods(tp, 200).unwrap();

    // left lobe (harmonic approx) and targets
    let mut left = wellshake::grid::WaveFunction::from_fn(&grid, |x| {
        Complex64::new(PI.powf(-0.25) * (-(x + d / 2.0).powi(2) / 2.0).exp(), 0.0)
    });
    left.normalize();
    let cat = double_well_cat(&grid, d, FRAC_PI_2).unwrap();

    // left-well eigenstates for transfer/steal diagnostics
    let left_basis = diagonalize(&lone_well(PotentialFamily::GaussianWell, alpha, -d / 2.0).unwrap(), &grid, 2).unwrap();

    let p_left = |psi: &wellshake::grid::WaveFunction| -> f64 {
        let dx = psi.grid.dx;
        psi.amps
            .iter()
            .zip(psi.grid.xs())
            .map(|(a, &x)| if x < 0.0 { a.norm_sqr() } else if x == 0.0 { a.norm_sqr() / 2.0 } else { 0.0 })
            .sum::<f64>()
            * dx
    };

    println!("A | cat_F | g:P_L | e:P_L");
    for i in 0..=10 {
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
        let f_cat = {
            let t = evolve(&left, &pair, &time, RecordSpec::default(), None, None).unwrap();
            fidelity(&t.final_state, &cat).unwrap()
        };
        let pg = {
            let t = evolve(&left_basis.states[0], &pair, &time, RecordSpec::default(), None, None).unwrap();
            p_left(&t.final_state)
        };
        let pe = {
            let t = evolve(&left_basis.states[1], &pair, &time, RecordSpec::default(), None, None).unwrap();
            p_left(&t.final_state)
        };
        println!("{a_amp:.1} | {f_cat:.4} | {pg:.4} | {pe:.4}");
    }
}
