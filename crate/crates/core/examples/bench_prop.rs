use std::time::Instant;
use wellshake::crab::{Control, CrabWaveform};
use wellshake::grid::make_grid;
use wellshake::potential::{PotentialFamily, PotentialLandscape, Well};
use wellshake::propagate::{evolve, RecordSpec, TimeGrid};
use wellshake::states::harmonic_ground;

fn main() {
    for n in [256usize, 512] {
        let grid = make_grid(n, 12.0).unwrap();
        let psi0 = harmonic_ground(&grid);
        let mut wf = CrabWaveform::new(std::f64::consts::TAU * 6.0, 12, 3.0, 4.0, Control::Zero).unwrap();
        let p: Vec<f64> = (0..wf.param_count()).map(|i| 0.1 * ((i * 7) % 5) as f64).collect();
        wf.set_params(&p);
        let well = Well::new(PotentialFamily::GaussianWell, 0.25, Control::Crab(Box::new(wf)), Control::Zero).unwrap();
        let landscape = PotentialLandscape::single_with(well);
        let time = TimeGrid::periods(6.0, 200).unwrap();
        let t0 = Instant::now();
        let reps = 20;
        for _ in 0..reps {
            let _ = evolve(&psi0, &landscape, &time, RecordSpec::default(), None, None).unwrap();
        }
        let el = t0.elapsed().as_secs_f64() / reps as f64;
        println!("n={n}: {:.2} ms per {}-step propagation ({:.2} us/step)", el * 1e3, time.n_steps, el * 1e6 / time.n_steps as f64);
    }
}
