use wellshake::grid::make_grid;
use wellshake::potential::{PotentialFamily, PotentialLandscape};
use wellshake::spectrum::{diagonalize, transition_frequencies};

fn main() {
    for family in [
        PotentialFamily::GaussianWell,
        PotentialFamily::CosineWell,
        PotentialFamily::SineSquared,
    ] {
        for alpha in [0.1, 0.2, 0.4] {
            let hw = if family == PotentialFamily::GaussianWell {
                12.0
            } else {
                std::f64::consts::PI / (2.0 * alpha)
            };
            let grid = make_grid(512, hw).unwrap();
            let landscape = PotentialLandscape::single(family, alpha).unwrap();
            match diagonalize(&landscape, &grid, 3) {
                Ok(basis) => {
                    let tf = transition_frequencies(&basis).unwrap();
                    let expect = -alpha * alpha / 2.0;
                    let resid = (tf.splitting - expect).abs();
                    let tol = 2.0 * alpha.powi(4);
                    println!(
                        "{family:?} alpha={alpha}: splitting {:+.6} vs {expect:+.6} resid {resid:.2e} tol {tol:.2e} {}",
                        tf.splitting,
                        if resid <= tol { "PASS" } else { "FAIL" }
                    );
                }
                Err(e) => println!("{family:?} alpha={alpha}: ERROR {e}"),
            }
        }
    }
}
