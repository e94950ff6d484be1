use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{dft2, ComplexGrid, RealGrid};
use crate::noise::sample_poisson;

pub fn random_grid(w: usize, h: usize, seed: u64) -> ComplexGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ComplexGrid::from_fn(w, h, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

/// Poisson draw around the intensity of a random field scaled to ~10 counts per pixel.
pub fn poisson_target(w: usize, h: usize, seed: u64) -> RealGrid {
    let field = random_grid(w, h, seed ^ 0x5eed).scale(Complex64::new(3.0, 0.0));
    sample_poisson(&[dft2(&field).intensity()], seed).unwrap().remove(0)
}
