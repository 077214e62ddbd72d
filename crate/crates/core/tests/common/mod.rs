#![allow(dead_code)]

use rand::Rng;
use rand_distr::StandardNormal;
use ris_mimo::{ComplexMatrix, C64};

/// Matrix with i.i.d. CN(0, 1) entries.
pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// `‖QᴴQ − I‖_F`.
pub fn unitarity_error(q: &ComplexMatrix) -> f64 {
    let g = q.gram();
    g.sub(&ComplexMatrix::identity(g.rows())).unwrap().frobenius_norm()
}
