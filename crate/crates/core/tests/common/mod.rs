#![allow(dead_code)]

use orbit_core::sl2kit::{self, SlHom};
use orbit_core::{GVector, RealSemisimpleAlgebra};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// sl(n, R) with the Killing form normalized for the orbit of the given
/// partition, together with the standard morphism.
pub fn orbit(n: usize, partition: &[usize]) -> (RealSemisimpleAlgebra, SlHom) {
    let raw = RealSemisimpleAlgebra::sl_n_r(n).unwrap();
    let t = sl2kit::sl_partition_triple(n, partition).unwrap();
    let alg = sl2kit::normalize_for_orbit(&raw, &t).unwrap();
    let phi0 = t.to_hom(&alg);
    (alg, phi0)
}

pub fn sl2() -> (RealSemisimpleAlgebra, GVector, GVector, GVector) {
    let (alg, _) = orbit(2, &[2]);
    let (e, f, h) = (alg.basis_vector(0), alg.basis_vector(1), alg.basis_vector(2));
    (alg, e, f, h)
}

pub fn dist(a: &GVector, b: &GVector) -> f64 {
    (a - b).amax()
}
