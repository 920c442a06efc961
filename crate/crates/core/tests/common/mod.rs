#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xformplay::puzzle::{generate_puzzle, GameState, Level};
use xformplay::xform::{RotationAxis, TransformStep};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_axis(rng: &mut impl Rng) -> RotationAxis {
    RotationAxis::ALL[rng.random_range(0..3)]
}

pub fn random_step(rng: &mut impl Rng) -> TransformStep {
    match rng.random_range(0..3) {
        0 => TransformStep::translate(
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
        ),
        1 => TransformStep::rotate(random_axis(rng), rng.random_range(-360.0..360.0)),
        _ => TransformStep::scale(rng.random_range(0.25..4.0)),
    }
}

pub fn random_steps(rng: &mut impl Rng, max_len: usize) -> Vec<TransformStep> {
    let n = rng.random_range(1..=max_len);
    (0..n).map(|_| random_step(rng)).collect()
}

/// Fresh function-level session.
pub fn session(seed: u64) -> GameState {
    GameState::new_session(generate_puzzle(seed, Level::Function, 1).unwrap()).unwrap()
}

pub fn max_abs(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            m = m.max((a[i][j] - b[i][j]).abs());
        }
    }
    m
}
