use rand::Rng;

/// Fills `weights` uniformly in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn init_uniform<R: Rng + ?Sized>(rng: &mut R, weights: &mut [f64], fan_in: usize) {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    for w in weights {
        *w = rng.random_range(-bound..bound);
    }
}
