use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fills `out` with one draw from the flat Dirichlet on the simplex.
pub fn fill_flat_dirichlet<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    loop {
        let mut sum = 0.0;
        for v in out.iter_mut() {
            *v = rng.sample::<f64, _>(Exp1);
            sum += *v;
        }
        if sum > 0.0 {
            out.iter_mut().for_each(|v| *v /= sum);
            return;
        }
    }
}

pub fn flat_dirichlet<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    fill_flat_dirichlet(rng, &mut v);
    v
}

/// Index drawn from a discrete distribution given by `weights` summing to ~1.
pub fn sample_index<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    // Rounding left a sliver above the cumulative sum: take the last
    // index with positive weight.
    weights
        .iter()
        .rposition(|&w| w > 0.0)
        .unwrap_or(weights.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirichlet_draws_are_simplex_points() {
        let mut rng = seeded(1);
        for len in 1..6 {
            let v = flat_dirichlet(&mut rng, len);
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(v.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn sample_index_respects_zero_weights() {
        let mut rng = seeded(2);
        for _ in 0..1000 {
            let k = sample_index(&mut rng, &[0.0, 0.3, 0.0, 0.7, 0.0]);
            assert!(k == 1 || k == 3);
        }
    }
}
