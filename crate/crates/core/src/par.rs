//! Deterministic chunked reductions.
//!
//! Work is cut into chunks whose boundaries depend only on the input length,
//! never on the thread count, and partial results are merged in chunk order.
//! Floating-point sums are therefore bit-identical across runs and pool sizes.

use rayon::prelude::*;

const MIN_CHUNK: usize = 4096;
const MAX_CHUNKS: usize = 32;

pub(crate) fn chunk_len(n: usize) -> usize {
    MIN_CHUNK.max(n.div_ceil(MAX_CHUNKS))
}

pub(crate) fn fold_chunks<T, A, M, F, G>(items: &[T], make: M, fold: F, mut merge: G) -> A
where
    T: Sync,
    A: Send,
    M: Fn() -> A + Sync,
    F: Fn(&mut A, &T) + Sync,
    G: FnMut(&mut A, A),
{
    let len = chunk_len(items.len());
    if items.len() <= len {
        let mut acc = make();
        for t in items {
            fold(&mut acc, t);
        }
        return acc;
    }
    let partials: Vec<A> = items
        .par_chunks(len)
        .map(|chunk| {
            let mut acc = make();
            for t in chunk {
                fold(&mut acc, t);
            }
            acc
        })
        .collect();
    let mut iter = partials.into_iter();
    let mut total = iter.next().unwrap_or_else(&make);
    for part in iter {
        merge(&mut total, part);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_is_independent_of_pool_size() {
        let items: Vec<f64> = (0..100_000).map(|k| 1.0 / (1.0 + k as f64)).collect();
        let run = || fold_chunks(&items, || 0.0f64, |a, v| *a += v, |a, b| *a += b);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(run);
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(run);
        assert_eq!(one.to_bits(), four.to_bits());
    }
}
