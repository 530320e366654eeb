//! Seeded random streams for Monte-Carlo synthesis.
//!
//! Draw number `k` of any seeded run is a pure function of `(seed, k)`: the
//! index space is cut into fixed chunks of [`CHUNK_LEN`] and chunk `c` reads
//! from ChaCha stream `c` of the seed. Output therefore does not depend on the
//! thread count, and a shorter run is always a prefix of a longer one.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const CHUNK_LEN: usize = 1 << 16;

/// Chunks folded sequentially before results are merged.
const GROUP_CHUNKS: usize = 8;

pub fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// Mixes a tag into a seed (splitmix64 finalizer) so sibling runs get
/// unrelated streams.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn chunk_ranges(n: usize) -> Vec<(usize, Range<usize>)> {
    (0..n.div_ceil(CHUNK_LEN))
        .map(|c| (c, c * CHUNK_LEN..((c + 1) * CHUNK_LEN).min(n)))
        .collect()
}

/// Folds `n` draws into an accumulator. Chunks are grouped in a fixed way and
/// merged in index order, so even floating-point accumulators give
/// bit-identical results for a given `(n, seed)`.
pub fn fold_chunks<A, I, F, M>(n: usize, seed: u64, init: I, fold: F, merge: M) -> A
where
    A: Send,
    I: Fn() -> A + Sync,
    F: Fn(&mut A, &mut ChaCha8Rng, Range<usize>) + Sync,
    M: Fn(&mut A, A),
{
    let chunks = chunk_ranges(n);
    let groups: Vec<&[(usize, Range<usize>)]> = chunks.chunks(GROUP_CHUNKS).collect();
    let run_group = |group: &&[(usize, Range<usize>)]| {
        let mut acc = init();
        for (c, range) in group.iter() {
            let mut rng = chunk_rng(seed, *c);
            fold(&mut acc, &mut rng, range.clone());
        }
        acc
    };

    #[cfg(feature = "parallel")]
    let partials: Vec<A> = {
        use rayon::prelude::*;
        groups.par_iter().map(run_group).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<A> = groups.iter().map(run_group).collect();

    let mut total = init();
    for part in partials {
        merge(&mut total, part);
    }
    total
}

/// Generates `n` items in index order.
pub fn collect_chunks<T, F>(n: usize, seed: u64, gen: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, Range<usize>, &mut Vec<T>) + Sync,
{
    let mut out = fold_chunks(
        n,
        seed,
        Vec::new,
        |acc, rng, range| gen(rng, range, acc),
        |acc, mut part| acc.append(&mut part),
    );
    out.shrink_to_fit();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn prefix_property() {
        let draw = |n| {
            collect_chunks(n, 7, |rng, range, out: &mut Vec<u64>| {
                out.extend(range.map(|_| rng.random::<u64>()))
            })
        };
        let long = draw(3 * CHUNK_LEN + 17);
        let short = draw(CHUNK_LEN + 5);
        assert_eq!(&long[..short.len()], &short[..]);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
    }
}
