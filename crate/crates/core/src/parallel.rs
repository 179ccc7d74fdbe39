//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the closures run on the rayon pool; without
//! it, or when `workers == 1`, they run in order on the calling thread.
//! Every caller derives per-item randomness from the item index, so both
//! paths produce identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Worker-count setting: `0` means "use the pool", `1` forces sequential.
pub fn is_sequential(workers: usize) -> bool {
    !cfg!(feature = "parallel") || workers == 1
}

/// Independent seed for item `stream` of a run seeded with `base`
/// (SplitMix64 finalizer over the pair).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<R, F>(n: usize, workers: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if !is_sequential(workers) {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = workers;
    (0..n).map(f).collect()
}

/// Applies `f` to every element of `items` with its index.
pub fn for_each_mut<T, F>(items: &mut [T], workers: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if !is_sequential(workers) {
        items.par_iter_mut().enumerate().for_each(|(i, t)| f(i, t));
        return;
    }
    let _ = workers;
    items.iter_mut().enumerate().for_each(|(i, t)| f(i, t));
}

/// Maps `f` over a slice, preserving order.
pub fn map_slice<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    map_range(items.len(), workers, |i| f(i, &items[i]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_and_pooled_agree() {
        let a = map_range(100, 1, |i| i * i);
        let b = map_range(100, 0, |i| i * i);
        assert_eq!(a, b);
        let mut v = vec![0usize; 10];
        for_each_mut(&mut v, 0, |i, x| *x = i + 1);
        assert_eq!(v, (1..=10).collect::<Vec<_>>());
    }
}
