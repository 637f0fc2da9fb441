//! Thin fan-out helpers. With the `parallel` feature (default) `map` runs on
//! the rayon pool; without it the same call is a plain sequential loop, so
//! callers never branch on the feature themselves. Outputs are always in
//! input order, which keeps every downstream reduction deterministic.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, parallel when the feature is on.
#[cfg(feature = "parallel")]
pub fn map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    items.into_par_iter().map(f).collect()
}

/// Map `f` over `items`, parallel when the feature is on.
#[cfg(not(feature = "parallel"))]
pub fn map<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

/// Sequential map, kept available regardless of features so benches can
/// compare both paths in one build.
pub fn map_seq<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    F: Fn(T) -> U,
{
    items.into_iter().map(f).collect()
}

/// Map over indices 0..n.
pub fn map_indexed<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    map((0..n).collect(), f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let out = map((0..1000).collect::<Vec<i64>>(), |i| i * i);
        for (i, v) in out.iter().enumerate() {
            assert_eq!(*v, (i * i) as i64);
        }
    }

    #[test]
    fn seq_and_default_agree() {
        let a = map((0..257).collect::<Vec<u32>>(), |i| i.wrapping_mul(2654435761));
        let b = map_seq((0..257).collect::<Vec<u32>>(), |i| i.wrapping_mul(2654435761));
        assert_eq!(a, b);
    }
}
