//! Data-parallel loop helpers.
//!
//! With the `parallel` feature the helpers dispatch to rayon; without it they
//! run the same closures sequentially. Reductions always sum fixed-size chunks
//! in index order, so results are bit-identical between the two builds and
//! independent of the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Elements per reduction chunk.
const CHUNK: usize = 2048;
/// Smallest slice handed to a single rayon task.
#[cfg(feature = "parallel")]
const MIN_LEN: usize = 512;

/// Calls `f(i, &mut data[i])` for every element.
pub fn update<T, F>(data: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        data.par_iter_mut()
            .with_min_len(MIN_LEN)
            .enumerate()
            .for_each(|(i, x)| f(i, x));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
    }
}

/// Calls `f(i, &mut a[i], &mut b[i])` for every index of two equal-length slices.
pub fn update2<A, B, F>(a: &mut [A], b: &mut [B], f: F)
where
    A: Send,
    B: Send,
    F: Fn(usize, &mut A, &mut B) + Sync + Send,
{
    assert_eq!(a.len(), b.len());
    #[cfg(feature = "parallel")]
    {
        a.par_iter_mut()
            .zip(b.par_iter_mut())
            .with_min_len(MIN_LEN)
            .enumerate()
            .for_each(|(i, (x, y))| f(i, x, y));
    }
    #[cfg(not(feature = "parallel"))]
    {
        a.iter_mut()
            .zip(b.iter_mut())
            .enumerate()
            .for_each(|(i, (x, y))| f(i, x, y));
    }
}

/// Calls `f(r, row)` for every row of `width` elements.
pub fn update_rows<T, F>(data: &mut [T], width: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(width)
            .with_min_len(MIN_LEN.div_ceil(width))
            .enumerate()
            .for_each(|(r, row)| f(r, row));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(width).enumerate().for_each(|(r, row)| f(r, row));
    }
}

/// Row-wise variant of [`update2`].
pub fn update2_rows<A, B, F>(a: &mut [A], b: &mut [B], width: usize, f: F)
where
    A: Send,
    B: Send,
    F: Fn(usize, &mut [A], &mut [B]) + Sync + Send,
{
    assert_eq!(a.len(), b.len());
    #[cfg(feature = "parallel")]
    {
        a.par_chunks_mut(width)
            .zip(b.par_chunks_mut(width))
            .with_min_len(MIN_LEN.div_ceil(width))
            .enumerate()
            .for_each(|(r, (x, y))| f(r, x, y));
    }
    #[cfg(not(feature = "parallel"))]
    {
        a.chunks_mut(width)
            .zip(b.chunks_mut(width))
            .enumerate()
            .for_each(|(r, (x, y))| f(r, x, y));
    }
}

/// Deterministic sum of `f(i)` for `i in 0..n`.
pub fn sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunk_sum = |c: usize| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(n);
        (lo..hi).map(&f).sum::<f64>()
    };
    let chunks = n.div_ceil(CHUNK);
    #[cfg(feature = "parallel")]
    let partial: Vec<f64> = (0..chunks).into_par_iter().map(chunk_sum).collect();
    #[cfg(not(feature = "parallel"))]
    let partial: Vec<f64> = (0..chunks).map(chunk_sum).collect();
    partial.into_iter().sum()
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_matches_chunked_sequential_order() {
        let n: usize = 10_000;
        let f = |i: usize| (i as f64).sin() * 1e-3;
        let expected: f64 = (0..n.div_ceil(CHUNK))
            .map(|c| (c * CHUNK..((c + 1) * CHUNK).min(n)).map(f).sum::<f64>())
            .sum();
        assert_eq!(sum(n, f).to_bits(), expected.to_bits());
        assert_eq!(sum(0, f), 0.0);
    }

    #[test]
    fn update_visits_every_index() {
        let mut v = vec![0usize; 5000];
        update(&mut v, |i, x| *x = 2 * i);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
        let mut a = vec![0.0; 3000];
        let mut b = vec![0.0; 3000];
        update2(&mut a, &mut b, |i, x, y| {
            *x = i as f64;
            *y = -(i as f64);
        });
        assert!(a.iter().zip(&b).all(|(x, y)| x + y == 0.0));
    }

    #[test]
    fn row_updates_see_row_indices() {
        let mut v = vec![0usize; 7 * 300];
        update_rows(&mut v, 7, |r, row| row.iter_mut().enumerate().for_each(|(i, x)| *x = r * 7 + i));
        assert!(v.iter().enumerate().all(|(i, &x)| x == i));
        let mut a = vec![0usize; 5 * 40];
        let mut b = vec![0usize; 5 * 40];
        update2_rows(&mut a, &mut b, 5, |r, x, y| {
            x.fill(r);
            y.fill(2 * r);
        });
        assert!(a.iter().zip(&b).enumerate().all(|(i, (x, y))| *x == i / 5 && *y == 2 * (i / 5)));
    }
}
