use crate::error::{Error, Result};
use crate::models::Samples;
use crate::vecspace::Rng;

/// Up to `per_class` samples of each class, chosen by a seeded shuffle and
/// returned in original index order.
pub fn stratified_batch(samples: &Samples, classes: usize, per_class: usize, rng: &mut Rng) -> Result<Samples> {
    if per_class == 0 {
        return Err(Error::InvalidArgument("per-class cap must be >= 1".into()));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    rng.shuffle(&mut order);
    let mut taken = vec![0usize; classes];
    let mut chosen = Vec::new();
    for i in order {
        let y = samples.y(i);
        if taken[y] < per_class {
            taken[y] += 1;
            chosen.push(i);
        }
    }
    chosen.sort_unstable();
    Ok(samples.subset(&chosen))
}

/// `n` samples drawn without replacement, in draw order.
pub fn uniform_batch(samples: &Samples, n: usize, rng: &mut Rng) -> Result<Samples> {
    if n == 0 || n > samples.len() {
        return Err(Error::InvalidArgument(format!(
            "batch size {n} outside 1..={}",
            samples.len()
        )));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    rng.shuffle(&mut order);
    Ok(samples.subset(&order[..n]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::BlobFixture;

    #[test]
    fn stratified_caps_each_class() {
        let data = BlobFixture::imbalanced4(1).generate().unwrap();
        let b = stratified_batch(data.train(), 4, 32, &mut Rng::new(3)).unwrap();
        assert_eq!(b.class_counts(4), vec![32; 4]);
    }

    #[test]
    fn uniform_batch_size_and_determinism() {
        let data = BlobFixture::imbalanced4(1).generate().unwrap();
        let a = uniform_batch(data.train(), 100, &mut Rng::new(3)).unwrap();
        let b = uniform_batch(data.train(), 100, &mut Rng::new(3)).unwrap();
        assert_eq!(a.len(), 100);
        assert_eq!(a, b);
        assert!(uniform_batch(data.train(), 0, &mut Rng::new(3)).is_err());
    }
}
