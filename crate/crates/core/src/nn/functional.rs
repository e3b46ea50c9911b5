use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Additive attention logit for masked keys.
pub const MASK_NEG: f64 = -1e9;

/// Inverted dropout: in training each element is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`. Identity otherwise.
pub fn dropout<R: Rng + ?Sized>(g: &mut Graph, x: Var, rate: f64, training: bool, rng: &mut R) -> Result<Var> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("dropout rate must lie in [0, 1), got {rate}")));
    }
    if !training || rate == 0.0 {
        return Ok(x);
    }
    let shape = g.shape(x).to_vec();
    let keep = 1.0 / (1.0 - rate);
    let n: usize = shape.iter().product();
    let mask: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect();
    let m = g.constant(Tensor::from_parts(shape, mask));
    g.mul(x, m)
}

/// Mean over unpadded timesteps. `x` is `[B, T, D]`, `pad_mask` is `[B, T]`
/// with 1 on padded steps.
pub fn global_average_pool(g: &mut Graph, x: Var, pad_mask: &Tensor) -> Result<Var> {
    let shape = g.shape(x).to_vec();
    if shape.len() != 3 || pad_mask.shape() != [shape[0], shape[1]] {
        return Err(Error::shape(
            "global_average_pool",
            format!("input {:?} does not match mask {:?}", shape, pad_mask.shape()),
        ));
    }
    let (b, t) = (shape[0], shape[1]);
    let keep: Vec<f64> = pad_mask.data().iter().map(|&m| 1.0 - m).collect();
    let mut counts = Vec::with_capacity(b);
    for (i, row) in keep.chunks(t).enumerate() {
        let c: f64 = row.iter().sum();
        if c < 0.5 {
            return Err(Error::Data(format!("sample {i} has no unpadded timesteps")));
        }
        counts.push(c);
    }
    let keep = g.constant(Tensor::from_parts(alloc::vec![b, t, 1], keep));
    let counts = g.constant(Tensor::from_parts(alloc::vec![b, 1], counts));
    let kept = g.mul(x, keep)?;
    let summed = g.sum(kept, 1, false)?;
    g.div(summed, counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    #[test]
    fn dropout_identity_cases() {
        let mut rng = seeded_rng(1);
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(&[10], 2.0));
        assert_eq!(dropout(&mut g, x, 0.0, true, &mut rng).unwrap(), x);
        assert_eq!(dropout(&mut g, x, 0.7, false, &mut rng).unwrap(), x);
        assert!(dropout(&mut g, x, 1.0, true, &mut rng).is_err());
        assert!(dropout(&mut g, x, -0.1, false, &mut rng).is_err());
    }

    #[test]
    fn dropout_statistics() {
        let mut rng = seeded_rng(2);
        let mut g = Graph::new();
        let n = 100_000;
        let x = g.constant(Tensor::full(&[n], 1.0));
        let y = dropout(&mut g, x, 0.5, true, &mut rng).unwrap();
        let d = g.value(y).data();
        let survivors = d.iter().filter(|&&v| v != 0.0).count() as f64 / n as f64;
        let mean = d.iter().sum::<f64>() / n as f64;
        assert!((survivors - 0.5).abs() < 0.01, "{survivors}");
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn pooling_cases() {
        let mut g = Graph::new();
        // T = 1
        let x = g.constant(Tensor::new(&[1, 1, 3], alloc::vec![1., 2., 3.]).unwrap());
        let p = global_average_pool(&mut g, x, &Tensor::zeros(&[1, 1])).unwrap();
        assert_eq!(g.value(p).data(), &[1., 2., 3.]);
        // one real and one padded step
        let x = g.constant(Tensor::new(&[1, 2, 2], alloc::vec![4., -1., 9., 9.]).unwrap());
        let mask = Tensor::new(&[1, 2], alloc::vec![0., 1.]).unwrap();
        let p = global_average_pool(&mut g, x, &mask).unwrap();
        assert_eq!(g.value(p).data(), &[4., -1.]);
        // two identical steps
        let x = g.constant(Tensor::new(&[1, 2, 2], alloc::vec![0.3, 0.7, 0.3, 0.7]).unwrap());
        let p = global_average_pool(&mut g, x, &Tensor::zeros(&[1, 2])).unwrap();
        assert_eq!(g.value(p).data(), &[0.3, 0.7]);
        // fully padded sample
        let all = Tensor::full(&[1, 2], 1.0);
        assert!(matches!(global_average_pool(&mut g, x, &all), Err(Error::Data(_))));
    }
}
