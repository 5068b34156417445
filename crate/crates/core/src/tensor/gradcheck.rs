use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Central-difference gradient checker (double precision).
///
/// The reported error for each checked element is
/// `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub eps: f64,
    /// Above this many input elements a seeded random subset is checked.
    pub max_elements: usize,
    pub seed: u64,
    pub floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            eps: 1e-4,
            max_elements: 10_000,
            seed: 0,
            floor: 1e-3,
        }
    }
}

/// Max relative error between backprop and central differences of `f`.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>], eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    GradCheck {
        eps,
        ..GradCheck::default()
    }
    .run(f, inputs)
}

impl GradCheck {
    pub fn run<F>(&self, f: F, inputs: &[Tensor<f64>]) -> Result<f64>
    where
        F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
    {
        let eval = |vals: &[Tensor<f64>]| -> Result<f64> {
            let mut g = Graph::new();
            let vars: Vec<Var> = vals.iter().map(|t| g.param(t.clone())).collect();
            let out = f(&mut g, &vars)?;
            let v = g.value(out);
            if v.numel() != 1 {
                return Err(Error::shape("grad_check", "function must return a scalar"));
            }
            Ok(v.data()[0])
        };

        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        g.backward(out)?;
        let analytic: Vec<Vec<f64>> = vars
            .iter()
            .zip(inputs)
            .map(|(&v, t)| {
                g.grad(v)
                    .map(|gr| gr.data().to_vec())
                    .unwrap_or_else(|| vec![0.0; t.numel()])
            })
            .collect();

        let total: usize = inputs.iter().map(Tensor::numel).sum();
        let picks: Vec<usize> = if total <= self.max_elements {
            (0..total).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            let mut v = rand::seq::index::sample(&mut rng, total, self.max_elements).into_vec();
            v.sort_unstable();
            v
        };

        let mut worst: f64 = 0.0;
        let mut work: Vec<Tensor<f64>> = inputs.to_vec();
        for flat in picks {
            let (ti, ei) = locate(inputs, flat);
            let orig = work[ti].data()[ei];
            work[ti].data_mut()[ei] = orig + self.eps;
            let plus = eval(&work)?;
            work[ti].data_mut()[ei] = orig - self.eps;
            let minus = eval(&work)?;
            work[ti].data_mut()[ei] = orig;
            let numeric = (plus - minus) / (2.0 * self.eps);
            let a = analytic[ti][ei];
            let denom = a.abs().max(numeric.abs()).max(self.floor);
            worst = worst.max((a - numeric).abs() / denom);
        }
        Ok(worst)
    }
}

fn locate(inputs: &[Tensor<f64>], mut flat: usize) -> (usize, usize) {
    for (i, t) in inputs.iter().enumerate() {
        if flat < t.numel() {
            return (i, flat);
        }
        flat -= t.numel();
    }
    unreachable!("index within total element count")
}
