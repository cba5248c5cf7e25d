//! Thread-pool executor for population evaluation.

use hom_core::stats::BatchExecutor;
use rayon::prelude::*;

/// Evaluates a batch on the rayon pool; results land in input order.
#[derive(Debug, Clone, Copy, Default)]
pub struct Rayon;

impl BatchExecutor for Rayon {
    fn evaluate(&self, f: &(dyn Fn(&[f64]) -> f64 + Sync), points: &[Vec<f64>], out: &mut [f64]) {
        out.par_iter_mut().zip(points.par_iter()).for_each(|(o, x)| *o = f(x));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use hom_core::stats::{differential_evolution_batch, DeOptions, Serial};

    #[test]
    fn matches_serial() {
        let f = |x: &[f64]| x.iter().map(|v| (v - 0.3) * (v - 0.3)).sum::<f64>();
        let opts = DeOptions { seed: 4, ..Default::default() };
        let bounds = [(-1.0, 1.0); 3];
        let run = |e: &dyn BatchExecutor| {
            differential_evolution_batch(
                |pts: &[Vec<f64>], out: &mut [f64]| e.evaluate(&f, pts, out),
                &bounds,
                &opts,
            )
            .unwrap()
        };
        let a = run(&Serial);
        let b = run(&Rayon);
        assert_eq!(a.best, b.best);
        assert_eq!(a.trace, b.trace);
    }
}
