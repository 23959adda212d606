//! `grad-check`: verify analytic gradients against central finite
//! differences on randomly initialized networks, for both training losses.
//! Exits nonzero if any check fails.

use anyhow::{bail, Result};
use clap::Args;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use soc_ensemble::nn::{
    backward, grad_check, grad_check_grads, Activation, Head, LayerSpec, LossKind,
};

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub hidden: usize,
    #[arg(long, default_value_t = 1)]
    pub inputs: usize,
    /// Number of random networks per loss.
    #[arg(long, default_value_t = 3)]
    pub nets: usize,
    /// Central-difference step, in (0, 1e-2].
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    /// Maximum allowed relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Corrupt one analytic gradient entry to demonstrate detection; the
    /// command then fails by design.
    #[arg(long, default_value_t = false)]
    pub planted_fault: bool,
}

pub fn run(args: &GradCheckArgs) -> Result<()> {
    let spec = LayerSpec {
        input_dim: args.inputs,
        hidden_dims: vec![args.hidden],
        activation: Activation::Tanh,
        head: Head::Gaussian,
    };
    let mut all_pass = true;
    for loss in [LossKind::Nll, LossKind::Mse] {
        for net_idx in 0..args.nets {
            let net_seed = args.seed.wrapping_add(net_idx as u64);
            let net = soc_ensemble::nn::init_params(&spec, net_seed)
                .map_err(soc_ensemble::Error::from)?;
            let mut rng = ChaCha8Rng::seed_from_u64(net_seed ^ 0x9e37_79b9);
            let xs: Vec<Vec<f64>> = (0..8)
                .map(|_| (0..args.inputs).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let batch: Vec<(&[f64], f64)> = xs
                .iter()
                .map(|x| (&x[..], rng.random_range(-3.0..3.0)))
                .collect();

            let report = if args.planted_fault {
                let (_, mut grads) =
                    backward(&net, &batch, loss).map_err(soc_ensemble::Error::from)?;
                grads.weights[1][0] *= 2.0;
                grad_check_grads(&net, &batch, loss, args.step, args.tol, &grads)
                    .map_err(soc_ensemble::Error::from)?
            } else {
                grad_check(&net, &batch, loss, args.step, args.tol)
                    .map_err(soc_ensemble::Error::from)?
            };

            println!(
                "loss={loss} net={net_idx} seed={net_seed} max_rel_err={:e} pass={}",
                report.max_rel_err, report.pass
            );
            if let (false, Some(worst)) = (report.pass, report.worst) {
                println!(
                    "  worst entry: layer={} kind={:?} index={} analytic={:e} numeric={:e}",
                    worst.layer, worst.kind, worst.index, worst.analytic, worst.numeric
                );
            }
            all_pass &= report.pass;
        }
    }
    if !all_pass {
        bail!("gradient check failed (tolerance {})", args.tol);
    }
    println!("all gradient checks passed (tolerance {})", args.tol);
    Ok(())
}
