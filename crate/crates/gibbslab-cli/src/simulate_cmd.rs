//! `gibbslab simulate`: coupled-chain decay curves.

use gibbslab::certify::ContractivityOutcome;
use gibbslab::gibbs::simulate_coupled_chain;
use gibbslab::model::{GaussianMeasure, Measure, Model};
use nalgebra::DVector;

use crate::certify_cmd::pick_delta;
use crate::output::write_atomic;
use crate::{load_config, CliError, SimulateArgs};

/// Pair budget for the certificate attempt; enough to enumerate every
/// pair on the small models this command targets.
const CERT_PAIR_BUDGET: u64 = 1 << 16;

/// A fixed off-stationary initial law: the stationary law shifted (or
/// exponentially tilted) along every coordinate, so the curve starts at
/// a visible distance and every patch has work to do.
fn initial_p(model: &Model) -> Result<Measure, CliError> {
    match model {
        Model::Gaussian(g) => {
            let mean = g.measure.mean() + DVector::from_element(g.measure.dim(), 1.0);
            GaussianMeasure::new(mean, g.measure.cov().clone())
                .map(Measure::Gaussian)
                .map_err(|e| CliError::Config(e.to_string()))
        }
        Model::Grid(g) => {
            let q = &g.measure;
            let weights: Vec<f64> = (0..q.state_count())
                .map(|s| q.probs()[s] * (0.5 * q.point(s).sum()).exp())
                .collect();
            q.with_probs(weights)
                .map(Measure::Grid)
                .map_err(|e| CliError::Config(e.to_string()))
        }
    }
}

pub fn run(args: &SimulateArgs) -> Result<i32, CliError> {
    let built = load_config(&args.common.config)?;
    let p = initial_p(&built.model)?;
    let r = built.model.measure();

    let stats = simulate_coupled_chain(
        &built.model,
        &built.family,
        &p,
        &r,
        args.steps,
        args.trials,
        args.common.seed,
    )
    .map_err(|e| CliError::Config(format!("coupled simulation: {e}")))?;

    // The theoretical envelope needs a contraction certificate; without
    // one the curve still gets written, just without that column.
    let factor = match pick_delta(&built, CERT_PAIR_BUDGET, args.common.seed) {
        Ok(ContractivityOutcome::Certified(cert)) => {
            let t = f64::from(cert.t);
            let n = f64::from(built.family.total());
            Some(1.0 - t * cert.delta / n)
        }
        Ok(ContractivityOutcome::Failure(f)) => {
            eprintln!(
                "warning: model not certified contractive (sup ratio {:.6}); curves.csv has no theoretical column",
                f.sup_ratio
            );
            None
        }
        Err(e) => {
            eprintln!(
                "warning: contractivity certification unavailable ({}); curves.csv has no theoretical column",
                e.message()
            );
            None
        }
    };

    let mut csv = String::new();
    match factor {
        Some(_) => csv.push_str("step,mean_sq_dist,stderr,theoretical\n"),
        None => csv.push_str("step,mean_sq_dist,stderr\n"),
    }
    for (m, (mean, se)) in stats.mean_sq_dist.iter().zip(&stats.stderr).enumerate() {
        match factor {
            Some(f) => {
                let theory = stats.mean_sq_dist[0] * f.powi(m as i32);
                csv.push_str(&format!("{m},{mean:e},{se:e},{theory:e}\n"));
            }
            None => csv.push_str(&format!("{m},{mean:e},{se:e}\n")),
        }
    }
    write_atomic(&args.common.out, "curves.csv", &csv)?;

    println!(
        "coupled chain: {} trials, {} steps, E|X-Y|^2 {:.6e} -> {:.6e}",
        stats.trials,
        args.steps,
        stats.mean_sq_dist.first().copied().unwrap_or(f64::NAN),
        stats.mean_sq_dist.last().copied().unwrap_or(f64::NAN),
    );
    if let Some(ratio) = stats.worst_step_ratio() {
        println!("worst step ratio: {ratio:.6}");
    }
    if let Some(f) = factor {
        println!("certified step factor: {f:.6}");
    }
    Ok(0)
}
