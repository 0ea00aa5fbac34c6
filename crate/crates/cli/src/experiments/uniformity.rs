//! Empirical distance of the key distribution to uniform, against the
//! flatness-factor budget, plus the entropy-gap conversion.

use serde_json::json;

use skg_core::protocol::{chain_flatness_report, corollary_budget, Protocol};
use skg_core::rng::stream;
use skg_core::stats::{entropy, kahan_sum};
use skg_core::Error;

use crate::config::{ExperimentConfig, TAG_FLATNESS, TAG_ROUND};
use crate::report::{fmt_f64, CsvReport, RunOutput};
use crate::CliError;

use super::run_chunked;

const KEY_SPACE_LIMIT: u64 = 10_000;

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let model = cfg.model()?;
    let chain = cfg.build_chain()?;
    let quant = cfg.quantizer(&model)?;
    let protocol = Protocol::new(chain, model, quant)?;
    let key_space = protocol.key_space();
    if key_space > KEY_SPACE_LIMIT {
        return Err(CliError::Core(Error::KeySpaceTooLarge { size: key_space as u128 }));
    }

    let total = cfg.samples;
    let histograms: Vec<Result<Vec<u64>, Error>> = run_chunked(total, |chunk_idx, count| {
        let mut rng = stream(cfg.seed, TAG_ROUND, chunk_idx);
        let mut hist = vec![0u64; key_space as usize];
        for _ in 0..count {
            let round = protocol.run_round(&mut rng)?;
            let k = nalgebra::DVector::from_vec(round.k.clone());
            hist[protocol.key_index(&k)?] += 1;
        }
        Ok(hist)
    });
    let mut hist = vec![0u64; key_space as usize];
    for h in histograms {
        for (acc, v) in hist.iter_mut().zip(h?) {
            *acc += v;
        }
    }

    let n = total as f64;
    let p_hat: Vec<f64> = hist.iter().map(|&c| c as f64 / n).collect();
    let uniform = 1.0 / key_space as f64;
    let v_distance = kahan_sum(p_hat.iter().map(|&p| (p - uniform).abs()));
    // histogram noise allowance: expected absolute deviation per cell
    let estimation_slack =
        kahan_sum(p_hat.iter().map(|&p| (p * (1.0 - p) / n).sqrt()));

    let mut flat_rng = stream(cfg.seed, TAG_FLATNESS, 0);
    let flat = chain_flatness_report(
        protocol.chain(),
        protocol.cfg(),
        cfg.uniformity.flatness_samples,
        &mut flat_rng,
    )?;
    let budget = corollary_budget(&flat);
    let budget_vacuous = budget.value > 2.0;
    let within = v_distance <= budget.value + 3.0 * (budget.ci_halfwidth + estimation_slack);

    let h_emp = entropy(&p_hat);
    let log_k = (key_space as f64).ln();
    let entropy_gap = (h_emp - log_k).abs();
    // |H(K) - log|K|| <= V log(|K| / V), meaningful for V <= 1/2
    let entropy_gap_bound = if v_distance > 0.0 {
        v_distance * (key_space as f64 / v_distance).ln()
    } else {
        0.0
    };

    let mut csv = CsvReport::new("metric,value,ci_lo,ci_hi");
    let push = |csv: &mut CsvReport, name: &str, value: f64, lo: f64, hi: f64| {
        csv.push_row(&[name.into(), fmt_f64(value), fmt_f64(lo), fmt_f64(hi)]);
    };
    push(&mut csv, "v_distance", v_distance, v_distance - estimation_slack, v_distance + estimation_slack);
    push(
        &mut csv,
        "eps1_lambda1_sigma_q",
        flat.eps1_lambda1.value,
        flat.eps1_lambda1.value - flat.eps1_lambda1.ci_halfwidth,
        flat.eps1_lambda1.value + flat.eps1_lambda1.ci_halfwidth,
    );
    push(
        &mut csv,
        "eps1_lambda3_sigma_tilde2",
        flat.eps1_lambda3.value,
        flat.eps1_lambda3.value - flat.eps1_lambda3.ci_halfwidth,
        flat.eps1_lambda3.value + flat.eps1_lambda3.ci_halfwidth,
    );
    push(
        &mut csv,
        "budget_total",
        budget.value,
        budget.value - budget.ci_halfwidth,
        budget.value + budget.ci_halfwidth,
    );
    push(&mut csv, "entropy_gap", entropy_gap, 0.0, entropy_gap_bound.max(entropy_gap));
    push(&mut csv, "entropy_gap_bound", entropy_gap_bound, entropy_gap_bound, entropy_gap_bound);
    push(&mut csv, "key_space", key_space as f64, key_space as f64, key_space as f64);

    if budget_vacuous {
        log::info!("flatness budget {} exceeds the trivial bound 2; test is vacuous", budget.value);
    }
    if !within {
        log::warn!(
            "uniformity distance {v_distance} exceeds budget {} + slack",
            budget.value
        );
    }

    let meta = json!({
        "key_space": key_space,
        "v_distance": v_distance,
        "estimation_slack": estimation_slack,
        "budget": { "value": budget.value, "ci_halfwidth": budget.ci_halfwidth },
        "budget_vacuous": budget_vacuous,
        "within_budget": within,
        "entropy_empirical": h_emp,
        "entropy_uniform": log_k,
        "flatness": flat,
        "histogram": hist,
    });
    Ok(RunOutput { csv, meta })
}
