//! Key agreement error probability over Monte-Carlo protocol rounds, with
//! the nearest-plane reliability condition cross-checked per round.

use serde_json::json;

use skg_core::protocol::{rate_report, Protocol};
use skg_core::rng::stream;
use skg_core::stats::clopper_pearson;

use crate::config::{ExperimentConfig, TAG_ROUND};
use crate::report::{fmt_f64, CsvReport, RunOutput};
use crate::CliError;

use super::run_chunked;

#[derive(Default, Clone, Copy)]
struct Tally {
    rounds: u64,
    key_errors: u64,
    decode_errors: u64,
    condition_satisfied: u64,
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let model = cfg.model()?;
    let chain = cfg.build_chain()?;
    let quant = cfg.quantizer(&model)?;
    let protocol = Protocol::new(chain, model, quant)?;
    let total = cfg.samples;

    let tallies: Vec<Result<Tally, skg_core::Error>> =
        run_chunked(total, |chunk_idx, count| {
            let mut rng = stream(cfg.seed, TAG_ROUND, chunk_idx);
            let mut t = Tally::default();
            for _ in 0..count {
                let round = protocol.run_round(&mut rng)?;
                t.rounds += 1;
                if !round.success {
                    t.key_errors += 1;
                }
                if !round.decode_success {
                    t.decode_errors += 1;
                }
                let x_q = nalgebra::DVector::from_vec(round.x_q.clone());
                let y = nalgebra::DVector::from_vec(round.y.clone());
                let u = nalgebra::DVector::from_vec(round.u.clone());
                if protocol.reliability_condition(&x_q, &y, &u)? {
                    t.condition_satisfied += 1;
                }
            }
            Ok(t)
        });

    let mut total_tally = Tally::default();
    for t in tallies {
        let t = t?;
        total_tally.rounds += t.rounds;
        total_tally.key_errors += t.key_errors;
        total_tally.decode_errors += t.decode_errors;
        total_tally.condition_satisfied += t.condition_satisfied;
    }

    // the reliability condition characterizes decoding success exactly
    if total_tally.condition_satisfied != total_tally.rounds - total_tally.decode_errors {
        return Err(CliError::Numeric(format!(
            "reliability-condition count {} disagrees with decode successes {}",
            total_tally.condition_satisfied,
            total_tally.rounds - total_tally.decode_errors
        )));
    }

    let (key_lo, key_hi) = clopper_pearson(total_tally.key_errors, total_tally.rounds);
    let (dec_lo, dec_hi) = clopper_pearson(total_tally.decode_errors, total_tally.rounds);
    let p_e = total_tally.key_errors as f64 / total_tally.rounds as f64;
    let p_dec = total_tally.decode_errors as f64 / total_tally.rounds as f64;
    let condition_fraction =
        total_tally.condition_satisfied as f64 / total_tally.rounds as f64;

    let mut csv = CsvReport::new("metric,value,ci_lo,ci_hi");
    csv.push_row(&[
        "key_error_rate".into(),
        fmt_f64(p_e),
        fmt_f64(key_lo),
        fmt_f64(key_hi),
    ]);
    csv.push_row(&[
        "decode_error_rate".into(),
        fmt_f64(p_dec),
        fmt_f64(dec_lo),
        fmt_f64(dec_hi),
    ]);
    csv.push_row(&[
        "reliability_condition_fraction".into(),
        fmt_f64(condition_fraction),
        fmt_f64(1.0 - dec_hi),
        fmt_f64(1.0 - dec_lo),
    ]);

    let rates = rate_report(protocol.chain(), protocol.model(), protocol.cfg());
    let two_pi_e = 2.0 * std::f64::consts::PI * std::f64::consts::E;
    let v1 = protocol.chain().lambda1().vnr(protocol.cfg().sigma_q)?;
    let v2 = protocol.chain().lambda2().vnr(protocol.cfg().sigma_tilde_1)?;
    let v3 = protocol.chain().lambda3().vnr(protocol.cfg().sigma_tilde_2)?;
    let meta = json!({
        "rounds": total_tally.rounds,
        "key_errors": total_tally.key_errors,
        "decode_errors": total_tally.decode_errors,
        "rates": rates,
        "vnr_lambda1_sigma_q": v1,
        "vnr_lambda2_sigma_tilde1": v2,
        "vnr_lambda3_sigma_tilde2": v3,
        "volume_conditions": {
            "quantizer": v1 < two_pi_e,
            "awgn": v2 > two_pi_e,
            "extractor": v3 < two_pi_e,
        },
        "volume_tracking_ratios": protocol.chain().volume_tracking_ratios(),
        "chain": protocol.chain().spec(),
    });
    Ok(RunOutput { csv, meta })
}
