//! Public-rate / secret-key-rate trade-off curve with the matched quantizer
//! width per grid point; the final row is the unlimited-communication limit.

use serde_json::json;

use skg_core::protocol::{
    achievable_bound, secret_key_capacity, sigma_q_for_public_rate, tradeoff_bound,
};

use crate::config::ExperimentConfig;
use crate::report::{fmt_f64, CsvReport, RunOutput};
use crate::CliError;

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let model = cfg.model()?;
    let (s1, s2) = (model.sigma_1, model.sigma_2);
    if !(s2 > s1) {
        return Err(CliError::Config("trade-off requires sigma_2 > sigma_1".into()));
    }
    let points = cfg.tradeoff.points;
    let r_max = cfg.tradeoff.r_p_max;
    if !(r_max > 0.0) {
        return Err(CliError::Config("r_p_max must be positive".into()));
    }

    let mut csv = CsvReport::new("r_p,r_bar_k,sigma_q,achievable_r_k");
    for i in 1..=points {
        let r_p = r_max * i as f64 / points as f64;
        let sigma_q = sigma_q_for_public_rate(s1, r_p);
        csv.push_row(&[
            fmt_f64(r_p),
            fmt_f64(tradeoff_bound(s1, s2, r_p)),
            fmt_f64(sigma_q),
            fmt_f64(achievable_bound(s1, s2, sigma_q)),
        ]);
    }
    // unlimited public communication: sigma_q -> 0 and both rates reach C_s
    let c_s = secret_key_capacity(s1, s2);
    csv.push_row(&[
        fmt_f64(f64::INFINITY),
        fmt_f64(c_s),
        fmt_f64(0.0),
        fmt_f64(c_s),
    ]);

    let meta = json!({
        "sigma_1": s1,
        "sigma_2": s2,
        "c_s_nats": c_s,
        "r_p_max": r_max,
        "points": points,
    });
    Ok(RunOutput { csv, meta })
}
