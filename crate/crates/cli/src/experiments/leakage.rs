//! Eavesdropper leakage proxy: the average variational distance of Eve's
//! quantized-value posterior to uniform, with the flatness budget and the
//! mutual-information conversion. Per-key conditional distances are recorded
//! under both weightings.

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

use skg_core::lattice::{CosetTable, RegionKind};
use skg_core::protocol::{chain_flatness_report, corollary_budget, EvePosterior, Protocol};
use skg_core::rng::stream;
use skg_core::stats::Estimate;
use skg_core::Error;

use crate::config::{ExperimentConfig, TAG_FLATNESS, TAG_PAIR};
use crate::report::{fmt_f64, CsvReport, RunOutput};
use crate::CliError;

use super::run_chunked_with;

struct PairResult {
    d_uniform: f64,
    d_keys_empirical: f64,
    d_keys_uniform: f64,
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let model = cfg.model()?;
    let chain = cfg.build_chain()?;
    let quant = cfg.quantizer(&model)?;
    let protocol = Protocol::new(chain.clone(), model, quant)?;
    let eve = EvePosterior::new(&chain, &quant, &model, model.sigma_2, cfg.leakage.posterior_nodes)?;

    // map each Lambda1/Lambda3 coset to its (public message, key) pair
    let s_table = CosetTable::new(chain.lambda1(), chain.lambda2())?;
    let m = eve.coset_count();
    let key_space = protocol.key_space() as usize;
    let s_space = s_table.index() as usize;
    let mut coset_to_sk = vec![(0usize, 0usize); m];
    for (v, slot) in coset_to_sk.iter_mut().enumerate() {
        let rep = eve.table().representative(v as u64);
        let q2 = chain.lambda2().reduce(RegionKind::Voronoi, &rep)?;
        let s_idx = s_table.index_of_point(&rep)?;
        let k_idx = protocol.key_index(&q2.lattice_point)?;
        *slot = (s_idx, k_idx);
    }
    let distinct: std::collections::HashSet<_> = coset_to_sk.iter().collect();
    if distinct.len() != m {
        return Err(CliError::Numeric(
            "coset to (message, key) map failed to be a bijection".into(),
        ));
    }

    let n = chain.n();
    let pairs = cfg.leakage.pairs;
    // posterior evaluations are expensive; chunk finely for parallelism
    let results: Vec<Result<Vec<PairResult>, Error>> =
        run_chunked_with(pairs, 8, |chunk_idx, count| {
        let mut rng = stream(cfg.seed, TAG_PAIR, chunk_idx);
        let mut out = Vec::with_capacity(count as usize);
        for _ in 0..count {
            // Eve's observation marginal and the public dither
            let z = DVector::from_fn(n, |_, _| {
                let g: f64 = StandardNormal.sample(&mut rng);
                model.sigma_z * g
            });
            let u = protocol.sample_dither(&mut rng);
            let pmf = eve.pmf(&z, &u)?;
            let uniform = 1.0 / m as f64;
            let d_uniform: f64 = pmf.iter().map(|&p| (p - uniform).abs()).sum();

            // conditional public-message distances per key value
            let mut p_k = vec![0.0f64; key_space];
            for (v, &(_, k_idx)) in coset_to_sk.iter().enumerate() {
                p_k[k_idx] += pmf[v];
            }
            let mut v_k = vec![0.0f64; key_space];
            let u_s = 1.0 / s_space as f64;
            for (v, &(_, k_idx)) in coset_to_sk.iter().enumerate() {
                if p_k[k_idx] > 0.0 {
                    v_k[k_idx] += (pmf[v] / p_k[k_idx] - u_s).abs();
                }
            }
            let d_keys_empirical: f64 =
                v_k.iter().zip(&p_k).map(|(&v, &w)| v * w).sum();
            let d_keys_uniform: f64 = v_k.iter().sum::<f64>() / key_space as f64;
            out.push(PairResult { d_uniform, d_keys_empirical, d_keys_uniform });
        }
        Ok(out)
    });

    let mut d_uniform = Vec::with_capacity(pairs as usize);
    let mut d_emp = Vec::with_capacity(pairs as usize);
    let mut d_unif_w = Vec::with_capacity(pairs as usize);
    for chunk in results {
        for r in chunk? {
            d_uniform.push(r.d_uniform);
            d_emp.push(r.d_keys_empirical);
            d_unif_w.push(r.d_keys_uniform);
        }
    }
    let proxy = Estimate::from_samples(&d_uniform);
    let proxy_emp = Estimate::from_samples(&d_emp);
    let proxy_unif = Estimate::from_samples(&d_unif_w);

    let mut flat_rng = stream(cfg.seed, TAG_FLATNESS, 0);
    let flat = chain_flatness_report(
        protocol.chain(),
        protocol.cfg(),
        cfg.leakage.flatness_samples,
        &mut flat_rng,
    )?;
    let budget = corollary_budget(&flat);
    let within = proxy.value <= budget.value + 3.0 * (budget.ci_halfwidth + proxy.ci_halfwidth);

    // I(K; S, Z, U) <= d log(|K| / d)
    let converted_bound = if proxy.value > 0.0 {
        proxy.value * (key_space as f64 / proxy.value).ln()
    } else {
        0.0
    };

    let mut csv = CsvReport::new("metric,value,ci_lo,ci_hi");
    let push = |csv: &mut CsvReport, name: &str, e: &Estimate| {
        csv.push_row(&[
            name.into(),
            fmt_f64(e.value),
            fmt_f64(e.value - e.ci_halfwidth),
            fmt_f64(e.value + e.ci_halfwidth),
        ]);
    };
    push(&mut csv, "proxy_v_uniform", &proxy);
    push(&mut csv, "proxy_keys_empirical_weight", &proxy_emp);
    push(&mut csv, "proxy_keys_uniform_weight", &proxy_unif);
    push(&mut csv, "budget_total", &budget);
    csv.push_row(&[
        "converted_bound".into(),
        fmt_f64(converted_bound),
        fmt_f64(converted_bound),
        fmt_f64(converted_bound),
    ]);

    let meta = json!({
        "pairs": pairs,
        "posterior_nodes": cfg.leakage.posterior_nodes,
        "coset_count": m,
        "key_space": key_space,
        "s_space": s_space,
        "proxy_v_uniform": proxy,
        "proxy_keys_empirical_weight": proxy_emp,
        "proxy_keys_uniform_weight": proxy_unif,
        "budget": { "value": budget.value, "ci_halfwidth": budget.ci_halfwidth },
        "budget_vacuous": budget.value > 2.0,
        "within_budget": within,
        "converted_bound_nats": converted_bound,
        "flatness": flat,
    });
    Ok(RunOutput { csv, meta })
}
