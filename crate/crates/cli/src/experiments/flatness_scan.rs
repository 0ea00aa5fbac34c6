//! Flatness factors over a volume-to-noise grid spanning [pi, 4 pi e]: the
//! L-infinity blow-up above 2 pi against the L1/KL factors that stay small
//! up to 2 pi e.

use serde_json::json;

use skg_core::flatness::{kl_flatness, l1_flatness, linf_flatness, zn_scaled_flatness, L1Method};
use skg_core::lattice::Lattice;
use skg_core::rng::stream;
use skg_core::Error;

use crate::config::{ExperimentConfig, ScanFamily, TAG_SCAN};
use crate::report::{fmt_f64, CsvReport, RunOutput};
use crate::CliError;

/// Log-spaced grid on [pi, 4 pi e], descending (so sigma ascends down the
/// rows and flatness values are non-increasing per column).
pub fn gamma_grid(points: usize) -> Vec<f64> {
    let lo = std::f64::consts::PI;
    let hi = 4.0 * std::f64::consts::PI * std::f64::consts::E;
    let mut grid: Vec<f64> = (0..points)
        .map(|i| {
            let t = if points == 1 { 0.0 } else { i as f64 / (points - 1) as f64 };
            (lo.ln() + t * (hi.ln() - lo.ln())).exp()
        })
        .collect();
    grid.reverse();
    grid
}

struct Row {
    n: u32,
    vnr: f64,
    metric: &'static str,
    value: f64,
    ci: f64,
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let scan = &cfg.flatness_scan;
    let grid = gamma_grid(scan.gamma_points);
    let mut rows: Vec<Row> = Vec::new();
    let mut stream_idx = 0u64;

    let scan_lattice = |lattice: &Lattice,
                            n_label: u32,
                            exact_linf: bool,
                            stream_idx: &mut u64,
                            rows: &mut Vec<Row>|
     -> Result<(), Error> {
        let n = lattice.dimension() as f64;
        let v_2n = lattice.volume().powf(2.0 / n);
        for &gamma in &grid {
            let sigma = (v_2n / gamma).sqrt();
            let linf = if exact_linf {
                let alpha = lattice.volume().powf(1.0 / n);
                zn_scaled_flatness(alpha, sigma, lattice.dimension() as u32)?.value
            } else {
                linf_flatness(lattice, sigma)?.value
            };
            rows.push(Row { n: n_label, vnr: gamma, metric: "linf", value: linf, ci: 0.0 });

            let mut rng = stream(cfg.seed, TAG_SCAN, *stream_idx);
            *stream_idx += 1;
            let l1 = l1_flatness(lattice, sigma, L1Method::MonteCarlo, scan.l1_samples, &mut rng)?;
            rows.push(Row { n: n_label, vnr: gamma, metric: "l1", value: l1.value, ci: l1.ci_halfwidth });

            let mut rng = stream(cfg.seed, TAG_SCAN, *stream_idx);
            *stream_idx += 1;
            let kl = kl_flatness(lattice, sigma, scan.kl_samples.max(1000), &mut rng)?;
            rows.push(Row { n: n_label, vnr: gamma, metric: "kl", value: kl.value, ci: kl.ci_halfwidth });
        }
        Ok(())
    };

    match scan.family {
        ScanFamily::Zn => {
            for &n in &scan.dims {
                let lattice = Lattice::scaled_integers(scan.alpha, n as usize)?;
                scan_lattice(&lattice, n, true, &mut stream_idx, &mut rows)?;
            }
        }
        ScanFamily::Chain => {
            let chain = cfg.build_chain()?;
            for lattice in [chain.lambda1(), chain.lambda2(), chain.lambda3()] {
                scan_lattice(lattice, chain.n() as u32, false, &mut stream_idx, &mut rows)?;
            }
        }
    }

    let mut csv = CsvReport::new("n,vnr,metric,value,ci");
    for r in &rows {
        csv.push_row(&[
            r.n.to_string(),
            fmt_f64(r.vnr),
            r.metric.into(),
            fmt_f64(r.value),
            fmt_f64(r.ci),
        ]);
    }
    let meta = json!({
        "family": scan.family,
        "dims": scan.dims,
        "alpha": scan.alpha,
        "gamma_grid": grid,
        "l1_samples": scan.l1_samples,
        "kl_samples": scan.kl_samples,
        "row_order": "per lattice, gamma descending (sigma ascending), metrics linf/l1/kl",
    });
    Ok(RunOutput { csv, meta })
}
