//! WebAssembly bindings for the browser demo. Each exported function returns
//! a JSON document for the page to plot; the plain `*_json` functions hold
//! the logic so they can be tested natively.

use cvqkd::finite_size::{lattice_difference, model_cm, CoherentOptions};
use cvqkd::mc::{run_protocol, McOptions};
use cvqkd::sweep::{run, Mode, RunConfig, Scale, SweepSpec};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest simulated run the page accepts, to keep the tab responsive.
const MAX_SIGNALS: f64 = 2e6;

#[derive(Serialize)]
struct Curve {
    label: String,
    rates: Vec<f64>,
}

#[derive(Serialize)]
struct DistancePlot {
    distance_km: Vec<f64>,
    plob: Vec<f64>,
    curves: Vec<Curve>,
}

#[derive(Serialize)]
struct BlockSizePlot {
    block_size: Vec<f64>,
    rate: Vec<f64>,
    delta: Vec<f64>,
}

#[derive(Serialize)]
struct Histogram {
    /// Bin distance `x_a - x_b`.
    k: Vec<i64>,
    empirical: Vec<f64>,
    model: Vec<f64>,
    key_rate: f64,
    abort_reason: Option<String>,
    d_pe: Option<f64>,
    d0: f64,
    signals: u64,
}

fn link_config(epr_variance: f64, excess_noise: f64, beta: f64) -> RunConfig {
    RunConfig {
        epr_variance,
        excess_noise,
        beta,
        ..RunConfig::default()
    }
}

struct Columns {
    axis: Vec<f64>,
    rate: Vec<f64>,
    plob: Vec<f64>,
    /// Bin width chosen at each point; NaN for collective rows.
    delta: Vec<f64>,
}

fn sweep(
    config: &RunConfig,
    param: &str,
    from: f64,
    to: f64,
    steps: usize,
    scale: Scale,
) -> Result<Columns, String> {
    let cfg = RunConfig {
        sweep: Some(SweepSpec {
            param: param.into(),
            from,
            to,
            steps,
            scale,
        }),
        ..config.clone()
    };
    let out = run(&cfg).map_err(|e| e.to_string())?;
    let delta = out
        .rows
        .iter()
        .map(|r| match &r.breakdown {
            cvqkd::sweep::Breakdown::Coherent(b) => b.delta,
            cvqkd::sweep::Breakdown::Collective(_) => f64::NAN,
        })
        .collect();
    Ok(Columns {
        axis: out.rows.iter().map(|r| r.axis).collect(),
        rate: out.rows.iter().map(|r| r.key_rate).collect(),
        plob: out.rows.iter().map(|r| r.plob).collect(),
        delta,
    })
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

/// Collective, asymptotic and finite-size rates against total distance.
pub fn rate_vs_distance_json(
    epr_variance: f64,
    excess_noise: f64,
    beta: f64,
    max_km: f64,
    steps: usize,
) -> Result<String, String> {
    let base = link_config(epr_variance, excess_noise, beta);
    let mut curves = Vec::new();
    let mut axis = Vec::new();
    let mut plob = Vec::new();
    let modes = [
        ("collective", Mode::Collective, 1e10),
        ("coherent, asymptotic", Mode::CoherentAsymptotic, 1e10),
        ("coherent, N = 1e10", Mode::Coherent, 1e10),
        ("coherent, N = 1e9", Mode::Coherent, 1e9),
        ("coherent, N = 1e8", Mode::Coherent, 1e8),
        ("coherent, N = 1e7", Mode::Coherent, 1e7),
    ];
    for (label, mode, block_size) in modes {
        let cfg = RunConfig {
            mode,
            block_size,
            ..base.clone()
        };
        let cols = sweep(&cfg, "distance_km", 0.0, max_km, steps, Scale::Linear)?;
        axis = cols.axis;
        plob = cols.plob;
        curves.push(Curve {
            label: label.into(),
            rates: cols.rate,
        });
    }
    to_json(&DistancePlot {
        distance_km: axis,
        plob,
        curves,
    })
}

/// Finite-size coherent-attack rate against block size on a log grid.
pub fn rate_vs_block_size_json(
    distance_km: f64,
    epr_variance: f64,
    excess_noise: f64,
    beta: f64,
    from_exp: f64,
    to_exp: f64,
    steps: usize,
) -> Result<String, String> {
    let cfg = RunConfig {
        mode: Mode::Coherent,
        distance_km,
        ..link_config(epr_variance, excess_noise, beta)
    };
    let cols = sweep(
        &cfg,
        "block_size",
        10f64.powf(from_exp),
        10f64.powf(to_exp),
        steps,
        Scale::Log,
    )?;
    to_json(&BlockSizePlot {
        block_size: cols.axis,
        rate: cols.rate,
        delta: cols.delta,
    })
}

/// Simulates one execution and compares the histogram of bin distances in
/// the estimation subset with the lattice model.
pub fn mc_histogram_json(
    distance_km: f64,
    epr_variance: f64,
    signals: f64,
    delta: f64,
    seed: u64,
) -> Result<String, String> {
    if !(3.0..=MAX_SIGNALS).contains(&signals) {
        return Err(format!("signals must lie in [3, {MAX_SIGNALS:e}]"));
    }
    let opts = CoherentOptions {
        tap_in_model: true,
        ..CoherentOptions::default()
    };
    let cfg = RunConfig {
        distance_km,
        epr_variance,
        block_size: 1e8,
        ..RunConfig::default()
    };
    let params = cfg.link().params().map_err(|e| e.to_string())?;
    let fs = cfg.finite_size(delta).map_err(|e| e.to_string())?;
    let mc = McOptions {
        signals: Some(signals.round() as u64),
        keep_records: true,
    };
    let result = run_protocol(&params, &fs, &opts, &mc, seed).map_err(|e| e.to_string())?;

    let diffs: Vec<i64> = result
        .records
        .iter()
        .filter(|r| r.role == cvqkd::mc::Role::Pe)
        .map(|r| r.x_a as i64 - r.x_b as i64)
        .collect();
    let cm = model_cm(&params, fs.t_split, &opts).map_err(|e| e.to_string())?;
    // Standard deviation of t_q x_a - x_b in quadrature units.
    let t_q = (cm.b() / cm.a()).sqrt();
    let spread = ((cm.b() - t_q * cm.c()).max(0.0)).sqrt();
    let model = lattice_difference(spread / delta).map_err(|e| e.to_string())?;
    let radius = (4.0 * spread / delta).ceil().max(3.0) as i64;
    let k: Vec<i64> = (-radius..=radius).collect();
    let total = diffs.len().max(1) as f64;
    let empirical = k
        .iter()
        .map(|k| diffs.iter().filter(|d| *d == k).count() as f64 / total)
        .collect();
    let b = &result.breakdown;
    to_json(&Histogram {
        model: k.iter().map(|k| model.prob(*k)).collect(),
        k,
        empirical,
        key_rate: b.key_rate,
        abort_reason: b.abort_reason.map(|a| a.description().to_string()),
        d_pe: b.pe.map(|p| p.d_pe),
        d0: b.d0,
        signals: result.sifted,
    })
}

#[wasm_bindgen]
pub fn rate_vs_distance(
    epr_variance: f64,
    excess_noise: f64,
    beta: f64,
    max_km: f64,
    steps: usize,
) -> Result<String, JsError> {
    rate_vs_distance_json(epr_variance, excess_noise, beta, max_km, steps)
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn rate_vs_block_size(
    distance_km: f64,
    epr_variance: f64,
    excess_noise: f64,
    beta: f64,
    from_exp: f64,
    to_exp: f64,
    steps: usize,
) -> Result<String, JsError> {
    rate_vs_block_size_json(
        distance_km,
        epr_variance,
        excess_noise,
        beta,
        from_exp,
        to_exp,
        steps,
    )
    .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn mc_histogram(
    distance_km: f64,
    epr_variance: f64,
    signals: f64,
    delta: f64,
    seed: u32,
) -> Result<String, JsError> {
    mc_histogram_json(distance_km, epr_variance, signals, delta, seed.into())
        .map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> serde_json::Value {
        serde_json::from_str(text).unwrap()
    }

    #[test]
    fn distance_plot_has_every_curve() {
        let v = parse(&rate_vs_distance_json(1e5, 1e-3, 1.0, 20.0, 11).unwrap());
        assert_eq!(v["distance_km"].as_array().unwrap().len(), 11);
        assert_eq!(v["curves"].as_array().unwrap().len(), 6);
        assert!(v["curves"][0]["rates"][0].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn block_size_plot_turns_positive() {
        let v = parse(&rate_vs_block_size_json(5.0, 1e5, 1e-3, 1.0, 6.0, 12.0, 7).unwrap());
        let rates: Vec<f64> = v["rate"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| r.as_f64().unwrap())
            .collect();
        assert_eq!(rates[0], 0.0);
        assert!(*rates.last().unwrap() > 0.0);
    }

    #[test]
    fn histogram_matches_model() {
        let v = parse(&mc_histogram_json(2.0, 20.0, 2e5, 0.05, 3).unwrap());
        let emp: Vec<f64> = v["empirical"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect();
        let model: Vec<f64> = v["model"]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect();
        let tv: f64 = emp
            .iter()
            .zip(&model)
            .map(|(e, m)| (e - m).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.02, "total variation {tv}");
        assert!(v["abort_reason"].is_null());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(mc_histogram_json(2.0, 20.0, 1e9, 0.05, 3).is_err());
        assert!(rate_vs_distance_json(1e5, 1e-3, 1.0, -1.0, 5).is_err());
    }
}
