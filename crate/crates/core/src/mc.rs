//! Monte-Carlo simulation of one protocol execution.
//!
//! Rounds are drawn from the Wigner function of the shared Gaussian state,
//! which is exact for the Gaussian operations involved (beam splitters,
//! homodyne and heterodyne detection). Rounds are generated in fixed-size
//! chunks, each with its own ChaCha stream, so results are identical with
//! or without the `parallel` feature.

use std::f64::consts::FRAC_1_SQRT_2;
use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finite_size::{
    alphabet_size, breakdown_base, ec_leakage, expected_statistics, key_length_low,
    shannon_entropy, AbortReason, CoherentOptions, CoherentRateBreakdown, EntropyConvention,
    FiniteSizeParams, PEStatistics,
};
use crate::gaussian::{shared_cm, ProtocolParams, TwoModeCM};

const CHUNK: usize = 4096;
/// Stream reserved for the key/estimation role assignment.
const ROLE_STREAM: u64 = u64::MAX;
/// Stream reserved for the standalone energy test.
const ENERGY_STREAM: u64 = u64::MAX - 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    X,
    P,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRound {
    pub x_a: f64,
    pub p_a: f64,
    pub x_b: f64,
    pub p_b: f64,
    pub basis_a: Basis,
    pub basis_b: Basis,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Key,
    Pe,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Key => "key",
            Role::Pe => "pe",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiftedRecord {
    /// Alice's value after rescaling by `t_q_hat`, quadrature units.
    pub q_a: f64,
    pub q_b: f64,
    pub x_a: u32,
    pub x_b: u32,
    pub role: Role,
}

fn chunk_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn basis(rng: &mut ChaCha8Rng) -> Basis {
    if rng.random::<bool>() {
        Basis::X
    } else {
        Basis::P
    }
}

/// Cholesky factors of `[[a, c], [c, b]]`.
#[derive(Clone, Copy, Debug)]
struct Sampler {
    scale_a: f64,
    coupling: f64,
    residual_b: f64,
}

impl Sampler {
    fn new(cm: &TwoModeCM) -> Self {
        let scale_a = cm.a().sqrt();
        Sampler {
            scale_a,
            coupling: cm.c() / scale_a,
            residual_b: (cm.det() / cm.a()).max(0.0).sqrt(),
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> QuadratureRound {
        let (z1, z2, z3, z4) = (normal(rng), normal(rng), normal(rng), normal(rng));
        QuadratureRound {
            x_a: self.scale_a * z1,
            x_b: self.coupling * z1 + self.residual_b * z2,
            p_a: self.scale_a * z3,
            p_b: -self.coupling * z3 + self.residual_b * z4,
            basis_a: basis(rng),
            basis_b: basis(rng),
        }
    }
}

#[cfg(feature = "parallel")]
fn map_chunks<T: Send>(range: std::ops::Range<u64>, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    range.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_chunks<T>(range: std::ops::Range<u64>, f: impl Fn(u64) -> T) -> Vec<T> {
    range.map(f).collect()
}

/// Draws `count` rounds from `cm` (shot-noise units) with fair, independent
/// basis choices.
pub fn sample_rounds(cm: &TwoModeCM, count: usize, seed: u64) -> Vec<QuadratureRound> {
    let sampler = Sampler::new(cm);
    let chunks = count.div_ceil(CHUNK) as u64;
    let parts = map_chunks(0..chunks, |idx| {
        let mut rng = chunk_rng(seed, idx);
        let len = CHUNK.min(count - idx as usize * CHUNK);
        (0..len).map(|_| sampler.draw(&mut rng)).collect::<Vec<_>>()
    });
    parts.concat()
}

/// Keeps rounds measured in the same basis, returning `(alice, bob)` values
/// of the chosen quadrature.
pub fn sift(rounds: &[QuadratureRound]) -> Vec<(f64, f64)> {
    rounds
        .iter()
        .filter(|r| r.basis_a == r.basis_b)
        .map(|r| match r.basis_a {
            Basis::X => (r.x_a, r.x_b),
            Basis::P => (r.p_a, r.p_b),
        })
        .collect()
}

/// Rescaling factor `sqrt(sum (q_b - mean)^2 / sum (q_a - mean)^2)`.
pub fn estimate_tq(q_a: &[f64], q_b: &[f64]) -> Result<f64> {
    if q_a.len() != q_b.len() {
        return Err(Error::data("estimation samples differ in length"));
    }
    if q_a.len() < 2 {
        return Err(Error::data("need at least two estimation samples"));
    }
    let centred_ss = |v: &[f64]| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
    };
    let (ss_a, ss_b) = (centred_ss(q_a), centred_ss(q_b));
    if !(ss_a > 0.0) {
        return Err(Error::data("Alice's estimation samples have zero spread"));
    }
    Ok((ss_b / ss_a).sqrt())
}

/// ADC symbol in `1..=2 alpha / delta`. Bins are `(-alpha + (k-1) delta,
/// -alpha + k delta]`; both tails are merged into the outermost symbols.
pub fn discretize(value: f64, alpha: f64, delta: f64) -> Result<u32> {
    let symbols = alphabet_size(alpha, delta)?;
    Ok(symbol(value, alpha, delta, symbols))
}

fn symbol(value: f64, alpha: f64, delta: f64, symbols: u32) -> u32 {
    let k = ((value + alpha) / delta).ceil();
    if k.is_nan() || k <= 1.0 {
        1
    } else if k >= symbols as f64 {
        symbols
    } else {
        k as u32
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyTestOutcome {
    pub passed: bool,
    /// Rounds whose heterodyne outcome exceeded the threshold.
    pub failures: usize,
    /// Bob's transmitted `(x, p)` values, to be homodyned.
    pub transmitted: Vec<(f64, f64)>,
}

/// Vacuum quadrature noise, variance 1/2.
fn vacuum(rng: &mut ChaCha8Rng) -> f64 {
    FRAC_1_SQRT_2 * normal(rng)
}

/// One energy-test round in quadrature units: returns the transmitted
/// `(x, p)` and whether the heterodyne outcome stayed below `m_th`.
fn energy_round(x_b: f64, p_b: f64, t: f64, m_th: f64, noise: [f64; 4]) -> ((f64, f64), bool) {
    let (st, sr) = (t.sqrt(), (1.0 - t).sqrt());
    let [v1x, v1p, v2x, v2p] = noise;
    let transmitted = (st * x_b + sr * v1x, st * p_b + sr * v1p);
    let (rx, rp) = (sr * x_b - st * v1x, sr * p_b - st * v1p);
    let q_t1 = (rx + v2x) * FRAC_1_SQRT_2;
    let p_t2 = (rp - v2p) * FRAC_1_SQRT_2;
    (transmitted, q_t1.abs() <= m_th && p_t2.abs() <= m_th)
}

fn check_split(t_split: f64) -> Result<()> {
    if !(t_split > 0.5 && t_split < 1.0) {
        return Err(Error::config(format!(
            "energy-test transmissivity must lie in (1/2, 1), got {t_split}"
        )));
    }
    Ok(())
}

/// Splits off a fraction `1 - t_split` of Bob's mode and heterodynes it.
/// Inputs and `m_th` are in quadrature units (vacuum variance 1/2).
pub fn energy_test(
    x_b: &[f64],
    p_b: &[f64],
    t_split: f64,
    m_th: f64,
    seed: u64,
) -> Result<EnergyTestOutcome> {
    check_split(t_split)?;
    if x_b.len() != p_b.len() {
        return Err(Error::data("x and p streams differ in length"));
    }
    let mut rng = chunk_rng(seed, ENERGY_STREAM);
    let mut failures = 0;
    let transmitted = x_b
        .iter()
        .zip(p_b)
        .map(|(&x, &p)| {
            let noise = [
                vacuum(&mut rng),
                vacuum(&mut rng),
                vacuum(&mut rng),
                vacuum(&mut rng),
            ];
            let (out, ok) = energy_round(x, p, t_split, m_th, noise);
            failures += usize::from(!ok);
            out
        })
        .collect();
    Ok(EnergyTestOutcome {
        passed: failures == 0,
        failures,
        transmitted,
    })
}

/// Distance and second-moment statistics of two symbol sequences.
/// `p_pass_emp` and `t_q_hat` are left at 1 for the caller to fill in.
pub fn pe_statistics(x_a: &[u32], x_b: &[u32], alpha: f64, delta: f64) -> Result<PEStatistics> {
    if x_a.len() != x_b.len() {
        return Err(Error::data(format!(
            "symbol sequences differ in length ({} vs {})",
            x_a.len(),
            x_b.len()
        )));
    }
    if x_a.is_empty() {
        return Err(Error::data("no estimation symbols"));
    }
    let centre = alpha / delta;
    let m = x_a.len() as f64;
    let (mut d, mut v_d, mut v_a, mut v_b) = (0.0, 0.0, 0.0, 0.0);
    for (&a, &b) in x_a.iter().zip(x_b) {
        let diff = (a as f64 - b as f64).abs();
        d += diff;
        v_d += diff * diff;
        v_a += (a as f64 - centre).powi(2);
        v_b += (b as f64 - centre).powi(2);
    }
    Ok(PEStatistics {
        d_pe: d / m,
        v_d_pe: v_d / m,
        v_xa_pe: v_a / m,
        v_xb_pe: v_b / m,
        p_pass_emp: 1.0,
        t_q_hat: 1.0,
    })
}

fn histogram_entropy(mut codes: Vec<u64>) -> Result<f64> {
    if codes.is_empty() {
        return Ok(0.0);
    }
    codes.sort_unstable();
    let total = codes.len() as f64;
    let probs: Vec<f64> = codes
        .chunk_by(|a, b| a == b)
        .map(|run| run.len() as f64 / total)
        .collect();
    let sum: f64 = probs.iter().sum();
    // renormalize away summation rounding before the strict check
    let probs: Vec<f64> = probs.iter().map(|p| p / sum).collect();
    shannon_entropy(&probs)
}

/// Plug-in Shannon entropy of a symbol sequence, in bits.
pub fn empirical_entropy(symbols: &[u32]) -> Result<f64> {
    histogram_entropy(symbols.iter().map(|&s| s as u64).collect())
}

/// Plug-in mutual information from the joint symbol histogram.
pub fn empirical_mutual_info(x_a: &[u32], x_b: &[u32]) -> Result<f64> {
    if x_a.len() != x_b.len() {
        return Err(Error::data("symbol sequences differ in length"));
    }
    let joint = histogram_entropy(
        x_a.iter()
            .zip(x_b)
            .map(|(&a, &b)| ((a as u64) << 32) | b as u64)
            .collect(),
    )?;
    Ok((empirical_entropy(x_a)? + empirical_entropy(x_b)? - joint).max(0.0))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    /// Number of sifted signals to simulate; defaults to the block size.
    /// The finite-size bound is always evaluated at the nominal block size.
    pub signals: Option<u64>,
    /// Keep the per-round records in the result.
    pub keep_records: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct McRun {
    pub breakdown: CoherentRateBreakdown,
    pub raw_rounds: u64,
    pub sifted: u64,
    pub energy_failures: u64,
    pub records: Vec<SiftedRecord>,
}

struct Chunk {
    /// `(round offset, alice, bob)` for rounds kept after sifting.
    kept: Vec<(u32, f64, f64)>,
    failures: Vec<u32>,
}

fn simulate_chunk(sampler: &Sampler, seed: u64, idx: u64, t_split: f64, m_th: f64) -> Chunk {
    let mut rng = chunk_rng(seed, idx);
    let mut kept = Vec::with_capacity(CHUNK / 2 + 64);
    let mut failures = Vec::new();
    for offset in 0..CHUNK as u32 {
        let r = sampler.draw(&mut rng);
        let noise = [
            vacuum(&mut rng),
            vacuum(&mut rng),
            vacuum(&mut rng),
            vacuum(&mut rng),
        ];
        let s = FRAC_1_SQRT_2;
        let ((x_b, p_b), ok) = energy_round(r.x_b * s, r.p_b * s, t_split, m_th, noise);
        if !ok {
            failures.push(offset);
        }
        if r.basis_a == r.basis_b {
            // Alice's p outcome is anticorrelated with Bob's; she flips its sign.
            let (a, b) = match r.basis_a {
                Basis::X => (r.x_a * s, x_b),
                Basis::P => (-r.p_a * s, p_b),
            };
            kept.push((offset, a, b));
        }
    }
    Chunk { kept, failures }
}

/// Energy test, measurement and sifting until `target` signals are kept.
/// Returns the kept pairs, the raw round count and the energy-test failures
/// among those rounds.
fn acquire(
    cm: &TwoModeCM,
    target: usize,
    t_split: f64,
    m_th: f64,
    seed: u64,
) -> (Vec<(f64, f64)>, u64, u64) {
    let sampler = Sampler::new(cm);
    let mut pairs = Vec::with_capacity(target);
    let mut failures = 0u64;
    let mut next = 0u64;
    loop {
        let missing = target - pairs.len();
        let batch = ((missing * 2) / CHUNK + 2) as u64;
        let chunks = map_chunks(next..next + batch, |idx| {
            simulate_chunk(&sampler, seed, idx, t_split, m_th)
        });
        for (i, chunk) in chunks.into_iter().enumerate() {
            let idx = next + i as u64;
            let needed = target - pairs.len();
            if chunk.kept.len() >= needed {
                let last = if needed == 0 {
                    0
                } else {
                    chunk.kept[needed - 1].0
                };
                let consumed = if needed == 0 { 0 } else { last + 1 };
                failures += chunk.failures.iter().filter(|&&f| f < consumed).count() as u64;
                pairs.extend(chunk.kept[..needed].iter().map(|&(_, a, b)| (a, b)));
                return (pairs, idx * CHUNK as u64 + consumed as u64, failures);
            }
            failures += chunk.failures.len() as u64;
            pairs.extend(chunk.kept.iter().map(|&(_, a, b)| (a, b)));
        }
        next += batch;
    }
}

/// Simulates one execution and evaluates the finite-size key length on the
/// simulated estimation outcome.
pub fn run_protocol(
    params: &ProtocolParams,
    fs: &FiniteSizeParams,
    opts: &CoherentOptions,
    mc: &McOptions,
    seed: u64,
) -> Result<McRun> {
    fs.validate()?;
    check_split(fs.t_split)?;
    let symbols = fs.alphabet_size()?;
    let cm = shared_cm(params)?;
    let signals = mc.signals.unwrap_or(fs.n_total);
    if signals < 3 {
        return Err(Error::config("need at least 3 simulated signals"));
    }
    if signals > fs.n_total {
        return Err(Error::config(format!(
            "cannot simulate more signals ({signals}) than the block size ({})",
            fs.n_total
        )));
    }
    let signals = signals as usize;
    let m_sim = ((signals as f64 * fs.m_pe as f64 / fs.n_total as f64).round() as usize)
        .clamp(2, signals - 1);

    let d0 = match opts.d0 {
        Some(d0) => d0,
        None => {
            let tapped = cm.after_bob_loss(fs.t_split)?;
            expected_statistics(&tapped, fs.alpha, fs.delta, fs.p_pass)?
                .pe
                .d_pe
                * opts.d0_safety
        }
    };

    let (pairs, raw_rounds, energy_failures) = acquire(&cm, signals, fs.t_split, fs.m_th, seed);
    let p_pass_emp = 1.0 - energy_failures as f64 / raw_rounds as f64;
    let fs_run = FiniteSizeParams {
        d0,
        p_pass: p_pass_emp.max(f64::MIN_POSITIVE),
        ..*fs
    };

    let mut run = McRun {
        breakdown: breakdown_base(&fs_run, 0.0)?,
        raw_rounds,
        sifted: signals as u64,
        energy_failures,
        records: Vec::new(),
    };
    if energy_failures > 0 {
        run.breakdown.abort_reason = Some(AbortReason::EnergyTestFailed);
        return Ok(run);
    }

    let mut roles = vec![Role::Key; signals];
    let mut role_rng = chunk_rng(seed, ROLE_STREAM);
    let mut pe_idx = index::sample(&mut role_rng, signals, m_sim).into_vec();
    pe_idx.sort_unstable();
    for &i in &pe_idx {
        roles[i] = Role::Pe;
    }

    let q_a_pe: Vec<f64> = pe_idx.iter().map(|&i| pairs[i].0).collect();
    let q_b_pe: Vec<f64> = pe_idx.iter().map(|&i| pairs[i].1).collect();
    let t_q_hat = estimate_tq(&q_a_pe, &q_b_pe)?;

    let records: Vec<SiftedRecord> = pairs
        .iter()
        .zip(&roles)
        .map(|(&(a, b), &role)| {
            let q_a = t_q_hat * a;
            SiftedRecord {
                q_a,
                q_b: b,
                x_a: symbol(q_a, fs.alpha, fs.delta, symbols),
                x_b: symbol(b, fs.alpha, fs.delta, symbols),
                role,
            }
        })
        .collect();

    let split = |role: Role| -> (Vec<u32>, Vec<u32>) {
        records
            .iter()
            .filter(|r| r.role == role)
            .map(|r| (r.x_a, r.x_b))
            .unzip()
    };
    let (xa_pe, xb_pe) = split(Role::Pe);
    let (xa_key, xb_key) = split(Role::Key);

    let pe = PEStatistics {
        p_pass_emp,
        t_q_hat,
        ..pe_statistics(&xa_pe, &xb_pe, fs.alpha, fs.delta)?
    };
    let h_b_shannon = empirical_entropy(&xb_key)?;
    let h_b = match opts.entropy {
        EntropyConvention::Shannon => h_b_shannon,
        EntropyConvention::ResolutionOffset => h_b_shannon - fs.delta.log2(),
    };
    let mutual_info = empirical_mutual_info(&xa_key, &xb_key)?;
    let leak = ec_leakage(h_b, mutual_info, params.beta, fs.n_key as f64)?;

    run.breakdown = CoherentRateBreakdown {
        h_b: Some(h_b),
        mutual_info: Some(mutual_info),
        ..key_length_low(&fs_run, &pe, leak)?
    };
    if mc.keep_records {
        run.records = records;
    }
    Ok(run)
}

/// Writes sifted records as CSV with columns `index,q_a,q_b,x_a,x_b,role`.
pub fn write_round_dump(path: &Path, records: &[SiftedRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    writeln!(out, "index,q_a,q_b,x_a,x_b,role").map_err(io_err)?;
    for (i, r) in records.iter().enumerate() {
        writeln!(
            out,
            "{i},{:?},{:?},{},{},{}",
            r.q_a,
            r.q_b,
            r.x_a,
            r.x_b,
            r.role.as_str()
        )
        .map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::SymmetricLink;

    #[test]
    fn discretize_examples() {
        let sym = |v| discretize(v, 1.0, 0.5).unwrap();
        assert_eq!([sym(-0.75), sym(-0.2), sym(0.2), sym(2.0)], [1, 2, 3, 4]);
        assert_eq!(sym(1.0), 4);
        assert_eq!(sym(-0.5 + 1e-12), 2);
        assert_eq!(sym(-0.5), 1);
        assert_eq!(sym(f64::NEG_INFINITY), 1);
        assert_eq!(sym(f64::INFINITY), 4);
        assert!(discretize(0.0, 1.0, 0.3).is_err());
    }

    #[test]
    fn sift_forced_bases() {
        let round = |basis_a, basis_b| QuadratureRound {
            x_a: 1.0,
            p_a: 2.0,
            x_b: 3.0,
            p_b: 4.0,
            basis_a,
            basis_b,
        };
        let same = vec![round(Basis::X, Basis::X), round(Basis::P, Basis::P)];
        assert_eq!(sift(&same), vec![(1.0, 3.0), (2.0, 4.0)]);
        let opposite = vec![round(Basis::X, Basis::P), round(Basis::P, Basis::X)];
        assert!(sift(&opposite).is_empty());
    }

    #[test]
    fn tq_examples() {
        let q_a = [0.3, -1.2, 2.5, 0.1, -0.7];
        let q_b: Vec<f64> = q_a.iter().map(|v| 2.0 * v).collect();
        assert!((estimate_tq(&q_a, &q_b).unwrap() - 2.0).abs() < 1e-15);
        assert!(estimate_tq(&[1.0, 1.0], &[0.0, 2.0]).is_err());
        assert!(estimate_tq(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn energy_test_rejects_bright_round() {
        let out = energy_test(&[0.0, 100.0, 0.0], &[0.0; 3], 0.8, 12.0, 1).unwrap();
        assert!(!out.passed);
        assert_eq!(out.failures, 1);
        // reflected amplitude sqrt(0.2) * 100 / sqrt(2) ~ 31.6
        assert!((0.2f64.sqrt() * 100.0 * FRAC_1_SQRT_2 - 31.6).abs() < 0.05);
        assert!(energy_test(&[0.0], &[0.0], 1.0, 12.0, 1).is_err());
    }

    #[test]
    fn energy_test_passes_vacuum_near_unit_split() {
        let zeros = vec![0.0; 10_000];
        let out = energy_test(&zeros, &zeros, 0.999, 12.0, 3).unwrap();
        assert!(out.passed);
        assert_eq!(out.transmitted.len(), zeros.len());
    }

    #[test]
    fn pe_statistics_examples() {
        let a = [5u32, 7, 9];
        let same = pe_statistics(&a, &a, 1.0, 0.5).unwrap();
        assert_eq!((same.d_pe, same.v_d_pe), (0.0, 0.0));
        let shifted: Vec<u32> = a.iter().map(|x| x + 1).collect();
        let one = pe_statistics(&a, &shifted, 1.0, 0.5).unwrap();
        assert_eq!((one.d_pe, one.v_d_pe), (1.0, 1.0));
        assert!(pe_statistics(&a, &a[..2], 1.0, 0.5).is_err());
        // centred at alpha / delta = 2
        assert_eq!(pe_statistics(&[2], &[4], 1.0, 0.5).unwrap().v_xb_pe, 4.0);
    }

    #[test]
    fn empirical_information() {
        let a = [1u32, 2, 3, 4];
        assert!((empirical_entropy(&a).unwrap() - 2.0).abs() < 1e-15);
        assert!((empirical_mutual_info(&a, &a).unwrap() - 2.0).abs() < 1e-15);
        let b = [1u32, 1, 2, 2];
        let c = [1u32, 2, 1, 2];
        assert!(empirical_mutual_info(&b, &c).unwrap().abs() < 1e-15);
    }

    #[test]
    fn sampling_is_deterministic_and_chunk_aligned() {
        let cm = TwoModeCM::new(1.5, 1.5, 0.866).unwrap();
        let first = sample_rounds(&cm, 10_000, 42);
        assert_eq!(first, sample_rounds(&cm, 10_000, 42));
        assert_ne!(first, sample_rounds(&cm, 10_000, 43));
        // a shorter draw is a prefix of a longer one
        assert_eq!(&first[..5000], &sample_rounds(&cm, 5000, 42)[..]);
    }

    fn honest_link() -> ProtocolParams {
        SymmetricLink {
            epr_variance: 20.0,
            ..SymmetricLink::at_distance(2.0)
        }
        .params()
        .unwrap()
    }

    #[test]
    fn protocol_partitions_and_determinism() {
        let fs = FiniteSizeParams::with_block_size(20_000);
        let mc = McOptions {
            signals: None,
            keep_records: true,
        };
        let opts = CoherentOptions::default();
        let run = run_protocol(&honest_link(), &fs, &opts, &mc, 7).unwrap();
        assert_eq!(run.records.len(), 20_000);
        let pe_count = run.records.iter().filter(|r| r.role == Role::Pe).count();
        assert_eq!(pe_count as u64, fs.m_pe);
        assert!(run.raw_rounds >= 20_000);
        let pe = run.breakdown.pe.unwrap();
        assert!(pe.d_pe * pe.d_pe <= pe.v_d_pe);
        assert_eq!(
            run,
            run_protocol(&honest_link(), &fs, &opts, &mc, 7).unwrap()
        );
    }

    #[test]
    fn zero_threshold_aborts_estimation() {
        let fs = FiniteSizeParams::with_block_size(10_000);
        let opts = CoherentOptions {
            d0: Some(0.0),
            ..Default::default()
        };
        let run = run_protocol(&honest_link(), &fs, &opts, &McOptions::default(), 1).unwrap();
        assert_eq!(
            run.breakdown.abort_reason,
            Some(AbortReason::ParameterEstimation)
        );
        assert_eq!(run.breakdown.key_rate, 0.0);
    }

    #[test]
    fn bright_source_fails_energy_test() {
        let params = SymmetricLink::at_distance(2.0).params().unwrap();
        let fs = FiniteSizeParams::with_block_size(10_000);
        let run = run_protocol(
            &params,
            &fs,
            &CoherentOptions::default(),
            &McOptions::default(),
            1,
        )
        .unwrap();
        assert_eq!(
            run.breakdown.abort_reason,
            Some(AbortReason::EnergyTestFailed)
        );
        assert!(run.energy_failures > 0);
        assert!(run.breakdown.pe.is_none());
    }
}
