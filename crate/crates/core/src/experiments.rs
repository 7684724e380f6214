//! Monte Carlo harness: configuration, per-channel scheme evaluation,
//! seeded SNR sweeps, CSV output and schedule audits.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::beamforming::{
    maxmin_snr_multicast, sca_maxmin_mac, unicast_maxmin, zf_design, ClarabelBackend, ScaOptions,
    SolverBackend, TraceRecord,
};
use crate::combinatorics::{
    choose, enumerate_subsets, partition_count, walk_schedule, FreshTracker, ScheduleSlot,
    SchedulingParams, UserSet,
};
use crate::content::{place_cache, run_delivery, decode_and_verify, CacheLayout, Library};
use crate::error::{Error, Result};
use crate::phy::{sample_channel, symmetric_rate, transmission_time, ChannelMatrix, RateCurve};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Coded caching with SCA-optimized beamformers.
    CcSca,
    /// Coded caching with ZF directions and optimal power.
    CcZf,
    /// Coded caching with ZF directions and equal power.
    CcZfEq,
    /// One multicast beam per `(t+1)`-subset, in TDMA.
    MaxminSnr,
    /// `min(K, L)` private streams per slot, local caching gain only.
    Unicast,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::CcSca,
        Scheme::CcZf,
        Scheme::CcZfEq,
        Scheme::MaxminSnr,
        Scheme::Unicast,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::CcSca => "cc-sca",
            Scheme::CcZf => "cc-zf",
            Scheme::CcZfEq => "cc-zf-eq",
            Scheme::MaxminSnr => "maxmin-snr",
            Scheme::Unicast => "unicast",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| {
                Error::Parameter(format!(
                    "unknown scheme {s:?} (expected one of cc-sca, cc-zf, cc-zf-eq, maxmin-snr, unicast)"
                ))
            })
    }
}

/// Inclusive SNR grid in dB.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SnrGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for SnrGrid {
    fn default() -> Self {
        Self {
            start: -10.0,
            stop: 40.0,
            step: 5.0,
        }
    }
}

impl SnrGrid {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0) || !self.start.is_finite() || !self.stop.is_finite() {
            return Err(Error::Parameter(format!(
                "SNR step must be positive and bounds finite ({}:{}:{})",
                self.start, self.step, self.stop
            )));
        }
        if self.stop < self.start {
            return Err(Error::Parameter(format!(
                "empty SNR grid: stop {} below start {}",
                self.stop, self.start
            )));
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..n).map(|i| self.start + i as f64 * self.step).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub k: usize,
    pub l: usize,
    pub n: usize,
    pub m: usize,
    pub alpha: usize,
    pub beta: usize,
    pub scheme: Scheme,
    pub snr: SnrGrid,
    pub trials: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Drop trials whose optimization fails instead of aborting.
    pub skip_failed: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            k: 3,
            l: 2,
            n: 3,
            m: 1,
            alpha: 2,
            beta: 2,
            scheme: Scheme::CcSca,
            snr: SnrGrid::default(),
            trials: 500,
            seed: 0,
            out: None,
            skip_failed: false,
        }
    }
}

impl SimConfig {
    /// Applies one `key = value` setting; keys mirror the CLI flags.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Parameter(format!("invalid value {v:?} for {key}")))
        }
        match key {
            "K" => self.k = num(key, value)?,
            "L" => self.l = num(key, value)?,
            "N" => self.n = num(key, value)?,
            "M" => self.m = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "beta" => self.beta = num(key, value)?,
            "scheme" => self.scheme = value.parse()?,
            "snr-start" => self.snr.start = num(key, value)?,
            "snr-stop" => self.snr.stop = num(key, value)?,
            "snr-step" => self.snr.step = num(key, value)?,
            "trials" => self.trials = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "skip-failed" => self.skip_failed = num(key, value)?,
            _ => return Err(Error::Parameter(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file. Blank lines and `#` comments are
    /// ignored; leading dashes on keys are allowed.
    pub fn apply_config_text(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Parameter(format!("config line {}: expected key = value", no + 1))
            })?;
            self.set(k.trim().trim_start_matches('-'), v.trim())?;
        }
        Ok(())
    }

    pub fn apply_config_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.apply_config_text(&text)
    }
}

/// Checks the configuration and derives the scheduling parameters.
pub fn validate(cfg: &SimConfig) -> Result<SchedulingParams> {
    let params = SchedulingParams::new(cfg.k, cfg.l, cfg.n, cfg.m, cfg.alpha, cfg.beta)?;
    if cfg.trials == 0 {
        return Err(Error::Parameter("trials must be at least 1".into()));
    }
    cfg.snr.points()?;
    Ok(params)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Channel seed of one `(trial, SNR index)` cell. Every scheme sees the same
/// channel in the same cell.
pub fn channel_seed(seed: u64, trial: usize, snr_idx: usize) -> u64 {
    seed ^ splitmix64(splitmix64(trial as u64) ^ (snr_idx as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Per-transmission trace line.
#[derive(Clone, Debug, Serialize)]
pub struct TraceLine {
    pub scheme: String,
    pub snr_db: f64,
    pub trial: usize,
    pub transmission: usize,
    #[serde(flatten)]
    pub record: TraceRecord,
}

/// SCA traces keyed by transmission index.
pub type SlotTraces = Vec<(usize, Vec<TraceRecord>)>;

/// Everything needed to evaluate schemes on individual channels.
pub struct Evaluator<'a> {
    pub params: SchedulingParams,
    pub sca: ScaOptions,
    pub backend: &'a dyn SolverBackend,
    slots: Vec<ScheduleSlot>,
}

impl<'a> Evaluator<'a> {
    pub fn new(params: SchedulingParams, sca: ScaOptions, backend: &'a dyn SolverBackend) -> Result<Self> {
        Ok(Self {
            params,
            sca,
            backend,
            slots: walk_schedule(&params)?,
        })
    }

    pub fn slots(&self) -> &[ScheduleSlot] {
        &self.slots
    }

    /// Symmetric rate of `scheme` on channel `h` at linear SNR `snr`, with
    /// the SCA trace of each transmission (empty for other schemes).
    pub fn rate(
        &self,
        scheme: Scheme,
        h: &ChannelMatrix<f64>,
        snr: f64,
        seed: u64,
    ) -> Result<(f64, SlotTraces)> {
        let p = &self.params;
        let n0 = self.sca.n0;
        let mut traces = Vec::new();
        let times: Vec<f64> = match scheme {
            Scheme::CcSca | Scheme::CcZf | Scheme::CcZfEq => self
                .slots
                .iter()
                .enumerate()
                .map(|(i, slot)| {
                    let rate = match scheme {
                        Scheme::CcSca => {
                            let opts = ScaOptions {
                                seed: seed ^ i as u64,
                                ..self.sca.clone()
                            };
                            let out = sca_maxmin_mac(h, &slot.omega, snr, &opts, self.backend)?;
                            traces.push((i, out.trace));
                            out.rate
                        }
                        Scheme::CcZf => zf_design(h, &slot.omega, snr, n0, true, self.backend)?.rate,
                        _ => zf_design(h, &slot.omega, snr, n0, false, self.backend)?.rate,
                    };
                    Ok(transmission_time(p, 1.0, rate))
                })
                .collect::<Result<_>>()?,
            Scheme::MaxminSnr => {
                let piece = 1.0 / p.subfiles() as f64;
                enumerate_subsets(p.k, p.t + 1)?
                    .iter()
                    .enumerate()
                    .map(|(i, target)| {
                        let opts = ScaOptions {
                            seed: seed ^ i as u64,
                            ..self.sca.clone()
                        };
                        let d = maxmin_snr_multicast(h, target, snr, &opts, self.backend)?;
                        traces.push((i, Vec::new()));
                        Ok(if d.rate > 0.0 { piece / d.rate } else { f64::INFINITY })
                    })
                    .collect::<Result<_>>()?
            }
            Scheme::Unicast => {
                let served = p.k.min(p.l);
                let piece =
                    (p.k - p.t) as f64 / (p.k as f64 * choose(p.k - 1, served - 1) as f64);
                enumerate_subsets(p.k, served)?
                    .iter()
                    .map(|users| {
                        let d = unicast_maxmin(h, users, snr, n0, 1e-7, self.backend)?;
                        Ok(if d.rate > 0.0 { piece / d.rate } else { f64::INFINITY })
                    })
                    .collect::<Result<_>>()?
            }
        };
        traces.retain(|(_, t)| !t.is_empty());
        Ok((symmetric_rate(1.0, &times), traces))
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub k: usize,
    pub l: usize,
    pub n: usize,
    pub m: usize,
    pub alpha: usize,
    pub beta: usize,
    pub snr_db: f64,
    pub trial: usize,
    pub sym_rate: f64,
}

#[derive(Debug)]
pub struct RunOutput {
    pub curve: RateCurve,
    /// Sorted by `(snr, trial)`.
    pub rows: Vec<ResultRow>,
    pub traces: Vec<TraceLine>,
    /// `(snr_db, trial, error)` of trials dropped under `skip_failed`.
    pub skipped: Vec<(f64, usize, String)>,
}

/// Runs the configured scheme over the SNR grid, trials in parallel.
pub fn run_scheme(cfg: &SimConfig, sca: &ScaOptions) -> Result<RunOutput> {
    let backend = ClarabelBackend::default();
    run_scheme_with(cfg, sca, &backend)
}

pub fn run_scheme_with(cfg: &SimConfig, sca: &ScaOptions, backend: &dyn SolverBackend) -> Result<RunOutput> {
    let params = validate(cfg)?;
    let grid = cfg.snr.points()?;
    let eval = Evaluator::new(params, sca.clone(), backend)?;
    let cells: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|s| (0..cfg.trials).map(move |t| (s, t)))
        .collect();

    let results: Vec<((usize, usize), Result<(f64, SlotTraces)>)> = cells
        .par_iter()
        .map(|&(s, t)| {
            let seed = channel_seed(cfg.seed, t, s);
            let r = sample_channel::<f64>(params.k, params.l, seed)
                .and_then(|h| eval.rate(cfg.scheme, &h, db_to_linear(grid[s]), seed));
            ((s, t), r)
        })
        .collect();

    let mut rows = Vec::with_capacity(results.len());
    let mut traces = Vec::new();
    let mut skipped = Vec::new();
    let mut samples = vec![Vec::with_capacity(cfg.trials); grid.len()];
    for ((s, t), r) in results {
        match r {
            Ok((rate, tr)) => {
                samples[s].push(rate);
                rows.push(ResultRow {
                    scheme: cfg.scheme,
                    k: cfg.k,
                    l: cfg.l,
                    n: cfg.n,
                    m: cfg.m,
                    alpha: cfg.alpha,
                    beta: cfg.beta,
                    snr_db: grid[s],
                    trial: t,
                    sym_rate: rate,
                });
                for (transmission, records) in tr {
                    traces.extend(records.into_iter().map(|record| TraceLine {
                        scheme: cfg.scheme.name().into(),
                        snr_db: grid[s],
                        trial: t,
                        transmission,
                        record,
                    }));
                }
            }
            Err(e) if cfg.skip_failed => skipped.push((grid[s], t, e.to_string())),
            Err(e) => return Err(e),
        }
    }
    let curve = RateCurve::new(cfg.scheme.name(), grid, samples)?;
    Ok(RunOutput {
        curve,
        rows,
        traces,
        skipped,
    })
}

/// `printf("%g")` with `sig` significant digits.
pub fn format_g(x: f64, sig: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let p = sig.max(1);
    let sci = format!("{:.*e}", p - 1, x);
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if exp < -4 || exp >= p as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim(mant), sign, exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        trim(&format!("{:.*}", decimals, x))
    }
}

pub const CSV_HEADER: &str = "scheme,K,L,N,M,alpha,beta,snr_db,trial,sym_rate";

pub fn emit_csv<W: Write>(rows: &[ResultRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.scheme,
            r.k,
            r.l,
            r.n,
            r.m,
            r.alpha,
            r.beta,
            format_g(r.snr_db, 6),
            r.trial,
            format_g(r.sym_rate, 6)
        )?;
    }
    Ok(())
}

pub fn write_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io)?;
    let mut w = std::io::BufWriter::new(file);
    emit_csv(rows, &mut w).map_err(io)?;
    w.flush().map_err(io)
}

/// Counting and decodability report for one parameter set.
#[derive(Clone, Debug, Serialize)]
pub struct AuditReport {
    pub params: SchedulingParams,
    pub gamma: usize,
    pub subsets: u128,
    pub partitions_per_subset: u128,
    pub transmissions: usize,
    pub streams_per_transmission: usize,
    pub minifiles_per_file: u128,
    pub minifiles_delivered: usize,
    pub checks: Vec<(String, bool)>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|(_, ok)| *ok)
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.params;
        writeln!(
            f,
            "K={} L={} N={} M={} t={} alpha={} beta={} delta={}",
            p.k, p.l, p.n, p.m, p.t, p.alpha, p.beta, p.delta
        )?;
        writeln!(f, "gamma (mini-files per subfile): {}", self.gamma)?;
        writeln!(f, "subsets S: {}", self.subsets)?;
        writeln!(f, "partitions per S: {}", self.partitions_per_subset)?;
        writeln!(f, "transmissions: {}", self.transmissions)?;
        writeln!(f, "streams per transmission: {}", self.streams_per_transmission)?;
        writeln!(f, "mini-files per file: {}", self.minifiles_per_file)?;
        writeln!(f, "mini-files delivered: {}", self.minifiles_delivered)?;
        for (name, ok) in &self.checks {
            writeln!(f, "[{}] {name}", if *ok { "ok" } else { "FAIL" })?;
        }
        Ok(())
    }
}

/// Walks the schedule, checks every counting identity and runs one
/// bit-exact delivery on random content.
pub fn audit_schedule(params: &SchedulingParams, seed: u64) -> Result<AuditReport> {
    let p = params;
    let slots = walk_schedule(p)?;
    let gamma = p.gamma();
    let mut checks = Vec::new();

    let subsets = choose(p.k, p.subset_size());
    let per_s = partition_count(p.subset_size(), p.group_size());
    checks.push((
        format!("transmissions = C(K,t+alpha)·partitions = {}", subsets * per_s),
        slots.len() as u128 == subsets * per_s,
    ));
    let mut per_subset: HashMap<&UserSet, u128> = HashMap::new();
    for s in &slots {
        *per_subset.entry(&s.subset).or_default() += 1;
    }
    checks.push((
        format!("every S has {per_s} partitions"),
        per_subset.len() as u128 == subsets && per_subset.values().all(|&c| c == per_s),
    ));
    let stream_count = p.streams_per_transmission();
    checks.push((
        format!("|Omega| = delta·C(t+beta,t+1) = {stream_count}"),
        slots.iter().all(|s| s.omega.streams() == stream_count),
    ));
    let per_user = p.streams_per_user();
    checks.push((
        format!("|Omega_k| = C(t+beta-1,t) = {per_user}"),
        slots.iter().all(|s| s.omega.omega_k.iter().all(|o| o.len() == per_user)),
    ));
    let mut hits: HashMap<&UserSet, usize> = HashMap::new();
    for s in &slots {
        for t in &s.omega.omega {
            *hits.entry(t).or_default() += 1;
        }
    }
    checks.push((
        format!("each (t+1)-subset appears gamma = {gamma} times"),
        hits.len() as u128 == choose(p.k, p.t + 1) && hits.values().all(|&c| c == gamma),
    ));

    let demands: Vec<usize> = (0..p.k).map(|k| k % p.n).collect();
    let mut tracker = FreshTracker::new(gamma);
    for s in &slots {
        for t in &s.omega.omega {
            for &k in t {
                let tau: Vec<usize> = t.iter().copied().filter(|&u| u != k).collect();
                tracker.fresh_index(k, demands[k], &tau)?;
            }
        }
    }
    let delivered: usize = tracker.iter().map(|(_, &c)| c).sum();
    let missing = choose(p.k - 1, p.t) as usize;
    checks.push((
        "every uncached mini-file delivered exactly once".into(),
        tracker.iter().all(|(_, &c)| c == gamma) && delivered == p.k * missing * gamma,
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lib = Library::random(p.n, CacheLayout::min_file_bytes(p), &mut rng)?;
    let schedule = run_delivery(&demands, p, &lib)?;
    let layout = CacheLayout::from_params(p, lib.bits())?;
    let caches = place_cache(&lib, &layout)?;
    checks.push((
        "bit-exact decoding for every user".into(),
        (0..p.k).all(|k| decode_and_verify(k, &caches[k], &schedule, &lib)),
    ));

    Ok(AuditReport {
        params: *p,
        gamma,
        subsets,
        partitions_per_subset: per_s,
        transmissions: slots.len(),
        streams_per_transmission: stream_count,
        minifiles_per_file: p.minifiles(),
        minifiles_delivered: delivered,
        checks,
    })
}
