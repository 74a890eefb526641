//! ε-outage capacity of one-relay incremental relaying with noisy feedback.
//!
//! The low-SNR expressions have the form `C = L / E(N)`, where the log term
//! `L` depends only on the channel and `ε`. Since `E(N)` depends on the rate
//! through the direct-link failure probability `P̄_SD(R)`, the capacity is the
//! root of `R · E(N; R, p) = L`, which bisection finds on `[0, L]` because
//! `E(N)` lies in `[1, 2]`.

use std::fmt;
use std::str::FromStr;

use crate::channel::{source_outage_prob, ChannelParams, Rate, Strategy};
use crate::error::{self, Error, Result};
use crate::phases::{expected_phases_one_relay, BscParam};
use crate::sim::{self, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct OutageTarget(f64);

impl OutageTarget {
    pub fn new(epsilon: f64) -> Result<Self> {
        error::probability("epsilon", epsilon).map(Self)
    }

    pub fn epsilon(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CapacityProtocol {
    DecodeForward,
    BurstyAmplifyForward,
}

impl CapacityProtocol {
    pub fn as_str(self) -> &'static str {
        match self {
            CapacityProtocol::DecodeForward => "df",
            CapacityProtocol::BurstyAmplifyForward => "baf",
        }
    }
}

impl fmt::Display for CapacityProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CapacityProtocol {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "df" => Ok(Self::DecodeForward),
            "baf" => Ok(Self::BurstyAmplifyForward),
            other => Err(format!(
                "unknown capacity protocol `{other}` (expected df or baf)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityResult {
    /// ε-outage capacity in bits per channel use.
    pub rate: f64,
    pub expected_phases: f64,
    /// Direct-link failure probability at the solution.
    pub p_bar_sd: f64,
    pub iterations: usize,
    /// `|rate · E(N) - L|`.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Required residual relative to the log term.
    pub rel_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tolerance: 1e-10,
            max_iterations: 200,
        }
    }
}

fn one_relay(params: &ChannelParams) -> Result<(f64, f64, f64)> {
    match (params.var_sr(), params.var_rd()) {
        ([sr], [rd]) => Ok((params.var_sd(), *sr, *rd)),
        _ => Err(Error::UnsupportedTopology {
            num_relays: params.num_relays(),
        }),
    }
}

/// Rate-independent log term `log2(1 + SNR · sqrt(2 σ²_sd σ²_sr σ²_rd ε / D))`
/// with `D = 2σ²_rd + σ²_sr` for DF and `D = σ²_rd + σ²_sr` for BAF.
pub fn log_term(
    params: &ChannelParams,
    target: OutageTarget,
    protocol: CapacityProtocol,
) -> Result<f64> {
    let (sd, sr, rd) = one_relay(params)?;
    let denominator = match protocol {
        CapacityProtocol::DecodeForward => 2.0 * rd + sr,
        CapacityProtocol::BurstyAmplifyForward => rd + sr,
    };
    let radicand = 2.0 * sd * sr * rd * target.epsilon() / denominator;
    Ok((params.snr() * radicand.sqrt()).ln_1p() / std::f64::consts::LN_2)
}

/// `E(N)` of the one-relay network when transmitting at `rate`.
pub fn phases_at_rate(params: &ChannelParams, rate: f64, p: BscParam) -> Result<f64> {
    let p_bar = source_outage_prob(params, Rate::new(rate)?);
    expected_phases_one_relay(p_bar, p)
}

pub fn capacity(
    params: &ChannelParams,
    target: OutageTarget,
    p: BscParam,
    protocol: CapacityProtocol,
) -> Result<CapacityResult> {
    capacity_with(params, target, p, protocol, SolverConfig::default())
}

pub fn df_capacity(
    params: &ChannelParams,
    target: OutageTarget,
    p: BscParam,
) -> Result<CapacityResult> {
    capacity(params, target, p, CapacityProtocol::DecodeForward)
}

pub fn baf_capacity(
    params: &ChannelParams,
    target: OutageTarget,
    p: BscParam,
) -> Result<CapacityResult> {
    capacity(params, target, p, CapacityProtocol::BurstyAmplifyForward)
}

pub fn capacity_with(
    params: &ChannelParams,
    target: OutageTarget,
    p: BscParam,
    protocol: CapacityProtocol,
    solver: SolverConfig,
) -> Result<CapacityResult> {
    let epsilon = target.epsilon();
    if epsilon <= 0.0 || epsilon >= 1.0 {
        return Err(Error::DegenerateTarget { epsilon });
    }
    let log = log_term(params, target, protocol)?;
    let defect = |rate: f64| -> Result<f64> { Ok(rate * phases_at_rate(params, rate, p)? - log) };
    let tolerance = solver.rel_tolerance * log;

    // defect(0) = -L < 0 and defect(L) = L (E(N) - 1) >= 0
    let (mut lo, mut hi) = (0.0, log);
    let mut rate = hi;
    let mut residual = defect(hi)?.abs();
    let mut iterations = 0;
    while residual > tolerance {
        if iterations == solver.max_iterations {
            return Err(Error::NoConvergence {
                last_rate: rate,
                iterations,
                residual,
            });
        }
        iterations += 1;
        rate = 0.5 * (lo + hi);
        let value = defect(rate)?;
        if value < 0.0 {
            lo = rate;
        } else {
            hi = rate;
        }
        residual = value.abs();
    }

    let p_bar_sd = source_outage_prob(params, Rate::new(rate)?);
    Ok(CapacityResult {
        rate,
        expected_phases: expected_phases_one_relay(p_bar_sd, p)?,
        p_bar_sd,
        iterations,
        residual,
    })
}

/// Binomial estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// Fraction of simulated blocks whose destination never decodes.
pub fn outage_probability_empirical(
    params: &ChannelParams,
    rate: Rate,
    p: BscParam,
    strategy: Strategy,
    trials: u64,
    seed: u64,
) -> Result<Estimate> {
    let config = SimConfig::new(params.clone(), rate, p, strategy)
        .with_blocks(trials)
        .with_seed(seed)
        .with_partitions(partitions_for(trials));
    let report = sim::run(&config)?;
    Ok(Estimate {
        value: report.outage_rate,
        stderr: report.outage_stderr,
    })
}

/// Fixed split so results do not depend on the machine's core count.
fn partitions_for(trials: u64) -> usize {
    const PER_PARTITION: u64 = 250_000;
    trials.div_ceil(PER_PARTITION).clamp(1, 16) as usize
}
