//! Rayleigh-fading environment of a source, `K` relays and a destination.
//!
//! Channel gains are zero-mean circularly-symmetric complex Gaussians, so every
//! squared gain `|h|²` is exponentially distributed with mean equal to the link
//! variance. All decode tests compare accumulated squared gains against the
//! threshold `(2^{2R} - 1) / SNR` that comes from transmitting at rate `2R`
//! inside a half-length phase.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{self, Error, Result};
use crate::phases::{BscParam, DecodeProfile};

/// Fewer samples than this on a conditioning path marks an estimate as low confidence.
pub const MIN_CONDITIONAL_SAMPLES: u64 = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    var_sd: f64,
    var_sr: Vec<f64>,
    var_rd: Vec<f64>,
    snr: f64,
}

impl ChannelParams {
    /// `var_sr[k]` and `var_rd[k]` describe relay `k`; their common length is the relay count.
    pub fn new(var_sd: f64, var_sr: Vec<f64>, var_rd: Vec<f64>, snr: f64) -> Result<Self> {
        error::positive("var_sd", var_sd)?;
        if var_sr.len() != var_rd.len() {
            return Err(Error::RelayCountMismatch {
                sr: var_sr.len(),
                rd: var_rd.len(),
            });
        }
        for &v in &var_sr {
            error::positive("var_sr", v)?;
        }
        for &v in &var_rd {
            error::positive("var_rd", v)?;
        }
        error::positive("snr", snr)?;
        Ok(Self {
            var_sd,
            var_sr,
            var_rd,
            snr,
        })
    }

    pub fn one_relay(var_sd: f64, var_sr: f64, var_rd: f64, snr: f64) -> Result<Self> {
        Self::new(var_sd, vec![var_sr], vec![var_rd], snr)
    }

    /// Every link has the same variance.
    pub fn uniform(num_relays: usize, variance: f64, snr: f64) -> Result<Self> {
        Self::new(
            variance,
            vec![variance; num_relays],
            vec![variance; num_relays],
            snr,
        )
    }

    pub fn with_snr(&self, snr: f64) -> Result<Self> {
        error::positive("snr", snr)?;
        Ok(Self {
            snr,
            ..self.clone()
        })
    }

    pub fn var_sd(&self) -> f64 {
        self.var_sd
    }

    pub fn var_sr(&self) -> &[f64] {
        &self.var_sr
    }

    pub fn var_rd(&self) -> &[f64] {
        &self.var_rd
    }

    pub fn snr(&self) -> f64 {
        self.snr
    }

    pub fn num_relays(&self) -> usize {
        self.var_sr.len()
    }
}

pub fn snr_from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// End-to-end spectral efficiency `R` in bits per channel use.
///
/// Each phase occupies half of the block, so a phase carries `2R`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Rate(f64);

impl Rate {
    pub fn new(bits: f64) -> Result<Self> {
        if bits >= 0.0 && bits.is_finite() {
            Ok(Self(bits))
        } else {
            Err(Error::Domain {
                name: "rate",
                value: bits,
                expected: "finite and >= 0",
            })
        }
    }

    pub fn bits(self) -> f64 {
        self.0
    }

    /// Squared-gain level needed to decode one phase: `(2^{2R} - 1) / snr`.
    pub fn threshold(self, snr: f64) -> f64 {
        (2.0 * self.0 * std::f64::consts::LN_2).exp_m1() / snr
    }
}

/// Squared channel gains for one transmission block.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingRealization {
    pub g_sd: f64,
    pub g_sr: Vec<f64>,
    pub g_rd: Vec<f64>,
}

impl FadingRealization {
    pub fn num_relays(&self) -> usize {
        self.g_sr.len()
    }

    /// Overwrites the gains in place with a fresh draw.
    pub fn redraw<R: Rng + ?Sized>(&mut self, params: &ChannelParams, rng: &mut R) {
        self.g_sd = exponential(rng, params.var_sd);
        self.g_sr.resize(params.num_relays(), 0.0);
        self.g_rd.resize(params.num_relays(), 0.0);
        for k in 0..params.num_relays() {
            self.g_sr[k] = exponential(rng, params.var_sr[k]);
            self.g_rd[k] = exponential(rng, params.var_rd[k]);
        }
    }

    fn check_relay(&self, index: usize) -> Result<()> {
        if index < self.num_relays() {
            Ok(())
        } else {
            Err(Error::RelayIndex {
                index,
                num_relays: self.num_relays(),
            })
        }
    }
}

fn exponential<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> f64 {
    let unit: f64 = rng.sample(Exp1);
    unit * mean
}

pub fn draw_realization<R: Rng + ?Sized>(params: &ChannelParams, rng: &mut R) -> FadingRealization {
    let mut realization = FadingRealization {
        g_sd: 0.0,
        g_sr: Vec::with_capacity(params.num_relays()),
        g_rd: Vec::with_capacity(params.num_relays()),
    };
    realization.redraw(params, rng);
    realization
}

/// Probability that the direct phase fails, `1 - exp(-threshold / var_sd)`.
pub fn source_outage_prob(params: &ChannelParams, rate: Rate) -> f64 {
    let t = rate.threshold(params.snr);
    -(-t / params.var_sd).exp_m1()
}

/// Destination test after relay `relay_index` (zero-based) forwarded a message
/// it decoded: `g_sd + g_rd ≥ threshold`.
pub fn df_decode_after_relay(
    realization: &FadingRealization,
    relay_index: usize,
    rate: Rate,
    snr: f64,
) -> Result<bool> {
    realization.check_relay(relay_index)?;
    Ok(realization.g_sd + realization.g_rd[relay_index] >= rate.threshold(snr))
}

/// Destination test after relay `relay_index` amplified and forwarded the source signal.
pub fn af_decode_after_relay(
    realization: &FadingRealization,
    relay_index: usize,
    rate: Rate,
    snr: f64,
) -> Result<bool> {
    realization.check_relay(relay_index)?;
    let relayed = af_relay_term(
        realization.g_sr[relay_index],
        realization.g_rd[relay_index],
        snr,
    );
    Ok(realization.g_sd + relayed >= rate.threshold(snr))
}

/// Effective squared gain of an amplify-and-forward hop.
pub fn af_relay_term(g_sr: f64, g_rd: f64, snr: f64) -> f64 {
    g_sr * g_rd / (g_sr + g_rd + 1.0 / snr)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    DecodeForward,
    AmplifyForward,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::DecodeForward => "df",
            Strategy::AmplifyForward => "af",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "df" | "decode-forward" => Ok(Strategy::DecodeForward),
            "af" | "amplify-forward" => Ok(Strategy::AmplifyForward),
            other => Err(format!(
                "unknown relaying strategy `{other}` (expected df or af)"
            )),
        }
    }
}

/// Destination-side accumulation of everything received during one block.
///
/// Phases add their effective squared gains. A decode-and-forward relay that
/// failed to decode the source stays silent and contributes nothing.
#[derive(Debug, Clone, Copy)]
pub struct Combiner {
    accumulated: f64,
    threshold: f64,
}

impl Combiner {
    /// State after the direct source phase.
    pub fn after_source(realization: &FadingRealization, threshold: f64) -> Self {
        Self {
            accumulated: realization.g_sd,
            threshold,
        }
    }

    /// Adds the phase in which relay `k` transmits.
    pub fn relay_phase(
        &mut self,
        realization: &FadingRealization,
        k: usize,
        strategy: Strategy,
        snr: f64,
    ) {
        match strategy {
            Strategy::DecodeForward => {
                if realization.g_sr[k] >= self.threshold {
                    self.accumulated += realization.g_rd[k];
                }
            }
            Strategy::AmplifyForward => {
                self.accumulated += af_relay_term(realization.g_sr[k], realization.g_rd[k], snr);
            }
        }
    }

    pub fn decoded(&self) -> bool {
        self.accumulated >= self.threshold
    }
}

/// Which event a relay level's decode probability refers to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProfileConditioning {
    /// Destination decodes after the source and relays `1..=k` all transmitted.
    Unconditional,
    /// Destination has decoded at the feedback instant of level `k + 1`, given
    /// that the block reached that level under the feedback process `p`.
    /// Feeding this profile to the phase tree reproduces the simulated mean
    /// phase count exactly in expectation.
    PathConditional(BscParam),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelEstimate {
    pub probability: f64,
    pub stderr: f64,
    pub samples: u64,
}

impl LevelEstimate {
    pub(crate) fn from_counts(successes: u64, samples: u64) -> Self {
        let probability = successes as f64 / samples as f64;
        Self {
            probability,
            stderr: (probability * (1.0 - probability) / samples as f64).sqrt(),
            samples,
        }
    }

    pub fn low_confidence(&self) -> bool {
        self.samples < MIN_CONDITIONAL_SAMPLES
    }
}

/// Per-level decode probabilities with their sampling uncertainty.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileEstimate {
    pub levels: Vec<LevelEstimate>,
}

impl ProfileEstimate {
    pub fn profile(&self) -> DecodeProfile {
        DecodeProfile::new(self.levels.iter().map(|l| l.probability).collect())
            .expect("estimated probabilities lie in [0, 1]")
    }

    pub fn stderrs(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.stderr).collect()
    }
}

/// Level probabilities `[P_SD, P_R1D, ..., P_R(K-1)D]` consumed by a depth-`K` phase tree.
///
/// Entry 0 is exact. Relay levels are Monte Carlo estimates over `trials`
/// realizations. A path-conditional entry with no samples falls back to the
/// unconditional estimate and reports `samples = 0`.
pub fn decode_profile<R: Rng + ?Sized>(
    params: &ChannelParams,
    rate: Rate,
    strategy: Strategy,
    trials: u64,
    conditioning: ProfileConditioning,
    rng: &mut R,
) -> Result<ProfileEstimate> {
    if trials == 0 {
        return Err(Error::NoTrials);
    }
    let num_relays = params.num_relays();
    let mut levels = vec![LevelEstimate {
        probability: 1.0 - source_outage_prob(params, rate),
        stderr: 0.0,
        samples: trials,
    }];
    if num_relays <= 1 {
        return Ok(ProfileEstimate { levels });
    }

    let threshold = rate.threshold(params.snr);
    // Index k - 1 holds counts for relay level k.
    let mut unconditional = vec![0u64; num_relays - 1];
    let mut reached = vec![0u64; num_relays - 1];
    let mut decoded_on_reach = vec![0u64; num_relays - 1];
    let mut realization = draw_realization(params, rng);

    for trial in 0..trials {
        if trial > 0 {
            realization.redraw(params, rng);
        }
        let mut combiner = Combiner::after_source(&realization, threshold);
        let mut alive = true;
        for k in 0..num_relays - 1 {
            if let ProfileConditioning::PathConditional(p) = conditioning {
                // feedback after phase k + 1; the block continues on an observed NACK
                if alive {
                    let flipped = !rng.random_bool(p.value());
                    alive = combiner.decoded() == flipped;
                }
            }
            combiner.relay_phase(&realization, k, strategy, params.snr);
            let decoded = combiner.decoded();
            unconditional[k] += decoded as u64;
            if alive {
                reached[k] += 1;
                decoded_on_reach[k] += decoded as u64;
            }
        }
    }

    for k in 0..num_relays - 1 {
        let plain = LevelEstimate::from_counts(unconditional[k], trials);
        let estimate = match conditioning {
            ProfileConditioning::Unconditional => plain,
            ProfileConditioning::PathConditional(_) if reached[k] == 0 => LevelEstimate {
                samples: 0,
                ..plain
            },
            ProfileConditioning::PathConditional(_) => {
                LevelEstimate::from_counts(decoded_on_reach[k], reached[k])
            }
        };
        levels.push(estimate);
    }
    Ok(ProfileEstimate { levels })
}
