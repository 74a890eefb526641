//! Monte Carlo simulation of incremental relaying with noisy feedback.
//!
//! Every block draws fresh fading, lets the source transmit, and then walks
//! the feedback process: the destination reports its true decode state, each
//! observer sees that report flipped with probability `1 - p`, and every
//! observed NACK hands one more phase to the next relay. Blocks are
//! independent of each other.
//!
//! Work is split into `partitions` contiguous chunks, each driven by its own
//! ChaCha stream of the configured seed. Only integer counters are merged, so
//! the report is identical for a fixed seed and partition count regardless of
//! scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{
    ChannelParams, Combiner, FadingRealization, LevelEstimate, ProfileEstimate, Rate, Strategy,
};
use crate::error::{Error, Result};
use crate::phases::{BscParam, MAX_RELAYS};

/// Who observes the destination's feedback symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeedbackObservation {
    /// One observation shared by the source and all relays.
    #[default]
    Shared,
    /// Source and relays each see their own independently flipped copy.
    ///
    /// The relay's copy drives the protocol. Phases where the relay transmits
    /// while the source believes the message was acknowledged are counted as
    /// collisions and otherwise left unresolved.
    IndependentPerNode,
}

impl std::str::FromStr for FeedbackObservation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "shared" => Ok(Self::Shared),
            "independent" | "independent-per-node" => Ok(Self::IndependentPerNode),
            other => Err(format!(
                "unknown feedback observation `{other}` (expected shared or independent)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub channel: ChannelParams,
    pub rate: Rate,
    pub feedback: BscParam,
    pub strategy: Strategy,
    pub blocks: u64,
    pub seed: u64,
    pub observation: FeedbackObservation,
    pub partitions: usize,
}

impl SimConfig {
    pub fn new(channel: ChannelParams, rate: Rate, feedback: BscParam, strategy: Strategy) -> Self {
        Self {
            channel,
            rate,
            feedback,
            strategy,
            blocks: 100_000,
            seed: 0,
            observation: FeedbackObservation::Shared,
            partitions: 1,
        }
    }

    pub fn with_blocks(mut self, blocks: u64) -> Self {
        self.blocks = blocks;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_partitions(mut self, partitions: usize) -> Self {
        self.partitions = partitions;
        self
    }

    pub fn with_observation(mut self, observation: FeedbackObservation) -> Self {
        self.observation = observation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 {
            return Err(Error::NoTrials);
        }
        if self.partitions == 0 {
            return Err(Error::Domain {
                name: "partitions",
                value: 0.0,
                expected: ">= 1",
            });
        }
        if self.channel.num_relays() > MAX_RELAYS {
            return Err(Error::TooManyRelays {
                requested: self.channel.num_relays(),
                max: MAX_RELAYS,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub mean_phases: f64,
    pub phases_stderr: f64,
    pub outage_rate: f64,
    pub outage_stderr: f64,
    /// `phase_histogram[n - 1]` counts blocks that used `n` phases.
    pub phase_histogram: Vec<u64>,
    pub blocks_run: u64,
    pub collisions: u64,
}

/// Raw counters of a simulation run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Tally {
    histogram: Vec<u64>,
    outages: u64,
    collisions: u64,
    /// `reached[l - 1]`: blocks whose feedback process reached level `l`.
    reached: Vec<u64>,
    /// Of those, blocks already decoded at that feedback instant.
    decoded_on_reach: Vec<u64>,
}

impl Tally {
    fn new(num_relays: usize) -> Self {
        let levels = num_relays.max(1);
        Self {
            histogram: vec![0; num_relays + 1],
            reached: vec![0; levels],
            decoded_on_reach: vec![0; levels],
            ..Self::default()
        }
    }

    fn merge(mut self, other: &Tally) -> Self {
        let add = |a: &mut Vec<u64>, b: &[u64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.histogram, &other.histogram);
        add(&mut self.reached, &other.reached);
        add(&mut self.decoded_on_reach, &other.decoded_on_reach);
        self.outages += other.outages;
        self.collisions += other.collisions;
        self
    }

    fn blocks(&self) -> u64 {
        self.histogram.iter().sum()
    }
}

fn partition_rng(seed: u64, partition: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(partition as u64);
    rng
}

fn simulate_partition(config: &SimConfig, partition: usize, blocks: u64) -> Tally {
    let channel = &config.channel;
    let num_relays = channel.num_relays();
    let snr = channel.snr();
    let threshold = config.rate.threshold(snr);
    let p = config.feedback.value();
    let independent = config.observation == FeedbackObservation::IndependentPerNode;

    let mut rng = partition_rng(config.seed, partition);
    let mut tally = Tally::new(num_relays);
    let mut realization = FadingRealization {
        g_sd: 0.0,
        g_sr: Vec::with_capacity(num_relays),
        g_rd: Vec::with_capacity(num_relays),
    };

    for _ in 0..blocks {
        realization.redraw(channel, &mut rng);
        let mut combiner = Combiner::after_source(&realization, threshold);
        let mut phases = 1;
        let mut collided = false;
        tally.reached[0] += 1;
        tally.decoded_on_reach[0] += combiner.decoded() as u64;

        for level in 1..=num_relays {
            let decoded = combiner.decoded();
            let relay_sees_ack = decoded == rng.random_bool(p);
            if independent {
                let source_sees_ack = decoded == rng.random_bool(p);
                collided |= source_sees_ack && !relay_sees_ack;
            }
            if relay_sees_ack {
                break;
            }
            // relay `level` takes the next phase
            combiner.relay_phase(&realization, level - 1, config.strategy, snr);
            phases += 1;
            if level < num_relays {
                tally.reached[level] += 1;
                tally.decoded_on_reach[level] += combiner.decoded() as u64;
            }
        }

        tally.histogram[phases - 1] += 1;
        tally.outages += !combiner.decoded() as u64;
        tally.collisions += collided as u64;
    }
    tally
}

fn partition_sizes(blocks: u64, partitions: usize) -> Vec<u64> {
    let parts = partitions as u64;
    (0..parts)
        .map(|i| blocks / parts + u64::from(i < blocks % parts))
        .collect()
}

fn simulate(config: &SimConfig) -> Result<Tally> {
    config.validate()?;
    let sizes = partition_sizes(config.blocks, config.partitions);

    #[cfg(feature = "parallel")]
    let tallies: Vec<Tally> = {
        use rayon::prelude::*;
        sizes
            .par_iter()
            .enumerate()
            .map(|(i, &n)| simulate_partition(config, i, n))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let tallies: Vec<Tally> = sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| simulate_partition(config, i, n))
        .collect();

    let empty = Tally::new(config.channel.num_relays());
    Ok(tallies.iter().fold(empty, Tally::merge))
}

/// Runs the protocol for `config.blocks` blocks.
pub fn run(config: &SimConfig) -> Result<SimReport> {
    Ok(report(&simulate(config)?))
}

fn report(tally: &Tally) -> SimReport {
    let blocks = tally.blocks();
    let n = blocks as f64;
    let (sum, sum_sq) =
        tally
            .histogram
            .iter()
            .enumerate()
            .fold((0u64, 0u64), |(s, sq), (i, &count)| {
                let phases = i as u64 + 1;
                (s + phases * count, sq + phases * phases * count)
            });
    let mean = sum as f64 / n;
    let variance = if blocks > 1 {
        ((sum_sq as f64 - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    let outage = LevelEstimate::from_counts(tally.outages, blocks);
    SimReport {
        mean_phases: mean,
        phases_stderr: (variance / n).sqrt(),
        outage_rate: outage.probability,
        outage_stderr: outage.stderr,
        phase_histogram: tally.histogram.clone(),
        blocks_run: blocks,
        collisions: tally.collisions,
    }
}

/// Decode probabilities observed at each feedback instant, conditioned on the
/// block having reached it.
///
/// Entry `l` is the fraction of blocks reaching level `l + 1` whose
/// destination had decoded by then, which is what the phase tree consumes.
/// Levels no block reached report `samples = 0` and probability `0`.
pub fn empirical_decode_profile(config: &SimConfig) -> Result<ProfileEstimate> {
    Ok(profile(&simulate(config)?))
}

/// Runs the simulation once and returns both the report and the profile.
pub fn run_with_profile(config: &SimConfig) -> Result<(SimReport, ProfileEstimate)> {
    let tally = simulate(config)?;
    Ok((report(&tally), profile(&tally)))
}

fn profile(tally: &Tally) -> ProfileEstimate {
    let levels = tally
        .reached
        .iter()
        .zip(&tally.decoded_on_reach)
        .map(|(&reached, &decoded)| match reached {
            0 => LevelEstimate {
                probability: 0.0,
                stderr: 0.0,
                samples: 0,
            },
            _ => LevelEstimate::from_counts(decoded, reached),
        })
        .collect();
    ProfileEstimate { levels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::source_outage_prob;
    use crate::phases::{build_phase_tree, expected_phases_one_relay, expected_phases_tree};

    fn config(num_relays: usize, snr: f64, rate: f64, p: f64, strategy: Strategy) -> SimConfig {
        SimConfig::new(
            ChannelParams::uniform(num_relays, 1.0, snr).unwrap(),
            Rate::new(rate).unwrap(),
            BscParam::new(p).unwrap(),
            strategy,
        )
    }

    fn within(value: f64, target: f64, stderr: f64) -> bool {
        (value - target).abs() <= 3.0 * stderr
    }

    #[test]
    fn perfect_channel_perfect_feedback() {
        let report =
            run(&config(1, 1e12, 0.5, 1.0, Strategy::DecodeForward).with_blocks(50_000)).unwrap();
        assert_eq!(report.mean_phases, 1.0);
        assert_eq!(report.outage_rate, 0.0);
        assert_eq!(report.phase_histogram, vec![50_000, 0]);
    }

    #[test]
    fn worthless_feedback_one_relay() {
        let report = run(&config(1, 1.0, 0.5, 0.5, Strategy::DecodeForward)
            .with_blocks(1_000_000)
            .with_seed(3)
            .with_partitions(4))
        .unwrap();
        assert!(
            within(report.mean_phases, 1.5, report.phases_stderr),
            "{report:?}"
        );
    }

    #[test]
    fn worthless_feedback_two_relays() {
        let report = run(&config(2, 0.5, 0.7, 0.5, Strategy::AmplifyForward)
            .with_blocks(1_000_000)
            .with_seed(4)
            .with_partitions(4))
        .unwrap();
        assert!(
            within(report.mean_phases, 1.75, report.phases_stderr),
            "{report:?}"
        );
    }

    #[test]
    fn one_relay_matches_closed_form() {
        let cfg = SimConfig::new(
            ChannelParams::one_relay(0.7, 1.3, 2.1, 1.8).unwrap(),
            Rate::new(0.45).unwrap(),
            BscParam::new(0.83).unwrap(),
            Strategy::DecodeForward,
        )
        .with_blocks(1_000_000)
        .with_seed(17)
        .with_partitions(3);
        let report = run(&cfg).unwrap();
        let p_bar = source_outage_prob(&cfg.channel, cfg.rate);
        let analytic = expected_phases_one_relay(p_bar, cfg.feedback).unwrap();
        assert!(within(report.mean_phases, analytic, report.phases_stderr));
    }

    #[test]
    fn deterministic_per_seed_and_partitions() {
        let cfg = config(3, 1.0, 0.6, 0.7, Strategy::AmplifyForward)
            .with_blocks(20_001)
            .with_seed(99)
            .with_partitions(5);
        assert_eq!(run(&cfg).unwrap(), run(&cfg).unwrap());
        let single = cfg.clone().with_partitions(1);
        assert_eq!(run(&single).unwrap(), run(&single).unwrap());
        assert_ne!(
            run(&cfg.clone().with_seed(100)).unwrap(),
            run(&cfg).unwrap()
        );
    }

    #[test]
    fn histogram_support_and_totals() {
        let report =
            run(&config(3, 0.3, 0.9, 0.4, Strategy::DecodeForward).with_blocks(100_000)).unwrap();
        assert_eq!(report.phase_histogram.len(), 4);
        assert_eq!(
            report.phase_histogram.iter().sum::<u64>(),
            report.blocks_run
        );
        assert!(report.phase_histogram.iter().all(|&c| c > 0));
        assert!((1.0..=4.0).contains(&report.mean_phases));
        assert!(report.phases_stderr >= 0.0 && report.outage_stderr >= 0.0);
        assert_eq!(report.collisions, 0);
    }

    #[test]
    fn no_relays_is_direct_transmission() {
        let cfg = config(0, 1.0, 0.5, 0.3, Strategy::DecodeForward).with_blocks(200_000);
        let report = run(&cfg).unwrap();
        assert_eq!(report.mean_phases, 1.0);
        let expected = source_outage_prob(&cfg.channel, cfg.rate);
        assert!(within(report.outage_rate, expected, report.outage_stderr));
    }

    #[test]
    fn perfect_feedback_never_wastes_a_phase() {
        // with p = 1, a block that has decoded always stops, and an outage means all relays were used
        let cfg = config(2, 0.5, 0.6, 1.0, Strategy::DecodeForward).with_blocks(100_000);
        let report = run(&cfg).unwrap();
        let direct_fail = source_outage_prob(&cfg.channel, cfg.rate);
        let stop_first = report.phase_histogram[0] as f64 / report.blocks_run as f64;
        assert!(within(
            stop_first,
            1.0 - direct_fail,
            0.5 / (report.blocks_run as f64).sqrt()
        ));
        let outages = (report.outage_rate * report.blocks_run as f64).round() as u64;
        assert!(outages <= report.phase_histogram[2]);
    }

    #[test]
    fn empirical_profile_entry_zero_matches_exponential_cdf() {
        let cfg = config(2, 2.0, 0.5, 0.8, Strategy::DecodeForward)
            .with_blocks(400_000)
            .with_seed(8);
        let est = empirical_decode_profile(&cfg).unwrap();
        let p_sd = 1.0 - source_outage_prob(&cfg.channel, cfg.rate);
        assert!(within(
            est.levels[0].probability,
            p_sd,
            est.levels[0].stderr
        ));
        assert!(est
            .levels
            .iter()
            .all(|l| (0.0..=1.0).contains(&l.probability)));
    }

    #[test]
    fn always_decoding_relay_matches_hypoexponential_tail() {
        // p = 1: level 2 is reached only after a direct-link failure, so entry 1 is
        // Pr(g_sd + g_rd ≥ t | g_sd < t) = (tail(X+Y) - tail(X)) / cdf(X)
        let channel = ChannelParams::new(1.0, vec![1e12, 1e12], vec![2.0, 2.0], 1.0).unwrap();
        let cfg = SimConfig::new(
            channel,
            Rate::new(0.5).unwrap(),
            BscParam::new(1.0).unwrap(),
            Strategy::DecodeForward,
        )
        .with_blocks(1_000_000)
        .with_seed(31);
        let est = empirical_decode_profile(&cfg).unwrap();
        let t = 1.0;
        let (a, b) = (1.0f64, 2.0f64);
        let sum_tail = (a * (-t / a).exp() - b * (-t / b).exp()) / (a - b);
        let direct_tail = (-t / a).exp();
        let expected = (sum_tail - direct_tail) / (1.0 - direct_tail);
        let level = est.levels[1];
        assert!(
            within(level.probability, expected, level.stderr),
            "{level:?} vs {expected}"
        );
    }

    #[test]
    fn tree_fed_by_empirical_profile_predicts_simulation() {
        let cfg = config(3, 0.8, 0.55, 0.72, Strategy::AmplifyForward)
            .with_blocks(400_000)
            .with_seed(5)
            .with_partitions(2);
        let (report, profile) = run_with_profile(&cfg).unwrap();
        let tree = build_phase_tree(&profile.profile(), cfg.feedback, 3).unwrap();
        let predicted = expected_phases_tree(&tree).unwrap();
        assert!(within(report.mean_phases, predicted, report.phases_stderr));
    }

    #[test]
    fn independent_observation_reports_collisions() {
        let cfg = config(1, 1.0, 0.5, 0.7, Strategy::DecodeForward)
            .with_blocks(50_000)
            .with_observation(FeedbackObservation::IndependentPerNode);
        let report = run(&cfg).unwrap();
        assert!(report.collisions > 0);
        let shared = run(&cfg.clone().with_observation(FeedbackObservation::Shared)).unwrap();
        assert_eq!(shared.collisions, 0);
    }

    #[test]
    fn rejects_empty_runs() {
        let cfg = config(1, 1.0, 0.5, 0.7, Strategy::DecodeForward);
        assert_eq!(run(&cfg.clone().with_blocks(0)), Err(Error::NoTrials));
        assert!(run(&cfg.with_partitions(0)).is_err());
    }

    #[test]
    fn partition_sizes_cover_all_blocks() {
        assert_eq!(partition_sizes(10, 3), vec![4, 3, 3]);
        assert_eq!(partition_sizes(2, 4), vec![1, 1, 0, 0]);
    }
}
